//! Subcommand implementations.

use std::path::Path;

use ghostcell::analytics::{c_free, DiscSeries};
use ghostcell::metrics::{
    argmin_point, cerror, cerror_comp, fit_beta_opt, require_impermeable, sweep, value_grid, Experiment,
    ExperimentSetup, OptCriterion, SweepAxis, BETA_CASES,
};
use ghostcell::solver::{run, step_of, BoundaryModel, FreeSpaceSim};
use ghostcell::{Algorithm, AlgorithmSpec, BasisFamily, WeightSpec};

use crate::config::{algorithm_spec_for, ConfigFile, Resolved};
use crate::output::{flush, num, opt_num, OutputDir};
use crate::CliError;

/// What a command produced, for the manifest and the exit code.
#[derive(Debug, Default)]
pub struct Summary {
    pub failures: Vec<String>,
    pub notes: Vec<String>,
}

impl Summary {
    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

pub fn cmd_run(resolved: &Resolved, out: &mut OutputDir) -> Result<Summary, CliError> {
    let sim = &resolved.sim;
    sim.validate().map_err(CliError::from_solver)?;
    let result = run(sim, resolved.probes).map_err(CliError::from_solver)?;
    let grid = sim.grid;
    let classes = result.classification.classes();

    for snap in &result.snapshots {
        let mut w = out.csv(&format!("snapshot_step{:06}.csv", snap.step))?;
        w.write_record(["j", "k", "x_m", "y_m", "node_class", "c"]).map_err(csv_err)?;
        for (idx, (&c, class)) in snap.values.iter().zip(classes).enumerate() {
            let node = grid.unflat(idx);
            let p = grid.position(node);
            w.write_record([node.j.to_string(), node.k.to_string(), num(p.x), num(p.y), class.label().into(), num(c)])
                .map_err(csv_err)?;
        }
        flush(w)?;
    }

    let mut summary = Summary::default();
    if resolved.probes {
        write_probes(resolved, &result, out, &mut summary)?;
    }
    Ok(summary)
}

fn write_probes(
    resolved: &Resolved,
    result: &ghostcell::solver::RunOutput,
    out: &mut OutputDir,
    summary: &mut Summary,
) -> Result<(), CliError> {
    let sim = &resolved.sim;
    let grid = sim.grid;
    let n_steps = sim.n_steps().map_err(CliError::from_solver)?;
    let center = grid.node_at(sim.boundary.center);
    // References exist only for the impermeable disc with a centered release.
    let references = resolved.impermeable() && center.is_some() && n_steps > 0;
    let series = if references {
        Some(DiscSeries::new(sim.boundary.radius, sim.diffusivity, sim.dt).map_err(|e| CliError::Run(e.to_string()))?)
    } else {
        summary.notes.push("analytical columns left empty: requires zero-flux Neumann data and a centered release".into());
        None
    };
    let mut free = match &series {
        Some(_) => Some(FreeSpaceSim::new(resolved.setup.free_space_config(n_steps)).map_err(CliError::from_solver)?),
        None => None,
    };
    let geometry: Vec<(String, (isize, isize), f64)> = result
        .probe_nodes
        .iter()
        .map(|&n| {
            let c = center.unwrap_or(n);
            let offset = (n.j as isize - c.j as isize, n.k as isize - c.k as isize);
            let r = grid.position(n).distance(sim.boundary.center).min(sim.boundary.radius);
            (n.to_string(), offset, r)
        })
        .collect();

    let mut w = out.csv("probes.csv")?;
    w.write_record(["t_s", "node", "c_fd", "c_ana", "cerror", "cerror_comp"]).map_err(csv_err)?;
    let mut flagged = 0usize;
    for (step, values) in result.probes.iter().enumerate() {
        if let Some(f) = free.as_mut() {
            f.advance_to(step);
        }
        if step % resolved.probe_stride != 0 {
            continue;
        }
        let t = step as f64 * sim.dt;
        for ((name, offset, r), &c_fd) in geometry.iter().zip(values) {
            let (mut c_ana, mut err, mut comp) = (None, None, None);
            if let (Some(series), Some(free), true) = (&series, &free, step > 0) {
                let ana = series.eval(*r, t, resolved.setup.series_tol).map_err(|e| CliError::Run(e.to_string()))?;
                if ana.cancellation_flag || ana.value == 0.0 {
                    flagged += 1;
                } else {
                    c_ana = Some(ana.value);
                    err = cerror(c_fd, ana.value).ok();
                    let nobc = free.value_at(offset.0, offset.1);
                    comp = cerror_comp(c_fd, ana.value, nobc, c_free(*r, t, sim.diffusivity)).ok();
                }
            }
            w.write_record([num(t), name.clone(), num(c_fd), opt_num(c_ana), opt_num(err), opt_num(comp)])
                .map_err(csv_err)?;
        }
    }
    flush(w)?;
    if let Some(f) = &free {
        f.check_edge().map_err(CliError::from_solver)?;
    }
    if flagged > 0 {
        summary.notes.push(format!("{flagged} probe rows have no analytical value (below double-precision resolution)"));
    }
    Ok(())
}

/// Closure settings for a model name, staircase giving `None`.
fn model_for(resolved: &Resolved, name: &str) -> Result<Option<AlgorithmSpec>, CliError> {
    let name = name.trim().to_ascii_lowercase();
    if name == "staircase" {
        return Ok(None);
    }
    Ok(Some(algorithm_spec_for(&resolved.model, &name)?))
}

fn experiment(resolved: &Resolved, time: Option<f64>) -> Result<Experiment, CliError> {
    require_impermeable(&resolved.sim.bc).map_err(|_| {
        CliError::Usage("error reports need zero-flux Neumann data (bc.kind = \"neumann\", bc.value = 0)".into())
    })?;
    let mut setup: ExperimentSetup = resolved.setup;
    if let Some(t) = time {
        setup.time = t;
    }
    Experiment::new(setup).map_err(CliError::from_metrics)
}

pub fn cmd_compare(
    resolved: &Resolved,
    models: &[String],
    time: Option<f64>,
    out: &mut OutputDir,
) -> Result<Summary, CliError> {
    if models.is_empty() {
        return Err(CliError::Usage("--models needs at least one model".into()));
    }
    let specs = models.iter().map(|m| model_for(resolved, m).map(|s| (m, s))).collect::<Result<Vec<_>, _>>()?;
    let exp = experiment(resolved, time)?;
    let mut summary = Summary::default();
    let mut w = out.csv("compare.csv")?;
    w.write_record(["model", "basis", "weight", "beta", "p", "kappa", "peak_comp", "avg_comp", "failures"])
        .map_err(csv_err)?;
    for (name, spec) in specs {
        let model = spec.map_or(BoundaryModel::Staircase, BoundaryModel::Closure);
        let report = exp.report(model).map_err(CliError::from_metrics)?;
        let (basis, weight, beta, p, kappa) = match spec {
            None => Default::default(),
            Some(a) => {
                let (beta, p) = match a.weight {
                    WeightSpec::PowerOfDistance { p, support } => (num(support), num(p)),
                    other => (num(other.parameter()), String::new()),
                };
                (a.basis.name().to_string(), a.weight.name().to_string(), beta, p, num(a.effective_kappa()))
            }
        };
        if report.failures > 0 {
            summary.failures.push(format!("{name}: {} ghost points without a closure", report.failures));
        }
        w.write_record([
            name.trim().to_ascii_lowercase(),
            basis,
            weight,
            beta,
            p,
            kappa,
            num(report.peak_comp),
            num(report.avg_comp),
            report.failures.to_string(),
        ])
        .map_err(csv_err)?;
    }
    flush(w)?;
    Ok(summary)
}

/// `LO:HI:STEP`.
pub fn parse_range(text: &str) -> Result<(f64, f64, f64), CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || CliError::Usage(format!("range `{text}` is not LO:HI:STEP"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    Ok((v[0], v[1], v[2]))
}

pub fn cmd_sweep(
    resolved: &Resolved,
    axis: SweepAxis,
    values: &[f64],
    time: Option<f64>,
    criterion: OptCriterion,
    out: &mut OutputDir,
) -> Result<Summary, CliError> {
    let BoundaryModel::Closure(base) = resolved.sim.model else {
        return Err(CliError::Usage("sweeps need a closure model (model.kind = mls, cmls or ecmls)".into()));
    };
    let exp = experiment(resolved, time)?;
    let result = sweep(&exp, &base, axis, values).map_err(CliError::from_metrics)?;
    let mut summary = Summary::default();
    let mut w = out.csv("sweep.csv")?;
    w.write_record([axis.name(), "peak_comp", "avg_comp", "failures"]).map_err(csv_err)?;
    for p in &result.points {
        w.write_record([num(p.value), num(p.peak_comp), num(p.avg_comp), p.failures.to_string()]).map_err(csv_err)?;
        if p.failures > 0 {
            summary.failures.push(format!("{} = {}: {} ghost points without a closure", axis.name(), p.value, p.failures));
        }
    }
    flush(w)?;
    match argmin_point(&result, criterion) {
        Ok(best) => summary.notes.push(format!("optimum {} = {}", axis.name(), best.value)),
        Err(e) => summary.notes.push(e.to_string()),
    }
    Ok(summary)
}

/// Case numbers (1-based) from `all` or a comma list.
pub fn parse_cases(text: &str) -> Result<Vec<usize>, CliError> {
    let text = text.trim();
    if text.eq_ignore_ascii_case("all") {
        return Ok((1..=BETA_CASES.len()).collect());
    }
    let cases: Vec<usize> = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<usize>().ok().filter(|&i| (1..=BETA_CASES.len()).contains(&i)))
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::Usage(format!("cases must be `all` or numbers 1..={}", BETA_CASES.len())))?;
    if cases.is_empty() {
        return Err(CliError::Usage("the case list is empty".into()));
    }
    if cases.len() < 3 {
        return Err(CliError::Usage(format!("a fit needs at least 3 cases, got {}", cases.len())));
    }
    Ok(cases)
}

pub struct FitOptions {
    pub cases: Vec<usize>,
    pub beta: (f64, f64, f64),
    pub diffusivity: f64,
    pub time: f64,
    pub criterion: OptCriterion,
}

pub fn cmd_fit_beta(opts: &FitOptions, out: &mut OutputDir) -> Result<Summary, CliError> {
    if opts.cases.is_empty() {
        return Err(CliError::Usage("the case list is empty".into()));
    }
    let values = value_grid(opts.beta.0, opts.beta.1, opts.beta.2).map_err(|e| CliError::Usage(e.to_string()))?;
    let base = AlgorithmSpec::new(Algorithm::Ecmls, BasisFamily::IncompleteQuartic, WeightSpec::CubicSpline { beta: 2.0 }, 100.0);
    let mut summary = Summary::default();
    let mut w = out.csv("fit.csv")?;
    w.write_record([
        "case", "radius_m", "n_cells", "dx_m", "dt_s", "log10_ratio", "beta_opt", "status", "slope", "intercept",
        "residual_rms",
    ])
    .map_err(csv_err)?;
    let mut points = Vec::new();
    for &i in &opts.cases {
        let c = BETA_CASES[i - 1];
        let outcome = ExperimentSetup::centered(c.radius, c.n_cells, c.dx, c.dt, opts.diffusivity, opts.time)
            .and_then(Experiment::new)
            .and_then(|exp| sweep(&exp, &base, SweepAxis::Beta, &values))
            .and_then(|res| argmin_point(&res, opts.criterion));
        let (beta, status) = match outcome {
            Ok(best) => {
                points.push((c.log10_ratio(), best.value));
                (num(best.value), "ok".to_string())
            }
            Err(e) => {
                summary.failures.push(format!("case {i}: {e}"));
                (String::new(), e.to_string())
            }
        };
        w.write_record([
            i.to_string(),
            num(c.radius),
            c.n_cells.to_string(),
            num(c.dx),
            num(c.dt),
            num(c.log10_ratio()),
            beta,
            status,
            String::new(),
            String::new(),
            String::new(),
        ])
        .map_err(csv_err)?;
    }
    let fit = fit_beta_opt(&points);
    let mut row = vec![String::new(); 11];
    row[0] = "fit".into();
    match &fit {
        Ok(f) => {
            row[7] = format!("{} points", f.points.len());
            row[8] = num(f.slope);
            row[9] = num(f.intercept);
            row[10] = num(f.residual_rms);
        }
        Err(e) => row[7] = e.to_string(),
    }
    w.write_record(&row).map_err(csv_err)?;
    flush(w)?;
    fit.map_err(|e| CliError::Run(e.to_string()))?;
    Ok(summary)
}

pub struct ReferenceOptions {
    pub radius: f64,
    pub diffusivity: f64,
    pub times: Vec<f64>,
    pub points: usize,
    pub tol: f64,
}

pub fn cmd_reference(opts: &ReferenceOptions, out: &mut OutputDir) -> Result<Summary, CliError> {
    if opts.times.is_empty() || opts.points < 2 {
        return Err(CliError::Usage("reference needs at least one time and two radii".into()));
    }
    let t_min = opts.times.iter().copied().fold(f64::INFINITY, f64::min);
    let series = DiscSeries::new(opts.radius, opts.diffusivity, t_min).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut summary = Summary::default();
    let mut flagged = 0usize;
    let mut w = out.csv("reference.csv")?;
    w.write_record(["r_m", "t_s", "c_bounded", "c_free", "cancellation_flag"]).map_err(csv_err)?;
    for &t in &opts.times {
        for i in 0..opts.points {
            let r = (opts.radius * i as f64 / (opts.points - 1) as f64).min(opts.radius);
            let b = series.eval(r, t, opts.tol).map_err(|e| CliError::Run(e.to_string()))?;
            flagged += b.cancellation_flag as usize;
            w.write_record([num(r), num(t), num(b.value), num(c_free(r, t, opts.diffusivity)), (b.cancellation_flag as u8).to_string()])
                .map_err(csv_err)?;
        }
    }
    flush(w)?;
    if flagged > 0 {
        summary.notes.push(format!("{flagged} rows carry the cancellation flag"));
    }
    Ok(summary)
}

/// Step count sanity for `--time` overrides.
pub fn check_time(resolved: &Resolved, t: f64) -> Result<(), CliError> {
    step_of(t, resolved.sim.dt).map(|_| ()).map_err(CliError::from_solver)
}

pub fn load(path: &Path) -> Result<(ConfigFile, Resolved), CliError> {
    let file = ConfigFile::load(path)?;
    let resolved = file.resolve()?;
    Ok((file, resolved))
}
