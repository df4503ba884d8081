//! Boundary error measures, parameter sweeps and the β-optimum regression.
//!
//! Errors are measured at the internal boundary nodes against the disc
//! series. The compensated error subtracts the error the same lattice makes
//! without any boundary, taken from a reflection-free run compared with the
//! free-plane solution, so what remains is attributable to the boundary
//! model.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::analytics::{c_free, AnalyticsError, DiscSeries};
use crate::closure::{build_all_closures, AlgorithmSpec, BoundaryConditionSpec, BoundaryKind};
use crate::geometry::{
    classify_nodes, project, CircleBoundary, GridSpec, NodeClassification, NodeIndex, Point2,
};
use crate::kernels::{BasisFamily, WeightSpec};
use crate::solver::{
    step_of, BoundaryModel, FieldState, FreeSpaceConfig, FreeSpaceSim, SimConfig, Simulation, SolverError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("reference concentration is zero")]
    DivisionByZeroConcentration,
    #[error("analytical reference at node {node} (t = {t:e} s) is below double-precision resolution")]
    PrecisionLossAtReference { node: NodeIndex, t: f64 },
    #[error("every sampled value produced closure failures")]
    AllFailed,
    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("abscissae do not span a line (fewer than two distinct values)")]
    DegenerateAbscissae,
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("the disc reference assumes an impermeable rim (zero-flux Neumann)")]
    UnsupportedBoundary,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

/// Relative concentration step `(c_neighbor − c_boundary)/c_boundary`.
pub fn cs_rel(c_neighbor: f64, c_boundary: f64) -> Result<f64, MetricsError> {
    if c_boundary == 0.0 {
        return Err(MetricsError::DivisionByZeroConcentration);
    }
    Ok((c_neighbor - c_boundary) / c_boundary)
}

/// `|(c_fd − c_ana)/c_ana|`.
pub fn cerror(c_fd: f64, c_ana: f64) -> Result<f64, MetricsError> {
    if c_ana == 0.0 {
        return Err(MetricsError::DivisionByZeroConcentration);
    }
    Ok(((c_fd - c_ana) / c_ana).abs())
}

/// Relative error with the boundary-free lattice error subtracted.
pub fn cerror_comp(c_fd_bc: f64, c_ana_bc: f64, c_fd_nobc: f64, c_ana_nobc: f64) -> Result<f64, MetricsError> {
    if c_ana_bc == 0.0 {
        return Err(MetricsError::DivisionByZeroConcentration);
    }
    Ok((((c_fd_bc - c_ana_bc) - (c_fd_nobc - c_ana_nobc)) / c_ana_bc).abs())
}

/// Reference values at one boundary node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeReference {
    pub node: NodeIndex,
    /// Lattice offset from the release node.
    pub offset: (isize, isize),
    pub r: f64,
    pub c_ana_bc: f64,
    pub c_fd_nobc: f64,
    pub c_ana_nobc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeError {
    pub node: NodeIndex,
    pub c_fd: f64,
    pub c_ana: f64,
    pub cerror: f64,
    pub cerror_comp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub time: f64,
    pub records: Vec<NodeError>,
    /// NaN when the run could not be made (`failures > 0`).
    pub peak_comp: f64,
    pub avg_comp: f64,
    pub failures: usize,
}

impl ErrorReport {
    pub fn is_valid(&self) -> bool {
        self.failures == 0 && self.peak_comp.is_finite()
    }

    fn failed(time: f64, failures: usize) -> Self {
        Self { time, records: Vec::new(), peak_comp: f64::NAN, avg_comp: f64::NAN, failures }
    }
}

/// Error report over the boundary nodes of one field.
pub fn boundary_error_report(
    field: &FieldState,
    grid: &GridSpec,
    references: &[NodeReference],
    time: f64,
) -> Result<ErrorReport, MetricsError> {
    let mut records = Vec::with_capacity(references.len());
    for r in references {
        let c_fd = field.at(grid, r.node);
        records.push(NodeError {
            node: r.node,
            c_fd,
            c_ana: r.c_ana_bc,
            cerror: cerror(c_fd, r.c_ana_bc)?,
            cerror_comp: cerror_comp(c_fd, r.c_ana_bc, r.c_fd_nobc, r.c_ana_nobc)?,
        });
    }
    let peak_comp = records.iter().map(|e| e.cerror_comp).fold(0.0, f64::max);
    let avg_comp = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|e| e.cerror_comp).sum::<f64>() / records.len() as f64
    };
    Ok(ErrorReport { time, records, peak_comp, avg_comp, failures: 0 })
}

type FreeKey = [u64; 5];

fn free_space_cache() -> &'static Mutex<HashMap<FreeKey, Arc<FreeSpaceSim>>> {
    static CACHE: OnceLock<Mutex<HashMap<FreeKey, Arc<FreeSpaceSim>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Reflection-free run advanced to `n_steps`, shared between callers with
/// the same lattice steps and time step.
pub fn free_space_run(config: FreeSpaceConfig) -> Result<Arc<FreeSpaceSim>, SolverError> {
    let key = [
        config.dx.to_bits(),
        config.dy.to_bits(),
        config.dt.to_bits(),
        config.diffusivity.to_bits(),
        config.n_steps as u64,
    ];
    let want = config.half_cells();
    if let Some(sim) = free_space_cache().lock().unwrap().get(&key) {
        let have = sim.half_cells();
        if have.0 >= want.0 && have.1 >= want.1 {
            return Ok(Arc::clone(sim));
        }
    }
    let mut sim = FreeSpaceSim::new(config)?;
    sim.advance_to(config.n_steps);
    sim.check_edge()?;
    let sim = Arc::new(sim);
    free_space_cache().lock().unwrap().insert(key, Arc::clone(&sim));
    Ok(sim)
}

/// Lattice, rim and time step shared by every model under comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentSetup {
    pub grid: GridSpec,
    pub boundary: CircleBoundary,
    pub diffusivity: f64,
    pub dt: f64,
    pub time: f64,
    /// Relative tolerance for the series cancellation flag.
    pub series_tol: f64,
}

impl ExperimentSetup {
    /// `n_cells` intervals per axis around a rim of `radius`, with two
    /// padding rings.
    pub fn centered(radius: f64, n_cells: usize, dx: f64, dt: f64, diffusivity: f64, time: f64) -> Result<Self, MetricsError> {
        let grid = GridSpec::centered(Point2::default(), n_cells, 2, dx, dx).map_err(SolverError::from)?;
        let boundary = CircleBoundary::new(Point2::default(), radius).map_err(SolverError::from)?;
        Ok(Self { grid, boundary, diffusivity, dt, time, series_tol: crate::analytics::DEFAULT_SERIES_TOL })
    }

    /// Reflection-free run over `n_steps`: half-width at least
    /// `max(2R, R + 20·h)` per axis, widened further if the Gaussian tail
    /// bound demands it.
    pub fn free_space_config(&self, n_steps: usize) -> FreeSpaceConfig {
        let radius = self.boundary.radius;
        let min_cells = |h: f64| ((2.0 * radius).max(radius + 20.0 * h) / h).ceil() as usize;
        FreeSpaceConfig {
            dx: self.grid.dx,
            dy: self.grid.dy,
            dt: self.dt,
            diffusivity: self.diffusivity,
            n_steps,
            min_half_cells: (min_cells(self.grid.dx), min_cells(self.grid.dy)),
        }
    }

    pub fn sim_config(&self, model: BoundaryModel) -> SimConfig {
        SimConfig {
            grid: self.grid,
            boundary: self.boundary,
            diffusivity: self.diffusivity,
            dt: self.dt,
            model,
            bc: BoundaryConditionSpec::zero_flux(self.diffusivity),
            t_end: self.time,
            snapshot_times: vec![self.time],
        }
    }
}

/// A comparison setup with its references computed once.
#[derive(Debug, Clone)]
pub struct Experiment {
    setup: ExperimentSetup,
    classification: NodeClassification,
    references: Vec<NodeReference>,
}

impl Experiment {
    pub fn new(setup: ExperimentSetup) -> Result<Self, MetricsError> {
        let base = setup.sim_config(BoundaryModel::Staircase);
        base.validate()?;
        let n_steps = step_of(setup.time, setup.dt)?;
        if n_steps == 0 {
            return Err(MetricsError::InvalidSweep("comparison time must be positive".into()));
        }
        let classification = classify_nodes(&setup.grid, &setup.boundary).map_err(SolverError::from)?;
        let g = setup.grid;
        let radius = setup.boundary.radius;
        let free = free_space_run(setup.free_space_config(n_steps))?;
        let series = DiscSeries::new(radius, setup.diffusivity, setup.time)?;
        let center = g.node_at(setup.boundary.center).ok_or(MetricsError::Solver(SolverError::Geometry(
            crate::geometry::GeometryError::CenterNotOnNode,
        )))?;
        let mut references = Vec::new();
        for &node in classification.boundary_nodes() {
            let offset = (node.j as isize - center.j as isize, node.k as isize - center.k as isize);
            let r = g.position(node).distance(setup.boundary.center).min(radius);
            let ana = series.eval(r, setup.time, setup.series_tol)?;
            if ana.cancellation_flag {
                return Err(MetricsError::PrecisionLossAtReference { node, t: setup.time });
            }
            references.push(NodeReference {
                node,
                offset,
                r,
                c_ana_bc: ana.value,
                c_fd_nobc: free.value_at(offset.0, offset.1),
                c_ana_nobc: c_free(r, setup.time, setup.diffusivity),
            });
        }
        Ok(Self { setup, classification, references })
    }

    pub fn setup(&self) -> &ExperimentSetup {
        &self.setup
    }

    pub fn classification(&self) -> &NodeClassification {
        &self.classification
    }

    pub fn references(&self) -> &[NodeReference] {
        &self.references
    }

    /// Runs `model` to the comparison time and reports. Closure failures
    /// yield a report with `failures > 0` and NaN statistics.
    pub fn report(&self, model: BoundaryModel) -> Result<ErrorReport, MetricsError> {
        let config = self.setup.sim_config(model);
        let closures = match &model {
            BoundaryModel::Staircase => None,
            BoundaryModel::Closure(alg) => {
                let set = build_all_closures(&self.classification, &self.setup.boundary, alg, &config.bc)
                    .map_err(SolverError::from)?;
                if !set.failures.is_empty() {
                    return Ok(ErrorReport::failed(self.setup.time, set.failures.len()));
                }
                Some(set)
            }
        };
        let mut sim = Simulation::with_parts(config, self.classification.clone(), closures)?;
        let n = step_of(self.setup.time, self.setup.dt)?;
        sim.advance_to(n);
        boundary_error_report(sim.state(), &self.setup.grid, &self.references, self.setup.time)
    }
}

/// Which statistic defines the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptCriterion {
    #[default]
    Peak,
    Average,
}

impl OptCriterion {
    fn pick(self, p: &SweepPoint) -> f64 {
        match self {
            OptCriterion::Peak => p.peak_comp,
            OptCriterion::Average => p.avg_comp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    Beta,
    Kappa,
    P,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Beta => "beta",
            SweepAxis::Kappa => "kappa",
            SweepAxis::P => "p",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "beta" => Some(SweepAxis::Beta),
            "kappa" => Some(SweepAxis::Kappa),
            "p" => Some(SweepAxis::P),
            _ => None,
        }
    }

    /// `base` with this axis set to `value`. For the power family the β axis
    /// sets the stencil support radius.
    pub fn apply(self, base: &AlgorithmSpec, value: f64) -> Result<AlgorithmSpec, MetricsError> {
        let mut alg = *base;
        match (self, &mut alg.weight) {
            (SweepAxis::Kappa, _) => alg.kappa = value,
            (SweepAxis::Beta, WeightSpec::CubicSpline { beta } | WeightSpec::Cosine { beta }) => *beta = value,
            (SweepAxis::Beta, WeightSpec::PowerOfDistance { support, .. }) => *support = value,
            (SweepAxis::P, WeightSpec::PowerOfDistance { p, .. }) => *p = value,
            (SweepAxis::P, _) => {
                return Err(MetricsError::InvalidSweep("the p axis needs the power-of-distance weight".into()));
            }
        }
        alg.validate().map_err(|e| MetricsError::InvalidSweep(e.to_string()))?;
        Ok(alg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub peak_comp: f64,
    pub avg_comp: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

/// Inclusive grid `lo, lo+step, …` up to `hi` (with a small tolerance).
pub fn value_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, MetricsError> {
    if !(step > 0.0 && lo.is_finite() && hi.is_finite() && hi >= lo) {
        return Err(MetricsError::InvalidSweep(format!("bad range {lo}:{hi}:{step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

/// One simulation and report per value, run concurrently; the result is
/// ordered by value.
pub fn sweep(
    experiment: &Experiment,
    base: &AlgorithmSpec,
    axis: SweepAxis,
    values: &[f64],
) -> Result<SweepResult, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::InvalidSweep("no values".into()));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MetricsError::InvalidSweep("values must be strictly increasing".into()));
    }
    let specs = values.iter().map(|&v| axis.apply(base, v)).collect::<Result<Vec<_>, _>>()?;
    let reports: Vec<Result<ErrorReport, MetricsError>> =
        specs.par_iter().map(|alg| experiment.report(BoundaryModel::Closure(*alg))).collect();
    let mut points = Vec::with_capacity(values.len());
    for (&value, rep) in values.iter().zip(reports) {
        let rep = rep?;
        points.push(SweepPoint { value, peak_comp: rep.peak_comp, avg_comp: rep.avg_comp, failures: rep.failures });
    }
    Ok(SweepResult { axis, points })
}

/// Sampled minimiser of the chosen statistic over failure-free points;
/// ties go to the smaller value.
pub fn argmin_point(result: &SweepResult, criterion: OptCriterion) -> Result<SweepPoint, MetricsError> {
    let mut best: Option<SweepPoint> = None;
    for p in result.points.iter().filter(|p| p.failures == 0 && criterion.pick(p).is_finite()) {
        if best.map_or(true, |b| criterion.pick(p) < criterion.pick(&b)) {
            best = Some(*p);
        }
    }
    best.ok_or(MetricsError::AllFailed)
}

/// Scans β over `[lo, hi]` in steps of `step`.
pub fn find_beta_opt(
    experiment: &Experiment,
    base: &AlgorithmSpec,
    lo: f64,
    hi: f64,
    step: f64,
    criterion: OptCriterion,
) -> Result<(f64, SweepResult), MetricsError> {
    let values = value_grid(lo, hi, step)?;
    let result = sweep(experiment, base, SweepAxis::Beta, &values)?;
    let best = argmin_point(&result, criterion)?;
    Ok((best.value, result))
}

/// Default β step; optima are reported on multiples of 1/16.
pub const BETA_STEP: f64 = 0.0625;

/// Least-squares line `β_opt = slope·log10(R_c/dx) + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
}

impl BetaFit {
    pub fn predict(&self, log10_ratio: f64) -> f64 {
        self.slope * log10_ratio + self.intercept
    }
}

/// Ordinary least squares over `(log10(R_c/dx), β_opt)` pairs. Repeated
/// abscissae are allowed as long as at least two distinct ones remain.
pub fn fit_beta_opt(points: &[(f64, f64)]) -> Result<BetaFit, MetricsError> {
    if points.len() < 3 {
        return Err(MetricsError::InsufficientPoints { needed: 3, got: points.len() });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let spread = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max).max(1.0);
    if sxx <= (1e-12 * spread).powi(2) * n {
        return Err(MetricsError::DegenerateAbscissae);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    Ok(BetaFit { points: points.to_vec(), slope, intercept, residual_rms: (rss / n).sqrt() })
}

/// One row of the β-optimum case table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaCase {
    pub radius: f64,
    pub n_cells: usize,
    pub dx: f64,
    pub dt: f64,
}

impl BetaCase {
    pub fn log10_ratio(&self) -> f64 {
        (self.radius / self.dx).log10()
    }
}

const UM: f64 = 1e-6;
const US: f64 = 1e-6;

/// Radius, lattice size, spatial and time step of the twelve β-optimum cases.
pub const BETA_CASES: [BetaCase; 12] = [
    BetaCase { radius: 0.0625 * UM, n_cells: 50, dx: 0.0025 * UM, dt: 0.00625 * US },
    BetaCase { radius: 0.125 * UM, n_cells: 50, dx: 0.005 * UM, dt: 0.025 * US },
    BetaCase { radius: 0.25 * UM, n_cells: 50, dx: 0.01 * UM, dt: 0.1 * US },
    BetaCase { radius: 0.125 * UM, n_cells: 100, dx: 0.0025 * UM, dt: 0.00625 * US },
    BetaCase { radius: 0.25 * UM, n_cells: 100, dx: 0.005 * UM, dt: 0.025 * US },
    BetaCase { radius: 0.5 * UM, n_cells: 100, dx: 0.01 * UM, dt: 0.1 * US },
    BetaCase { radius: 0.25 * UM, n_cells: 200, dx: 0.0025 * UM, dt: 0.00625 * US },
    BetaCase { radius: 0.5 * UM, n_cells: 200, dx: 0.005 * UM, dt: 0.025 * US },
    BetaCase { radius: 1.0 * UM, n_cells: 200, dx: 0.01 * UM, dt: 0.1 * US },
    BetaCase { radius: 0.5 * UM, n_cells: 400, dx: 0.0025 * UM, dt: 0.00625 * US },
    BetaCase { radius: 1.0 * UM, n_cells: 400, dx: 0.005 * UM, dt: 0.025 * US },
    BetaCase { radius: 2.0 * UM, n_cells: 400, dx: 0.01 * UM, dt: 0.1 * US },
];

/// Smallest β at which every ghost point's stencil holds at least `rank`
/// interior nodes (the least a plain MLS fit of that basis needs).
pub fn min_beta_for_rank(
    classification: &NodeClassification,
    boundary: &CircleBoundary,
    basis: BasisFamily,
) -> Result<f64, MetricsError> {
    let grid = classification.grid();
    let m = basis.rank();
    let interior: Vec<Point2> = classification.interior_nodes().map(|n| grid.position(n)).collect();
    if interior.len() < m {
        return Ok(f64::INFINITY);
    }
    let mut worst: f64 = 0.0;
    let mut dists = Vec::with_capacity(interior.len());
    for &gp in classification.ghost_points() {
        let gip = project(grid.position(gp), boundary).map_err(SolverError::from)?.ip;
        dists.clear();
        dists.extend(interior.iter().map(|p| p.distance(gip) / grid.diagonal()));
        dists.select_nth_unstable_by(m - 1, f64::total_cmp);
        worst = worst.max(dists[m - 1]);
    }
    Ok(worst)
}

/// Warning text when `alg` samples fewer stencil nodes than its basis rank.
pub fn min_beta_warning(
    classification: &NodeClassification,
    boundary: &CircleBoundary,
    alg: &AlgorithmSpec,
) -> Result<Option<String>, MetricsError> {
    let need = min_beta_for_rank(classification, boundary, alg.basis)?;
    let beta = alg.weight.support();
    Ok((beta < need).then(|| {
        format!(
            "support {beta} is below {need:.4}, the radius that gives every ghost point {} stencil nodes for the {} basis",
            alg.basis.rank(),
            alg.basis
        )
    }))
}

/// Zero-flux check used before building disc references.
pub fn require_impermeable(bc: &BoundaryConditionSpec) -> Result<(), MetricsError> {
    if bc.kind == BoundaryKind::Neumann && bc.value == 0.0 {
        Ok(())
    } else {
        Err(MetricsError::UnsupportedBoundary)
    }
}
