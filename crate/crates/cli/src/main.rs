//! `ghostcell`: run diffusion experiments around a circular hole and write
//! the results as CSV.
//!
//! Exit codes: 0 success, 1 runtime error, 2 configuration or usage error,
//! 3 stability violation, 4 ghost points without a closure under `--strict`.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use ghostcell::metrics::{value_grid, MetricsError, OptCriterion, SweepAxis};
use ghostcell::solver::SolverError;
use thiserror::Error;

use crate::commands::{FitOptions, ReferenceOptions, Summary};
use crate::config::{parse_quantity, ConfigError, ConfigFile, LengthDim, TimeDim, EXAMPLE_CONFIG};
use crate::output::{ManifestInfo, OutputDir};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Stability(String),
    #[error("{0}")]
    Regularity(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn from_solver(e: SolverError) -> Self {
        match e {
            SolverError::StabilityViolation { .. } => CliError::Stability(e.to_string()),
            SolverError::InvalidTime { .. } | SolverError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            SolverError::RegularityFailures { .. } => CliError::Regularity(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }

    fn from_metrics(e: MetricsError) -> Self {
        match e {
            MetricsError::Solver(s) => CliError::from_solver(s),
            MetricsError::InvalidSweep(m) => CliError::Usage(m),
            other => CliError::Run(other.to_string()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Stability(_) => 3,
            CliError::Regularity(_) => 4,
            CliError::Io(_) | CliError::Run(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "ghostcell", version, about = "Ghost-cell diffusion experiments around a circular hole")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Beta,
    Kappa,
    P,
}

#[derive(Clone, Copy, ValueEnum)]
enum Criterion {
    Peak,
    Average,
}

impl From<Criterion> for OptCriterion {
    fn from(c: Criterion) -> Self {
        match c {
            Criterion::Peak => OptCriterion::Peak,
            Criterion::Average => OptCriterion::Average,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Step one configuration and write snapshots and boundary probes.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Exit with status 4 if any ghost point lacks a closure.
        #[arg(long)]
        strict: bool,
    },
    /// Boundary error reports of several models on one lattice.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Comma list of staircase, mls, cmls, ecmls.
        #[arg(long, default_value = "staircase,cmls,ecmls", value_delimiter = ',')]
        models: Vec<String>,
        /// Comparison time (overrides analysis.time), e.g. 30us.
        #[arg(long)]
        time: Option<String>,
        #[arg(long)]
        strict: bool,
    },
    /// Error reports over one closure parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// LO:HI:STEP, inclusive.
        #[arg(long, conflicts_with = "values")]
        range: Option<String>,
        /// Explicit comma list, e.g. 0,1,10,100,1000,10000.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        time: Option<String>,
        #[arg(long, value_enum, default_value = "peak")]
        criterion: Criterion,
        #[arg(long)]
        strict: bool,
    },
    /// Optimal spline support for the built-in radius/lattice cases and a
    /// straight-line fit against log10(R/dx).
    FitBeta {
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// `all` or a comma list of case numbers 1..=12.
        #[arg(long, default_value = "all")]
        cases: String,
        /// β grid, LO:HI:STEP.
        #[arg(long, default_value = "1:6:0.0625")]
        range: String,
        #[arg(long, default_value = "30us")]
        time: String,
        #[arg(long = "D", default_value_t = 1e-10)]
        diffusivity: f64,
        #[arg(long, value_enum, default_value = "peak")]
        criterion: Criterion,
    },
    /// Analytical disc and free-plane concentrations.
    Reference {
        /// Take radius and D from this configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value = "0.5um")]
        radius: String,
        #[arg(long = "D", default_value_t = 1e-10)]
        diffusivity: f64,
        /// Comma list of times.
        #[arg(long, default_value = "30us", value_delimiter = ',')]
        time: Vec<String>,
        /// Radii sampled uniformly on [0, R].
        #[arg(long, default_value_t = 51)]
        points: usize,
        #[arg(long, default_value_t = ghostcell::analytics::DEFAULT_SERIES_TOL)]
        tol: f64,
    },
    /// Print an example configuration.
    Example,
}

fn time_arg(text: &str) -> Result<f64, CliError> {
    parse_quantity::<TimeDim>(text).map_err(|m| CliError::Usage(format!("--time: {m}")))
}

fn execute(command: Command) -> Result<(Summary, OutputDir, Option<ConfigFile>, &'static str), CliError> {
    Ok(match command {
        Command::Run { config, out, .. } => {
            let (file, resolved) = commands::load(&config)?;
            let mut dir = OutputDir::create(&out)?;
            let s = commands::cmd_run(&resolved, &mut dir)?;
            (s, dir, Some(file), "run")
        }
        Command::Compare { config, out, models, time, .. } => {
            let (file, resolved) = commands::load(&config)?;
            let time = time.as_deref().map(time_arg).transpose()?;
            if let Some(t) = time {
                commands::check_time(&resolved, t)?;
            }
            let mut dir = OutputDir::create(&out)?;
            let s = commands::cmd_compare(&resolved, &models, time, &mut dir)?;
            (s, dir, Some(file), "compare")
        }
        Command::Sweep { config, out, axis, range, values, time, criterion, .. } => {
            let (file, resolved) = commands::load(&config)?;
            let time = time.as_deref().map(time_arg).transpose()?;
            if let Some(t) = time {
                commands::check_time(&resolved, t)?;
            }
            let values = match range {
                Some(r) => {
                    let (lo, hi, step) = commands::parse_range(&r)?;
                    value_grid(lo, hi, step).map_err(|e| CliError::Usage(e.to_string()))?
                }
                None if !values.is_empty() => values,
                None => return Err(CliError::Usage("sweep needs --range or --values".into())),
            };
            let axis = match axis {
                Axis::Beta => SweepAxis::Beta,
                Axis::Kappa => SweepAxis::Kappa,
                Axis::P => SweepAxis::P,
            };
            let mut dir = OutputDir::create(&out)?;
            let s = commands::cmd_sweep(&resolved, axis, &values, time, criterion.into(), &mut dir)?;
            (s, dir, Some(file), "sweep")
        }
        Command::FitBeta { out, cases, range, time, diffusivity, criterion } => {
            let opts = FitOptions {
                cases: commands::parse_cases(&cases)?,
                beta: commands::parse_range(&range)?,
                diffusivity,
                time: time_arg(&time)?,
                criterion: criterion.into(),
            };
            let mut dir = OutputDir::create(&out)?;
            let s = commands::cmd_fit_beta(&opts, &mut dir)?;
            (s, dir, None, "fit-beta")
        }
        Command::Reference { config, out, radius, diffusivity, time, points, tol } => {
            let (radius, diffusivity, file) = match config {
                Some(path) => {
                    let (file, resolved) = commands::load(&path)?;
                    (resolved.sim.boundary.radius, resolved.sim.diffusivity, Some(file))
                }
                None => {
                    let r = parse_quantity::<LengthDim>(&radius).map_err(|m| CliError::Usage(format!("--radius: {m}")))?;
                    (r, diffusivity, None)
                }
            };
            let times = time.iter().map(|t| time_arg(t)).collect::<Result<Vec<_>, _>>()?;
            let opts = ReferenceOptions { radius, diffusivity, times, points, tol };
            let mut dir = OutputDir::create(&out)?;
            let s = commands::cmd_reference(&opts, &mut dir)?;
            (s, dir, file, "reference")
        }
        Command::Example => unreachable!("handled before dispatch"),
    })
}

fn strict_flag(command: &Command) -> bool {
    match command {
        Command::Run { strict, .. } | Command::Compare { strict, .. } | Command::Sweep { strict, .. } => *strict,
        _ => false,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Example = cli.command {
        print!("{EXAMPLE_CONFIG}");
        return ExitCode::SUCCESS;
    }
    let strict = strict_flag(&cli.command);
    let args: Vec<String> = std::env::args().skip(1).collect();
    let start = Instant::now();
    let result = execute(cli.command).and_then(|(summary, dir, file, name)| {
        let info = ManifestInfo {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: name.to_string(),
            args,
            wall_clock_s: start.elapsed().as_secs_f64(),
            outputs: dir.written().to_vec(),
            failures: summary.failures.clone(),
            notes: summary.notes.clone(),
        };
        let manifest = dir.write_manifest(file.as_ref(), &info)?;
        for note in &summary.notes {
            eprintln!("note: {note}");
        }
        eprintln!("wrote {} file(s) and {}", info.outputs.len(), manifest.display());
        if strict && summary.has_failures() {
            return Err(CliError::Regularity(summary.failures.join("; ")));
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
