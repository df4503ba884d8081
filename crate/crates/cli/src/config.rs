//! Experiment configuration files.
//!
//! TOML with the sections `[grid]`, `[boundary]`, `[physics]`, `[model]`,
//! `[bc]` and `[analysis]`. Lengths and times are plain numbers in SI units
//! or strings with a unit suffix (`"0.5um"`, `"30us"`). The resolved form
//! serializes back with every default filled in and every quantity in SI,
//! so a manifest's echo parses to the identical configuration.

use std::fmt;
use std::marker::PhantomData;
use std::path::Path;

use ghostcell::metrics::ExperimentSetup;
use ghostcell::solver::{BoundaryModel, SimConfig};
use ghostcell::{
    Algorithm, AlgorithmSpec, BasisFamily, BoundaryConditionSpec, BoundaryKind, CircleBoundary, GridSpec, Point2,
    WeightSpec,
};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {message}")]
    Field { field: &'static str, message: String },
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, message: message.into() }
}

pub trait Dimension {
    const NAME: &'static str;
    /// Accepted suffixes with their factor to SI.
    const UNITS: &'static [(&'static str, f64)];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthDim;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeDim;

impl Dimension for LengthDim {
    const NAME: &'static str = "length";
    const UNITS: &'static [(&'static str, f64)] =
        &[("nm", 1e-9), ("um", 1e-6), ("µm", 1e-6), ("μm", 1e-6), ("mm", 1e-3), ("m", 1.0)];
}

impl Dimension for TimeDim {
    const NAME: &'static str = "time";
    const UNITS: &'static [(&'static str, f64)] =
        &[("ns", 1e-9), ("us", 1e-6), ("µs", 1e-6), ("μs", 1e-6), ("ms", 1e-3), ("s", 1.0)];
}

/// A physical quantity held in SI units.
#[derive(Clone, Copy, PartialEq)]
pub struct Quantity<D> {
    pub si: f64,
    _dim: PhantomData<D>,
}

pub type Length = Quantity<LengthDim>;
pub type Time = Quantity<TimeDim>;

impl<D> Quantity<D> {
    pub const fn new(si: f64) -> Self {
        Self { si, _dim: PhantomData }
    }
}

impl<D> fmt::Debug for Quantity<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.si)
    }
}

/// Parses `"<number><unit>"`, or a bare number taken as SI.
pub fn parse_quantity<D: Dimension>(text: &str) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, c)| c.is_alphabetic() && !(matches!(c, 'e' | 'E') && is_exponent(text, i)))
        .map_or(text.len(), |(i, _)| i);
    let (num, unit) = text.split_at(split);
    let value: f64 = num.trim().parse().map_err(|_| format!("`{text}` is not a {}", D::NAME))?;
    let unit = unit.trim();
    if unit.is_empty() {
        return Ok(value);
    }
    D::UNITS
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|&(_, f)| value * f)
        .ok_or_else(|| {
            let names: Vec<&str> = D::UNITS.iter().map(|u| u.0).collect();
            format!("unknown {} unit `{unit}` (expected one of {})", D::NAME, names.join(", "))
        })
}

/// `e`/`E` at `i` is an exponent marker when followed by a digit or sign.
fn is_exponent(text: &str, i: usize) -> bool {
    i > 0 && text[i + 1..].starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+')
}

impl<'de, D: Dimension> Deserialize<'de> for Quantity<D> {
    fn deserialize<De: Deserializer<'de>>(deserializer: De) -> Result<Self, De::Error> {
        struct V<D>(PhantomData<D>);
        impl<D: Dimension> Visitor<'_> for V<D> {
            type Value = Quantity<D>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a {} as a number in SI units or a string with a unit suffix", D::NAME)
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                Ok(Quantity::new(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                Ok(Quantity::new(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                Ok(Quantity::new(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                parse_quantity::<D>(v).map(Quantity::new).map_err(E::custom)
            }
        }
        deserializer.deserialize_any(V(PhantomData))
    }
}

impl<D> Serialize for Quantity<D> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.si)
    }
}

const US: f64 = 1e-6;

fn default_margin() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Intervals per axis across the rim diameter region.
    pub n_cells: usize,
    pub dx: Length,
    #[serde(default)]
    pub dy: Option<Length>,
    #[serde(default = "default_margin")]
    pub margin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub radius: Length,
    #[serde(default = "zero_length")]
    pub center_x: Length,
    #[serde(default = "zero_length")]
    pub center_y: Length,
}

fn zero_length() -> Length {
    Length::new(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    #[serde(rename = "D")]
    pub diffusivity: f64,
    pub dt: Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// `staircase`, `mls`, `cmls` or `ecmls`.
    pub kind: String,
    pub basis: String,
    /// `spline`, `cosine` or `power`.
    pub weight: String,
    pub beta: f64,
    pub p: f64,
    /// Stencil radius for the power weight, in lattice diagonals.
    pub support: f64,
    pub kappa: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: "staircase".into(),
            basis: BasisFamily::IncompleteQuartic.name().into(),
            weight: "spline".into(),
            beta: 2.75,
            p: -8.0,
            support: 2.75,
            kappa: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcSection {
    /// `neumann` (value = normal flux) or `dirichlet` (value = concentration).
    pub kind: String,
    pub value: f64,
}

impl Default for BcSection {
    fn default() -> Self {
        Self { kind: "neumann".into(), value: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub t_end: Time,
    /// Snapshot times; empty means `t_end` only.
    pub snapshots: Vec<Time>,
    /// Comparison time for error reports.
    pub time: Time,
    pub series_tol: f64,
    pub probes: bool,
    /// Probe rows are written every `probe_stride` steps.
    pub probe_stride: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            t_end: Time::new(30.0 * US),
            snapshots: Vec::new(),
            time: Time::new(30.0 * US),
            series_tol: ghostcell::analytics::DEFAULT_SERIES_TOL,
            probes: true,
            probe_stride: 1,
        }
    }
}

/// The file as written, after unit conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub grid: GridSection,
    pub boundary: BoundarySection,
    pub physics: PhysicsSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub bc: BcSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    /// Present in manifests; ignored when a manifest is read back as a config.
    #[serde(default, skip_serializing)]
    pub manifest: Option<toml::Table>,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_string(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Same settings with optional fields filled, as echoed in manifests.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        out.grid.dy = Some(self.grid.dy.unwrap_or(self.grid.dx));
        if out.analysis.snapshots.is_empty() {
            out.analysis.snapshots = vec![out.analysis.t_end];
        }
        out.model.kind = out.model.kind.trim().to_ascii_lowercase();
        out.bc.kind = out.bc.kind.trim().to_ascii_lowercase();
        out.manifest = None;
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.normalized()).expect("configuration serializes")
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let f = self.normalized();
        let dx = f.grid.dx.si;
        let dy = f.grid.dy.map_or(dx, |q| q.si);
        let center = Point2::new(f.boundary.center_x.si, f.boundary.center_y.si);
        let grid = GridSpec::centered(center, f.grid.n_cells, f.grid.margin, dx, dy)
            .map_err(|e| field("grid", e.to_string()))?;
        let boundary = CircleBoundary::new(center, f.boundary.radius.si).map_err(|e| field("boundary.radius", e.to_string()))?;
        let diffusivity = f.physics.diffusivity;
        if !(diffusivity > 0.0 && diffusivity.is_finite()) {
            return Err(field("physics.D", format!("must be positive, got {diffusivity:e}")));
        }
        let dt = f.physics.dt.si;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(field("physics.dt", format!("must be positive, got {dt:e}")));
        }
        let bc = match f.bc.kind.as_str() {
            "neumann" => BoundaryConditionSpec::neumann(f.bc.value, diffusivity),
            "dirichlet" => BoundaryConditionSpec::dirichlet(f.bc.value, diffusivity),
            other => return Err(field("bc.kind", format!("expected neumann or dirichlet, got `{other}`"))),
        };
        let closure = if f.model.kind == "staircase" { None } else { Some(algorithm_spec(&f.model)?) };
        let model = closure.map_or(BoundaryModel::Staircase, BoundaryModel::Closure);
        if f.analysis.series_tol <= 0.0 || !f.analysis.series_tol.is_finite() {
            return Err(field("analysis.series_tol", "must be positive"));
        }
        if f.analysis.probe_stride == 0 {
            return Err(field("analysis.probe_stride", "must be at least 1"));
        }
        let sim = SimConfig {
            grid,
            boundary,
            diffusivity,
            dt,
            model,
            bc,
            t_end: f.analysis.t_end.si,
            snapshot_times: f.analysis.snapshots.iter().map(|q| q.si).collect(),
        };
        let setup = ExperimentSetup {
            grid,
            boundary,
            diffusivity,
            dt,
            time: f.analysis.time.si,
            series_tol: f.analysis.series_tol,
        };
        Ok(Resolved { sim, setup, model: f.model.clone(), probes: f.analysis.probes, probe_stride: f.analysis.probe_stride })
    }
}

/// Closure settings from a `[model]` section with `kind` overridden.
pub fn algorithm_spec_for(model: &ModelSection, kind: &str) -> Result<AlgorithmSpec, ConfigError> {
    let mut m = model.clone();
    m.kind = kind.to_string();
    algorithm_spec(&m)
}

fn algorithm_spec(model: &ModelSection) -> Result<AlgorithmSpec, ConfigError> {
    let algorithm = Algorithm::from_name(&model.kind)
        .ok_or_else(|| field("model.kind", format!("expected staircase, mls, cmls or ecmls, got `{}`", model.kind)))?;
    let basis = BasisFamily::from_name(&model.basis).ok_or_else(|| {
        let names: Vec<&str> = BasisFamily::ALL.iter().map(|b| b.name()).collect();
        field("model.basis", format!("unknown basis `{}` (expected one of {})", model.basis, names.join(", ")))
    })?;
    let weight = match model.weight.trim().to_ascii_lowercase().as_str() {
        "spline" => WeightSpec::CubicSpline { beta: model.beta },
        "cosine" => WeightSpec::Cosine { beta: model.beta },
        "power" => WeightSpec::PowerOfDistance { p: model.p, support: model.support },
        other => return Err(field("model.weight", format!("expected spline, cosine or power, got `{other}`"))),
    };
    let spec = AlgorithmSpec::new(algorithm, basis, weight, model.kappa);
    spec.validate().map_err(|e| field("model", e.to_string()))?;
    Ok(spec)
}

/// Core-library view of a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub sim: SimConfig,
    pub setup: ExperimentSetup,
    pub model: ModelSection,
    pub probes: bool,
    pub probe_stride: usize,
}

impl Resolved {
    pub fn impermeable(&self) -> bool {
        self.sim.bc.kind == BoundaryKind::Neumann && self.sim.bc.value == 0.0
    }
}

/// The 100-interval configuration printed by `ghostcell example`.
pub const EXAMPLE_CONFIG: &str = r#"[grid]
n_cells = 100
dx = "0.01um"

[boundary]
radius = "0.5um"

[physics]
D = 1e-10
dt = "0.1us"

[model]
kind = "ecmls"
basis = "incomplete-quartic"
weight = "spline"
beta = 2.75
kappa = 100

[analysis]
t_end = "30us"
time = "30us"
"#;
