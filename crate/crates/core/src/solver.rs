//! Explicit FTCS stepping of `∂c/∂t = D∇²c` on the lattice.
//!
//! Only interior nodes (IN and IBN) are advanced. Ghost values are supplied
//! before every step either by precomputed closures or by the staircase
//! rule, which mirrors the boundary condition across each grid line
//! independently. The update reads from one buffer and writes the other.

use rayon::prelude::*;
use thiserror::Error;

use crate::closure::{build_all_closures, AlgorithmSpec, BoundaryConditionSpec, ClosureError, ClosureFailure, ClosureSet};
use crate::geometry::{classify_nodes, CircleBoundary, GeometryError, GridSpec, NodeClass, NodeClassification, NodeIndex};

/// Relative slack when matching requested times to the step lattice.
const TIME_SLACK: f64 = 1e-9;

/// Edge concentration a reflection-free run must stay below.
pub const FREE_SPACE_EDGE_LIMIT: f64 = 1e-200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("unstable time step: D·dt/dx² + D·dt/dy² = {lx:.6} + {ly:.6} exceeds 1/2")]
    StabilityViolation { lx: f64, ly: f64 },
    #[error("time {t:e} s is not a non-negative multiple of dt = {dt:e} s")]
    InvalidTime { t: f64, dt: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{} ghost point(s) have no usable closure (first at {})", failures.len(), failures[0].gp)]
    RegularityFailures { failures: Vec<ClosureFailure> },
    #[error("reflection-free run reached {value:e} at its outer edge")]
    EdgeNotNegligible { value: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Closure(#[from] ClosureError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryModel {
    Staircase,
    Closure(AlgorithmSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: GridSpec,
    pub boundary: CircleBoundary,
    pub diffusivity: f64,
    pub dt: f64,
    pub model: BoundaryModel,
    pub bc: BoundaryConditionSpec,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
}

impl SimConfig {
    /// `(D·dt/dx², D·dt/dy²)`.
    pub fn lambdas(&self) -> (f64, f64) {
        let g = &self.grid;
        (self.diffusivity * self.dt / (g.dx * g.dx), self.diffusivity * self.dt / (g.dy * g.dy))
    }

    /// The five-point update is monotone, hence stable, iff the center weight
    /// `1 − 2λx − 2λy` is non-negative.
    pub fn check_stability(&self) -> Result<(), SolverError> {
        let (lx, ly) = self.lambdas();
        if !(lx + ly <= 0.5) {
            return Err(SolverError::StabilityViolation { lx, ly });
        }
        Ok(())
    }

    /// Step index of time `t`.
    pub fn step_of(&self, t: f64) -> Result<usize, SolverError> {
        step_of(t, self.dt)
    }

    pub fn n_steps(&self) -> Result<usize, SolverError> {
        self.step_of(self.t_end)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.diffusivity > 0.0 && self.diffusivity.is_finite()) {
            return Err(SolverError::InvalidConfig(format!("D must be positive, got {:e}", self.diffusivity)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SolverError::InvalidConfig(format!("dt must be positive, got {:e}", self.dt)));
        }
        self.check_stability()?;
        let n = self.n_steps()?;
        for &t in &self.snapshot_times {
            if self.step_of(t)? > n {
                return Err(SolverError::InvalidConfig(format!("snapshot time {t:e} s is after t_end")));
            }
        }
        if let BoundaryModel::Closure(alg) = &self.model {
            alg.validate()?;
        }
        Ok(())
    }
}

pub fn step_of(t: f64, dt: f64) -> Result<usize, SolverError> {
    let n = (t / dt).round();
    if !(n >= 0.0) || (n * dt - t).abs() > TIME_SLACK * dt.max(t.abs()) || n > u32::MAX as f64 {
        return Err(SolverError::InvalidTime { t, dt });
    }
    Ok(n as usize)
}

/// Concentration on every lattice node (row-major, `k·nx + j`).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub values: Vec<f64>,
    pub step: usize,
    pub time: f64,
}

impl FieldState {
    pub fn at(&self, grid: &GridSpec, node: NodeIndex) -> f64 {
        self.values[grid.flat(node)]
    }
}

/// Unit mass at the center node.
pub fn init_delta(config: &SimConfig) -> Result<FieldState, SolverError> {
    let g = &config.grid;
    let center = g.node_at(config.boundary.center).ok_or(GeometryError::CenterNotOnNode)?;
    let mut values = vec![0.0; g.node_count()];
    values[g.flat(center)] = 1.0 / (g.dx * g.dy);
    Ok(FieldState { values, step: 0, time: 0.0 })
}

/// One arm of an IBN stencil that leaves the interior under the staircase
/// rule: the ghost value is `eta·c_ibn + gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct MirrorArm {
    eta: f64,
    gamma: f64,
}

#[derive(Debug, Clone)]
struct BoundaryUpdate {
    idx: usize,
    /// Flat indices of the east, west, north and south neighbors.
    nbr: [usize; 4],
    mirror: [Option<MirrorArm>; 4],
}

#[derive(Debug, Clone)]
enum GhostSupply {
    Staircase,
    Closures(Vec<CompiledClosure>),
}

#[derive(Debug, Clone)]
struct CompiledClosure {
    gp: usize,
    stencil: Vec<usize>,
    coeffs: Vec<f64>,
    constant: f64,
}

/// A simulation in progress.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimConfig,
    classification: NodeClassification,
    supply: GhostSupply,
    lx: f64,
    ly: f64,
    /// Per lattice row, half-open `[start, end)` flat ranges of IN nodes.
    row_runs: Vec<Vec<(usize, usize)>>,
    boundary: Vec<BoundaryUpdate>,
    state: FieldState,
    scratch: Vec<f64>,
}

impl Simulation {
    /// Classifies the lattice, builds closures if needed and places the
    /// delta release. Fails when any ghost point lacks a closure.
    pub fn new(config: SimConfig) -> Result<Self, SolverError> {
        config.validate()?;
        let classification = classify_nodes(&config.grid, &config.boundary)?;
        let closures = match &config.model {
            BoundaryModel::Staircase => None,
            BoundaryModel::Closure(alg) => {
                Some(build_all_closures(&classification, &config.boundary, alg, &config.bc)?)
            }
        };
        Self::with_parts(config, classification, closures)
    }

    /// Like [`Simulation::new`] with the classification and closures supplied.
    pub fn with_parts(
        config: SimConfig,
        classification: NodeClassification,
        closures: Option<ClosureSet>,
    ) -> Result<Self, SolverError> {
        config.validate()?;
        let grid = config.grid;
        let nx = grid.nx();
        let supply = match (&config.model, closures) {
            (BoundaryModel::Staircase, _) => GhostSupply::Staircase,
            (BoundaryModel::Closure(_), Some(set)) => {
                if !set.failures.is_empty() {
                    return Err(SolverError::RegularityFailures { failures: set.failures });
                }
                let compiled = set
                    .closures
                    .values()
                    .map(|c| CompiledClosure {
                        gp: grid.flat(c.gp),
                        stencil: c.stencil.iter().map(|&n| grid.flat(n)).collect(),
                        coeffs: c.coeffs.clone(),
                        constant: c.constant,
                    })
                    .collect();
                GhostSupply::Closures(compiled)
            }
            (BoundaryModel::Closure(_), None) => {
                return Err(SolverError::InvalidConfig("closure model without closures".into()));
            }
        };

        let mut row_runs = vec![Vec::new(); grid.ny()];
        for (k, runs) in row_runs.iter_mut().enumerate() {
            let mut j = 0;
            while j < nx {
                if classification.class(NodeIndex::new(j, k)) == NodeClass::In {
                    let start = j;
                    while j < nx && classification.class(NodeIndex::new(j, k)) == NodeClass::In {
                        j += 1;
                    }
                    runs.push((k * nx + start, k * nx + j));
                } else {
                    j += 1;
                }
            }
        }

        let staircase = matches!(config.model, BoundaryModel::Staircase);
        let boundary = classification
            .boundary_nodes()
            .iter()
            .map(|&node| {
                let idx = grid.flat(node);
                let nbr = [idx + 1, idx - 1, idx + nx, idx - nx];
                let half = [grid.dx, grid.dx, grid.dy, grid.dy].map(|h| 0.5 * h);
                let mut mirror = [None; 4];
                if staircase {
                    for a in 0..4 {
                        if !classification.classes()[nbr[a]].is_interior() {
                            mirror[a] = Some(MirrorArm { eta: config.bc.eta(), gamma: config.bc.gamma(half[a]) });
                        }
                    }
                }
                BoundaryUpdate { idx, nbr, mirror }
            })
            .collect();

        let (lx, ly) = config.lambdas();
        let state = init_delta(&config)?;
        let scratch = state.values.clone();
        Ok(Self { config, classification, supply, lx, ly, row_runs, boundary, state, scratch })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn classification(&self) -> &NodeClassification {
        &self.classification
    }

    pub fn state(&self) -> &FieldState {
        &self.state
    }

    /// Replaces the field, e.g. with a uniform one for fixed-point checks.
    pub fn set_values(&mut self, values: Vec<f64>) -> Result<(), SolverError> {
        if values.len() != self.config.grid.node_count() {
            return Err(SolverError::InvalidConfig("field size does not match the lattice".into()));
        }
        self.state.values = values;
        Ok(())
    }

    /// Writes ghost values into the current field. Under the staircase rule a
    /// ghost point shared by several arms receives the mean of their values;
    /// the stepper itself always uses the per-arm value.
    pub fn fill_ghosts(&mut self) {
        let values = &mut self.state.values;
        match &self.supply {
            GhostSupply::Closures(list) => {
                let filled: Vec<f64> = list
                    .iter()
                    .map(|c| c.stencil.iter().zip(&c.coeffs).map(|(&s, &w)| w * values[s]).sum::<f64>() + c.constant)
                    .collect();
                for (c, v) in list.iter().zip(filled) {
                    values[c.gp] = v;
                }
            }
            GhostSupply::Staircase => {
                let mut acc: Vec<(usize, f64, u32)> = Vec::new();
                for b in &self.boundary {
                    for a in 0..4 {
                        if let Some(m) = b.mirror[a] {
                            acc.push((b.nbr[a], m.eta * values[b.idx] + m.gamma, 1));
                        }
                    }
                }
                acc.sort_by_key(|e| e.0);
                acc.dedup_by(|later, first| {
                    if later.0 == first.0 {
                        first.1 += later.1;
                        first.2 += later.2;
                        true
                    } else {
                        false
                    }
                });
                for (idx, sum, n) in acc {
                    values[idx] = sum / n as f64;
                }
            }
        }
    }

    /// Advances one step: ghost refresh, then the five-point update of every
    /// interior node from the old buffer into the new one.
    pub fn step_ftcs(&mut self) {
        if let GhostSupply::Closures(_) = self.supply {
            self.fill_ghosts();
        }
        let (lx, ly) = (self.lx, self.ly);
        let nx = self.config.grid.nx();
        let cur = &self.state.values;
        let next = &mut self.scratch;
        let runs = &self.row_runs;
        let update_row = |k: usize, row: &mut [f64]| {
            for &(start, end) in &runs[k] {
                for i in start..end {
                    let c = cur[i];
                    row[i - k * nx] = c + lx * (cur[i + 1] - 2.0 * c + cur[i - 1]) + ly * (cur[i + nx] - 2.0 * c + cur[i - nx]);
                }
            }
        };
        if cur.len() >= 1 << 16 {
            next.par_chunks_mut(nx).enumerate().with_min_len(16).for_each(|(k, row)| update_row(k, row));
        } else {
            next.chunks_mut(nx).enumerate().for_each(|(k, row)| update_row(k, row));
        }
        for b in &self.boundary {
            let c = cur[b.idx];
            let v = |a: usize| match b.mirror[a] {
                Some(m) => m.eta * c + m.gamma,
                None => cur[b.nbr[a]],
            };
            next[b.idx] = c + lx * (v(0) - 2.0 * c + v(1)) + ly * (v(2) - 2.0 * c + v(3));
        }
        std::mem::swap(&mut self.state.values, &mut self.scratch);
        self.state.step += 1;
        self.state.time = self.state.step as f64 * self.config.dt;
    }

    pub fn advance_to(&mut self, step: usize) {
        while self.state.step < step {
            self.step_ftcs();
        }
    }

    /// `Σ c·dx·dy` over the interior nodes.
    pub fn interior_mass(&self) -> f64 {
        let g = &self.config.grid;
        let mut sum = 0.0;
        for (v, class) in self.state.values.iter().zip(self.classification.classes()) {
            if class.is_interior() {
                sum += v;
            }
        }
        sum * g.dx * g.dy
    }

    /// Copy of the current field with ghost values filled, as written to
    /// snapshots.
    pub fn snapshot(&mut self) -> FieldState {
        self.fill_ghosts();
        self.state.clone()
    }
}

/// Snapshots and per-step IBN probe values from a full run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub classification: NodeClassification,
    pub snapshots: Vec<FieldState>,
    pub probe_nodes: Vec<NodeIndex>,
    /// `probes[n][i]`: value at `probe_nodes[i]` after step `n` (step 0 is
    /// the initial field).
    pub probes: Vec<Vec<f64>>,
}

/// Runs to `t_end`, collecting snapshots at the requested times and, when
/// `record_probes` is set, the IBN values after every step.
pub fn run(config: &SimConfig, record_probes: bool) -> Result<RunOutput, SolverError> {
    let mut sim = Simulation::new(config.clone())?;
    let n_steps = config.n_steps()?;
    let mut snap_steps: Vec<usize> =
        config.snapshot_times.iter().map(|&t| config.step_of(t)).collect::<Result<_, _>>()?;
    if snap_steps.is_empty() || n_steps == 0 {
        snap_steps.push(n_steps);
    }
    snap_steps.sort_unstable();
    snap_steps.dedup();

    let grid = config.grid;
    let probe_nodes = sim.classification().boundary_nodes().to_vec();
    let probe_idx: Vec<usize> = probe_nodes.iter().map(|&n| grid.flat(n)).collect();
    let mut probes = Vec::new();
    let mut snapshots = Vec::new();
    let mut next_snap = 0;
    for step in 0..=n_steps {
        sim.advance_to(step);
        if record_probes {
            probes.push(probe_idx.iter().map(|&i| sim.state().values[i]).collect());
        }
        while next_snap < snap_steps.len() && snap_steps[next_snap] == step {
            snapshots.push(sim.snapshot());
            next_snap += 1;
        }
    }
    Ok(RunOutput { classification: sim.classification().clone(), snapshots, probe_nodes, probes })
}

/// Parameters of a reflection-free reference run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeSpaceConfig {
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    pub diffusivity: f64,
    pub n_steps: usize,
    /// Lower bound on the half-width in cells along x and y.
    pub min_half_cells: (usize, usize),
}

impl FreeSpaceConfig {
    fn lambdas(&self) -> (f64, f64) {
        (self.diffusivity * self.dt / (self.dx * self.dx), self.diffusivity * self.dt / (self.dy * self.dy))
    }

    /// Half-width in cells along each axis: the smallest distance at which a
    /// Chernoff bound on the lattice random walk keeps the edge value below
    /// [`FREE_SPACE_EDGE_LIMIT`], raised to `min_half_cells`, and capped at
    /// one cell past the front reached after `n_steps`.
    pub fn half_cells(&self) -> (usize, usize) {
        let (lx, ly) = self.lambdas();
        // Edge value ≤ P(X_n ≥ a)/(dx·dy); ask for a 1e-10 margin.
        let target = (FREE_SPACE_EDGE_LIMIT * 1e-10 * self.dx * self.dy).ln();
        let pick = |lambda: f64, min: usize| {
            let cap = self.n_steps + 1;
            let mut a = min.max(1);
            while a < cap && tail_log_bound(lambda, self.n_steps, a as f64) > target {
                a += 1;
            }
            a.max(min).min(cap.max(min))
        };
        (pick(lx, self.min_half_cells.0), pick(ly, self.min_half_cells.1))
    }
}

/// `ln P(X_n ≥ a)` bound for a walk making ±1 moves with probability λ each.
fn tail_log_bound(lambda: f64, n: usize, a: f64) -> f64 {
    let n = n as f64;
    let f = |theta: f64| -theta * a + n * (1.0 + 2.0 * lambda * (theta.cosh() - 1.0)).ln();
    // f is convex in θ; golden-section search on [0, 50].
    let (mut lo, mut hi) = (0.0f64, 50.0f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f(0.5 * (lo + hi)).min(0.0)
}

/// Reflection-free FTCS run on one quadrant, using the mirror symmetry of a
/// centered point release about both axes. The outer edge is held at zero.
#[derive(Debug, Clone)]
pub struct FreeSpaceSim {
    config: FreeSpaceConfig,
    hx: usize,
    hy: usize,
    width: usize,
    values: Vec<f64>,
    scratch: Vec<f64>,
    step: usize,
}

impl FreeSpaceSim {
    pub fn new(config: FreeSpaceConfig) -> Result<Self, SolverError> {
        let (lx, ly) = config.lambdas();
        if !(lx + ly <= 0.5) {
            return Err(SolverError::StabilityViolation { lx, ly });
        }
        let (hx, hy) = config.half_cells();
        let width = hx + 1;
        let mut values = vec![0.0; width * (hy + 1)];
        values[0] = 1.0 / (config.dx * config.dy);
        let scratch = values.clone();
        Ok(Self { config, hx, hy, width, values, scratch, step: 0 })
    }

    pub fn half_cells(&self) -> (usize, usize) {
        (self.hx, self.hy)
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn step_ftcs(&mut self) {
        let (lx, ly) = self.config.lambdas();
        let w = self.width;
        let cur = &self.values;
        // Rows beyond the front are still zero; skip them.
        let reach_k = (self.step + 1).min(self.hy - 1);
        let reach_j = (self.step + 1).min(self.hx - 1);
        let update_row = |k: usize, row: &mut [f64]| {
            if k > reach_k {
                return;
            }
            let south = if k == 0 { w } else { (k - 1) * w };
            let north = (k + 1) * w;
            let base = k * w;
            for j in 0..=reach_j {
                let c = cur[base + j];
                let west = if j == 0 { cur[base + 1] } else { cur[base + j - 1] };
                let east = cur[base + j + 1];
                row[j] = c + lx * (east - 2.0 * c + west) + ly * (cur[north + j] - 2.0 * c + cur[south + j]);
            }
        };
        if cur.len() >= 1 << 16 {
            self.scratch.par_chunks_mut(w).enumerate().with_min_len(16).for_each(|(k, row)| update_row(k, row));
        } else {
            self.scratch.chunks_mut(w).enumerate().for_each(|(k, row)| update_row(k, row));
        }
        std::mem::swap(&mut self.values, &mut self.scratch);
        self.step += 1;
    }

    pub fn advance_to(&mut self, step: usize) {
        while self.step < step {
            self.step_ftcs();
        }
    }

    /// Value at lattice offset `(dj, dk)` from the release point; zero
    /// outside the simulated square.
    pub fn value_at(&self, dj: isize, dk: isize) -> f64 {
        let (j, k) = (dj.unsigned_abs(), dk.unsigned_abs());
        if j > self.hx || k > self.hy {
            return 0.0;
        }
        self.values[k * self.width + j]
    }

    /// Largest magnitude on the outer edge of the square.
    pub fn edge_max(&self) -> f64 {
        let top = (0..=self.hx).map(|j| self.value_at(j as isize, self.hy as isize));
        let side = (0..=self.hy).map(|k| self.value_at(self.hx as isize, k as isize));
        top.chain(side).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Fails when the edge is not negligible.
    pub fn check_edge(&self) -> Result<(), SolverError> {
        let value = self.edge_max();
        if value >= FREE_SPACE_EDGE_LIMIT {
            return Err(SolverError::EdgeNotNegligible { value });
        }
        Ok(())
    }
}
