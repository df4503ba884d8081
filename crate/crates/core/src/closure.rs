//! Ghost-point closures from weighted moving least squares.
//!
//! For a ghost point (GP) the closure mirrors the GP across the boundary to
//! its ghost image point (GIP), fits a polynomial to interior data around the
//! GIP and maps the fitted GIP value back to the GP through the boundary
//! relation. Three variants are supported:
//!
//! * **MLS** fits the interior nodes only.
//! * **CMLS** adds the penalized GP–GIP boundary constraint with weight κ.
//! * **ECMLS** additionally mirrors every stencil node across the boundary and
//!   adds the image point (and, for Dirichlet data, the boundary intercept) as
//!   extra rows tied to the node value through the boundary relation.
//!
//! All data enter linearly, so each closure reduces to fixed coefficients over
//! the stencil node values plus a constant.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{
    normalized_radius, project, CircleBoundary, GeometryError, GridSpec, NodeClassification, NodeIndex, Point2,
};
use crate::kernels::{eval_weight_capped, BasisFamily, KernelError, WeightSpec, MAX_RANK};
use crate::ldlt::SymmetricFactor;

/// Reciprocal condition estimate below which a moment matrix is rejected.
pub const RCOND_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosureError {
    #[error("no interior node within the stencil radius of the image point")]
    EmptyStencil,
    #[error("moment matrix is numerically singular (rcond {rcond:e})")]
    RegularityFailure { rcond: f64 },
    #[error("invalid closure specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Neumann,
    Dirichlet,
}

/// Boundary data and the mirror relation `c_outside ≈ η·c_inside + γ(δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConditionSpec {
    pub kind: BoundaryKind,
    /// Outward flux (mol·m⁻²·s⁻¹) for Neumann, concentration for Dirichlet.
    pub value: f64,
    /// Diffusion coefficient used to turn a flux into a gradient (m²/s).
    pub diffusivity: f64,
}

impl BoundaryConditionSpec {
    pub fn zero_flux(diffusivity: f64) -> Self {
        Self::neumann(0.0, diffusivity)
    }

    pub fn neumann(flux: f64, diffusivity: f64) -> Self {
        Self { kind: BoundaryKind::Neumann, value: flux, diffusivity }
    }

    pub fn dirichlet(concentration: f64, diffusivity: f64) -> Self {
        Self { kind: BoundaryKind::Dirichlet, value: concentration, diffusivity }
    }

    pub fn eta(&self) -> f64 {
        match self.kind {
            BoundaryKind::Neumann => 1.0,
            BoundaryKind::Dirichlet => -1.0,
        }
    }

    /// Constant of the mirror relation for a point at distance `delta` from
    /// the boundary, oriented from the interior point to its exterior mirror.
    pub fn gamma(&self, delta: f64) -> f64 {
        match self.kind {
            BoundaryKind::Neumann => -(2.0 * delta / self.diffusivity) * self.value,
            BoundaryKind::Dirichlet => 2.0 * self.value,
        }
    }

    fn validate(&self) -> Result<(), ClosureError> {
        if self.kind == BoundaryKind::Neumann && !(self.diffusivity > 0.0) {
            return Err(ClosureError::InvalidSpec("Neumann data needs a positive diffusivity".into()));
        }
        if !self.value.is_finite() {
            return Err(ClosureError::InvalidSpec("boundary value must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Mls,
    Cmls,
    Ecmls,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mls => "mls",
            Algorithm::Cmls => "cmls",
            Algorithm::Ecmls => "ecmls",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mls" => Some(Algorithm::Mls),
            "cmls" => Some(Algorithm::Cmls),
            "ecmls" => Some(Algorithm::Ecmls),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmSpec {
    pub algorithm: Algorithm,
    pub kappa: f64,
    pub basis: BasisFamily,
    pub weight: WeightSpec,
}

impl AlgorithmSpec {
    pub fn new(algorithm: Algorithm, basis: BasisFamily, weight: WeightSpec, kappa: f64) -> Self {
        Self { algorithm, kappa, basis, weight }
    }

    /// Penalty actually applied; MLS carries no constraint.
    pub fn effective_kappa(&self) -> f64 {
        match self.algorithm {
            Algorithm::Mls => 0.0,
            _ => self.kappa,
        }
    }

    pub fn validate(&self) -> Result<(), ClosureError> {
        self.weight.validate()?;
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(ClosureError::InvalidSpec(format!("kappa must be finite and >= 0, got {}", self.kappa)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Node,
    Image,
    Intercept,
}

/// How a least-squares row's data value depends on the stencil values:
/// `value = coef·c[stencil_pos] + constant`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowSource {
    pub kind: RowKind,
    pub map: Option<(usize, f64)>,
    pub constant: f64,
}

/// The weighted least-squares problem for one ghost point.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSystem {
    pub gp: NodeIndex,
    pub gip: Point2,
    pub stencil: Vec<NodeIndex>,
    pub rank: usize,
    /// Row-major `N × rank` basis matrix in local coordinates.
    pub basis_rows: Vec<f64>,
    pub weights: Vec<f64>,
    pub rows: Vec<RowSource>,
    /// Constraint vector `𝒢(GIP) − η·𝒢(GP)`.
    pub dvec: Vec<f64>,
    pub gip_basis: Vec<f64>,
    pub gp_basis: Vec<f64>,
    /// GP-side constant `γ(δ_GP)`: `c_GP = η·c_GIP + gp_gamma`.
    pub gp_gamma: f64,
    /// Right-hand side of the constraint `c_GIP − η·c_GP = constraint_rhs`.
    pub constraint_rhs: f64,
}

impl AssembledSystem {
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.basis_rows[i * self.rank..(i + 1) * self.rank]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureDiagnostics {
    pub rcond: f64,
    pub n_rows: usize,
    pub rank: usize,
}

impl ClosureDiagnostics {
    pub fn condition_estimate(&self) -> f64 {
        1.0 / self.rcond
    }
}

/// `c_GP = Σ coeffs[s]·c(stencil[s]) + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostClosure {
    pub gp: NodeIndex,
    pub stencil: Vec<NodeIndex>,
    pub coeffs: Vec<f64>,
    pub constant: f64,
    pub diagnostics: ClosureDiagnostics,
}

impl GhostClosure {
    pub fn apply(&self, value_at: impl Fn(NodeIndex) -> f64) -> f64 {
        self.stencil.iter().zip(&self.coeffs).map(|(&n, &c)| c * value_at(n)).sum::<f64>() + self.constant
    }
}

/// Geometry shared by all closures of one configuration.
#[derive(Debug, Clone, Copy)]
pub struct ClosureGeometry<'a> {
    pub boundary: &'a CircleBoundary,
    pub classification: &'a NodeClassification,
}

impl ClosureGeometry<'_> {
    pub fn grid(&self) -> &GridSpec {
        self.classification.grid()
    }
}

/// Interior nodes within `radius_beta` lattice diagonals of `gip`.
pub fn collect_stencil(
    gip: Point2,
    classification: &NodeClassification,
    radius_beta: f64,
) -> Result<Vec<NodeIndex>, ClosureError> {
    let grid = classification.grid();
    let reach = radius_beta * grid.diagonal();
    let span = |lo: f64, step: f64, n: usize, c: f64| -> (usize, usize) {
        if !reach.is_finite() {
            return (0, n);
        }
        let a = ((c - reach - lo) / step).floor().max(0.0);
        let b = ((c + reach - lo) / step).ceil().min(n as f64);
        if b < 0.0 || a > n as f64 {
            (1, 0)
        } else {
            (a as usize, b as usize)
        }
    };
    let (j0, j1) = span(grid.origin.x, grid.dx, grid.n_cells_x, gip.x);
    let (k0, k1) = span(grid.origin.y, grid.dy, grid.n_cells_y, gip.y);
    let mut nodes = Vec::new();
    for k in k0..=k1 {
        for j in j0..=j1 {
            let node = NodeIndex::new(j, k);
            if classification.class(node).is_interior()
                && normalized_radius(grid.position(node), gip, grid) <= radius_beta
            {
                nodes.push(node);
            }
        }
    }
    if nodes.is_empty() {
        Err(ClosureError::EmptyStencil)
    } else {
        Ok(nodes)
    }
}

/// Builds the least-squares rows, weights and constraint for ghost point `gp`.
pub fn assemble(
    gp: NodeIndex,
    stencil: &[NodeIndex],
    alg: &AlgorithmSpec,
    bc: &BoundaryConditionSpec,
    geom: ClosureGeometry<'_>,
) -> Result<AssembledSystem, ClosureError> {
    alg.validate()?;
    bc.validate()?;
    if stencil.is_empty() {
        return Err(ClosureError::EmptyStencil);
    }
    let grid = geom.grid();
    let h = grid.diagonal();
    let m = alg.basis.rank();
    let eta = bc.eta();

    let gp_pos = grid.position(gp);
    let gp_proj = project(gp_pos, geom.boundary)?;
    let gip = gp_proj.ip;
    let local = |p: Point2| ((p.x - gip.x) / h, (p.y - gip.y) / h);

    let rows_per_node = match (alg.algorithm, bc.kind) {
        (Algorithm::Ecmls, BoundaryKind::Neumann) => 2,
        (Algorithm::Ecmls, BoundaryKind::Dirichlet) => 3,
        _ => 1,
    };
    let n_rows = stencil.len() * rows_per_node;
    let mut basis_rows = Vec::with_capacity(n_rows * m);
    let mut weights = Vec::with_capacity(n_rows);
    let mut rows = Vec::with_capacity(n_rows);
    let mut scratch = [0.0; MAX_RANK];

    let mut push_row = |p: Point2, source: RowSource| -> Result<(), ClosureError> {
        let (lx, ly) = local(p);
        alg.basis.eval_into(lx, ly, &mut scratch);
        basis_rows.extend_from_slice(&scratch[..m]);
        weights.push(eval_weight_capped(&alg.weight, normalized_radius(p, gip, grid))?);
        rows.push(source);
        Ok(())
    };

    for (s, &node) in stencil.iter().enumerate() {
        let pos = grid.position(node);
        push_row(pos, RowSource { kind: RowKind::Node, map: Some((s, 1.0)), constant: 0.0 })?;
        if alg.algorithm == Algorithm::Ecmls {
            let proj = project(pos, geom.boundary)?;
            push_row(
                proj.ip,
                RowSource { kind: RowKind::Image, map: Some((s, eta)), constant: bc.gamma(proj.delta) },
            )?;
            if bc.kind == BoundaryKind::Dirichlet {
                push_row(proj.bi, RowSource { kind: RowKind::Intercept, map: None, constant: bc.value })?;
            }
        }
    }

    let gip_basis = {
        let (lx, ly) = local(gip);
        crate::kernels::eval_basis(alg.basis, lx, ly)
    };
    let gp_basis = {
        let (lx, ly) = local(gp_pos);
        crate::kernels::eval_basis(alg.basis, lx, ly)
    };
    let dvec: Vec<f64> = gip_basis.iter().zip(&gp_basis).map(|(a, b)| a - eta * b).collect();
    let gp_gamma = bc.gamma(gp_proj.delta);

    Ok(AssembledSystem {
        gp,
        gip,
        stencil: stencil.to_vec(),
        rank: m,
        basis_rows,
        weights,
        rows,
        dvec,
        gip_basis,
        gp_basis,
        gp_gamma,
        // c_GP = η c_GIP + γ  ⇔  c_GIP − η c_GP = −η γ   (η² = 1)
        constraint_rhs: -eta * gp_gamma,
    })
}

/// Factors `GᵀWG + κ·ddᵀ` for row-major `rows` of width `m`.
fn factor_moment(
    rows: &[f64],
    weights: &[f64],
    m: usize,
    penalty: Option<(f64, &[f64])>,
) -> Result<SymmetricFactor, ClosureError> {
    let mut moment = vec![0.0; m * m];
    for (g, &w) in rows.chunks_exact(m).zip(weights) {
        if w == 0.0 {
            continue;
        }
        for a in 0..m {
            let wa = w * g[a];
            for b in 0..=a {
                moment[a * m + b] += wa * g[b];
            }
        }
    }
    if let Some((kappa, d)) = penalty {
        for a in 0..m {
            for b in 0..=a {
                moment[a * m + b] += kappa * d[a] * d[b];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            moment[b * m + a] = moment[a * m + b];
        }
    }
    let factor = SymmetricFactor::new(moment, m).ok_or(ClosureError::RegularityFailure { rcond: 0.0 })?;
    if !(factor.rcond() >= RCOND_THRESHOLD) {
        return Err(ClosureError::RegularityFailure { rcond: factor.rcond() });
    }
    Ok(factor)
}

/// Plain MLS shape functions: `φ` with `c(target) ≈ Σ φ_s c(points[s])`.
/// Distances are normalized by `h` before the weight is applied, and the
/// basis is evaluated in coordinates centered on `target` and scaled by `h`.
pub fn mls_shape_functions(
    points: &[Point2],
    target: Point2,
    basis: BasisFamily,
    weight: &WeightSpec,
    h: f64,
) -> Result<Vec<f64>, ClosureError> {
    weight.validate()?;
    if points.is_empty() {
        return Err(ClosureError::EmptyStencil);
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(ClosureError::InvalidSpec(format!("length scale must be positive, got {h:e}")));
    }
    let m = basis.rank();
    let mut rows = Vec::with_capacity(points.len() * m);
    let mut weights = Vec::with_capacity(points.len());
    let mut scratch = [0.0; MAX_RANK];
    for p in points {
        basis.eval_into((p.x - target.x) / h, (p.y - target.y) / h, &mut scratch);
        rows.extend_from_slice(&scratch[..m]);
        weights.push(eval_weight_capped(weight, p.distance(target) / h)?);
    }
    let factor = factor_moment(&rows, &weights, m, None)?;
    let v = factor.solve(&crate::kernels::eval_basis(basis, 0.0, 0.0));
    Ok(rows
        .chunks_exact(m)
        .zip(&weights)
        .map(|(g, &w)| w * g.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>())
        .collect())
}

/// Solves the normal equations and folds the result into a [`GhostClosure`].
pub fn solve_closure(
    sys: &AssembledSystem,
    alg: &AlgorithmSpec,
    bc: &BoundaryConditionSpec,
) -> Result<GhostClosure, ClosureError> {
    let m = sys.rank;
    let kappa = alg.effective_kappa();
    let penalty = (kappa > 0.0).then_some((kappa, sys.dvec.as_slice()));
    let factor = factor_moment(&sys.basis_rows, &sys.weights, m, penalty)?;
    // c_GIP = gipᵀ M⁻¹ (Gᵀ W C + κ r D) = vᵀ(...) with v = M⁻¹ gip (M symmetric).
    let v = factor.solve(&sys.gip_basis);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut coeffs = vec![0.0; sys.stencil.len()];
    let mut constant = 0.0;
    for (i, src) in sys.rows.iter().enumerate() {
        let w = sys.weights[i];
        if w == 0.0 {
            continue;
        }
        let gain = w * dot(sys.row(i), &v);
        if let Some((s, coef)) = src.map {
            coeffs[s] += coef * gain;
        }
        constant += src.constant * gain;
    }
    if kappa > 0.0 {
        constant += kappa * sys.constraint_rhs * dot(&sys.dvec, &v);
    }

    let eta = bc.eta();
    for c in &mut coeffs {
        *c *= eta;
    }
    Ok(GhostClosure {
        gp: sys.gp,
        stencil: sys.stencil.clone(),
        coeffs,
        constant: eta * constant + sys.gp_gamma,
        diagnostics: ClosureDiagnostics { rcond: factor.rcond(), n_rows: sys.row_count(), rank: m },
    })
}

/// Builds the closure for a single ghost point.
pub fn build_closure(
    gp: NodeIndex,
    alg: &AlgorithmSpec,
    bc: &BoundaryConditionSpec,
    geom: ClosureGeometry<'_>,
) -> Result<GhostClosure, ClosureError> {
    let gip = project(geom.grid().position(gp), geom.boundary)?.ip;
    let stencil = collect_stencil(gip, geom.classification, alg.weight.support())?;
    let sys = assemble(gp, &stencil, alg, bc, geom)?;
    solve_closure(&sys, alg, bc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosureFailure {
    pub gp: NodeIndex,
    pub error: ClosureError,
}

/// Closures for every ghost point, with per-GP failures collected rather
/// than aborting.
#[derive(Debug, Clone, Default)]
pub struct ClosureSet {
    pub closures: BTreeMap<NodeIndex, GhostClosure>,
    pub failures: Vec<ClosureFailure>,
}

impl ClosureSet {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn regularity_failures(&self) -> usize {
        self.failures
            .iter()
            .filter(|f| matches!(f.error, ClosureError::RegularityFailure { .. }))
            .count()
    }
}

pub fn build_all_closures(
    classification: &NodeClassification,
    boundary: &CircleBoundary,
    alg: &AlgorithmSpec,
    bc: &BoundaryConditionSpec,
) -> Result<ClosureSet, ClosureError> {
    alg.validate()?;
    bc.validate()?;
    let geom = ClosureGeometry { boundary, classification };
    let results: Vec<(NodeIndex, Result<GhostClosure, ClosureError>)> = classification
        .ghost_points()
        .par_iter()
        .map(|&gp| (gp, build_closure(gp, alg, bc, geom)))
        .collect();
    let mut set = ClosureSet::default();
    for (gp, res) in results {
        match res {
            Ok(c) => {
                set.closures.insert(gp, c);
            }
            Err(error) => set.failures.push(ClosureFailure { gp, error }),
        }
    }
    Ok(set)
}
