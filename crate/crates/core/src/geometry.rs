//! Cartesian lattice, circular immersed boundary and node classification.
//!
//! Nodes are addressed by integer pairs `(j, k)` with `j` along x and `k`
//! along y. A node is *interior* when it lies inside the circle (nodes on the
//! circle, within a relative tolerance of `1e-12`, count as interior). Interior
//! nodes whose five-point stencil reaches outside are internal boundary nodes
//! (IBN); exterior nodes read by an IBN are ghost points (GP).

use std::ops::{Add, Mul, Sub};

use thiserror::Error;

/// Relative tolerance used for the on-circle tie and degenerate projections.
pub const CIRCLE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),
    #[error("circle of radius {radius:e} m plus one ghost ring does not fit in the lattice")]
    BoundaryExceedsGrid { radius: f64 },
    #[error("the circle center is not a lattice node")]
    CenterNotOnNode,
    #[error("projection is undefined at the circle center")]
    DegeneratePoint,
}

/// A point or displacement in the plane (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<Point2> for f64 {
    type Output = Point2;
    fn mul(self, rhs: Point2) -> Point2 {
        Point2::new(self * rhs.x, self * rhs.y)
    }
}

/// Lattice node address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeIndex {
    pub j: usize,
    pub k: usize,
}

impl NodeIndex {
    pub const fn new(j: usize, k: usize) -> Self {
        Self { j, k }
    }
}

impl std::fmt::Display for NodeIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.j, self.k)
    }
}

/// Uniform Cartesian lattice with `n_cells_x + 1` by `n_cells_y + 1` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_cells_x: usize,
    pub n_cells_y: usize,
    pub dx: f64,
    pub dy: f64,
    /// Coordinates of node `(0, 0)`.
    pub origin: Point2,
}

impl GridSpec {
    pub fn new(
        n_cells_x: usize,
        n_cells_y: usize,
        dx: f64,
        dy: f64,
        origin: Point2,
    ) -> Result<Self, GeometryError> {
        if n_cells_x == 0 || n_cells_y == 0 {
            return Err(GeometryError::InvalidGrid("cell counts must be positive".into()));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(GeometryError::InvalidGrid(format!(
                "steps must be positive and finite (dx={dx:e}, dy={dy:e})"
            )));
        }
        Ok(Self { n_cells_x, n_cells_y, dx, dy, origin })
    }

    /// Lattice of `n_cells` intervals per axis centered on `center`, padded
    /// by `margin` extra node rings on every side. `n_cells` must be even so
    /// that `center` is a node.
    pub fn centered(
        center: Point2,
        n_cells: usize,
        margin: usize,
        dx: f64,
        dy: f64,
    ) -> Result<Self, GeometryError> {
        if n_cells % 2 != 0 {
            return Err(GeometryError::InvalidGrid(format!(
                "cell count {n_cells} must be even to put a node on the center"
            )));
        }
        let half = n_cells / 2 + margin;
        let origin = Point2::new(center.x - half as f64 * dx, center.y - half as f64 * dy);
        Self::new(2 * half, 2 * half, dx, dy, origin)
    }

    pub fn nx(&self) -> usize {
        self.n_cells_x + 1
    }

    pub fn ny(&self) -> usize {
        self.n_cells_y + 1
    }

    pub fn node_count(&self) -> usize {
        self.nx() * self.ny()
    }

    /// Row-major flat offset (`k` selects the row).
    #[inline]
    pub fn flat(&self, node: NodeIndex) -> usize {
        node.k * self.nx() + node.j
    }

    #[inline]
    pub fn unflat(&self, idx: usize) -> NodeIndex {
        NodeIndex::new(idx % self.nx(), idx / self.nx())
    }

    pub fn position(&self, node: NodeIndex) -> Point2 {
        Point2::new(
            self.origin.x + node.j as f64 * self.dx,
            self.origin.y + node.k as f64 * self.dy,
        )
    }

    /// Lattice diagonal `sqrt(dx² + dy²)`.
    pub fn diagonal(&self) -> f64 {
        self.dx.hypot(self.dy)
    }

    pub fn is_edge(&self, node: NodeIndex) -> bool {
        node.j == 0 || node.k == 0 || node.j == self.n_cells_x || node.k == self.n_cells_y
    }

    /// The node coinciding with `p` to within `1e-12·dx`, if any.
    pub fn node_at(&self, p: Point2) -> Option<NodeIndex> {
        let fj = (p.x - self.origin.x) / self.dx;
        let fk = (p.y - self.origin.y) / self.dy;
        let (j, k) = (fj.round(), fk.round());
        let on_node = (fj - j).abs() <= CIRCLE_TOL && (fk - k).abs() <= CIRCLE_TOL;
        let in_range = j >= 0.0 && k >= 0.0 && j <= self.n_cells_x as f64 && k <= self.n_cells_y as f64;
        (on_node && in_range).then(|| NodeIndex::new(j as usize, k as usize))
    }

    /// The four five-point-stencil neighbors that exist on the lattice.
    pub fn neighbors(&self, node: NodeIndex) -> impl Iterator<Item = NodeIndex> + '_ {
        const ARMS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        ARMS.iter().filter_map(move |&(dj, dk)| self.offset(node, dj, dk))
    }

    pub fn offset(&self, node: NodeIndex, dj: isize, dk: isize) -> Option<NodeIndex> {
        let j = node.j.checked_add_signed(dj)?;
        let k = node.k.checked_add_signed(dk)?;
        (j <= self.n_cells_x && k <= self.n_cells_y).then_some(NodeIndex::new(j, k))
    }
}

/// The circular immersed boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleBoundary {
    pub center: Point2,
    pub radius: f64,
}

impl CircleBoundary {
    pub fn new(center: Point2, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::InvalidBoundary(format!("radius must be positive, got {radius:e}")));
        }
        Ok(Self { center, radius })
    }

    /// Interior test with the on-circle tie resolved toward the interior.
    pub fn contains(&self, p: Point2) -> bool {
        p.distance(self.center) <= self.radius * (1.0 + CIRCLE_TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeClass {
    /// Internal node: the whole five-point stencil is interior.
    In,
    /// Internal boundary node.
    Ibn,
    /// Ghost point.
    Gp,
    /// External node, never read by the stepper.
    En,
}

impl NodeClass {
    pub fn is_interior(self) -> bool {
        matches!(self, NodeClass::In | NodeClass::Ibn)
    }

    pub fn label(self) -> &'static str {
        match self {
            NodeClass::In => "IN",
            NodeClass::Ibn => "IBN",
            NodeClass::Gp => "GP",
            NodeClass::En => "EN",
        }
    }
}

/// Per-node labels plus the GP and IBN lists in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeClassification {
    grid: GridSpec,
    classes: Vec<NodeClass>,
    ghost_points: Vec<NodeIndex>,
    boundary_nodes: Vec<NodeIndex>,
}

impl NodeClassification {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn class(&self, node: NodeIndex) -> NodeClass {
        self.classes[self.grid.flat(node)]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    pub fn ghost_points(&self) -> &[NodeIndex] {
        &self.ghost_points
    }

    pub fn boundary_nodes(&self) -> &[NodeIndex] {
        &self.boundary_nodes
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = NodeIndex> + '_ {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_interior())
            .map(|(i, _)| self.grid.unflat(i))
    }

    pub fn count(&self, class: NodeClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }
}

/// Labels every lattice node IN, IBN, GP or EN.
pub fn classify_nodes(grid: &GridSpec, boundary: &CircleBoundary) -> Result<NodeClassification, GeometryError> {
    let n = grid.node_count();
    let interior: Vec<bool> = (0..n).map(|i| boundary.contains(grid.position(grid.unflat(i)))).collect();
    // Every exterior neighbor of an interior node must exist on the lattice.
    if (0..n).any(|i| interior[i] && grid.is_edge(grid.unflat(i))) {
        return Err(GeometryError::BoundaryExceedsGrid { radius: boundary.radius });
    }

    let mut classes = vec![NodeClass::En; n];
    let mut boundary_nodes = Vec::new();
    for i in 0..n {
        if !interior[i] {
            continue;
        }
        let node = grid.unflat(i);
        // No interior node sits on the lattice edge, so all four neighbors exist.
        let touches_exterior = grid.neighbors(node).any(|nb| !interior[grid.flat(nb)]);
        if touches_exterior {
            classes[i] = NodeClass::Ibn;
            boundary_nodes.push(node);
        } else {
            classes[i] = NodeClass::In;
        }
    }

    let mut ghost_points = Vec::new();
    for i in 0..n {
        if interior[i] {
            continue;
        }
        let node = grid.unflat(i);
        if grid.neighbors(node).any(|nb| classes[grid.flat(nb)] == NodeClass::Ibn) {
            classes[i] = NodeClass::Gp;
            ghost_points.push(node);
        }
    }

    Ok(NodeClassification { grid: *grid, classes, ghost_points, boundary_nodes })
}

/// Closest point on the circle, distance to it, outward normal and mirror image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionResult {
    /// Boundary intercept.
    pub bi: Point2,
    pub delta: f64,
    pub normal: Point2,
    /// Image point `2·bi − source`.
    pub ip: Point2,
}

pub fn project(point: Point2, boundary: &CircleBoundary) -> Result<ProjectionResult, GeometryError> {
    let rel = point - boundary.center;
    let dist = rel.norm();
    if dist < CIRCLE_TOL * boundary.radius {
        return Err(GeometryError::DegeneratePoint);
    }
    let normal = (1.0 / dist) * rel;
    let bi = boundary.center + boundary.radius * normal;
    let delta = (dist - boundary.radius).abs();
    let ip = 2.0 * bi - point;
    Ok(ProjectionResult { bi, delta, normal, ip })
}

/// Distance between `a` and `b` in units of the lattice diagonal.
pub fn normalized_radius(a: Point2, b: Point2, grid: &GridSpec) -> f64 {
    a.distance(b) / grid.diagonal()
}
