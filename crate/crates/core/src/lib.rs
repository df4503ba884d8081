//! Explicit finite-difference diffusion on a Cartesian lattice with a
//! circular immersed boundary handled by ghost points.
//!
//! The crate is organised by stage:
//!
//! * [`geometry`]: lattice, circle, node classes and projections.
//! * [`kernels`]: polynomial bases and radial weights.
//! * [`closure`]: least-squares ghost-point closures (MLS, CMLS, ECMLS).
//! * [`solver`]: FTCS stepping with staircase or closure ghosts.
//! * [`analytics`]: Bessel functions and the disc / free-plane references.
//! * [`metrics`]: boundary error reports, parameter sweeps and the β fit.

pub mod analytics;
pub mod closure;
pub mod geometry;
pub mod kernels;
pub mod metrics;
mod ldlt;
pub mod solver;

pub use closure::{Algorithm, AlgorithmSpec, BoundaryConditionSpec, BoundaryKind, ClosureError, GhostClosure};
pub use geometry::{CircleBoundary, GridSpec, NodeClass, NodeIndex, Point2};
pub use kernels::{BasisFamily, WeightSpec};
