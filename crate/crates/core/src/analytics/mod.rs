//! Analytical references: Bessel functions, the point release on a disc with
//! an impermeable rim, and the point release on an unbounded plane.

pub mod bessel;
pub mod series;

pub use bessel::{bessel_j0, bessel_j1};
pub use series::{
    c_bounded, c_free, diffusion_length, find_j1_roots, null_period, AnalyticsError, BesselRootTable, DiscSeries,
    NeumaierSum, SeriesResult, DEFAULT_SERIES_TOL, MAX_ROOTS,
};
