//! Point release at the center of a disc with an impermeable rim, and on an
//! unbounded plane.
//!
//! On the disc of radius `R` the concentration is
//!
//! ```text
//! c(r, t) = 1/(πR²) · [1 + Σ_n exp(−D α_n² t) · J0(r α_n) / J0(R α_n)²]
//! ```
//!
//! where `α_n` are the positive roots of `J1(R α) = 0`. Near the rim at early
//! times the bracket is a tiny number left after cancellation between terms
//! of order one, so each result carries a flag telling whether double
//! precision could resolve it.

use std::f64::consts::PI;

use thiserror::Error;

use super::bessel::{bessel_j0, bessel_j1};

/// Hard cap on the number of tabulated roots.
pub const MAX_ROOTS: usize = 10_000;

/// Default relative tolerance for the cancellation flag.
pub const DEFAULT_SERIES_TOL: f64 = 1e-6;

/// Terms are dropped once their bound falls below this fraction of the
/// running maximum.
const TRUNCATION: f64 = 1e-3 * f64::EPSILON;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("could not bracket root {index} of J1")]
    RootCountUnreachable { index: usize },
    #[error("{needed} roots needed, more than the cap of {MAX_ROOTS}")]
    TooManyRoots { needed: usize },
    #[error("t = {t:e} s is earlier than the time the root table was built for ({t_min:e} s)")]
    TimeBelowTable { t: f64, t_min: f64 },
    #[error("series at r = {r:e} m, t = {t:e} s loses more than the requested precision")]
    EarlyTimeUnsupported { r: f64, t: f64 },
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Positive roots `α_n` of `J1(R α) = 0`, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct BesselRootTable {
    radius: f64,
    roots: Vec<f64>,
}

impl BesselRootTable {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn roots(&self) -> &[f64] {
        &self.roots
    }

    pub fn count(&self) -> usize {
        self.roots.len()
    }
}

/// n-th positive zero of J1 (1-based), from a McMahon starting guess refined
/// by bisection and Newton steps.
fn j1_zero(n: usize) -> Result<f64, AnalyticsError> {
    let b = (n as f64 + 0.25) * PI;
    let guess = b - 3.0 / (8.0 * b);
    let (mut lo, mut hi) = (guess - 0.5, guess + 0.5);
    let (mut f_lo, f_hi) = (bessel_j1(lo), bessel_j1(hi));
    if f_lo * f_hi > 0.0 {
        return Err(AnalyticsError::RootCountUnreachable { index: n });
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let f_mid = bessel_j1(mid);
        if f_lo * f_mid <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..5 {
        let f = bessel_j1(x);
        let df = bessel_j0(x) - f / x;
        let next = x - f / df;
        if !(next > lo - 1e-9 && next < hi + 1e-9) {
            break;
        }
        if next == x {
            break;
        }
        x = next;
    }
    if bessel_j1(x).abs() >= 1e-12 {
        return Err(AnalyticsError::RootCountUnreachable { index: n });
    }
    Ok(x)
}

pub fn find_j1_roots(radius: f64, n_roots: usize) -> Result<BesselRootTable, AnalyticsError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(AnalyticsError::InvalidArgument(format!("radius must be positive, got {radius:e}")));
    }
    if n_roots == 0 {
        return Err(AnalyticsError::InvalidArgument("at least one root is required".into()));
    }
    if n_roots > MAX_ROOTS {
        return Err(AnalyticsError::TooManyRoots { needed: n_roots });
    }
    let roots = (1..=n_roots).map(|n| j1_zero(n).map(|x| x / radius)).collect::<Result<Vec<_>, _>>()?;
    Ok(BesselRootTable { radius, roots })
}

/// Outcome of one series evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesResult {
    pub value: f64,
    pub terms_used: usize,
    /// Largest bracket term magnitude seen (the leading 1 included).
    pub max_term: f64,
    /// Set when `max_term·ε > tol·|bracket|`.
    pub cancellation_flag: bool,
}

/// Disc series with its root table, reusable over many `(r, t)` pairs.
#[derive(Debug, Clone)]
pub struct DiscSeries {
    diffusivity: f64,
    t_min: f64,
    table: BesselRootTable,
    inv_j0_sq: Vec<f64>,
}

impl DiscSeries {
    /// Tabulates enough roots for truncation at every `t ≥ t_min`.
    pub fn new(radius: f64, diffusivity: f64, t_min: f64) -> Result<Self, AnalyticsError> {
        if !(diffusivity > 0.0 && diffusivity.is_finite()) {
            return Err(AnalyticsError::InvalidArgument(format!("D must be positive, got {diffusivity:e}")));
        }
        if !(t_min > 0.0 && t_min.is_finite()) {
            return Err(AnalyticsError::InvalidArgument(format!("t must be positive, got {t_min:e}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(AnalyticsError::InvalidArgument(format!("radius must be positive, got {radius:e}")));
        }
        // Smallest x = Rα with exp(−D x² t/R²)·(1 + πx/2) below the truncation
        // level; 1/J0(x)² ≤ 1 + πx/2 at the J1 zeros.
        let scale = diffusivity * t_min / (radius * radius);
        let mut x: f64 = 1.0;
        for _ in 0..50 {
            x = ((-TRUNCATION.ln() + (1.0 + 0.5 * PI * x).ln()) / scale).sqrt();
        }
        let needed = (x / PI).ceil() as usize + 2;
        if needed > MAX_ROOTS {
            return Err(AnalyticsError::TooManyRoots { needed });
        }
        let table = find_j1_roots(radius, needed)?;
        let inv_j0_sq = table
            .roots
            .iter()
            .map(|&a| {
                let j = bessel_j0(radius * a);
                1.0 / (j * j)
            })
            .collect();
        Ok(Self { diffusivity, t_min, table, inv_j0_sq })
    }

    pub fn radius(&self) -> f64 {
        self.table.radius
    }

    pub fn table(&self) -> &BesselRootTable {
        &self.table
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    fn check(&self, r: f64, t: f64) -> Result<(), AnalyticsError> {
        if !(t >= self.t_min) {
            return Err(AnalyticsError::TimeBelowTable { t, t_min: self.t_min });
        }
        if !(r >= 0.0 && r <= self.radius() * (1.0 + 1e-12)) {
            return Err(AnalyticsError::InvalidArgument(format!("r = {r:e} m lies outside the disc")));
        }
        Ok(())
    }

    /// Sums `f(exp(−Dα²t)/J0(Rα)², α)` over the roots until the truncation
    /// rule fires. The leading 1 of the bracket is not included in the sum
    /// but counts towards the running maximum.
    fn terms(&self, t: f64, mut f: impl FnMut(f64, f64) -> f64) -> (NeumaierSum, usize, f64) {
        let mut sum = NeumaierSum::new();
        let mut max_term: f64 = 1.0;
        let mut used = 0;
        for (&a, &inv) in self.table.roots.iter().zip(&self.inv_j0_sq) {
            let weight = (-self.diffusivity * a * a * t).exp() * inv;
            if weight < TRUNCATION * max_term {
                break;
            }
            let term = f(weight, a);
            max_term = max_term.max(term.abs());
            sum.add(term);
            used += 1;
        }
        (sum, used, max_term)
    }

    pub fn eval(&self, r: f64, t: f64, tol: f64) -> Result<SeriesResult, AnalyticsError> {
        self.check(r, t)?;
        let (mut sum, terms_used, max_term) = self.terms(t, |w, a| w * bessel_j0(r * a));
        sum.add(1.0);
        let bracket = sum.value();
        let radius = self.radius();
        Ok(SeriesResult {
            value: bracket / (PI * radius * radius),
            terms_used,
            max_term,
            cancellation_flag: max_term * f64::EPSILON > tol * bracket.abs(),
        })
    }

    /// Like [`DiscSeries::eval`] but rejects results that carry the flag.
    pub fn eval_strict(&self, r: f64, t: f64, tol: f64) -> Result<SeriesResult, AnalyticsError> {
        let res = self.eval(r, t, tol)?;
        if res.cancellation_flag {
            return Err(AnalyticsError::EarlyTimeUnsupported { r, t });
        }
        Ok(res)
    }

    /// Central difference `(c(R+h) − c(R−h))/(2h)` of the radial profile at
    /// the rim, with `h = rel_step·R`. The series is entire in `r`, so the
    /// point outside the disc is its analytic continuation. The two series
    /// are differenced term by term, which keeps the result free of the
    /// cancellation that hits `c` itself.
    pub fn wall_gradient_fd(&self, t: f64, rel_step: f64) -> Result<f64, AnalyticsError> {
        let radius = self.radius();
        self.check(radius, t)?;
        let h = rel_step * radius;
        let (sum, _, _) = self.terms(t, |w, a| w * (bessel_j0((radius + h) * a) - bessel_j0((radius - h) * a)));
        Ok(sum.value() / (2.0 * h) / (PI * radius * radius))
    }
}

/// One-shot evaluation of the disc series.
pub fn c_bounded(r: f64, t: f64, radius: f64, diffusivity: f64, tol: f64) -> Result<SeriesResult, AnalyticsError> {
    DiscSeries::new(radius, diffusivity, t)?.eval(r, t, tol)
}

/// Point release on an unbounded plane.
pub fn c_free(r: f64, t: f64, diffusivity: f64) -> f64 {
    let s = 4.0 * diffusivity * t;
    (-r * r / s).exp() / (PI * s)
}

pub fn diffusion_length(t: f64, diffusivity: f64) -> f64 {
    (4.0 * diffusivity * t).sqrt()
}

/// Time for the one-cell-per-step lattice front to travel `d`.
pub fn null_period(d: f64, dx: f64, dt: f64) -> f64 {
    d / (dx / dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    const D: f64 = 1e-10;
    const R: f64 = 0.5e-6;
    const US: f64 = 1e-6;

    #[test]
    fn first_roots_and_scaling() {
        let unit = find_j1_roots(1.0, 60).unwrap();
        let expect = [3.8317059702075123156, 7.0155866698156187535, 10.173468135062722077];
        for (a, e) in unit.roots().iter().zip(expect) {
            assert!((a - e).abs() < 1e-12);
        }
        assert!((unit.roots()[49] - 157.86265540193029781).abs() < 1e-10);
        assert!((unit.roots()[50] - 161.00429440536199346).abs() < 1e-10);
        assert!((unit.roots()[50] - unit.roots()[49] - PI).abs() < 1e-3);

        let scaled = find_j1_roots(R, 60).unwrap();
        for (a, b) in scaled.roots().iter().zip(unit.roots()) {
            assert!((a * R / b - 1.0).abs() < 1e-12);
        }
        assert!(unit.roots().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn root_request_validation() {
        assert!(matches!(find_j1_roots(1.0, 0), Err(AnalyticsError::InvalidArgument(_))));
        assert!(matches!(find_j1_roots(1.0, MAX_ROOTS + 1), Err(AnalyticsError::TooManyRoots { .. })));
        assert!(matches!(DiscSeries::new(R, D, 1e-30), Err(AnalyticsError::TooManyRoots { .. })));
    }

    #[test]
    fn steady_state_is_uniform() {
        let s = DiscSeries::new(R, D, 1.0).unwrap();
        let flat = 1.0 / (PI * R * R);
        for i in 0..=10 {
            let res = s.eval(R * i as f64 / 10.0, 1.0, DEFAULT_SERIES_TOL).unwrap();
            assert!((res.value / flat - 1.0).abs() < 1e-12);
            assert!(!res.cancellation_flag);
        }
    }

    #[test]
    fn wall_matches_image_source_at_30us() {
        let res = c_bounded(R, 30.0 * US, R, D, DEFAULT_SERIES_TOL).unwrap();
        assert!(!res.cancellation_flag);
        let image = 2.0 * c_free(R, 30.0 * US, D);
        assert!((res.value / image - 1.0).abs() < 0.1, "{} vs {image}", res.value);
    }

    #[test]
    fn wall_at_5us_is_flagged() {
        let res = c_bounded(R, 5.0 * US, R, D, DEFAULT_SERIES_TOL).unwrap();
        assert!(res.cancellation_flag);
        let s = DiscSeries::new(R, D, 5.0 * US).unwrap();
        assert!(matches!(s.eval_strict(R, 5.0 * US, DEFAULT_SERIES_TOL), Err(AnalyticsError::EarlyTimeUnsupported { .. })));
    }

    #[test]
    fn center_matches_free_plane_early() {
        // Far from the rim the disc and the plane agree.
        let t = 10.0 * US;
        let res = c_bounded(0.0, t, R, D, DEFAULT_SERIES_TOL).unwrap();
        assert!((res.value / c_free(0.0, t, D) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn earlier_time_than_table_rejected() {
        let s = DiscSeries::new(R, D, 30.0 * US).unwrap();
        assert!(matches!(s.eval(0.0, 10.0 * US, 1e-6), Err(AnalyticsError::TimeBelowTable { .. })));
        assert!(s.eval(1.1 * R, 30.0 * US, 1e-6).is_err());
    }

    #[test]
    fn free_plane_basics() {
        let t = 7.0 * US;
        let peak = c_free(0.0, t, D);
        assert!((peak - 1.0 / (4.0 * PI * D * t)).abs() < 1e-12 * peak);
        let ld = diffusion_length(t, D);
        assert!((c_free(ld, t, D) / peak - (-1.0f64).exp()).abs() < 1e-14);
        // Radial mass by composite Simpson on [0, 10 L_D].
        let n = 4000;
        let h = 10.0 * ld / n as f64;
        let f = |r: f64| 2.0 * PI * r * c_free(r, t, D);
        let mut acc = f(0.0) + f(10.0 * ld);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        assert!((acc * h / 3.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn scalar_helpers() {
        assert!((diffusion_length(1.0 * US, D) - 0.02e-6).abs() < 1e-20);
        assert_eq!(diffusion_length(0.0, D), 0.0);
        assert!((diffusion_length(4.0 * US, D) / diffusion_length(1.0 * US, D) - 2.0).abs() < 1e-15);
        assert!((null_period(0.5e-6, 0.01e-6, 0.1 * US) - 5.0 * US).abs() < 1e-18);
        assert_eq!(null_period(0.0, 1.0, 1.0), 0.0);
        assert!((null_period(1.0, 1.0, 0.5) - 0.5 * null_period(1.0, 1.0, 1.0)).abs() < 1e-16);
    }

    #[test]
    fn neumaier_recovers_small_addends() {
        let mut s = NeumaierSum::new();
        for x in [1.0, 1e100, 1.0, -1e100] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }
}
