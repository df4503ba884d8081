//! Bessel functions of the first kind, orders 0 and 1, for `x ≥ 0`.
//!
//! Below [`ASYMPTOTIC_FROM`] the power series is summed in double-double
//! arithmetic, which absorbs the cancellation between terms that reach
//! `~1e6` near the crossover. Above it the Hankel asymptotic expansion is
//! used; its smallest term there is below `1e-17`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Crossover between the series and the asymptotic expansion.
pub const ASYMPTOTIC_FROM: f64 = 17.0;

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }

    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    fn div_f64(self, b: f64) -> Dd {
        let q1 = self.hi / b;
        let (p, e) = two_prod(q1, b);
        let r = ((self.hi - p) - e + self.lo) / b;
        let (hi, lo) = quick_two_sum(q1, r);
        Dd { hi, lo }
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// `Σ_k (−q)^k / (k!·(k+ν)!)` for ν ∈ {0, 1}, with `q = x²/4`.
fn series(x: f64, nu: u32) -> f64 {
    let (q_hi, q_lo) = two_prod(x, x);
    let q = Dd { hi: q_hi * 0.25, lo: q_lo * 0.25 };
    let mut term = Dd::new(if nu == 0 { 1.0 } else { 0.5 * x });
    let mut sum = term;
    for k in 1..200u32 {
        term = term.mul(q).neg().div_f64((k as f64) * ((k + nu) as f64));
        sum = sum.add(term);
        if term.hi.abs() < 1e-34 * sum.hi.abs().max(1e-300) {
            break;
        }
    }
    sum.to_f64()
}

/// Hankel expansion: returns `(P, Q)` for order `nu` at `x`.
fn hankel_pq(x: f64, nu: u32) -> (f64, f64) {
    let mu = 4.0 * (nu * nu) as f64;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0; // a_k / x^k
    let mut last = f64::INFINITY;
    for k in 1..60u32 {
        let odd = (2 * k - 1) as f64;
        a *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        if a.abs() > last || a == 0.0 {
            break;
        }
        last = a.abs();
        // P takes even k with sign (−1)^{k/2}, Q odd k with sign (−1)^{(k−1)/2}.
        match k % 4 {
            0 => p += a,
            1 => q += a,
            2 => p -= a,
            _ => q -= a,
        }
        if last < 1e-18 {
            break;
        }
    }
    (p, q)
}

pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < ASYMPTOTIC_FROM {
        return series(x, 0);
    }
    let (p, q) = hankel_pq(x, 0);
    let (s, c) = x.sin_cos();
    // cos(x − π/4), sin(x − π/4)
    let cm = (c + s) * FRAC_1_SQRT_2;
    let sm = (s - c) * FRAC_1_SQRT_2;
    (2.0 / (PI * x)).sqrt() * (p * cm - q * sm)
}

pub fn bessel_j1(x: f64) -> f64 {
    if x < 0.0 {
        return -bessel_j1(-x);
    }
    if x < ASYMPTOTIC_FROM {
        return series(x, 1);
    }
    let (p, q) = hankel_pq(x, 1);
    let (s, c) = x.sin_cos();
    // cos(x − 3π/4), sin(x − 3π/4)
    let cm = (s - c) * FRAC_1_SQRT_2;
    let sm = -(s + c) * FRAC_1_SQRT_2;
    (2.0 / (PI * x)).sqrt() * (p * cm - q * sm)
}

/// Both forms, exposed for crossover diagnostics.
pub fn bessel_j0_j1_series(x: f64) -> (f64, f64) {
    (series(x, 0), series(x, 1))
}

pub fn bessel_j0_j1_asymptotic(x: f64) -> (f64, f64) {
    let (p0, q0) = hankel_pq(x, 0);
    let (p1, q1) = hankel_pq(x, 1);
    let (s, c) = x.sin_cos();
    let amp = (2.0 / (PI * x)).sqrt();
    let j0 = amp * (p0 * (c + s) - q0 * (s - c)) * FRAC_1_SQRT_2;
    let j1 = amp * (p1 * (s - c) + q1 * (s + c)) * FRAC_1_SQRT_2;
    (j0, j1)
}
