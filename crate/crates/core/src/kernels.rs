//! Polynomial bases and radial weight functions for the least-squares closures.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("power-of-distance weight is unbounded at zero distance")]
    ZeroDistancePower,
    #[error("normalized distance must be non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("weight parameter {name} must be positive, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// Two-variable monomial bases. Monomials are listed in a fixed order with
/// the constant first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisFamily {
    Linear,
    Bilinear,
    Quadratic,
    IncompleteQuartic,
    Cubic,
    Quartic,
    Bicubic,
}

// Exponent pairs (x power, y power) in evaluation order.
const LINEAR: &[(u8, u8)] = &[(0, 0), (1, 0), (0, 1)];
const BILINEAR: &[(u8, u8)] = &[(0, 0), (1, 0), (0, 1), (1, 1)];
const QUADRATIC: &[(u8, u8)] = &[(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];
const INCOMPLETE_QUARTIC: &[(u8, u8)] =
    &[(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1), (0, 2), (1, 2), (2, 2)];
const CUBIC: &[(u8, u8)] = &[
    (0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3),
];
const QUARTIC: &[(u8, u8)] = &[
    (0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3),
    (4, 0), (3, 1), (2, 2), (1, 3), (0, 4),
];
const BICUBIC: &[(u8, u8)] = &[
    (0, 0), (1, 0), (2, 0), (3, 0), (0, 1), (1, 1), (2, 1), (3, 1),
    (0, 2), (1, 2), (2, 2), (3, 2), (0, 3), (1, 3), (2, 3), (3, 3),
];

/// Largest basis rank.
pub const MAX_RANK: usize = 16;

impl BasisFamily {
    pub const ALL: [BasisFamily; 7] = [
        BasisFamily::Linear,
        BasisFamily::Bilinear,
        BasisFamily::Quadratic,
        BasisFamily::IncompleteQuartic,
        BasisFamily::Cubic,
        BasisFamily::Quartic,
        BasisFamily::Bicubic,
    ];

    pub fn exponents(self) -> &'static [(u8, u8)] {
        match self {
            BasisFamily::Linear => LINEAR,
            BasisFamily::Bilinear => BILINEAR,
            BasisFamily::Quadratic => QUADRATIC,
            BasisFamily::IncompleteQuartic => INCOMPLETE_QUARTIC,
            BasisFamily::Cubic => CUBIC,
            BasisFamily::Quartic => QUARTIC,
            BasisFamily::Bicubic => BICUBIC,
        }
    }

    /// Number of monomials.
    pub fn rank(self) -> usize {
        self.exponents().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            BasisFamily::Linear => "linear",
            BasisFamily::Bilinear => "bilinear",
            BasisFamily::Quadratic => "quadratic",
            BasisFamily::IncompleteQuartic => "incomplete-quartic",
            BasisFamily::Cubic => "cubic",
            BasisFamily::Quartic => "quartic",
            BasisFamily::Bicubic => "bicubic",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL.into_iter().find(|b| b.name() == norm)
    }

    /// Writes the monomials at `(x, y)` into `out[..rank]`.
    pub fn eval_into(self, x: f64, y: f64, out: &mut [f64]) {
        let xp = [1.0, x, x * x, x * x * x, x * x * x * x];
        let yp = [1.0, y, y * y, y * y * y, y * y * y * y];
        for (slot, &(px, py)) in out.iter_mut().zip(self.exponents()) {
            *slot = xp[px as usize] * yp[py as usize];
        }
    }
}

impl std::fmt::Display for BasisFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Monomial vector of `family` at `(x, y)`.
pub fn eval_basis(family: BasisFamily, x: f64, y: f64) -> Vec<f64> {
    let mut out = vec![0.0; family.rank()];
    family.eval_into(x, y, &mut out);
    out
}

/// Radial weight as a function of the normalized radius `r_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSpec {
    /// Compactly supported cubic spline, zero beyond `r_s = beta`.
    CubicSpline { beta: f64 },
    /// Raised cosine, zero beyond `r_s = beta`.
    Cosine { beta: f64 },
    /// `r_s^p`. The weight itself has unbounded support; `support` is the
    /// normalized radius used to collect stencil nodes.
    PowerOfDistance { p: f64, support: f64 },
}

/// Distance substituted for `r_s = 0` with the power-of-distance family.
pub const POWER_WEIGHT_FLOOR: f64 = 1e-6;

impl WeightSpec {
    pub fn validate(&self) -> Result<(), KernelError> {
        let (name, value) = match *self {
            WeightSpec::CubicSpline { beta } | WeightSpec::Cosine { beta } => ("beta", beta),
            WeightSpec::PowerOfDistance { p, support } => {
                if !p.is_finite() {
                    return Err(KernelError::InvalidParameter { name: "p", value: p });
                }
                ("support", support)
            }
        };
        if value > 0.0 && !value.is_nan() {
            Ok(())
        } else {
            Err(KernelError::InvalidParameter { name, value })
        }
    }

    /// Normalized radius of the interpolation stencil domain.
    pub fn support(&self) -> f64 {
        match *self {
            WeightSpec::CubicSpline { beta } | WeightSpec::Cosine { beta } => beta,
            WeightSpec::PowerOfDistance { support, .. } => support,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WeightSpec::CubicSpline { .. } => "spline",
            WeightSpec::Cosine { .. } => "cosine",
            WeightSpec::PowerOfDistance { .. } => "power",
        }
    }

    /// β for the compact families, `p` for the power family.
    pub fn parameter(&self) -> f64 {
        match *self {
            WeightSpec::CubicSpline { beta } | WeightSpec::Cosine { beta } => beta,
            WeightSpec::PowerOfDistance { p, .. } => p,
        }
    }
}

pub fn eval_weight(spec: &WeightSpec, r_s: f64) -> Result<f64, KernelError> {
    spec.validate()?;
    if r_s < 0.0 || r_s.is_nan() {
        return Err(KernelError::NegativeDistance(r_s));
    }
    Ok(match *spec {
        WeightSpec::CubicSpline { beta } => {
            let q = r_s / beta;
            if q <= 0.5 {
                1.0 - 6.0 * q * q + 6.0 * q * q * q
            } else if q <= 1.0 {
                2.0 - 6.0 * q + 6.0 * q * q - 2.0 * q * q * q
            } else {
                0.0
            }
        }
        WeightSpec::Cosine { beta } => {
            let q = r_s / beta;
            if q <= 1.0 {
                0.5 * (1.0 + (PI * q).cos())
            } else {
                0.0
            }
        }
        WeightSpec::PowerOfDistance { p, .. } => {
            if r_s == 0.0 {
                return Err(KernelError::ZeroDistancePower);
            }
            r_s.powf(p)
        }
    })
}

/// [`eval_weight`] with the power family capped at [`POWER_WEIGHT_FLOOR`].
pub fn eval_weight_capped(spec: &WeightSpec, r_s: f64) -> Result<f64, KernelError> {
    match eval_weight(spec, r_s) {
        Err(KernelError::ZeroDistancePower) => eval_weight(spec, POWER_WEIGHT_FLOOR),
        other => other,
    }
}
