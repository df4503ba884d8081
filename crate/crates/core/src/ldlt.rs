//! Dense symmetric solve for the small (m ≤ 16) moment matrices.
//!
//! The matrix is first equilibrated to unit diagonal, then factored as
//! `P·L·D·Lᵀ·Pᵀ` with diagonal pivoting. The reciprocal condition estimate is
//! `min|d| / max|d|` of the equilibrated factor.

pub(crate) struct SymmetricFactor {
    n: usize,
    scale: Vec<f64>,
    perm: Vec<usize>,
    // Unit lower triangle, row-major n×n.
    lower: Vec<f64>,
    diag: Vec<f64>,
    rcond: f64,
}

impl SymmetricFactor {
    /// Factors the row-major symmetric `n×n` matrix `a`. Returns `None` when a
    /// pivot is non-positive or not finite.
    pub(crate) fn new(mut a: Vec<f64>, n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut scale = vec![0.0; n];
        for i in 0..n {
            let d = a[i * n + i];
            if !(d > 0.0 && d.is_finite()) {
                return None;
            }
            scale[i] = 1.0 / d.sqrt();
        }
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] *= scale[i] * scale[j];
            }
        }

        let mut perm: Vec<usize> = (0..n).collect();
        let mut diag = vec![0.0; n];
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x * n + x].total_cmp(&a[y * n + y]))
                .unwrap_or(k);
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                for r in 0..n {
                    a.swap(r * n + k, r * n + p);
                }
                perm.swap(k, p);
            }
            let d = a[k * n + k];
            if !(d > 0.0 && d.is_finite()) {
                return None;
            }
            diag[k] = d;
            for i in k + 1..n {
                a[i * n + k] /= d;
            }
            for i in k + 1..n {
                let lik = a[i * n + k];
                for j in k + 1..=i {
                    let v = a[i * n + j] - lik * a[j * n + k] * d;
                    a[i * n + j] = v;
                    a[j * n + i] = v;
                }
            }
        }
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut lower = vec![0.0; n * n];
        for i in 0..n {
            lower[i * n + i] = 1.0;
            for j in 0..i {
                lower[i * n + j] = a[i * n + j];
            }
        }
        Some(Self { n, scale, perm, lower, diag, rcond: min / max })
    }

    pub(crate) fn rcond(&self) -> f64 {
        self.rcond
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        // Pᵀ S b
        let mut y: Vec<f64> = (0..n).map(|i| self.scale[self.perm[i]] * b[self.perm[i]]).collect();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.lower[i * n + j] * y[j];
            }
            y[i] = s;
        }
        for i in 0..n {
            y[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.lower[j * n + i] * y[j];
            }
            y[i] = s;
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.perm[i]] = self.scale[self.perm[i]] * y[i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        // A = Bᵀ B + I for a fixed B.
        let n = 4;
        let b = [1.0, 2.0, 0.5, -1.0, 0.0, 3.0, 1.0, 2.0, -2.0, 0.5, 4.0, 1.0, 1.0, 1.0, 1.0, 5.0];
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|r| b[r * n + i] * b[r * n + j]).sum::<f64>();
            }
            a[i * n + i] += 1.0;
        }
        let x_true = [0.3, -1.2, 2.5, 0.7];
        let rhs: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i * n + j] * x_true[j]).sum()).collect();
        let f = SymmetricFactor::new(a, n).unwrap();
        let x = f.solve(&rhs);
        for (u, v) in x.iter().zip(x_true) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(f.rcond() > 1e-4 && f.rcond() <= 1.0);
    }

    #[test]
    fn singular_matrix_has_tiny_rcond() {
        // Rank-one 3×3.
        let v = [1.0, 2.0, 3.0];
        let a: Vec<f64> = (0..9).map(|i| v[i / 3] * v[i % 3]).collect();
        let f = SymmetricFactor::new(a, 3);
        assert!(f.map_or(true, |f| f.rcond() < 1e-12));
    }
}
