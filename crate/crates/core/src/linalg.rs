//! Small dense linear algebra used by the validators and the per-step hot loops.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Reciprocal condition numbers below this are treated as singular.
pub const RCOND_THRESHOLD: f64 = 1e-12;

pub fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse with a 1-norm reciprocal condition check and a residual check.
pub fn invert_checked(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let singular = |rcond: f64| Error::Singular {
        rcond,
        context: if context.is_empty() {
            String::new()
        } else {
            format!(" at {context}")
        },
    };
    if !m.iter().all(|v| v.is_finite()) {
        return Err(singular(f64::NAN));
    }
    let inv = m.clone().try_inverse().ok_or_else(|| singular(0.0))?;
    let norm = one_norm(m);
    let rcond = if norm == 0.0 {
        0.0
    } else {
        1.0 / (norm * one_norm(&inv))
    };
    if !(rcond >= RCOND_THRESHOLD) {
        return Err(singular(rcond));
    }
    let d = m.nrows();
    let residual = (m * &inv - DMatrix::<f64>::identity(d, d)).amax();
    if residual > 1e-10 {
        return Err(singular(rcond));
    }
    Ok(inv)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return f64::INFINITY;
    }
    sym.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Spectral norm.
pub fn two_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Allocation-free LU factorization with partial pivoting, reused across the
/// millions of small solves made inside path loops.
#[derive(Debug, Clone)]
pub(crate) struct SmallLu {
    d: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl SmallLu {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            lu: vec![0.0; d * d],
            perm: (0..d).collect(),
        }
    }

    /// Factors `m`; fails when the pivot ratio signals numerical singularity.
    pub fn factor(&mut self, m: &DMatrix<f64>) -> Result<()> {
        let d = self.d;
        for r in 0..d {
            for c in 0..d {
                self.lu[r * d + c] = m[(r, c)];
            }
            self.perm[r] = r;
        }
        let mut max_pivot = 0.0f64;
        let mut min_pivot = f64::INFINITY;
        for k in 0..d {
            let mut p = k;
            let mut best = self.lu[k * d + k].abs();
            for r in k + 1..d {
                let v = self.lu[r * d + k].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if p != k {
                for c in 0..d {
                    self.lu.swap(k * d + c, p * d + c);
                }
                self.perm.swap(k, p);
            }
            let pivot = self.lu[k * d + k];
            max_pivot = max_pivot.max(pivot.abs());
            min_pivot = min_pivot.min(pivot.abs());
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::Singular {
                    rcond: 0.0,
                    context: String::new(),
                });
            }
            for r in k + 1..d {
                let factor = self.lu[r * d + k] / pivot;
                self.lu[r * d + k] = factor;
                for c in k + 1..d {
                    self.lu[r * d + c] -= factor * self.lu[k * d + c];
                }
            }
        }
        let ratio = min_pivot / max_pivot;
        if d > 0 && ratio < RCOND_THRESHOLD {
            return Err(Error::Singular {
                rcond: ratio,
                context: String::new(),
            });
        }
        Ok(())
    }

    /// Solves `m x = rhs` in place using the last factorization. `scratch`
    /// must have length `d`.
    pub fn solve(&self, rhs: &mut [f64], scratch: &mut [f64]) {
        let d = self.d;
        for r in 0..d {
            scratch[r] = rhs[self.perm[r]];
        }
        for r in 0..d {
            let mut acc = scratch[r];
            for c in 0..r {
                acc -= self.lu[r * d + c] * scratch[c];
            }
            scratch[r] = acc;
        }
        for r in (0..d).rev() {
            let mut acc = scratch[r];
            for c in r + 1..d {
                acc -= self.lu[r * d + c] * scratch[c];
            }
            scratch[r] = acc / self.lu[r * d + r];
        }
        rhs.copy_from_slice(&scratch[..d]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn inverse_of_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 4.0]));
        let inv = invert_checked(&m, "").unwrap();
        assert_relative_eq!(inv[(0, 0)], 0.5);
        assert_relative_eq!(inv[(1, 1)], 0.25);
        assert_eq!(inv[(0, 1)], 0.0);
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(invert_checked(&m, "z"), Err(Error::Singular { .. })));
        let mut lu = SmallLu::new(2);
        assert!(lu.factor(&m).is_err());
        assert!(invert_checked(&DMatrix::zeros(1, 1), "").is_err());
    }

    #[test]
    fn small_lu_matches_adjugate_formula() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut lu = SmallLu::new(2);
        let mut scratch = [0.0; 2];
        for _ in 0..1000 {
            let (a, b, c, d) = (
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let det: f64 = a * d - b * c;
            if det.abs() < 0.1 {
                continue;
            }
            let m = DMatrix::from_row_slice(2, 2, &[a, b, c, d]);
            let rhs = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let expect = [(d * rhs[0] - b * rhs[1]) / det, (-c * rhs[0] + a * rhs[1]) / det];
            lu.factor(&m).unwrap();
            let mut x = rhs;
            lu.solve(&mut x, &mut scratch);
            assert!((x[0] - expect[0]).abs() < 1e-12 && (x[1] - expect[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn min_eigenvalue_of_known_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert_relative_eq!(min_eigenvalue(&m), 1.0, epsilon = 1e-12);
    }
}
