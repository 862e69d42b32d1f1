//! Cyclic Jacobi eigensolver for the small symmetric Gram systems.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 64;

/// Eigenpairs of a symmetric matrix: `values[k]` pairs with column `k` of
/// `vectors` (row-major `n x n`).
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Vec<T>,
    pub n: usize,
}

impl<T: Scalar> SymmetricEigen<T> {
    /// Decompose the row-major symmetric matrix `a` of order `n`. Only the
    /// upper triangle is trusted; the lower is overwritten from it.
    pub fn new(mut a: Vec<T>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix storage must be n*n");
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical {
                context: "symmetric eigendecomposition".into(),
                message: "matrix has non-finite entries".into(),
            });
        }
        for i in 0..n {
            for j in 0..i {
                a[i * n + j] = a[j * n + i];
            }
        }
        let mut v = vec![T::zero(); n * n];
        for i in 0..n {
            v[i * n + i] = T::one();
        }

        let two = T::lit(2.0);
        let eps = T::epsilon();
        let scale = a.iter().map(|x| *x * *x).sum::<T>().sqrt();
        let floor = eps * scale;
        let mut converged = n <= 1;
        for _ in 0..MAX_SWEEPS {
            if converged {
                break;
            }
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    // Negligible against the diagonal: drop it rather than rotate.
                    let negligible = eps * (a[p * n + p] * a[q * n + q]).abs().sqrt();
                    if apq.abs() <= negligible.max(floor) {
                        a[p * n + q] = T::zero();
                        a[q * n + p] = T::zero();
                        continue;
                    }
                    rotated = true;
                    let theta = (a[q * n + q] - a[p * n + p]) / (two * apq);
                    let t = theta.signum() / (theta.abs() + theta.hypot(T::one()));
                    let c = T::one() / t.hypot(T::one());
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
            converged = !rotated;
        }
        if !converged {
            return Err(Error::Numerical {
                context: "symmetric eigendecomposition".into(),
                message: format!("Jacobi iteration did not converge in {MAX_SWEEPS} sweeps"),
            });
        }
        let values = (0..n).map(|i| a[i * n + i]).collect();
        Ok(Self { values, vectors: v, n })
    }

    pub fn vector(&self, k: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.n).map(move |i| self.vectors[i * self.n + k])
    }
}
