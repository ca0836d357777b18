//! Small dense symmetric positive-definite solves.
//!
//! Matrices here are at most a dozen columns wide, so a plain row-major
//! Cholesky with Jacobi (diagonal) equilibration beats a general library in
//! the scan hot loop.

use crate::error::{Error, Result};

/// Condition number above which a normal matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Reusable Cholesky workspace for an `n x n` matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    n: usize,
    /// Lower factor of the equilibrated matrix, row-major.
    l: Vec<f64>,
    /// Equilibration scales `1/sqrt(a_ii)`.
    scale: Vec<f64>,
}

impl SpdFactor {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            l: vec![0.0; n * n],
            scale: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Factor the symmetric matrix `a` (row-major, lower triangle read).
    /// Returns `log det a`.
    pub fn factor(&mut self, a: &[f64]) -> Result<f64> {
        let n = self.n;
        debug_assert_eq!(a.len(), n * n);
        for i in 0..n {
            let d = a[i * n + i];
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::SingularDesign {
                    columns: vec![i],
                    reason: "column has zero weighted norm".into(),
                });
            }
            self.scale[i] = 1.0 / d.sqrt();
        }
        let mut pivot_product = 1.0;
        let mut pmax = 0.0_f64;
        let mut pmin = f64::INFINITY;
        let mut imin = 0;
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j] * self.scale[i] * self.scale[j];
                for k in 0..j {
                    sum -= self.l[i * n + k] * self.l[j * n + k];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::SingularDesign {
                            columns: vec![i],
                            reason: "normal matrix not positive definite".into(),
                        });
                    }
                    let p = sum.sqrt();
                    self.l[i * n + i] = p;
                    pivot_product *= p;
                    pmax = pmax.max(p);
                    if p < pmin {
                        pmin = p;
                        imin = i;
                    }
                } else {
                    self.l[i * n + j] = sum / self.l[j * n + j];
                }
            }
        }
        if n > 0 && (pmax / pmin).powi(2) > MAX_CONDITION {
            return Err(Error::SingularDesign {
                columns: vec![imin],
                reason: format!("condition estimate {:.3e} exceeds {MAX_CONDITION:e}", (pmax / pmin).powi(2)),
            });
        }
        // One logarithm per product; fall back to a sum when a product leaves
        // the normal range.
        let log_pivots = if pivot_product.is_normal() {
            pivot_product.ln()
        } else {
            (0..n).map(|i| self.l[i * n + i].ln()).sum()
        };
        let diag_product: f64 = (0..n).map(|i| a[i * n + i]).product();
        let log_diag = if diag_product.is_normal() {
            diag_product.ln()
        } else {
            (0..n).map(|i| a[i * n + i].ln()).sum()
        };
        Ok(2.0 * log_pivots + log_diag)
    }

    /// Solve `a x = b` in place using the last factorization.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            b[i] *= self.scale[i];
        }
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in 0..n {
            b[i] *= self.scale[i];
        }
    }

    /// Dense inverse of the last factored matrix.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.solve(&mut col);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}
