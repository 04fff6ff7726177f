//! Small dense linear algebra: LU factorization with partial pivoting.
//!
//! The latent dimension d stays small (single digits to low tens), so a
//! straightforward O(d^3) factorization is all that is needed for mixing
//! inversion and determinant checks. Singularity is reported, never masked.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// LU factorization of a square matrix with partial pivoting.
///
/// Stores L (unit diagonal, below) and U (on and above) packed in one matrix,
/// plus the row permutation and its sign.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Array2<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    /// Factorize `a`. Fails with `SingularMatrix` when a pivot falls below
    /// `1e-12` times the largest absolute entry of the matrix.
    pub fn new(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n}"),
                got: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut lu = a.to_owned();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_val = lu[[col, col]].abs();
            for r in col + 1..n {
                let v = lu[[r, col]].abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if pivot_val < 1e-12 * scale {
                return Err(Error::SingularMatrix { pivot: pivot_val, col });
            }
            if pivot_row != col {
                for c in 0..n {
                    lu.swap([col, c], [pivot_row, c]);
                }
                perm.swap(col, pivot_row);
                sign = -sign;
            }
            let p = lu[[col, col]];
            for r in col + 1..n {
                let f = lu[[r, col]] / p;
                lu[[r, col]] = f;
                for c in col + 1..n {
                    lu[[r, c]] -= f * lu[[col, c]];
                }
            }
        }
        Ok(Lu { lu, perm, sign })
    }

    pub fn det(&self) -> f64 {
        let mut d = self.sign;
        for i in 0..self.lu.nrows() {
            d *= self.lu[[i, i]];
        }
        d
    }

    /// log |det| of the factorized matrix.
    pub fn log_abs_det(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.lu.nrows() {
            s += self.lu[[i, i]].abs().ln();
        }
        s
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let n = self.lu.nrows();
        let mut x = Array1::zeros(n);
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        // forward: L y = P b
        for i in 0..n {
            for j in 0..i {
                let f = self.lu[[i, j]] * x[j];
                x[i] -= f;
            }
        }
        // backward: U x = y
        for i in (0..n).rev() {
            for j in i + 1..n {
                let f = self.lu[[i, j]] * x[j];
                x[i] -= f;
            }
            x[i] /= self.lu[[i, i]];
        }
        x
    }
}

/// Determinant of a square matrix; `None` when numerically singular.
pub fn det(a: ArrayView2<f64>) -> Option<f64> {
    match Lu::new(a) {
        Ok(lu) => Some(lu.det()),
        Err(Error::SingularMatrix { .. }) => Some(0.0),
        Err(_) => None,
    }
}

/// Minimum singular value via Jacobi one-sided iteration on A^T A.
///
/// Used by the variability checker on small matrices; accuracy around 1e-10
/// is plenty for a threshold test.
pub fn min_singular_value(a: ArrayView2<f64>) -> f64 {
    let n = a.ncols();
    // Gram matrix, then smallest eigenvalue by cyclic Jacobi.
    let mut g = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for r in 0..a.nrows() {
                s += a[[r, i]] * a[[r, j]];
            }
            g[[i, j]] = s;
        }
    }
    for _sweep in 0..50 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off += g[[p, q]].abs();
            }
        }
        if off < 1e-14 * (1.0 + g.diag().iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = g[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = g[[p, p]];
                let aqq = g[[q, q]];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let gkp = g[[k, p]];
                    let gkq = g[[k, q]];
                    g[[k, p]] = c * gkp - s * gkq;
                    g[[k, q]] = s * gkp + c * gkq;
                }
                for k in 0..n {
                    let gpk = g[[p, k]];
                    let gqk = g[[q, k]];
                    g[[p, k]] = c * gpk - s * gqk;
                    g[[q, k]] = s * gpk + c * gqk;
                }
            }
        }
    }
    let min_eig = g.diag().iter().fold(f64::INFINITY, |m, v| m.min(*v));
    min_eig.max(0.0).sqrt()
}
