//! Small dense symmetric factorizations.
//!
//! Everything here works on `d <= 64` sized problems, so plain triple loops
//! are fine.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Pivot tolerance, relative to the largest diagonal entry.
pub const PIVOT_TOL: f64 = 1e-12;
/// Negative pivots down to `-PSD_EPS * scale` are treated as round-off.
pub const PSD_EPS: f64 = 1e-10;
/// Accepted relative residual for SPD solves.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

fn check_square(a: &ArrayView2<f64>) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: c,
        });
    }
    Ok(r)
}

fn is_symmetric(a: &ArrayView2<f64>, scale: f64) -> bool {
    let n = a.nrows();
    (0..n).all(|i| (0..i).all(|j| (a[[i, j]] - a[[j, i]]).abs() <= 1e-10 * scale))
}

/// Lower-triangular `L` with `L Lᵀ = A` for a symmetric PSD `A`.
///
/// Pivots below the tolerance produce an all-zero column, so rank-deficient
/// matrices (including the zero matrix) are accepted.
pub fn psd_factor(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = check_square(&a)?;
    let scale = a.diag().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if !a.iter().all(|v| v.is_finite()) || !is_symmetric(&a, scale) {
        return Err(Error::CovarianceNotPsd);
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut pivot = a[[j, j]];
        for k in 0..j {
            pivot -= l[[j, k]] * l[[j, k]];
        }
        if pivot <= PIVOT_TOL * scale {
            if pivot < -PSD_EPS * scale {
                return Err(Error::CovarianceNotPsd);
            }
            // Semidefinite direction. Off-diagonal residuals in this column
            // must vanish as well, otherwise the matrix is indefinite.
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                if s.abs() > PSD_EPS.sqrt() * scale {
                    return Err(Error::CovarianceNotPsd);
                }
            }
            continue;
        }
        let root = pivot.sqrt();
        l[[j, j]] = root;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / root;
        }
    }
    Ok(l)
}

/// Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    pub fn new(a: ArrayView2<f64>) -> Result<Self> {
        let n = check_square(&a)?;
        let scale = a.diag().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 || !a.iter().all(|v| v.is_finite()) {
            return Err(Error::SolveFailed);
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut pivot = a[[j, j]];
            for k in 0..j {
                pivot -= l[[j, k]] * l[[j, k]];
            }
            if pivot <= PIVOT_TOL * scale {
                return Err(Error::SolveFailed);
            }
            let root = pivot.sqrt();
            l[[j, j]] = root;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / root;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        let l = &self.lower;
        let mut y = b.to_owned();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }

    /// Solves `A X = B` column by column.
    pub fn solve_columns(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros(b.raw_dim());
        for (j, col) in b.columns().into_iter().enumerate() {
            out.column_mut(j).assign(&self.solve(col));
        }
        out
    }
}

/// Solves `A y = b` for SPD `A`, rejecting results whose relative residual
/// exceeds [`SOLVE_RESIDUAL_TOL`].
pub fn spd_solve(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    let chol = Cholesky::new(a)?;
    let y = chol.solve(b);
    let residual = &a.dot(&y) - &b;
    let norm = |v: &Array1<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let a_norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = a_norm * norm(&y) + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if denom > 0.0 && norm(&residual) > SOLVE_RESIDUAL_TOL * denom {
        return Err(Error::SolveFailed);
    }
    Ok(y)
}
