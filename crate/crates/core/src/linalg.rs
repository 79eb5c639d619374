//! Small dense linear algebra: row-vector products, the matrix exponential,
//! and pivoted row-vector solves. Matrices here are at most a few dozen rows.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `p A` for a row vector `p`.
pub fn row_times(p: &[f64], a: &DMatrix<f64>) -> Vec<f64> {
    debug_assert_eq!(p.len(), a.nrows());
    (0..a.ncols())
        .map(|j| p.iter().enumerate().map(|(i, pi)| pi * a[(i, j)]).sum())
        .collect()
}

/// Maximum absolute column sum.
pub fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const SCALING_THRESHOLD: f64 = 0.5;
const SERIES_TOL: f64 = 1e-16;
const MAX_TERMS: usize = 64;

/// Matrix exponential by scaling and squaring a truncated Taylor series.
///
/// `A` is scaled by `2^-s` until `‖A‖₁ ≤ 0.5`; the series is summed until the
/// next term is below `1e-16` relative to the partial sum, then squared `s`
/// times.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    let norm = one_norm(a);
    let mut squarings = 0u32;
    if norm > SCALING_THRESHOLD {
        squarings = (norm / SCALING_THRESHOLD).log2().ceil() as u32;
    }
    let scaled = a / 2f64.powi(squarings as i32);

    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=MAX_TERMS {
        term = &term * &scaled / k as f64;
        sum += &term;
        if one_norm(&term) <= SERIES_TOL * one_norm(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Partial-pivoted LU factorization reused for repeated row-vector solves
/// `x A = b`.
#[derive(Debug, Clone)]
pub struct RowSolver {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl RowSolver {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension {
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        // x A = b  <=>  Aᵀ xᵀ = bᵀ
        let lu = a.transpose().lu();
        let u = lu.u();
        let scale = a.amax().max(1.0);
        if u.diagonal().iter().any(|d| d.abs() <= 1e-14 * scale) {
            return Err(Error::Singular("matrix is numerically singular".into()));
        }
        Ok(RowSolver { lu })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let rhs = nalgebra::DVector::from_column_slice(b);
        self.lu
            .solve(&rhs)
            .map(|x| x.iter().copied().collect())
            .ok_or_else(|| Error::Singular("LU solve failed".into()))
    }
}
