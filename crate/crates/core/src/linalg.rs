//! Small dense linear-algebra helpers shared by the reduction and
//! reconciliation code. Everything here works on `nalgebra::DMatrix<f64>`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if all_finite(m) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Cholesky factor of a symmetric positive-definite matrix.
pub fn spd_factor(m: &Matrix, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

/// `(X + X') / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn select_columns(m: &Matrix, cols: &[usize]) -> Matrix {
    Matrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

pub fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Solves `U x = B` for upper-triangular `U` by back substitution.
pub fn back_substitute(u: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = u.nrows();
    if u.ncols() != n || b.nrows() != n {
        return Err(Error::Dimension(format!(
            "back substitution with U {}x{} and B {}x{}",
            u.nrows(),
            u.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let mut x = b.clone();
    for col in 0..b.ncols() {
        for i in (0..n).rev() {
            let diag = u[(i, i)];
            if diag == 0.0 {
                return Err(Error::Singular("zero on triangular diagonal".into()));
            }
            let mut acc = x[(i, col)];
            for k in (i + 1)..n {
                acc -= u[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = acc / diag;
        }
    }
    Ok(x)
}
