use super::{
    default_rel_tol, ConstraintSystem, ReconciliationPlan, ReductionMethod, VariablePartition,
};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Reduced row echelon form with null rows removed.
#[derive(Debug, Clone)]
pub struct Rref {
    /// `rank x n` matrix in rref.
    pub z: Matrix,
    /// Pivot column of each row of `z`, ascending.
    pub pivots: Vec<usize>,
}

/// Gauss-Jordan elimination with partial (row) pivoting.
///
/// Forward elimination runs on unscaled rows, so the working matrix keeps the
/// magnitude of the input. A candidate pivot is accepted when its magnitude
/// exceeds `rel_tol * ‖working matrix‖∞` (largest absolute row sum),
/// re-evaluated at every step; entries at or below that threshold in the
/// pivot column are treated as exact zeros. Pivot rows are normalized and
/// back-substituted afterwards.
///
/// Partial pivoting does not reveal rank reliably: with many exactly
/// redundant rows a round-off residue can occasionally clear the default
/// threshold. [`super::reduce_qr`] is the safer choice for such systems.
pub fn rref(m: &Matrix, rel_tol: Option<f64>) -> Rref {
    let (p, n) = m.shape();
    let tol = rel_tol.unwrap_or_else(|| default_rel_tol(p, n));
    let mut a = m.clone();
    let mut pivots = Vec::new();
    let mut row = 0;

    for col in 0..n {
        if row == p {
            break;
        }
        let threshold = tol * row_sum_norm(&a);

        let mut best = row;
        let mut best_abs = a[(row, col)].abs();
        for r in (row + 1)..p {
            let v = a[(r, col)].abs();
            if v > best_abs {
                best = r;
                best_abs = v;
            }
        }
        if best_abs <= threshold {
            for r in row..p {
                a[(r, col)] = 0.0;
            }
            continue;
        }
        a.swap_rows(row, best);

        let pivot = a[(row, col)];
        for r in (row + 1)..p {
            let f = a[(r, col)] / pivot;
            a[(r, col)] = 0.0;
            if f == 0.0 {
                continue;
            }
            for j in (col + 1)..n {
                a[(r, j)] -= f * a[(row, j)];
            }
        }
        pivots.push(col);
        row += 1;
    }

    let rank = pivots.len();
    let mut z = a.rows(0, rank).into_owned();
    for (k, &col) in pivots.iter().enumerate().rev() {
        let pivot = z[(k, col)];
        for j in col..n {
            z[(k, j)] /= pivot;
        }
        z[(k, col)] = 1.0;
        for r in 0..k {
            let f = z[(r, col)];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                z[(r, j)] -= f * z[(k, j)];
            }
            z[(r, col)] = 0.0;
        }
    }
    Rref { z, pivots }
}

fn row_sum_norm(a: &Matrix) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Reduces `cs` through its reduced row echelon form.
///
/// Pivot columns become the constrained variables and the remaining columns
/// the free ones, both in their original order, so `C = Z P'`.
pub fn reduce_rref(cs: &ConstraintSystem, rel_tol: Option<f64>) -> Result<ReconciliationPlan> {
    if let Some(t) = rel_tol {
        if t.is_nan() || t <= 0.0 {
            return Err(Error::Invalid("rref tolerance must be positive".into()));
        }
    }
    let Rref { z, pivots } = rref(cs.gamma(), rel_tol);
    if pivots.is_empty() {
        return Err(Error::EmptySystem);
    }
    let n = cs.n();
    let partition = VariablePartition::from_constrained(pivots, n)?;
    let a = -linalg::select_columns(&z, &partition.free_idx);
    let plan = ReconciliationPlan::from_parts(
        cs.var_names().to_vec(),
        partition,
        a,
        ReductionMethod::Rref,
    )?;
    plan.verify_against(cs)?;
    Ok(plan)
}
