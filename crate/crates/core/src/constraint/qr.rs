use super::{
    default_rel_tol, ConstraintSystem, ReconciliationPlan, ReductionMethod, VariablePartition,
};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Householder QR with column pivoting, `Γ Π = Q R`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Upper-trapezoidal factor (p x n); only the first `rank` rows matter.
    pub r: Matrix,
    /// `pivots[k]` is the original column moved to position k.
    pub pivots: Vec<usize>,
    pub rank: usize,
}

// Remaining norms within this relative band of the maximum count as ties.
const TIE_BAND: f64 = 1e-12;

/// Pivoted QR of `m`. At each step the remaining column with the largest
/// norm is brought forward (ties go to the lowest original index). The
/// numerical rank is the number of leading `|R_ii|` above
/// `rel_tol * |R_11|`.
pub fn pivoted_qr(m: &Matrix, rel_tol: Option<f64>) -> PivotedQr {
    let (p, n) = m.shape();
    let tol = rel_tol.unwrap_or_else(|| default_rel_tol(p, n));
    let mut a = m.clone();
    let mut pivots: Vec<usize> = (0..n).collect();
    let steps = p.min(n);
    let mut r11 = 0.0;
    let mut rank = 0;

    for k in 0..steps {
        // Pick the pivot column among k..n.
        let norms: Vec<f64> = (k..n)
            .map(|j| (k..p).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt())
            .collect();
        let max_norm = norms.iter().cloned().fold(0.0_f64, f64::max);
        let best = (k..n)
            .filter(|&j| norms[j - k] >= max_norm * (1.0 - TIE_BAND))
            .min_by_key(|&j| pivots[j])
            .unwrap_or(k);
        if best != k {
            a.swap_columns(k, best);
            pivots.swap(k, best);
        }

        let alpha_norm = norms[best - k];
        if k == 0 {
            r11 = alpha_norm;
        }
        if alpha_norm == 0.0 || alpha_norm <= tol * r11 {
            break;
        }

        // Householder reflector zeroing a[k+1.., k].
        let x0 = a[(k, k)];
        let alpha = if x0 >= 0.0 { -alpha_norm } else { alpha_norm };
        let mut v: Vec<f64> = (k..p).map(|i| a[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let dot: f64 = (k..p).map(|i| v[i - k] * a[(i, j)]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..p {
                    a[(i, j)] -= f * v[i - k];
                }
            }
        }
        a[(k, k)] = alpha;
        for i in (k + 1)..p {
            a[(i, k)] = 0.0;
        }
        rank += 1;
    }

    // Below-diagonal entries of the unprocessed block are not part of R.
    for i in rank..p {
        for j in 0..n {
            a[(i, j)] = 0.0;
        }
    }
    PivotedQr { r: a, pivots, rank }
}

/// Reduces `cs` through a column-pivoted QR decomposition.
///
/// The first `rank` pivot columns are the constrained variables and
/// `A = -R_c^{-1} R_u`. Both variable sets are then listed in their original
/// order (rows and columns of `A` permuted to match), so the permutation is
/// the identity whenever the selected constrained variables are the leading
/// columns of `Γ`.
pub fn reduce_qr(cs: &ConstraintSystem, rel_tol: Option<f64>) -> Result<ReconciliationPlan> {
    if let Some(t) = rel_tol {
        if t.is_nan() || t <= 0.0 {
            return Err(Error::Invalid("QR tolerance must be positive".into()));
        }
    }
    let qr = pivoted_qr(cs.gamma(), rel_tol);
    let n = cs.n();
    let rank = qr.rank;
    if rank == 0 {
        return Err(Error::EmptySystem);
    }
    let r_c = qr.r.view((0, 0), (rank, rank)).into_owned();
    let r_u = qr.r.view((0, rank), (rank, n - rank)).into_owned();
    let a_pivot = -linalg::back_substitute(&r_c, &r_u)?;

    // Reorder to ascending original indices within each group.
    let mut c_order: Vec<usize> = (0..rank).collect();
    c_order.sort_by_key(|&k| qr.pivots[k]);
    let mut u_order: Vec<usize> = (0..n - rank).collect();
    u_order.sort_by_key(|&k| qr.pivots[rank + k]);
    let a = Matrix::from_fn(rank, n - rank, |i, j| a_pivot[(c_order[i], u_order[j])]);
    let constrained: Vec<usize> = c_order.iter().map(|&k| qr.pivots[k]).collect();
    let free: Vec<usize> = u_order.iter().map(|&k| qr.pivots[rank + k]).collect();

    let partition = VariablePartition::new(constrained, free, n)?;
    let plan =
        ReconciliationPlan::from_parts(cs.var_names().to_vec(), partition, a, ReductionMethod::Qr)?;
    plan.verify_against(cs)?;
    Ok(plan)
}
