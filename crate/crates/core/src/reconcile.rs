//! Point reconciliation through the structural matrix `S G` and through the
//! projection matrix `M`.

use crate::constraint::ReconciliationPlan;
use crate::covariance::WMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Base forecasts for `H` horizons, rows in plan order.
#[derive(Debug, Clone)]
pub struct ForecastBatch {
    pub base: Matrix,
    pub horizon_labels: Vec<String>,
}

impl ForecastBatch {
    pub fn new(base: Matrix) -> Result<Self> {
        let labels = (1..=base.ncols()).map(|h| h.to_string()).collect();
        Self::with_labels(base, labels)
    }

    pub fn with_labels(base: Matrix, horizon_labels: Vec<String>) -> Result<Self> {
        if horizon_labels.len() != base.ncols() {
            return Err(Error::Dimension(format!(
                "{} horizon labels for {} columns",
                horizon_labels.len(),
                base.ncols()
            )));
        }
        linalg::ensure_finite(&base, "base forecasts")?;
        Ok(Self {
            base,
            horizon_labels,
        })
    }

    /// Builds a batch from rows labelled by `names` in any order.
    pub fn from_named(
        plan: &ReconciliationPlan,
        names: &[String],
        base: &Matrix,
        horizon_labels: Vec<String>,
    ) -> Result<Self> {
        let base = plan.rows_to_plan_order(names, base)?;
        Self::with_labels(base, horizon_labels)
    }

    pub fn horizons(&self) -> usize {
        self.base.ncols()
    }
}

/// Which formula to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Path {
    /// `M` when `n_c < n_u`, `S G` otherwise.
    Auto,
    Projection,
    Structural,
}

/// A plan together with a weight matrix and the reconciliation matrices
/// derived from them.
#[derive(Debug, Clone)]
pub struct ReconcilerState {
    plan: ReconciliationPlan,
    w: WMatrix,
    g: Matrix,
    m: Matrix,
    sg: Matrix,
}

impl ReconcilerState {
    /// `G = (S'W⁻¹S)⁻¹S'W⁻¹` and `M = I − WC'(CWC')⁻¹C`. `w` must be in plan
    /// order.
    ///
    /// Neither `S'W⁻¹S` nor `CWC'` is formed. With `W = LL'`, `L⁻¹S = QR`
    /// gives `G = R⁻¹Q'L⁻¹`, and `L'C' = QR` gives `M = I − LQ (L⁻ᵀQ)'`.
    pub fn fit(plan: &ReconciliationPlan, w: &WMatrix) -> Result<Self> {
        let n = plan.n();
        if w.n() != n {
            return Err(Error::Dimension(format!(
                "W is {}x{}, plan has {n} variables",
                w.n(),
                w.n()
            )));
        }
        linalg::ensure_finite(&w.w, "weight matrix")?;
        let s = plan.structural();
        let c = plan.zero_constraints();

        let w_chol = linalg::spd_factor(&w.w, &format!("{} weight matrix", w.kind))?;
        let l = w_chol.l();
        let g = structural_gain(&l, s)?;
        let m = projection(&l, c)?;
        let sg = s * &g;

        Ok(Self {
            plan: plan.clone(),
            w: w.clone(),
            g,
            m,
            sg,
        })
    }

    pub fn plan(&self) -> &ReconciliationPlan {
        &self.plan
    }

    pub fn w(&self) -> &WMatrix {
        &self.w
    }

    /// `G` (n_u x n).
    pub fn g(&self) -> &Matrix {
        &self.g
    }

    /// `M` (n x n).
    pub fn m(&self) -> &Matrix {
        &self.m
    }

    /// `S G` (n x n).
    pub fn sg(&self) -> &Matrix {
        &self.sg
    }

    fn matrix_for(&self, path: Path) -> &Matrix {
        match path {
            Path::Projection => &self.m,
            Path::Structural => &self.sg,
            Path::Auto if self.plan.n_c() < self.plan.n_u() => &self.m,
            Path::Auto => &self.sg,
        }
    }

    fn check(&self, y: &Matrix) -> Result<()> {
        if y.nrows() != self.plan.n() {
            return Err(Error::Dimension(format!(
                "{} forecast rows, plan has {} variables",
                y.nrows(),
                self.plan.n()
            )));
        }
        linalg::ensure_finite(y, "base forecasts")
    }

    /// Reconciles the columns of `y` (plan order).
    pub fn apply(&self, y: &Matrix, path: Path) -> Result<Matrix> {
        self.check(y)?;
        Ok(self.matrix_for(path) * y)
    }

    /// Free-variable forecasts `ũ = G ŷ`.
    pub fn free_forecasts(&self, y: &Matrix) -> Result<Matrix> {
        self.check(y)?;
        Ok(&self.g * y)
    }
}

fn structural_gain(l: &Matrix, s: &Matrix) -> Result<Matrix> {
    let z = l
        .solve_lower_triangular(s)
        .ok_or_else(|| Error::Numerical("weight matrix factor is singular".into()))?;
    let qr = z.qr();
    let r = qr.r();
    let scale = linalg::max_abs(&r);
    let floor = scale * f64::EPSILON * s.nrows() as f64;
    if scale == 0.0 || r.diagonal().iter().any(|d| d.abs() <= floor) {
        return Err(Error::Numerical("S'W^-1 S is not positive definite".into()));
    }
    let linv_q = l
        .transpose()
        .solve_upper_triangular(&qr.q())
        .ok_or_else(|| Error::Numerical("weight matrix factor is singular".into()))?;
    r.solve_upper_triangular(&linv_q.transpose())
        .ok_or_else(|| Error::Numerical("S'W^-1 S is not positive definite".into()))
}

fn projection(l: &Matrix, c: &Matrix) -> Result<Matrix> {
    let n = l.nrows();
    let qr = (l.transpose() * c.transpose()).qr();
    let r = qr.r();
    let scale = linalg::max_abs(&r);
    let floor = scale * f64::EPSILON * n as f64;
    if scale == 0.0 || r.diagonal().iter().any(|d| d.abs() <= floor) {
        return Err(Error::Numerical("CWC' is not positive definite".into()));
    }
    let q = qr.q();
    let linv_q = l
        .transpose()
        .solve_upper_triangular(&q)
        .ok_or_else(|| Error::Numerical("weight matrix factor is singular".into()))?;
    Ok(Matrix::identity(n, n) - l * q * linv_q.transpose())
}

/// `ỹ = M ŷ` (or the equivalent `S G ŷ`, whichever the plan shape favours).
pub fn reconcile_point(state: &ReconcilerState, batch: &ForecastBatch) -> Result<Matrix> {
    state.apply(&batch.base, Path::Auto)
}

/// `ỹ = M ŷ`.
pub fn reconcile_projection(state: &ReconcilerState, batch: &ForecastBatch) -> Result<Matrix> {
    state.apply(&batch.base, Path::Projection)
}

/// `ỹ = S G ŷ`, together with `ũ = G ŷ`.
pub fn reconcile_structural(
    state: &ReconcilerState,
    batch: &ForecastBatch,
) -> Result<(Matrix, Matrix)> {
    let u = state.free_forecasts(&batch.base)?;
    let y = state.plan().structural() * &u;
    Ok((y, u))
}

/// `max |C ỹ|` over all columns.
pub fn coherence_residual(plan: &ReconciliationPlan, y: &Matrix) -> f64 {
    linalg::max_abs(&(plan.zero_constraints() * y))
}
