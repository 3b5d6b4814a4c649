//! Estimators of the `n x n` weight matrix `W` from in-sample one-step
//! forecast errors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// In-sample one-step-ahead errors, `n` series by `T` periods.
#[derive(Debug, Clone)]
pub struct ResidualMatrix {
    errors: Matrix,
    names: Vec<String>,
}

impl ResidualMatrix {
    pub fn new(errors: Matrix) -> Result<Self> {
        let names = (0..errors.nrows()).map(|i| format!("series {i}")).collect();
        Self::with_names(errors, names)
    }

    pub fn with_names(errors: Matrix, names: Vec<String>) -> Result<Self> {
        if names.len() != errors.nrows() {
            return Err(Error::Dimension(format!(
                "{} names for {} residual series",
                names.len(),
                errors.nrows()
            )));
        }
        if errors.nrows() == 0 {
            return Err(Error::Invalid("residual matrix has no series".into()));
        }
        linalg::ensure_finite(&errors, "residual matrix")?;
        Ok(Self { errors, names })
    }

    pub fn errors(&self) -> &Matrix {
        &self.errors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.errors.nrows()
    }

    /// Sample length `T`.
    pub fn t(&self) -> usize {
        self.errors.ncols()
    }

    fn require_t(&self, min: usize, what: &str) -> Result<()> {
        if self.t() < min {
            return Err(Error::Insufficient(format!(
                "{what} needs at least {min} residual periods, got {}",
                self.t()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovKind {
    Ols,
    Wls,
    Shr,
    Sam,
}

impl CovKind {
    pub const ALL: [CovKind; 4] = [CovKind::Ols, CovKind::Wls, CovKind::Shr, CovKind::Sam];

    pub fn as_str(self) -> &'static str {
        match self {
            CovKind::Ols => "ols",
            CovKind::Wls => "wls",
            CovKind::Shr => "shr",
            CovKind::Sam => "sam",
        }
    }
}

impl fmt::Display for CovKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CovKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ols" => Ok(CovKind::Ols),
            "wls" => Ok(CovKind::Wls),
            "shr" => Ok(CovKind::Shr),
            "sam" => Ok(CovKind::Sam),
            other => Err(Error::Invalid(format!(
                "unknown covariance estimator `{other}` (expected ols, wls, shr or sam)"
            ))),
        }
    }
}

/// An estimated weight matrix.
#[derive(Debug, Clone)]
pub struct WMatrix {
    pub w: Matrix,
    pub kind: CovKind,
    /// Shrinkage intensity, only for `shr`.
    pub lambda: Option<f64>,
    /// False when a Cholesky factorization fails (possible for `sam` with
    /// `T < n`). Such a matrix is returned as is and rejected at solve time.
    pub positive_definite: bool,
}

impl WMatrix {
    fn new(w: Matrix, kind: CovKind, lambda: Option<f64>) -> Self {
        let positive_definite = w.clone().cholesky().is_some();
        if !positive_definite {
            log::warn!("{kind} weight matrix is not positive definite");
        }
        Self {
            w,
            kind,
            lambda,
            positive_definite,
        }
    }

    /// A user-supplied weight matrix, tagged with the estimator it stands for.
    pub fn from_matrix(w: Matrix, kind: CovKind) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::Dimension("weight matrix must be square".into()));
        }
        linalg::ensure_finite(&w, "weight matrix")?;
        Ok(Self::new(linalg::symmetrize(&w), kind, None))
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    /// `k W`, keeping the estimator tag.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            w: &self.w * k,
            ..self.clone()
        }
    }
}

/// Estimator choice plus its knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub kind: CovKind,
    /// Fixed shrinkage intensity for `shr` instead of the estimated one.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Added to the diagonal after estimation. Zero (off) by default.
    #[serde(default)]
    pub jitter: f64,
}

impl CovarianceSpec {
    pub fn new(kind: CovKind) -> Self {
        Self {
            kind,
            lambda: None,
            jitter: 0.0,
        }
    }
}

/// `I_n`.
pub fn w_ols(n: usize) -> WMatrix {
    WMatrix::new(Matrix::identity(n, n), CovKind::Ols, None)
}

fn sample_second_moment(res: &ResidualMatrix) -> Matrix {
    let e = res.errors();
    let w = (e * e.transpose()) / res.t() as f64;
    linalg::symmetrize(&w)
}

fn check_variances(res: &ResidualMatrix, diag: &[f64]) -> Result<()> {
    match diag.iter().position(|d| *d <= 0.0) {
        Some(i) => Err(Error::ZeroVariance(res.names()[i].clone())),
        None => Ok(()),
    }
}

/// `(1/T) Σ e_t e_t'`.
pub fn w_sam(res: &ResidualMatrix) -> Result<WMatrix> {
    res.require_t(2, "sam")?;
    Ok(WMatrix::new(sample_second_moment(res), CovKind::Sam, None))
}

/// Diagonal of [`w_sam`].
pub fn w_wls(res: &ResidualMatrix) -> Result<WMatrix> {
    res.require_t(1, "wls")?;
    let diag: Vec<f64> = sample_second_moment(res)
        .diagonal()
        .iter()
        .copied()
        .collect();
    check_variances(res, &diag)?;
    let w = Matrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
    Ok(WMatrix::new(w, CovKind::Wls, None))
}

/// Estimated intensity for shrinking the off-diagonal correlations toward 0.
///
/// With `x` the residuals scaled by the root of the diagonal second moments
/// and `r_ij` the implied correlations,
/// `v_ij = [Σ_t x_it² x_jt² − (1/T)(Σ_t x_it x_jt)²] / (T(T−1))` and
/// `λ = Σ_{i≠j} v_ij / Σ_{i≠j} r_ij²`, clamped to `[0, 1]`.
/// When every off-diagonal correlation is zero, `λ = 1`.
pub fn shrinkage_intensity(res: &ResidualMatrix) -> Result<f64> {
    res.require_t(3, "shr")?;
    let e = res.errors();
    let (n, t) = e.shape();
    let tf = t as f64;
    let sam = sample_second_moment(res);
    let diag: Vec<f64> = (0..n).map(|i| sam[(i, i)]).collect();
    check_variances(res, &diag)?;

    let xs = Matrix::from_fn(n, t, |i, k| e[(i, k)] / diag[i].sqrt());
    let xs2 = xs.map(|v| v * v);
    let cross = &xs * xs.transpose();
    let cross2 = &xs2 * xs2.transpose();

    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let r = cross[(i, j)] / tf;
            num += (cross2[(i, j)] - cross[(i, j)] * cross[(i, j)] / tf) / (tf * (tf - 1.0));
            den += r * r;
        }
    }
    if den == 0.0 {
        return Ok(1.0);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// `λ W_wls + (1 − λ) W_sam`, with `λ` estimated unless `lambda` is given.
pub fn w_shr(res: &ResidualMatrix, lambda: Option<f64>) -> Result<WMatrix> {
    let lambda = match lambda {
        Some(l) if (0.0..=1.0).contains(&l) => {
            res.require_t(3, "shr")?;
            l
        }
        Some(l) => {
            return Err(Error::Invalid(format!(
                "shrinkage intensity {l} outside [0, 1]"
            )));
        }
        None => shrinkage_intensity(res)?,
    };
    let sam = sample_second_moment(res);
    let wls = w_wls(res)?.w;
    let w = if lambda == 1.0 {
        wls
    } else if lambda == 0.0 {
        sam
    } else {
        let mut w = &sam * (1.0 - lambda);
        for i in 0..w.nrows() {
            w[(i, i)] = sam[(i, i)];
        }
        w
    };
    Ok(WMatrix::new(w, CovKind::Shr, Some(lambda)))
}

/// Runs the estimator selected by `spec`.
pub fn estimate(spec: &CovarianceSpec, res: &ResidualMatrix) -> Result<WMatrix> {
    let mut w = match spec.kind {
        CovKind::Ols => w_ols(res.n()),
        CovKind::Wls => w_wls(res)?,
        CovKind::Sam => w_sam(res)?,
        CovKind::Shr => w_shr(res, spec.lambda)?,
    };
    if spec.jitter < 0.0 || !spec.jitter.is_finite() {
        return Err(Error::Invalid(
            "jitter must be a finite non-negative number".into(),
        ));
    }
    if spec.jitter > 0.0 {
        for i in 0..w.n() {
            w.w[(i, i)] += spec.jitter;
        }
        w = WMatrix::new(w.w, w.kind, w.lambda);
    }
    Ok(w)
}
