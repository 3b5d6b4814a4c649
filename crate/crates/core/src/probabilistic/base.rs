use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::covariance::ResidualMatrix;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// One-step dynamics of a univariate model: given the previous value and an
/// innovation, produce the next value. Anything richer than the bundled
/// models can be plugged in through this trait.
pub trait PathModel: Send + Sync + fmt::Debug {
    /// Last observed value, the starting point of every path.
    fn initial(&self) -> f64;
    fn step(&self, prev: f64, error: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Naive,
    Ar1Drift,
}

impl fmt::Display for BaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaseKind::Naive => "naive",
            BaseKind::Ar1Drift => "ar1_drift",
        })
    }
}

impl FromStr for BaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(BaseKind::Naive),
            "ar1_drift" | "ar1" => Ok(BaseKind::Ar1Drift),
            other => Err(Error::Invalid(format!(
                "unknown base model `{other}` (expected naive or ar1_drift)"
            ))),
        }
    }
}

/// Random walk: `y_t = y_{t-1} + e_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Naive {
    pub last: f64,
}

impl PathModel for Naive {
    fn initial(&self) -> f64 {
        self.last
    }

    fn step(&self, prev: f64, error: f64) -> f64 {
        prev + error
    }
}

/// `y_t = c + φ y_{t-1} + e_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Drift {
    pub intercept: f64,
    pub phi: f64,
    pub last: f64,
}

impl PathModel for Ar1Drift {
    fn initial(&self) -> f64 {
        self.last
    }

    fn step(&self, prev: f64, error: f64) -> f64 {
        self.intercept + self.phi * prev + error
    }
}

/// Per-series fitted models plus their in-sample one-step errors.
#[derive(Debug, Clone)]
pub struct BaseForecasterModel {
    /// `None` for models assembled from plug-ins.
    pub kind: Option<BaseKind>,
    pub models: Vec<Arc<dyn PathModel>>,
    pub residuals: ResidualMatrix,
    /// Series that could not take the requested model and fell back to naive.
    pub fallbacks: Vec<usize>,
}

impl BaseForecasterModel {
    /// Wraps externally fitted models. `residuals` must have one row per model.
    pub fn from_parts(models: Vec<Arc<dyn PathModel>>, residuals: ResidualMatrix) -> Result<Self> {
        if models.len() != residuals.n() {
            return Err(Error::Dimension(format!(
                "{} models for {} residual series",
                models.len(),
                residuals.n()
            )));
        }
        Ok(Self {
            kind: None,
            models,
            residuals,
            fallbacks: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.models.len()
    }

    /// Runs every series forward `errors.ncols()` steps with the given
    /// innovations (one row per series).
    pub fn simulate(&self, errors: &Matrix) -> Matrix {
        let h = errors.ncols();
        let mut out = Matrix::zeros(self.n(), h);
        for (i, m) in self.models.iter().enumerate() {
            let mut prev = m.initial();
            for k in 0..h {
                prev = m.step(prev, errors[(i, k)]);
                out[(i, k)] = prev;
            }
        }
        out
    }

    /// Point forecasts for horizons `1..=h` (zero innovations).
    pub fn forecast(&self, h: usize) -> Matrix {
        self.simulate(&Matrix::zeros(self.n(), h))
    }
}

/// Fits one model per row of `history` (`n x T_obs`), returning the
/// `n x (T_obs - 1)` matrix of in-sample one-step errors.
///
/// `ar1_drift` is fitted by least squares of `y_t` on `(1, y_{t-1})`. A
/// series whose lagged values have no variation falls back to naive, and the
/// fallback is recorded.
pub fn fit_base(kind: BaseKind, history: &Matrix, names: &[String]) -> Result<BaseForecasterModel> {
    let (n, t_obs) = history.shape();
    if names.len() != n {
        return Err(Error::Dimension(format!(
            "{} names for {n} series",
            names.len()
        )));
    }
    let min = match kind {
        BaseKind::Naive => 2,
        BaseKind::Ar1Drift => 3,
    };
    if t_obs < min {
        return Err(Error::Insufficient(format!(
            "{kind} needs at least {min} observations, got {t_obs}"
        )));
    }
    crate::linalg::ensure_finite(history, "history")?;

    let mut models: Vec<Arc<dyn PathModel>> = Vec::with_capacity(n);
    let mut errors = Matrix::zeros(n, t_obs - 1);
    let mut fallbacks = Vec::new();
    for i in 0..n {
        let y: Vec<f64> = history.row(i).iter().copied().collect();
        let last = y[t_obs - 1];
        let fitted = match kind {
            BaseKind::Naive => None,
            BaseKind::Ar1Drift => fit_ar1(&y),
        };
        match fitted {
            Some((intercept, phi)) => {
                for t in 1..t_obs {
                    errors[(i, t - 1)] = y[t] - intercept - phi * y[t - 1];
                }
                models.push(Arc::new(Ar1Drift {
                    intercept,
                    phi,
                    last,
                }));
            }
            None => {
                if kind == BaseKind::Ar1Drift {
                    log::info!("series `{}` has constant lags; using naive", names[i]);
                    fallbacks.push(i);
                }
                for t in 1..t_obs {
                    errors[(i, t - 1)] = y[t] - y[t - 1];
                }
                models.push(Arc::new(Naive { last }));
            }
        }
    }
    Ok(BaseForecasterModel {
        kind: Some(kind),
        models,
        residuals: ResidualMatrix::with_names(errors, names.to_vec())?,
        fallbacks,
    })
}

/// Least squares of `y_t` on `(1, y_{t-1})`; `None` when the regressor is
/// (numerically) constant.
fn fit_ar1(y: &[f64]) -> Option<(f64, f64)> {
    let x = &y[..y.len() - 1];
    let z = &y[1..];
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let mz = z.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxz: f64 = x.iter().zip(z).map(|(a, b)| (a - mx) * (b - mz)).sum();
    let scale: f64 = x.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    if sxx <= 1e-12 * scale {
        return None;
    }
    let phi = sxz / sxx;
    Some((mz - phi * mx, phi))
}
