//! Probabilistic reconciliation: Gaussian forecasts in closed form and
//! sample ensembles reconciled member by member.

mod base;
mod bootstrap;

pub use base::{fit_base, Ar1Drift, BaseForecasterModel, BaseKind, Naive, PathModel};
pub use bootstrap::{block_start, bootstrap_sample, replicate_rng};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::reconcile::{Path, ReconcilerState};

/// Gaussian predictive distribution for one horizon, in plan order.
#[derive(Debug, Clone)]
pub struct GaussianForecast {
    pub mean: Matrix,
    pub cov: Matrix,
    pub horizon: usize,
    /// Proportionality constant `k_h` when `cov = k_h W`.
    pub scale: Option<f64>,
}

impl GaussianForecast {
    pub fn new(mean: Matrix, cov: Matrix, horizon: usize) -> Result<Self> {
        let n = mean.nrows();
        if mean.ncols() != 1 || cov.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "mean is {}x{} and covariance {}x{}; expected {n}x1 and {n}x{n}",
                mean.nrows(),
                mean.ncols(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        linalg::ensure_finite(&mean, "forecast mean")?;
        linalg::ensure_finite(&cov, "forecast covariance")?;
        Ok(Self {
            mean,
            cov,
            horizon,
            scale: None,
        })
    }

    /// Base forecast with `cov = k W`.
    pub fn scaled(mean: Matrix, w: &Matrix, k: f64, horizon: usize) -> Result<Self> {
        if !k.is_finite() || k <= 0.0 {
            return Err(Error::Invalid(format!("scale k_h = {k} must be positive")));
        }
        let mut g = Self::new(mean, w * k, horizon)?;
        g.scale = Some(k);
        Ok(g)
    }
}

/// Mean `S G ŷ` and covariance `S G W_h G' S'` (symmetrized).
///
/// Eigenvalues of the result below `-1e-10 max|cov|` are reported as a
/// numerical failure; smaller negative ones are clipped to zero.
pub fn gaussian_reconcile(
    state: &ReconcilerState,
    g: &GaussianForecast,
) -> Result<GaussianForecast> {
    let n = state.plan().n();
    if g.mean.nrows() != n || g.cov.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Gaussian forecast has {} series, plan has {n}",
            g.mean.nrows()
        )));
    }
    let sg = state.sg();
    let mean = sg * &g.mean;
    let cov = linalg::symmetrize(&(sg * &g.cov * sg.transpose()));
    let cov = clip_negative_eigenvalues(cov)?;
    Ok(GaussianForecast {
        mean,
        cov,
        horizon: g.horizon,
        scale: g.scale,
    })
}

fn clip_negative_eigenvalues(cov: Matrix) -> Result<Matrix> {
    let norm = linalg::max_abs(&cov);
    if norm == 0.0 {
        return Ok(cov);
    }
    let eig = cov.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -1e-10 * norm {
        return Err(Error::Numerical(format!(
            "reconciled covariance has eigenvalue {min:.3e} (scale {norm:.3e})"
        )));
    }
    if min >= 0.0 {
        return Ok(cov);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let rebuilt = v * Matrix::from_diagonal(&clipped) * v.transpose();
    Ok(linalg::symmetrize(&rebuilt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleSource {
    Incoherent,
    Reconciled,
}

/// `L` sample paths, each an `n x H` matrix in plan order.
#[derive(Debug, Clone)]
pub struct SampleEnsemble {
    pub samples: Vec<Matrix>,
    pub source: EnsembleSource,
    pub seed: Option<u64>,
}

impl SampleEnsemble {
    pub fn new(samples: Vec<Matrix>, source: EnsembleSource, seed: Option<u64>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Invalid("an ensemble needs at least one member".into()))?;
        let shape = first.shape();
        for s in &samples {
            if s.shape() != shape {
                return Err(Error::Dimension("ensemble members differ in shape".into()));
            }
            linalg::ensure_finite(s, "ensemble member")?;
        }
        Ok(Self {
            samples,
            source,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n(&self) -> usize {
        self.samples[0].nrows()
    }

    pub fn horizons(&self) -> usize {
        self.samples[0].ncols()
    }

    /// Member-wise mean (`n x H`).
    pub fn mean(&self) -> Matrix {
        let mut acc = Matrix::zeros(self.n(), self.horizons());
        for s in &self.samples {
            acc += s;
        }
        acc / self.len() as f64
    }

    /// Values of series `i` at horizon `h` across members.
    pub fn marginal(&self, i: usize, h: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[(i, h)]).collect()
    }

    /// Cross-sectional vectors at horizon `h`, one per member.
    pub fn joint(&self, h: usize) -> Vec<Vec<f64>> {
        self.samples
            .iter()
            .map(|s| s.column(h).iter().copied().collect())
            .collect()
    }
}

/// Reconciles every member of an incoherent ensemble, keeping member order.
pub fn reconcile_ensemble(state: &ReconcilerState, ens: &SampleEnsemble) -> Result<SampleEnsemble> {
    if ens.source == EnsembleSource::Reconciled {
        return Err(Error::Invalid("ensemble is already reconciled".into()));
    }
    let samples = ens
        .samples
        .par_iter()
        .map(|s| state.apply(s, Path::Auto))
        .collect::<Result<Vec<_>>>()?;
    SampleEnsemble::new(samples, EnsembleSource::Reconciled, ens.seed)
}
