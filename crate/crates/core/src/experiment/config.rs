use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::covariance::CovKind;
use crate::error::{Error, Result};
use crate::probabilistic::BaseKind;
use crate::scoring::EsPairs;
use crate::synth::Structure;

/// A reconciliation method compared in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Base,
    Ols,
    Wls,
    Shr,
    Sam,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Ols => "ols",
            Method::Wls => "wls",
            Method::Shr => "shr",
            Method::Sam => "sam",
        }
    }

    /// Weight-matrix estimator, `None` for the base forecasts.
    pub fn cov_kind(self) -> Option<CovKind> {
        match self {
            Method::Base => None,
            Method::Ols => Some(CovKind::Ols),
            Method::Wls => Some(CovKind::Wls),
            Method::Shr => Some(CovKind::Shr),
            Method::Sam => Some(CovKind::Sam),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Qr,
    Rref,
}

/// Where the constraints come from: a DSL / CSV file or a bundled structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSource {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub structure: Option<Structure>,
}

/// Where the observations come from: a CSV file or synthetic data for the
/// bundled structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic_periods: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbMode {
    #[default]
    None,
    Gaussian,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbabilisticConfig {
    #[serde(default)]
    pub mode: ProbMode,
    /// Ensemble size `L`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Estimator of the base covariance `W_h` in Gaussian mode.
    #[serde(default = "default_gaussian_cov")]
    pub gaussian_cov: CovKind,
    /// Per-horizon multipliers `k_h` of `W_h`; missing entries are 1.
    #[serde(default)]
    pub horizon_scale: Vec<f64>,
    #[serde(default)]
    pub es_pairs: EsPairs,
}

fn default_samples() -> usize {
    1000
}

fn default_gaussian_cov() -> CovKind {
    CovKind::Shr
}

impl Default for ProbabilisticConfig {
    fn default() -> Self {
        Self {
            mode: ProbMode::None,
            samples: default_samples(),
            gaussian_cov: default_gaussian_cov(),
            horizon_scale: Vec::new(),
            es_pairs: EsPairs::default(),
        }
    }
}

fn default_start() -> usize {
    1
}

fn default_horizons() -> usize {
    4
}

fn default_methods() -> Vec<Method> {
    vec![Method::Base, Method::Ols, Method::Wls, Method::Shr]
}

fn default_base_model() -> BaseKind {
    BaseKind::Ar1Drift
}

fn default_mase_period() -> usize {
    4
}

/// Experiment settings, read from TOML.
///
/// ```toml
/// output_dir = "out"
/// first_window_end = 40      # periods in the first training window
/// horizons = 4
/// methods = ["base", "ols", "wls", "shr"]
/// base_model = "ar1_drift"
/// seed = 42
///
/// [constraints]
/// structure = "aus95"        # or: path = "system.txt"
///
/// [data]
/// synthetic_periods = 120    # or: path = "data.csv"
///
/// [probabilistic]
/// mode = "bootstrap"         # none | gaussian | bootstrap
/// samples = 500
///
/// [groups]
/// Income = ["GDP", "Tfi"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub constraints: ConstraintSource,
    pub data: DataSource,
    /// First period (1-based) of every training window.
    #[serde(default = "default_start")]
    pub first_window_start: usize,
    /// Last period (1-based) of the first training window.
    pub first_window_end: usize,
    #[serde(default = "default_horizons")]
    pub horizons: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_base_model")]
    pub base_model: BaseKind,
    #[serde(default)]
    pub reduction: Reduction,
    #[serde(default)]
    pub seed: u64,
    /// Fixed shrinkage intensity for `shr`.
    #[serde(default)]
    pub shrink_lambda: Option<f64>,
    #[serde(default = "default_mase_period")]
    pub mase_period: usize,
    #[serde(default)]
    pub probabilistic: ProbabilisticConfig,
    /// Extra reporting panels; an `All` panel is always present.
    #[serde(default)]
    pub groups: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Minimal configuration for a bundled structure with synthetic data.
    pub fn synthetic(structure: Structure, periods: usize, first_window_end: usize) -> Self {
        Self {
            constraints: ConstraintSource {
                path: None,
                structure: Some(structure),
            },
            data: DataSource {
                path: None,
                synthetic_periods: Some(periods),
            },
            first_window_start: default_start(),
            first_window_end,
            horizons: default_horizons(),
            methods: default_methods(),
            base_model: default_base_model(),
            reduction: Reduction::default(),
            seed: 0,
            shrink_lambda: None,
            mase_period: default_mase_period(),
            probabilistic: ProbabilisticConfig::default(),
            groups: BTreeMap::new(),
            output_dir: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = dir.join(&*q);
                }
            }
        };
        fix(&mut cfg.constraints.path);
        fix(&mut cfg.data.path);
        fix(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        match (&self.constraints.path, &self.constraints.structure) {
            (Some(_), Some(_)) | (None, None) => {
                return bad("[constraints] needs exactly one of `path` or `structure`")
            }
            _ => {}
        }
        match (&self.data.path, &self.data.synthetic_periods) {
            (Some(_), Some(_)) | (None, None) => {
                return bad("[data] needs exactly one of `path` or `synthetic_periods`")
            }
            _ => {}
        }
        if self.data.synthetic_periods.is_some() && self.constraints.structure.is_none() {
            return bad("synthetic data is only available for bundled structures");
        }
        if self.horizons == 0 {
            return bad("horizons must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        let mut seen = std::collections::HashSet::new();
        if !self.methods.iter().all(|m| seen.insert(*m)) {
            return bad("methods are listed more than once");
        }
        if self.first_window_start == 0 || self.first_window_end < self.first_window_start {
            return bad("first window must satisfy 1 <= first_window_start <= first_window_end");
        }
        if self.probabilistic.mode != ProbMode::None && self.probabilistic.samples < 2 {
            return bad("probabilistic scoring needs at least 2 samples");
        }
        if self
            .probabilistic
            .horizon_scale
            .iter()
            .any(|k| k.is_nan() || *k <= 0.0)
        {
            return bad("horizon_scale entries must be positive");
        }
        if let Some(l) = self.shrink_lambda {
            if !(0.0..=1.0).contains(&l) {
                return bad("shrink_lambda must lie in [0, 1]");
            }
        }
        Ok(())
    }

    pub(crate) fn horizon_scale(&self, h: usize) -> f64 {
        self.probabilistic
            .horizon_scale
            .get(h)
            .copied()
            .unwrap_or(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            output_dir = "out"
            first_window_end = 40
            horizons = 4
            methods = ["base", "ols", "wls", "shr"]
            base_model = "ar1_drift"
            seed = 42

            [constraints]
            structure = "aus95"

            [data]
            synthetic_periods = 120

            [probabilistic]
            mode = "bootstrap"
            samples = 500

            [groups]
            Income = ["GDP", "Tfi"]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.constraints.structure, Some(Structure::Aus95));
        assert_eq!(cfg.probabilistic.mode, ProbMode::Bootstrap);
        assert_eq!(cfg.probabilistic.gaussian_cov, CovKind::Shr);
        assert_eq!(cfg.reduction, Reduction::Qr);
    }

    #[test]
    fn rejects_inconsistent_sources() {
        let base = "first_window_end = 10\n[data]\nsynthetic_periods = 30\n";
        let both = format!("{base}[constraints]\nstructure = \"aus95\"\npath = \"x\"\n");
        assert!(ExperimentConfig::from_toml(&both).is_err());
        let none = format!("{base}[constraints]\n");
        assert!(ExperimentConfig::from_toml(&none).is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let ok = "first_window_end = 10\n[constraints]\nstructure = \"ea19\"\n[data]\nsynthetic_periods = 30\n";
        assert!(ExperimentConfig::from_toml(ok).is_ok());
        assert!(ExperimentConfig::from_toml(&format!("horizon = 3\n{ok}")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("horizons = 0\n{ok}")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("methods = []\n{ok}")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("methods = [\"mint\"]\n{ok}")).is_err());
    }
}
