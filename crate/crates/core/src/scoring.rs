//! Accuracy measures for point and sample forecasts, and skill scores
//! relative to the base forecasts.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Above this many samples, [`crps`] switches to the sorted formula.
pub const CRPS_EXACT_MAX: usize = 10_000;

/// Method name reserved for the unreconciled forecasts.
pub const BASE_METHOD: &str = "base";

/// Mean of squared errors.
pub fn mse(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Invalid("mse of an empty error set".into()));
    }
    Ok(errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64)
}

/// Mean squared error of each row of `errors` (series by origins).
pub fn mse_per_series(errors: &Matrix) -> Result<Vec<f64>> {
    if errors.ncols() == 0 {
        return Err(Error::Invalid("mse of an empty error set".into()));
    }
    Ok(errors
        .row_iter()
        .map(|r| r.iter().map(|e| e * e).sum::<f64>() / r.len() as f64)
        .collect())
}

/// `100 (1 − score / base)`.
pub fn skill(score: f64, base: f64) -> Result<f64> {
    if base == 0.0 || !base.is_finite() {
        return Err(Error::Invalid(format!("skill against base score {base}")));
    }
    Ok(100.0 * (1.0 - score / base))
}

/// `(1/L) Σ|x_l − z| − (1/(2L²)) Σ_l Σ_j |x_l − x_j|`.
///
/// The double sum is evaluated directly up to [`CRPS_EXACT_MAX`] samples;
/// beyond that it uses `Σ_l Σ_j |x_l − x_j| = 2 Σ_k x_(k) (2k − L + 1)` over
/// the sorted sample (0-based `k`), which is the same quantity.
pub fn crps(samples: &[f64], z: f64) -> Result<f64> {
    let l = samples.len();
    if l == 0 {
        return Err(Error::Invalid("crps of an empty sample".into()));
    }
    let lf = l as f64;
    let first = samples.iter().map(|x| (x - z).abs()).sum::<f64>() / lf;
    let pair_sum = if l <= CRPS_EXACT_MAX {
        let mut acc = 0.0;
        for a in samples {
            for b in samples {
                acc += (a - b).abs();
            }
        }
        acc
    } else {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        2.0 * sorted
            .iter()
            .enumerate()
            .map(|(k, x)| x * (2.0 * k as f64 - lf + 1.0))
            .sum::<f64>()
    };
    Ok(first - pair_sum / (2.0 * lf * lf))
}

/// How the spread term of the energy score is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsPairs {
    /// `(1/(2(L−1))) Σ_l ‖x_l − x_{l+1}‖`; depends on sample order.
    #[default]
    Consecutive,
    /// `(1/(2L²)) Σ_l Σ_j ‖x_l − x_j‖`.
    All,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Multivariate energy score of a sample against the observation `z`.
pub fn energy_score(samples: &[Vec<f64>], z: &[f64], pairs: EsPairs) -> Result<f64> {
    let l = samples.len();
    if l < 2 {
        return Err(Error::Invalid(
            "energy score needs at least two samples".into(),
        ));
    }
    if samples.iter().any(|s| s.len() != z.len()) {
        return Err(Error::Dimension(
            "sample and observation dimensions differ".into(),
        ));
    }
    let lf = l as f64;
    let first = samples.iter().map(|s| dist(s, z)).sum::<f64>() / lf;
    let spread = match pairs {
        EsPairs::Consecutive => {
            samples.windows(2).map(|w| dist(&w[0], &w[1])).sum::<f64>() / (2.0 * (lf - 1.0))
        }
        EsPairs::All => {
            let mut acc = 0.0;
            for a in samples {
                for b in samples {
                    acc += dist(a, b);
                }
            }
            acc / (2.0 * lf * lf)
        }
    };
    Ok(first - spread)
}

/// Mean absolute error scaled by the in-sample mean absolute seasonal-naive
/// error with period `m`.
pub fn mase(errors: &[f64], insample: &[f64], m: usize) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Invalid("mase of an empty error set".into()));
    }
    if m == 0 || insample.len() < m + 1 {
        return Err(Error::Insufficient(format!(
            "mase with period {m} needs at least {} in-sample values",
            m + 1
        )));
    }
    let denom = insample
        .windows(m + 1)
        .map(|w| (w[m] - w[0]).abs())
        .sum::<f64>()
        / (insample.len() - m) as f64;
    if denom == 0.0 {
        return Err(Error::Invalid(
            "mase scale is zero (seasonal-naive is exact)".into(),
        ));
    }
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64;
    Ok(mae / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Mase,
    Crps,
    Es,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Mase => "mase",
            Metric::Crps => "crps",
            Metric::Es => "es",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(Metric::Mse),
            "mase" => Ok(Metric::Mase),
            "crps" => Ok(Metric::Crps),
            "es" => Ok(Metric::Es),
            other => Err(Error::Invalid(format!("unknown metric `{other}`"))),
        }
    }
}

/// One line of a score table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub method: String,
    pub group: String,
    pub horizon: usize,
    pub value: f64,
    /// Skill against the base method; empty when no base score exists.
    pub skill: Option<f64>,
}

/// Scores of one metric per (method, group, horizon), kept in insertion
/// order. Skill is computed against the method named [`BASE_METHOD`].
#[derive(Debug, Clone)]
pub struct ScorePanel {
    pub metric: Metric,
    entries: Vec<(String, String, usize, f64)>,
    index: HashMap<(String, String, usize), usize>,
}

impl ScorePanel {
    pub fn new(metric: Metric) -> Self {
        Self {
            metric,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Sets a value, replacing an existing one for the same key.
    pub fn insert(&mut self, method: &str, group: &str, horizon: usize, value: f64) {
        let key = (method.to_string(), group.to_string(), horizon);
        match self.index.get(&key) {
            Some(&k) => self.entries[k].3 = value,
            None => {
                self.index.insert(key, self.entries.len());
                self.entries
                    .push((method.to_string(), group.to_string(), horizon, value));
            }
        }
    }

    pub fn get(&self, method: &str, group: &str, horizon: usize) -> Option<f64> {
        self.index
            .get(&(method.to_string(), group.to_string(), horizon))
            .map(|&k| self.entries[k].3)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn skill_of(&self, method: &str, group: &str, horizon: usize) -> Option<f64> {
        let v = self.get(method, group, horizon)?;
        let b = self.get(BASE_METHOD, group, horizon)?;
        skill(v, b).ok()
    }

    pub fn rows(&self) -> Vec<ScoreRow> {
        self.entries
            .iter()
            .map(|(m, g, h, v)| ScoreRow {
                method: m.clone(),
                group: g.clone(),
                horizon: *h,
                value: *v,
                skill: self.skill_of(m, g, *h),
            })
            .collect()
    }

    /// Tidy CSV: `method,group,horizon,value,skill`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["method", "group", "horizon", "value", "skill"])?;
        for r in self.rows() {
            wtr.write_record([
                r.method,
                r.group,
                r.horizon.to_string(),
                r.value.to_string(),
                r.skill.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(mse(&[2.0]).unwrap(), 4.0);
        assert_eq!(mse(&[1.0, -1.0, 2.0]).unwrap(), 2.0);
        assert!(mse(&[]).is_err());
    }

    #[test]
    fn pooled_mse_is_count_weighted_mean() {
        let e = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let per = mse_per_series(&e).unwrap();
        let pooled = mse(e.as_slice()).unwrap();
        assert!((pooled - (per[0] + per[1]) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn skill_cases() {
        assert_eq!(skill(2.0, 4.0).unwrap(), 50.0);
        assert_eq!(skill(4.0, 4.0).unwrap(), 0.0);
        assert_eq!(skill(8.0, 4.0).unwrap(), -100.0);
        assert!(skill(1.0, 0.0).is_err());
    }

    #[test]
    fn crps_cases() {
        assert_eq!(crps(&[3.0, 3.0, 3.0], 3.0).unwrap(), 0.0);
        assert_eq!(crps(&[0.0, 2.0], 1.0).unwrap(), 0.5);
        assert_eq!(crps(&[1.0], 0.0).unwrap(), 1.0);
        assert!(crps(&[], 0.0).is_err());
    }

    #[test]
    fn crps_sorted_formula_matches_double_sum() {
        let xs: Vec<f64> = (0..CRPS_EXACT_MAX + 7)
            .map(|i| ((i * 7919) % 1013) as f64 * 0.01 - 3.0)
            .collect();
        let fast = crps(&xs, 0.4).unwrap();
        let slow = {
            let l = xs.len() as f64;
            let first = xs.iter().map(|x| (x - 0.4).abs()).sum::<f64>() / l;
            let mut acc = 0.0;
            for a in &xs {
                for b in &xs {
                    acc += (a - b).abs();
                }
            }
            first - acc / (2.0 * l * l)
        };
        assert!((fast - slow).abs() < 1e-9 * slow.abs().max(1.0));
    }

    #[test]
    fn energy_score_cases() {
        let z = vec![1.0, 0.0];
        assert_eq!(
            energy_score(&[z.clone(), z.clone()], &z, EsPairs::Consecutive).unwrap(),
            0.0
        );
        let s = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        assert_eq!(energy_score(&s, &z, EsPairs::Consecutive).unwrap(), 0.0);
        let s1 = vec![vec![0.0], vec![2.0]];
        assert_eq!(
            energy_score(&s1, &[1.0], EsPairs::Consecutive).unwrap(),
            0.0
        );
        // all-pairs agrees with crps in one dimension
        assert_eq!(energy_score(&s1, &[1.0], EsPairs::All).unwrap(), 0.5);
        assert!(energy_score(&s1[..1], &[1.0], EsPairs::All).is_err());
        assert!(energy_score(&s, &[1.0], EsPairs::All).is_err());
    }

    #[test]
    fn mase_cases() {
        let insample = [1.0, 3.0, 2.0, 5.0, 5.0, 7.0];
        // seasonal-naive errors with m = 4: |5-1|, |7-3| -> 4
        assert_eq!(mase(&[2.0], &insample, 4).unwrap(), 0.5);
        assert_eq!(mase(&[0.0, 0.0], &insample, 4).unwrap(), 0.0);
        assert_eq!(mase(&[4.0, -4.0], &insample, 4).unwrap(), 1.0);
        assert!(mase(&[1.0], &[1.0, 1.0, 1.0, 1.0, 1.0], 4).is_err());
        assert!(mase(&[1.0], &[1.0, 2.0], 4).is_err());
    }

    #[test]
    fn panel_skill_and_csv() {
        let mut p = ScorePanel::new(Metric::Mse);
        p.insert("base", "All", 1, 4.0);
        p.insert("ols", "All", 1, 2.0);
        p.insert("ols", "All", 2, 1.0);
        assert_eq!(p.skill_of("ols", "All", 1), Some(50.0));
        assert_eq!(p.skill_of("base", "All", 1), Some(0.0));
        assert_eq!(p.skill_of("ols", "All", 2), None);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "method,group,horizon,value,skill\nbase,All,1,4,0\nols,All,1,2,50\nols,All,2,1,\n"
        );
    }
}
