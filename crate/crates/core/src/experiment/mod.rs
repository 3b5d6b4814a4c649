//! Rolling-origin, expanding-window evaluation of base and reconciled
//! forecasts.
//!
//! For every origin `t` from the end of the first training window to
//! `T_obs − 1`, base models are fitted on periods `start..=t`, forecasts are
//! made for `t+1..=t+H` (clipped at the end of the data), reconciled with
//! each method and scored against the observed values. An `h`-step score
//! therefore exists for `#origins − h + 1` origins.

mod audit;
mod config;

pub use audit::{audit_dir, AuditFile, AuditReport};
pub use config::{
    ConstraintSource, DataSource, ExperimentConfig, Method, ProbMode, ProbabilisticConfig,
    Reduction,
};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::constraint::io::{self as cio, load_constraints};
use crate::constraint::{reduce_qr, reduce_rref, ConstraintSystem, ReconciliationPlan};
use crate::covariance::{self, CovarianceSpec, ResidualMatrix};
use crate::data::{self, ForecastTable, SeriesData};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::probabilistic::{
    bootstrap_sample, fit_base, reconcile_ensemble, BaseForecasterModel, EnsembleSource,
    SampleEnsemble,
};
use crate::reconcile::{coherence_residual, Path as RPath, ReconcilerState};
use crate::scoring::{self, Metric, ScorePanel};
use crate::synth;

/// Scores and bookkeeping of a finished run.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub plan: ReconciliationPlan,
    /// Last training period (1-based) of each origin.
    pub origins: Vec<usize>,
    /// Number of scored origins per horizon.
    pub score_counts: Vec<usize>,
    pub panels: Vec<ScorePanel>,
    /// Largest `max|C ỹ|` seen per method.
    pub max_coherence: BTreeMap<String, f64>,
    /// Total number of series that fell back to a naive base model.
    pub fallbacks: usize,
}

impl ExperimentResult {
    pub fn panel(&self, metric: Metric) -> Option<&ScorePanel> {
        self.panels.iter().find(|p| p.metric == metric)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    library: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a ExperimentConfig,
    n: usize,
    n_c: usize,
    n_u: usize,
    origins: &'a [usize],
    score_counts: &'a [usize],
    fallbacks: usize,
    max_coherence_residual: &'a BTreeMap<String, f64>,
    files: Vec<String>,
}

/// Loads constraints and data as described by `config`, runs the
/// experiment and writes artefacts when `output_dir` is set.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let (cs, mut groups) = match (&config.constraints.path, config.constraints.structure) {
        (Some(p), None) => (load_constraints(p)?, Vec::new()),
        (None, Some(tag)) => {
            let def = synth::structure(tag)?;
            (def.system, def.groups)
        }
        _ => return Err(Error::Config("ambiguous constraint source".into())),
    };
    let data = match (&config.data.path, config.data.synthetic_periods) {
        (Some(p), None) => data::read_series_csv(fs::File::open(p)?)?,
        (None, Some(t)) => synth::synthesize_system(&cs, t, config.seed)?,
        _ => return Err(Error::Config("ambiguous data source".into())),
    };
    groups.retain(|(g, _)| g != "All" && !config.groups.contains_key(g));
    groups.extend(config.groups.iter().map(|(g, v)| (g.clone(), v.clone())));
    run_with(config, &cs, &data, &groups)
}

/// Runs the experiment on an explicit system and data set. `groups` are
/// reporting panels in addition to `All`.
pub fn run_with(
    config: &ExperimentConfig,
    cs: &ConstraintSystem,
    data: &SeriesData,
    groups: &[(String, Vec<String>)],
) -> Result<ExperimentResult> {
    config.validate()?;
    let plan = match config.reduction {
        Reduction::Qr => reduce_qr(cs, None)?,
        Reduction::Rref => reduce_rref(cs, None)?,
    };
    let values = plan.rows_to_plan_order(&data.names, &data.values)?;
    let plan_names = plan.plan_names();
    let n = plan.n();
    let t_obs = data.t();
    let start = config.first_window_start - 1;
    let first_end = config.first_window_end;
    if first_end >= t_obs {
        return Err(Error::Insufficient(format!(
            "first training window ends at period {first_end} but the data has only {t_obs}"
        )));
    }

    let position: BTreeMap<&str, usize> = plan_names
        .iter()
        .enumerate()
        .map(|(k, nm)| (nm.as_str(), k))
        .collect();
    let mut panels_idx: Vec<(String, Vec<usize>)> = Vec::new();
    for (g, members) in groups.iter().filter(|(g, _)| g != "All") {
        let idx = members
            .iter()
            .map(|m| {
                position
                    .get(m.as_str())
                    .copied()
                    .ok_or_else(|| Error::UnknownVariable(m.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        panels_idx.push((g.clone(), idx));
    }
    panels_idx.push(("All".to_string(), (0..n).collect()));

    let origins: Vec<usize> = (first_end..t_obs).collect();
    let outcomes = origins
        .par_iter()
        .map(|&t_end| {
            run_origin(
                config,
                &plan,
                &plan_names,
                &values,
                start,
                t_end,
                &panels_idx,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let h_max = config.horizons;
    let score_counts: Vec<usize> = (0..h_max)
        .map(|h| outcomes.iter().filter(|o| o.base.ncols() > h).count())
        .collect();

    let methods: Vec<&str> = config.methods.iter().map(|m| m.as_str()).collect();
    let mut mse = ScorePanel::new(Metric::Mse);
    let mut mase = ScorePanel::new(Metric::Mase);
    let mut crps = ScorePanel::new(Metric::Crps);
    let mut es = ScorePanel::new(Metric::Es);
    let mase_ok = outcomes.iter().all(|o| o.mase_ok);
    if !mase_ok {
        log::warn!("a seasonal-naive scale is zero; MASE is not reported");
    }
    let prob = config.probabilistic.mode != ProbMode::None;
    for (gi, (group, idx)) in panels_idx.iter().enumerate() {
        for (h, &count) in score_counts.iter().enumerate().take(h_max) {
            if count == 0 {
                continue;
            }
            for (mi, method) in methods.iter().enumerate() {
                let denom = (count * idx.len()) as f64;
                let sum = |f: &dyn Fn(&OriginOutcome) -> f64| -> f64 {
                    outcomes.iter().filter(|o| o.base.ncols() > h).map(f).sum()
                };
                mse.insert(method, group, h + 1, sum(&|o| o.sq[mi][gi][h]) / denom);
                if mase_ok {
                    mase.insert(
                        method,
                        group,
                        h + 1,
                        sum(&|o| o.scaled_abs[mi][gi][h]) / denom,
                    );
                }
                if prob {
                    crps.insert(method, group, h + 1, sum(&|o| o.crps[mi][gi][h]) / denom);
                    es.insert(
                        method,
                        group,
                        h + 1,
                        sum(&|o| o.es[mi][gi][h]) / count as f64,
                    );
                }
            }
        }
    }
    let mut panels = vec![mse];
    if mase_ok {
        panels.push(mase);
    }
    if prob {
        panels.push(crps);
        panels.push(es);
    }

    let mut max_coherence = BTreeMap::new();
    for (mi, method) in methods.iter().enumerate() {
        if config.methods[mi] == Method::Base {
            continue;
        }
        let worst = outcomes
            .iter()
            .map(|o| o.coherence[mi])
            .fold(0.0_f64, f64::max);
        max_coherence.insert(method.to_string(), worst);
    }
    let fallbacks = outcomes.iter().map(|o| o.fallbacks).sum();

    let result = ExperimentResult {
        plan,
        origins,
        score_counts,
        panels,
        max_coherence,
        fallbacks,
    };
    if let Some(dir) = &config.output_dir {
        write_outputs(dir, config, &result, &outcomes, data)?;
    }
    Ok(result)
}

struct OriginOutcome {
    t_end: usize,
    /// Base forecasts, plan order, `n x H_eff`.
    base: Matrix,
    /// Forecasts per method (index as in `config.methods`), plan order.
    forecasts: Vec<Matrix>,
    residuals: ResidualMatrix,
    // [method][group][horizon]
    sq: Vec<Vec<Vec<f64>>>,
    scaled_abs: Vec<Vec<Vec<f64>>>,
    crps: Vec<Vec<Vec<f64>>>,
    es: Vec<Vec<Vec<f64>>>,
    mase_ok: bool,
    coherence: Vec<f64>,
    fallbacks: usize,
}

/// Seed for one origin, decorrelated from neighbouring origins.
pub fn origin_seed(seed: u64, origin: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(origin as u64);
    rng.next_u64()
}

fn run_origin(
    config: &ExperimentConfig,
    plan: &ReconciliationPlan,
    names: &[String],
    values: &Matrix,
    start: usize,
    t_end: usize,
    panels: &[(String, Vec<usize>)],
) -> Result<OriginOutcome> {
    let n = plan.n();
    let t_obs = values.ncols();
    let train = values.columns(start, t_end - start).into_owned();
    let h_eff = config.horizons.min(t_obs - t_end);
    let actual = values.columns(t_end, h_eff).into_owned();

    let model = fit_base(config.base_model, &train, names)?;
    let base = model.forecast(h_eff);
    let seed = origin_seed(config.seed, t_end);

    let mut states: Vec<Option<ReconcilerState>> = Vec::with_capacity(config.methods.len());
    let mut forecasts = Vec::with_capacity(config.methods.len());
    let mut coherence = Vec::with_capacity(config.methods.len());
    for method in &config.methods {
        match method.cov_kind() {
            None => {
                states.push(None);
                forecasts.push(base.clone());
                coherence.push(coherence_residual(plan, &base));
            }
            Some(kind) => {
                let spec = CovarianceSpec {
                    kind,
                    lambda: config.shrink_lambda,
                    jitter: 0.0,
                };
                let w = covariance::estimate(&spec, &model.residuals)
                    .map_err(|e| annotate(e, &format!("{} at origin {t_end}", method.as_str())))?;
                let state = ReconcilerState::fit(plan, &w)
                    .map_err(|e| annotate(e, &format!("{} at origin {t_end}", method.as_str())))?;
                let y = state.apply(&base, RPath::Auto)?;
                coherence.push(coherence_residual(plan, &y));
                forecasts.push(y);
                states.push(Some(state));
            }
        }
    }

    let g_count = panels.len();
    let m_count = config.methods.len();
    let zeros = || vec![vec![vec![0.0; config.horizons]; g_count]; m_count];
    let mut sq = zeros();
    let mut scaled_abs = zeros();
    let mut crps = zeros();
    let mut es = zeros();

    let m = config.mase_period;
    let scales: Vec<f64> = (0..n)
        .map(|i| {
            let y: Vec<f64> = train.row(i).iter().copied().collect();
            if y.len() <= m {
                return 0.0;
            }
            y.windows(m + 1).map(|w| (w[m] - w[0]).abs()).sum::<f64>() / (y.len() - m) as f64
        })
        .collect();
    let mase_ok = scales.iter().all(|s| *s > 0.0);

    for (mi, f) in forecasts.iter().enumerate() {
        for (gi, (_, idx)) in panels.iter().enumerate() {
            for h in 0..h_eff {
                for &i in idx {
                    let e = actual[(i, h)] - f[(i, h)];
                    sq[mi][gi][h] += e * e;
                    if mase_ok {
                        scaled_abs[mi][gi][h] += e.abs() / scales[i];
                    }
                }
            }
        }
    }

    if config.probabilistic.mode != ProbMode::None {
        let ensemble = match config.probabilistic.mode {
            ProbMode::Bootstrap => {
                bootstrap_sample(&model, config.probabilistic.samples, h_eff, seed)?
            }
            ProbMode::Gaussian => gaussian_ensemble(config, &model, &base, seed)?,
            ProbMode::None => unreachable!(),
        };
        for (mi, state) in states.iter().enumerate() {
            let ens = match state {
                None => ensemble.clone(),
                Some(st) => reconcile_ensemble(st, &ensemble)?,
            };
            for (gi, (_, idx)) in panels.iter().enumerate() {
                for h in 0..h_eff {
                    for &i in idx {
                        crps[mi][gi][h] += scoring::crps(&ens.marginal(i, h), actual[(i, h)])?;
                    }
                    let joint: Vec<Vec<f64>> = ens
                        .samples
                        .iter()
                        .map(|s| idx.iter().map(|&i| s[(i, h)]).collect())
                        .collect();
                    let z: Vec<f64> = idx.iter().map(|&i| actual[(i, h)]).collect();
                    es[mi][gi][h] =
                        scoring::energy_score(&joint, &z, config.probabilistic.es_pairs)?;
                }
            }
        }
    }

    Ok(OriginOutcome {
        t_end,
        base,
        forecasts,
        residuals: model.residuals.clone(),
        sq,
        scaled_abs,
        crps,
        es,
        mase_ok,
        coherence,
        fallbacks: model.fallbacks.len(),
    })
}

fn annotate(e: Error, ctx: &str) -> Error {
    match e {
        Error::Singular(m) => Error::Singular(format!("{ctx}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
        Error::Insufficient(m) => Error::Insufficient(format!("{ctx}: {m}")),
        other => other,
    }
}

/// Draws from `N(ŷ_h, k_h W)` for every horizon, with `W` the configured
/// estimator on the in-sample residuals. Reconciling these draws member by
/// member samples the reconciled Gaussian `N(S G ŷ_h, k_h S G W G' S')`.
fn gaussian_ensemble(
    config: &ExperimentConfig,
    model: &BaseForecasterModel,
    base: &Matrix,
    seed: u64,
) -> Result<SampleEnsemble> {
    let spec = CovarianceSpec {
        kind: config.probabilistic.gaussian_cov,
        lambda: config.shrink_lambda,
        jitter: 0.0,
    };
    let w = covariance::estimate(&spec, &model.residuals)?;
    let chol = linalg::spd_factor(&w.w, "Gaussian base covariance")?;
    let l_factor = chol.l();
    let (n, h_eff) = base.shape();
    let samples = (0..config.probabilistic.samples as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep);
            let z = Matrix::from_fn(n, h_eff, |_, _| StandardNormal.sample(&mut rng));
            let mut x = &l_factor * z;
            for h in 0..h_eff {
                let k = config.horizon_scale(h).sqrt();
                for i in 0..n {
                    x[(i, h)] = base[(i, h)] + k * x[(i, h)];
                }
            }
            x
        })
        .collect();
    SampleEnsemble::new(samples, EnsembleSource::Incoherent, Some(seed))
}

fn write_outputs(
    dir: &Path,
    config: &ExperimentConfig,
    result: &ExperimentResult,
    outcomes: &[OriginOutcome],
    data: &SeriesData,
) -> Result<()> {
    let plan = &result.plan;
    fs::create_dir_all(dir.join("forecasts"))?;
    fs::create_dir_all(dir.join("residuals"))?;
    fs::create_dir_all(dir.join("scores"))?;
    let mut files = Vec::new();

    cio::write_plan_json(plan, fs::File::create(dir.join("plan.json"))?)?;
    files.push("plan.json".to_string());

    for o in outcomes {
        let horizons: Vec<String> = (1..=o.base.ncols()).map(|h| format!("h{h}")).collect();
        for (mi, method) in config.methods.iter().enumerate() {
            let values = plan.rows_from_plan_order(&data.names, &o.forecasts[mi])?;
            let table = ForecastTable {
                names: data.names.clone(),
                horizons: horizons.clone(),
                values,
            };
            let name = format!("forecasts/origin_{:04}_{}.csv", o.t_end, method.as_str());
            data::write_forecast_csv(&table, fs::File::create(dir.join(&name))?)?;
            files.push(name);
        }
        let res = plan.rows_from_plan_order(&data.names, o.residuals.errors())?;
        let name = format!("residuals/origin_{:04}.csv", o.t_end);
        data::write_residuals_csv(&data.names, &res, fs::File::create(dir.join(&name))?)?;
        files.push(name);
    }

    for panel in &result.panels {
        let name = format!("scores/{}.csv", panel.metric);
        panel.write_csv(fs::File::create(dir.join(&name))?)?;
        files.push(name);
    }
    let mut wtr = csv::Writer::from_path(dir.join("scores/counts.csv"))?;
    wtr.write_record(["horizon", "scored_origins"])?;
    for (h, c) in result.score_counts.iter().enumerate() {
        wtr.write_record([(h + 1).to_string(), c.to_string()])?;
    }
    wtr.flush()?;
    files.push("scores/counts.csv".to_string());

    let manifest = Manifest {
        library: "linrecon",
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        config,
        n: plan.n(),
        n_c: plan.n_c(),
        n_u: plan.n_u(),
        origins: &result.origins,
        score_counts: &result.score_counts,
        fallbacks: result.fallbacks,
        max_coherence_residual: &result.max_coherence,
        files,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}
