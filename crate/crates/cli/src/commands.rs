use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use linrecon::constraint::io::{load_constraints, read_plan_json, write_plan_json};
use linrecon::constraint::{reduce_qr, reduce_rref, ReconciliationPlan};
use linrecon::covariance::{estimate, w_ols, CovKind, CovarianceSpec, ResidualMatrix, WMatrix};
use linrecon::data::{self, ForecastTable};
use linrecon::experiment::{self, audit_dir, ExperimentConfig};
use linrecon::linalg::Matrix;
use linrecon::probabilistic::{
    bootstrap_sample, fit_base, gaussian_reconcile, reconcile_ensemble, BaseKind, EnsembleSource,
    GaussianForecast, SampleEnsemble,
};
use linrecon::reconcile::{coherence_residual, Path as RecPath, ReconcilerState};
use linrecon::scoring::{self, EsPairs, Metric, ScorePanel};
use serde::Serialize;

use crate::{BaseModelArg, CovArg, EsPairsArg, MetricArg, PathArg, ProbModeArg, ReduceMethod};

/// Raised when an audit finds incoherent files.
#[derive(Debug, thiserror::Error)]
#[error("{0} of {1} forecast files violate the constraints")]
pub struct AuditFailed(usize, usize);

/// 3 for numerical failures, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<linrecon::Error>() {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

impl From<CovArg> for CovKind {
    fn from(c: CovArg) -> Self {
        match c {
            CovArg::Ols => CovKind::Ols,
            CovArg::Wls => CovKind::Wls,
            CovArg::Shr => CovKind::Shr,
            CovArg::Sam => CovKind::Sam,
        }
    }
}

fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_plan(path: &Path) -> anyhow::Result<ReconciliationPlan> {
    read_plan_json(open(path)?).with_context(|| format!("reading plan {}", path.display()))
}

fn load_table(path: &Path) -> anyhow::Result<ForecastTable> {
    data::read_forecast_csv(open(path)?).with_context(|| format!("reading {}", path.display()))
}

/// Residuals from `path` in plan order.
fn load_residuals(plan: &ReconciliationPlan, path: &Path) -> anyhow::Result<ResidualMatrix> {
    let (names, e) = data::read_residuals_csv(open(path)?)
        .with_context(|| format!("reading {}", path.display()))?;
    let e = plan.rows_to_plan_order(&names, &e)?;
    Ok(ResidualMatrix::with_names(e, plan.plan_names())?)
}

fn weight_matrix(
    plan: &ReconciliationPlan,
    kind: CovKind,
    residuals: Option<&ResidualMatrix>,
    lambda: Option<f64>,
    jitter: f64,
) -> anyhow::Result<WMatrix> {
    let spec = CovarianceSpec {
        kind,
        lambda,
        jitter,
    };
    match (kind, residuals) {
        (_, Some(res)) => Ok(estimate(&spec, res)?),
        (CovKind::Ols, None) => {
            let mut w = w_ols(plan.n());
            for i in 0..plan.n() {
                w.w[(i, i)] += jitter;
            }
            Ok(w)
        }
        (k, None) => bail!("--cov {k} needs --residuals"),
    }
}

pub fn reduce(
    constraints: &Path,
    method: ReduceMethod,
    tol: Option<f64>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let cs = load_constraints(constraints)
        .with_context(|| format!("reading constraints {}", constraints.display()))?;
    for w in cs.warnings() {
        log::warn!("{w}");
    }
    let plan = match method {
        ReduceMethod::Rref => reduce_rref(&cs, tol)?,
        ReduceMethod::Qr => reduce_qr(&cs, tol)?,
    };
    write_plan_json(&plan, sink(out)?)?;
    eprintln!(
        "n = {}, p = {}, rank = {}, constrained = {}, free = {}, dropped zero rows = {}, residual = {:.3e}",
        cs.n(),
        cs.p(),
        plan.n_c(),
        plan.n_c(),
        plan.n_u(),
        cs.dropped_zero_rows(),
        plan.relative_residual(&cs)
    );
    Ok(())
}

pub struct ReconcileArgs {
    pub plan: PathBuf,
    pub cov: CovArg,
    pub residuals: Option<PathBuf>,
    pub shrink_lambda: Option<f64>,
    pub jitter: f64,
    pub base: PathBuf,
    pub path: PathArg,
    pub out: Option<PathBuf>,
}

pub fn reconcile(args: ReconcileArgs) -> anyhow::Result<()> {
    let plan = load_plan(&args.plan)?;
    let res = args
        .residuals
        .as_deref()
        .map(|p| load_residuals(&plan, p))
        .transpose()?;
    let w = weight_matrix(
        &plan,
        args.cov.into(),
        res.as_ref(),
        args.shrink_lambda,
        args.jitter,
    )?;
    if let Some(l) = w.lambda {
        log::info!("shrinkage intensity {l}");
    }
    let state = ReconcilerState::fit(&plan, &w)?;
    let table = load_table(&args.base)?;
    let base = plan.rows_to_plan_order(&table.names, &table.values)?;
    let path = match args.path {
        PathArg::Auto => RecPath::Auto,
        PathArg::Projection => RecPath::Projection,
        PathArg::Structural => RecPath::Structural,
    };
    let tilde = state.apply(&base, path)?;
    log::info!("max |C y| = {:.3e}", coherence_residual(&plan, &tilde));
    let out = ForecastTable {
        values: plan.rows_from_plan_order(&table.names, &tilde)?,
        names: table.names,
        horizons: table.horizons,
    };
    data::write_forecast_csv(&out, sink(args.out.as_deref())?)?;
    Ok(())
}

pub struct ProbArgs {
    pub mode: ProbModeArg,
    pub plan: PathBuf,
    pub cov: CovArg,
    pub shrink_lambda: Option<f64>,
    pub residuals: Option<PathBuf>,
    pub base: Option<PathBuf>,
    pub base_cov: Option<CovArg>,
    pub horizon_scale: Vec<f64>,
    pub history: Option<PathBuf>,
    pub base_model: BaseModelArg,
    pub horizons: usize,
    pub samples: usize,
    pub seed: u64,
    pub base_out: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct GaussianHorizon {
    horizon: String,
    k: f64,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct GaussianOutput {
    cov: CovKind,
    base_cov: CovKind,
    series: Vec<String>,
    horizons: Vec<GaussianHorizon>,
}

#[derive(Serialize)]
struct BootstrapMeta<'a> {
    seed: u64,
    samples: usize,
    horizons: usize,
    base_model: BaseKind,
    cov: CovKind,
    lambda: Option<f64>,
    fallbacks: Vec<&'a str>,
}

pub fn reconcile_prob(args: ProbArgs) -> anyhow::Result<()> {
    match args.mode {
        ProbModeArg::Gaussian => prob_gaussian(args),
        ProbModeArg::Bootstrap => prob_bootstrap(args),
    }
}

fn prob_gaussian(args: ProbArgs) -> anyhow::Result<()> {
    let Some(base_path) = args.base.as_deref() else {
        bail!("gaussian mode needs --base");
    };
    let plan = load_plan(&args.plan)?;
    let res = args
        .residuals
        .as_deref()
        .map(|p| load_residuals(&plan, p))
        .transpose()?;
    let kind: CovKind = args.cov.into();
    let base_kind: CovKind = args.base_cov.map_or(kind, Into::into);
    let w = weight_matrix(&plan, kind, res.as_ref(), args.shrink_lambda, 0.0)?;
    let w_h = if base_kind == kind {
        w.clone()
    } else {
        weight_matrix(&plan, base_kind, res.as_ref(), args.shrink_lambda, 0.0)?
    };
    let state = ReconcilerState::fit(&plan, &w)?;
    let table = load_table(base_path)?;
    let idx = plan.align(&table.names)?;
    let base = plan.rows_to_plan_order(&table.names, &table.values)?;

    let mut horizons = Vec::with_capacity(base.ncols());
    for h in 0..base.ncols() {
        let k = args.horizon_scale.get(h).copied().unwrap_or(1.0);
        let g = GaussianForecast::scaled(base.columns(h, 1).into_owned(), &w_h.w, k, h + 1)?;
        let r = gaussian_reconcile(&state, &g)?;
        horizons.push(GaussianHorizon {
            horizon: table.horizons[h].clone(),
            k,
            mean: idx.iter().map(|&a| r.mean[(a, 0)]).collect(),
            cov: idx
                .iter()
                .map(|&a| idx.iter().map(|&b| r.cov[(a, b)]).collect())
                .collect(),
        });
    }
    let out = GaussianOutput {
        cov: kind,
        base_cov: base_kind,
        series: table.names,
        horizons,
    };
    let mut w = create(&args.out)?;
    serde_json::to_writer_pretty(&mut w, &out)?;
    w.flush()?;
    Ok(())
}

fn reorder_ensemble(
    plan: &ReconciliationPlan,
    names: &[String],
    ens: &SampleEnsemble,
) -> anyhow::Result<SampleEnsemble> {
    let samples = ens
        .samples
        .iter()
        .map(|s| plan.rows_from_plan_order(names, s))
        .collect::<linrecon::Result<Vec<_>>>()?;
    Ok(SampleEnsemble::new(samples, ens.source, ens.seed)?)
}

fn prob_bootstrap(args: ProbArgs) -> anyhow::Result<()> {
    let Some(history_path) = args.history.as_deref() else {
        bail!("bootstrap mode needs --history");
    };
    let plan = load_plan(&args.plan)?;
    let history = data::read_series_csv(open(history_path)?)
        .with_context(|| format!("reading {}", history_path.display()))?;
    let values = plan.rows_to_plan_order(&history.names, &history.values)?;
    let plan_names = plan.plan_names();
    let kind = match args.base_model {
        BaseModelArg::Naive => BaseKind::Naive,
        BaseModelArg::Ar1Drift => BaseKind::Ar1Drift,
    };
    let model = fit_base(kind, &values, &plan_names)?;
    let cov: CovKind = args.cov.into();
    let w = weight_matrix(&plan, cov, Some(&model.residuals), args.shrink_lambda, 0.0)?;
    let state = ReconcilerState::fit(&plan, &w)?;
    let base = bootstrap_sample(&model, args.samples, args.horizons, args.seed)?;
    let tilde = reconcile_ensemble(&state, &base)?;

    if let Some(p) = args.base_out.as_deref() {
        let ens = reorder_ensemble(&plan, &history.names, &base)?;
        data::write_ensemble_csv(&ens, &history.names, create(p)?)?;
    }
    let ens = reorder_ensemble(&plan, &history.names, &tilde)?;
    data::write_ensemble_csv(&ens, &history.names, create(&args.out)?)?;

    let meta = BootstrapMeta {
        seed: args.seed,
        samples: args.samples,
        horizons: args.horizons,
        base_model: kind,
        cov,
        lambda: w.lambda,
        fallbacks: model
            .fallbacks
            .iter()
            .map(|&i| plan_names[i].as_str())
            .collect(),
    };
    let meta_path = PathBuf::from(format!("{}.meta.json", args.out.display()));
    let mut mw = create(&meta_path)?;
    serde_json::to_writer_pretty(&mut mw, &meta)?;
    mw.flush()?;
    Ok(())
}

pub struct ScoreArgs {
    pub metric: MetricArg,
    pub actuals: PathBuf,
    pub forecasts: Vec<String>,
    pub groups: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub mase_period: usize,
    pub es_pairs: EsPairsArg,
    pub out: Option<PathBuf>,
}

fn parse_forecast_arg(s: &str) -> anyhow::Result<(String, PathBuf)> {
    match s.split_once('=') {
        Some((m, p)) if !m.is_empty() && !p.is_empty() => Ok((m.to_string(), PathBuf::from(p))),
        _ => bail!("--forecast expects `method=path`, got `{s}`"),
    }
}

/// Indices into `names` for each reporting group, `All` first.
fn group_indices(
    names: &[String],
    groups: &BTreeMap<String, Vec<String>>,
) -> anyhow::Result<Vec<(String, Vec<usize>)>> {
    let pos: BTreeMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(k, n)| (n.as_str(), k))
        .collect();
    let mut out = vec![("All".to_string(), (0..names.len()).collect())];
    for (g, members) in groups {
        if g == "All" {
            continue;
        }
        let idx = members
            .iter()
            .map(|m| {
                pos.get(m.as_str())
                    .copied()
                    .ok_or_else(|| anyhow::anyhow!("group `{g}` names unknown series `{m}`"))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        if idx.is_empty() {
            bail!("group `{g}` is empty");
        }
        out.push((g.clone(), idx));
    }
    Ok(out)
}

/// Permutation taking rows labelled `from` to the order of `to`.
fn match_rows(to: &[String], from: &[String], what: &str) -> anyhow::Result<Vec<usize>> {
    if to.len() != from.len() {
        bail!(
            "{what} has {} series, actuals have {}",
            from.len(),
            to.len()
        );
    }
    let pos: BTreeMap<&str, usize> = from
        .iter()
        .enumerate()
        .map(|(k, n)| (n.as_str(), k))
        .collect();
    to.iter()
        .map(|n| {
            pos.get(n.as_str())
                .copied()
                .ok_or_else(|| anyhow::anyhow!("{what} has no series `{n}`"))
        })
        .collect()
}

pub fn score(args: ScoreArgs) -> anyhow::Result<()> {
    let actuals = load_table(&args.actuals)?;
    let groups: BTreeMap<String, Vec<String>> = match args.groups.as_deref() {
        Some(p) => serde_json::from_reader(open(p)?)
            .with_context(|| format!("reading groups {}", p.display()))?,
        None => BTreeMap::new(),
    };
    let groups = group_indices(&actuals.names, &groups)?;
    let n_h = actuals.values.ncols();
    let metric = match args.metric {
        MetricArg::Mse => Metric::Mse,
        MetricArg::Mase => Metric::Mase,
        MetricArg::Crps => Metric::Crps,
        MetricArg::Es => Metric::Es,
    };
    let pairs = match args.es_pairs {
        EsPairsArg::Consecutive => EsPairs::Consecutive,
        EsPairsArg::All => EsPairs::All,
    };
    let insample: Option<Vec<Vec<f64>>> = match (metric, args.history.as_deref()) {
        (Metric::Mase, Some(p)) => {
            let hist = data::read_series_csv(open(p)?)
                .with_context(|| format!("reading {}", p.display()))?;
            let rows = match_rows(&actuals.names, &hist.names, "history")?;
            Some(
                rows.iter()
                    .map(|&r| hist.values.row(r).iter().copied().collect())
                    .collect(),
            )
        }
        (Metric::Mase, None) => bail!("mase needs --history"),
        _ => None,
    };

    let mut panel = ScorePanel::new(metric);
    for spec in &args.forecasts {
        let (method, path) = parse_forecast_arg(spec)?;
        match metric {
            Metric::Mse | Metric::Mase => {
                let table = load_table(&path)?;
                let rows = match_rows(&actuals.names, &table.names, &method)?;
                if table.values.ncols() != n_h {
                    bail!(
                        "{method} has {} horizons, actuals have {n_h}",
                        table.values.ncols()
                    );
                }
                let err = Matrix::from_fn(actuals.names.len(), n_h, |i, h| {
                    table.values[(rows[i], h)] - actuals.values[(i, h)]
                });
                for (g, idx) in &groups {
                    for h in 0..n_h {
                        let value = if let Some(ins) = &insample {
                            let mut total = 0.0;
                            for &i in idx {
                                total += scoring::mase(&[err[(i, h)]], &ins[i], args.mase_period)
                                    .with_context(|| {
                                    format!("series `{}`", actuals.names[i])
                                })?;
                            }
                            total / idx.len() as f64
                        } else {
                            let e: Vec<f64> = idx.iter().map(|&i| err[(i, h)]).collect();
                            scoring::mse(&e)?
                        };
                        panel.insert(&method, g, h + 1, value);
                    }
                }
            }
            Metric::Crps | Metric::Es => {
                let (names, ens) =
                    data::read_ensemble_csv(open(&path)?, EnsembleSource::Reconciled)
                        .with_context(|| format!("reading {}", path.display()))?;
                let rows = match_rows(&actuals.names, &names, &method)?;
                if ens.horizons() != n_h {
                    bail!(
                        "{method} has {} horizons, actuals have {n_h}",
                        ens.horizons()
                    );
                }
                for (g, idx) in &groups {
                    for h in 0..n_h {
                        let value = if metric == Metric::Crps {
                            let mut total = 0.0;
                            for &i in idx {
                                total += scoring::crps(
                                    &ens.marginal(rows[i], h),
                                    actuals.values[(i, h)],
                                )?;
                            }
                            total / idx.len() as f64
                        } else {
                            let samples: Vec<Vec<f64>> = ens
                                .samples
                                .iter()
                                .map(|s| idx.iter().map(|&i| s[(rows[i], h)]).collect())
                                .collect();
                            let z: Vec<f64> = idx.iter().map(|&i| actuals.values[(i, h)]).collect();
                            scoring::energy_score(&samples, &z, pairs)?
                        };
                        panel.insert(&method, g, h + 1, value);
                    }
                }
            }
        }
    }
    panel.write_csv(sink(args.out.as_deref())?)?;
    Ok(())
}

pub fn experiment(config: &Path, output_dir: Option<&Path>) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load(config)
        .with_context(|| format!("reading config {}", config.display()))?;
    if let Some(dir) = output_dir {
        cfg.output_dir = Some(dir.to_path_buf());
    }
    let result = experiment::run(&cfg)?;
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "n = {}, constrained = {}, free = {}, origins = {}, scored per horizon = {:?}",
        result.plan.n(),
        result.plan.n_c(),
        result.plan.n_u(),
        result.origins.len(),
        result.score_counts
    )?;
    for (method, r) in &result.max_coherence {
        writeln!(out, "max |C y| {method}: {r:.3e}")?;
    }
    for panel in &result.panels {
        writeln!(out, "\n{}", panel.metric)?;
        writeln!(
            out,
            "{:<8} {:<14} {:>3} {:>14} {:>9}",
            "method", "group", "h", "value", "skill"
        )?;
        for row in panel.rows() {
            let skill = row.skill.map_or(String::new(), |s| format!("{s:.2}%"));
            writeln!(
                out,
                "{:<8} {:<14} {:>3} {:>14.6e} {:>9}",
                row.method, row.group, row.horizon, row.value, skill
            )?;
        }
    }
    if let Some(dir) = &cfg.output_dir {
        writeln!(out, "\nwrote {}", dir.display())?;
    }
    Ok(())
}

pub fn audit(dir: &Path, plan: Option<&Path>) -> anyhow::Result<()> {
    let plan = plan.map(load_plan).transpose()?;
    let report = audit_dir(dir, plan.as_ref())?;
    let mut out = io::stdout().lock();
    for f in &report.files {
        writeln!(
            out,
            "{} {} residual {:.3e} bound {:.3e}",
            if f.ok { "ok  " } else { "FAIL" },
            f.path.display(),
            f.residual,
            f.bound
        )?;
    }
    let failed = report.failures().count();
    if failed > 0 {
        return Err(AuditFailed(failed, report.files.len()).into());
    }
    writeln!(out, "all {} files coherent", report.files.len())?;
    Ok(())
}
