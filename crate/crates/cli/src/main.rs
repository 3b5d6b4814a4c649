use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(
    name = "linrecon",
    version,
    about = "Reconcile forecasts of linearly constrained time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ReduceMethod {
    Rref,
    Qr,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum CovArg {
    Ols,
    Wls,
    Shr,
    Sam,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PathArg {
    Auto,
    Projection,
    Structural,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ProbModeArg {
    Gaussian,
    Bootstrap,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum BaseModelArg {
    Naive,
    Ar1Drift,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Mse,
    Mase,
    Crps,
    Es,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum EsPairsArg {
    Consecutive,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a constraint system (DSL text or dense CSV) to a plan.
    Reduce {
        #[arg(long)]
        constraints: PathBuf,
        #[arg(long, value_enum, default_value = "rref")]
        method: ReduceMethod,
        /// Relative pivot / rank tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Plan JSON destination (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconcile point forecasts.
    Reconcile {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, value_enum, default_value = "ols")]
        cov: CovArg,
        /// Residual CSV (rows = periods, columns = series); required unless --cov ols.
        #[arg(long)]
        residuals: Option<PathBuf>,
        #[arg(long)]
        shrink_lambda: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        /// Base forecasts (rows = series, columns = horizons).
        #[arg(long)]
        base: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        path: PathArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconcile probabilistic forecasts.
    ReconcileProb {
        #[arg(long, value_enum)]
        mode: ProbModeArg,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, value_enum, default_value = "shr")]
        cov: CovArg,
        #[arg(long)]
        shrink_lambda: Option<f64>,
        /// Gaussian: residual CSV used for W and, unless --base-cov says
        /// otherwise, for W_h.
        #[arg(long)]
        residuals: Option<PathBuf>,
        /// Gaussian: base means (rows = series, columns = horizons).
        #[arg(long)]
        base: Option<PathBuf>,
        /// Gaussian: estimator for the base covariance W_h (default: --cov).
        #[arg(long, value_enum)]
        base_cov: Option<CovArg>,
        /// Gaussian: comma-separated k_h multipliers of W_h.
        #[arg(long, value_delimiter = ',')]
        horizon_scale: Vec<f64>,
        /// Bootstrap: history CSV (date column, then series).
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "ar1-drift")]
        base_model: BaseModelArg,
        #[arg(long, default_value_t = 4)]
        horizons: usize,
        #[arg(long = "L", default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Bootstrap: also write the unreconciled ensemble here.
        #[arg(long)]
        base_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score forecasts against actual values.
    Score {
        #[arg(long, value_enum)]
        metric: MetricArg,
        /// Actual values (rows = series, columns = horizons).
        #[arg(long)]
        actuals: PathBuf,
        /// `method=path`; repeat for each method. `base` is the skill reference.
        #[arg(long = "forecast", required = true)]
        forecasts: Vec<String>,
        /// JSON object mapping panel names to series lists.
        #[arg(long)]
        groups: Option<PathBuf>,
        /// History CSV for the MASE scale.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        mase_period: usize,
        #[arg(long, value_enum, default_value = "consecutive")]
        es_pairs: EsPairsArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a rolling-origin experiment described by a TOML file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Check that reconciled forecast files satisfy the constraints.
    Audit {
        /// Experiment output directory.
        #[arg(long)]
        dir: PathBuf,
        /// Plan JSON (default: <dir>/plan.json).
        #[arg(long)]
        plan: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Reduce {
            constraints,
            method,
            tol,
            out,
        } => commands::reduce(&constraints, method, tol, out.as_deref()),
        Command::Reconcile {
            plan,
            cov,
            residuals,
            shrink_lambda,
            jitter,
            base,
            path,
            out,
        } => commands::reconcile(commands::ReconcileArgs {
            plan,
            cov,
            residuals,
            shrink_lambda,
            jitter,
            base,
            path,
            out,
        }),
        Command::ReconcileProb {
            mode,
            plan,
            cov,
            shrink_lambda,
            residuals,
            base,
            base_cov,
            horizon_scale,
            history,
            base_model,
            horizons,
            samples,
            seed,
            base_out,
            out,
        } => commands::reconcile_prob(commands::ProbArgs {
            mode,
            plan,
            cov,
            shrink_lambda,
            residuals,
            base,
            base_cov,
            horizon_scale,
            history,
            base_model,
            horizons,
            samples,
            seed,
            base_out,
            out,
        }),
        Command::Score {
            metric,
            actuals,
            forecasts,
            groups,
            history,
            mase_period,
            es_pairs,
            out,
        } => commands::score(commands::ScoreArgs {
            metric,
            actuals,
            forecasts,
            groups,
            history,
            mase_period,
            es_pairs,
            out,
        }),
        Command::Experiment { config, output_dir } => {
            commands::experiment(&config, output_dir.as_deref())
        }
        Command::Audit { dir, plan } => commands::audit(&dir, plan.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
