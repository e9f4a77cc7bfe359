//! `dvq`: fit, validate and apply double-vector-quantization forecasting
//! models to univariate series with missing values.
//!
//! Every command takes an input CSV (one value per line, blank or `NaN`
//! marking missing entries), a mandatory master seed and an optional
//! `key = value` parameter file; dedicated flags override file values, which
//! override built-in defaults. Results land in `--out-dir` together with a
//! `run_config.txt` snapshot that reproduces the run when passed back via
//! `--config`. Exit codes: 0 on success, 2 for input errors (bad files,
//! flags or parameters), 3 when a computation fails on valid input.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process;

use clap::{Args, Parser, Subcommand};

use config::ConfigBag;
use dvq::error::{DvqError, Result};

#[derive(Parser)]
#[command(
    name = "dvq",
    version,
    about = "Double vector quantization forecasting for univariate time series",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Input series CSV: one value per line, blank or NaN for missing.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,

    /// Parameter file with 'key = value' lines; flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed for every randomized step (required; no clock default).
    #[arg(long)]
    seed: Option<u64>,

    /// Directory for output files [default: current directory].
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Worker threads for parallel sections [default: all cores].
    #[arg(long)]
    workers: Option<usize>,

    /// Extra key=value overrides, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate the correlation dimension and recommend a regressor order.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        /// Smallest embedding dimension in the sweep.
        #[arg(long)]
        p_min: Option<usize>,
        /// Largest embedding dimension in the sweep.
        #[arg(long)]
        p_max: Option<usize>,
        /// Preprocessing variants to analyze, comma separated.
        #[arg(long)]
        preprocessing: Option<String>,
    },
    /// Score a configuration grid with artificial-gap cross-validation.
    Crossval {
        #[command(flatten)]
        common: CommonArgs,
        /// Regressor order (delay-window size parameter).
        #[arg(long)]
        p: Option<usize>,
        /// Number of independent gap layouts to average over.
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Fit a model and write it to disk.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        shape: ShapeArgs,
        /// Candidate fits to train, keeping the best on validation gaps.
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Fit a model, then forecast from the end of the series.
    Forecast {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        shape: ShapeArgs,
        /// Candidate fits to train, keeping the best on validation gaps.
        #[arg(long)]
        restarts: Option<usize>,
        #[command(flatten)]
        horizon: HorizonArgs,
    },
    /// Forecast from the end of the series with a saved model.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        /// Path to a model written by train or forecast.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[command(flatten)]
        horizon: HorizonArgs,
    },
    /// Fill every gap in the series and write the completed series.
    FillGaps {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        shape: ShapeArgs,
        /// Candidate fits per direction, keeping the best on validation gaps.
        #[arg(long)]
        restarts: Option<usize>,
        /// Monte-Carlo simulations per forecast direction.
        #[arg(long)]
        n_sims: Option<usize>,
        /// Backward model: 'separate' (fit on the reversed series),
        /// 'reuse' (apply the forward model in reverse) or 'off'.
        #[arg(long)]
        backward: Option<String>,
    },
}

/// Model-shape flags shared by the fitting commands.
#[derive(Args)]
struct ShapeArgs {
    /// Regressor order (number of past steps per window).
    #[arg(long)]
    p: Option<usize>,
    /// Step width: how many values one deformation advances.
    #[arg(long)]
    d: Option<usize>,
    /// Regressor codebook size.
    #[arg(long)]
    n1: Option<usize>,
    /// Deformation codebook size.
    #[arg(long)]
    n2: Option<usize>,
    /// Preprocessing: none, difference or returns.
    #[arg(long)]
    preprocessing: Option<String>,
}

/// Forecast-length flags shared by forecast and predict.
#[derive(Args)]
struct HorizonArgs {
    /// Number of values to forecast.
    #[arg(long)]
    horizon: Option<usize>,
    /// Monte-Carlo trajectories in the ensemble.
    #[arg(long)]
    n_sims: Option<usize>,
    /// Stepping: recursive, block or recursive-block
    /// [default: chosen from the horizon and the model's step width].
    #[arg(long)]
    strategy: Option<String>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("error: {error}");
        process::exit(if error.is_input_error() { 2 } else { 3 });
    }
}

/// Merge the layered configuration: defaults are already in the bag, the
/// file comes next, then `--set` pairs, then dedicated flags.
fn resolve_common(bag: &mut ConfigBag, common: &CommonArgs) -> Result<()> {
    if let Some(path) = &common.config {
        bag.load_file(path)?;
    }
    bag.apply_overrides(&common.set)?;
    bag.set_flag(
        "input",
        common
            .input
            .as_ref()
            .map(|p| p.display().to_string())
            .as_ref(),
    );
    bag.set_flag("seed", common.seed.as_ref());
    Ok(())
}

fn resolve_shape(bag: &mut ConfigBag, shape: &ShapeArgs) {
    bag.set_flag("p", shape.p.as_ref());
    bag.set_flag("d", shape.d.as_ref());
    bag.set_flag("n1", shape.n1.as_ref());
    bag.set_flag("n2", shape.n2.as_ref());
    bag.set_flag("preprocessing", shape.preprocessing.as_ref());
}

fn resolve_horizon(bag: &mut ConfigBag, horizon: &HorizonArgs) {
    bag.set_flag("horizon", horizon.horizon.as_ref());
    bag.set_flag("n_sims", horizon.n_sims.as_ref());
    bag.set_flag("strategy", horizon.strategy.as_ref());
}

/// The worker count caps rayon's pool for the whole process. It is an
/// execution detail: results are identical for every thread count.
fn configure_workers(workers: Option<usize>) -> Result<()> {
    let Some(n) = workers else { return Ok(()) };
    if n == 0 {
        return Err(DvqError::InvalidInput("--workers must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| DvqError::InvalidInput(format!("could not configure {n} workers: {e}")))
}

fn dispatch(
    common: &CommonArgs,
    bag: ConfigBag,
    command: fn(&ConfigBag, &Path) -> Result<()>,
) -> Result<()> {
    configure_workers(common.workers)?;
    let out_dir = common.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(|source| DvqError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    command(&bag, &out_dir)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Analyze {
            common,
            p_min,
            p_max,
            preprocessing,
        } => {
            let mut bag = commands::new_bag("analyze");
            resolve_common(&mut bag, &common)?;
            bag.set_flag("p_min", p_min.as_ref());
            bag.set_flag("p_max", p_max.as_ref());
            bag.set_flag("preprocessing", preprocessing.as_ref());
            dispatch(&common, bag, commands::analyze)
        }
        Cmd::Crossval {
            common,
            p,
            repetitions,
        } => {
            let mut bag = commands::new_bag("crossval");
            resolve_common(&mut bag, &common)?;
            bag.set_flag("p", p.as_ref());
            bag.set_flag("repetitions", repetitions.as_ref());
            dispatch(&common, bag, commands::crossval)
        }
        Cmd::Train {
            common,
            shape,
            restarts,
        } => {
            let mut bag = commands::new_bag("train");
            resolve_common(&mut bag, &common)?;
            resolve_shape(&mut bag, &shape);
            bag.set_flag("restarts", restarts.as_ref());
            dispatch(&common, bag, commands::train)
        }
        Cmd::Forecast {
            common,
            shape,
            restarts,
            horizon,
        } => {
            let mut bag = commands::new_bag("forecast");
            resolve_common(&mut bag, &common)?;
            resolve_shape(&mut bag, &shape);
            bag.set_flag("restarts", restarts.as_ref());
            resolve_horizon(&mut bag, &horizon);
            dispatch(&common, bag, commands::forecast)
        }
        Cmd::Predict {
            common,
            model,
            horizon,
        } => {
            let mut bag = commands::new_bag("predict");
            resolve_common(&mut bag, &common)?;
            bag.set_flag(
                "model",
                model.as_ref().map(|p| p.display().to_string()).as_ref(),
            );
            resolve_horizon(&mut bag, &horizon);
            dispatch(&common, bag, commands::predict)
        }
        Cmd::FillGaps {
            common,
            shape,
            restarts,
            n_sims,
            backward,
        } => {
            let mut bag = commands::new_bag("fill-gaps");
            resolve_common(&mut bag, &common)?;
            resolve_shape(&mut bag, &shape);
            bag.set_flag("restarts", restarts.as_ref());
            bag.set_flag("n_sims", n_sims.as_ref());
            bag.set_flag("backward", backward.as_ref());
            dispatch(&common, bag, commands::fill_gaps)
        }
    }
}
