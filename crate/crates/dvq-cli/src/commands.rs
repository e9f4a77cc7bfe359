//! The six subcommands. Each one resolves its parameters from a
//! [`ConfigBag`], reads the input series, runs the corresponding library
//! pipeline and writes its outputs plus a `run_config.txt` snapshot into the
//! output directory.

use std::path::Path;

use log::warn;
use serde::Serialize;

use dvq::embedding::{
    detect_saturation, estimate_dimension, DimensionEstimate, EmbeddingConfig, Plateau,
};
use dvq::error::{DvqError, Result};
use dvq::gapfill::{self, FillOptions, GapPrediction};
use dvq::model::{DvqModel, DvqParams, FitOptions, ForecastEnsemble};
use dvq::preprocess;
use dvq::seeding::{derive_seed, stream};
use dvq::selection::{cross_validate, generate_gaps, CvOptions, GapSet, GridSpec};
use dvq::series::{window_len, TimeSeries};
use dvq::strategy;

use crate::config::{write_output, ConfigBag, TOOL_VERSION};

/// Declare the parameter set (and defaults) of one command. Empty defaults
/// mark values the user must supply.
pub fn new_bag(command: &'static str) -> ConfigBag {
    let common: &[(&str, &str)] = &[("input", ""), ("seed", "")];
    let model_shape: &[(&str, &str)] = &[
        ("p", "3"),
        ("d", "1"),
        ("n1", "20"),
        ("n2", "20"),
        ("preprocessing", "none"),
    ];
    let restart_validation: &[(&str, &str)] = &[
        ("restarts", "1"),
        ("val_sets", "5"),
        ("val_gaps", "15"),
        ("val_gap_len", "20"),
        ("val_sims", "20"),
    ];
    let forecast_shape: &[(&str, &str)] = &[
        ("horizon", ""),
        ("n_sims", "100"),
        ("strategy", ""),
        ("quantiles", "0.05,0.25,0.5,0.75,0.95"),
        ("forecast_out", "forecast.csv"),
    ];
    let mut defaults: Vec<(&str, &str)> = common.to_vec();
    match command {
        "analyze" => defaults.extend_from_slice(&[
            ("p_min", "1"),
            ("p_max", "8"),
            ("radius_count", "50"),
            ("max_points", "5000"),
            ("window", ""),
            ("slope_tolerance", "0.1"),
            ("min_pair_count", "10"),
            ("saturation_threshold", "0.1"),
            ("preprocessing", "none,difference,returns"),
            ("curves_prefix", "curves"),
            ("report_out", "analysis.json"),
        ]),
        "crossval" => defaults.extend_from_slice(&[
            ("p", "3"),
            ("d_grid", "1,2,5,10,20"),
            ("n1_grid", "5:100:5"),
            ("n2_grid", "5:100:5"),
            ("preprocessing_grid", "none,difference,returns"),
            ("repetitions", "20"),
            ("gaps", "15"),
            ("gap_len", "20"),
            ("cv_sims", "20"),
            ("summary_out", "crossval_summary.csv"),
            ("detail_out", "crossval_detail.csv"),
            ("report_out", "crossval.json"),
        ]),
        "train" => {
            defaults.extend_from_slice(model_shape);
            defaults.extend_from_slice(restart_validation);
            defaults.push(("model_out", "model.json"));
        }
        "forecast" => {
            defaults.extend_from_slice(model_shape);
            defaults.extend_from_slice(restart_validation);
            defaults.push(("model_out", "model.json"));
            defaults.extend_from_slice(forecast_shape);
        }
        "predict" => {
            defaults.push(("model", ""));
            defaults.extend_from_slice(forecast_shape);
        }
        "fill-gaps" => {
            defaults.extend_from_slice(model_shape);
            defaults.extend_from_slice(restart_validation);
            defaults.extend_from_slice(&[
                ("restarts", "10"),
                ("n_sims", "100"),
                ("backward", "separate"),
                ("fill_out", "gapfill.csv"),
                ("completed_out", "completed.csv"),
            ]);
        }
        other => unreachable!("unwired command '{other}'"),
    }
    ConfigBag::new(command, &defaults)
}

fn load_series(bag: &ConfigBag) -> Result<TimeSeries> {
    TimeSeries::read_csv(Path::new(bag.require("input")?))
}

fn params_from(bag: &ConfigBag) -> Result<DvqParams> {
    DvqParams::new(
        bag.get_usize("p")?,
        bag.get_usize("d")?,
        bag.get_usize("n1")?,
        bag.get_usize("n2")?,
        bag.require("preprocessing")?,
    )
}

fn write_run_config(bag: &ConfigBag, out_dir: &Path) -> Result<()> {
    write_output(&out_dir.join("run_config.txt"), &bag.run_config_text())
}

/// Artificial gap layouts for restart selection, placed clear of the leading
/// stretch every configuration needs for seeding.
fn validation_gapsets(
    series: &TimeSeries,
    params: &DvqParams,
    bag: &ConfigBag,
    seed: u64,
) -> Result<Vec<GapSet>> {
    let sets = bag.get_usize("val_sets")?;
    let n_gaps = bag.get_usize("val_gaps")?;
    let gap_len = bag.get_usize("val_gap_len")?;
    let min_start = window_len(params.p, params.d) + 1;
    let existing = series.gaps();
    (0..sets)
        .map(|k| {
            generate_gaps(
                series.len(),
                &existing,
                n_gaps,
                gap_len,
                min_start,
                derive_seed(seed, &[stream::GAPS, k as u64]),
            )
        })
        .collect()
}

/// Fit with optional restart selection on artificial validation gaps.
fn fit_restarted(
    series: &TimeSeries,
    params: &DvqParams,
    bag: &ConfigBag,
    seed: u64,
) -> Result<DvqModel> {
    let restarts = bag.get_usize("restarts")?;
    let options = FitOptions::default();
    if restarts <= 1 {
        return gapfill::fit_with_restarts(series, params, &options, 1, &[], 0, seed);
    }
    let gapsets = validation_gapsets(series, params, bag, seed)?;
    gapfill::fit_with_restarts(
        series,
        params,
        &options,
        restarts,
        &gapsets,
        bag.get_usize("val_sims")?,
        seed,
    )
}

fn print_fit_summary(model: &DvqModel, series: &TimeSeries) {
    println!(
        "fitted p={} d={} n1={} n2={} preprocessing={} on {}/{} known values",
        model.p(),
        model.d(),
        model.n1(),
        model.n2(),
        model.preprocessing().name(),
        series.known_count(),
        series.len(),
    );
    if let Some(info) = model.fit_info() {
        println!(
            "training pairs: {}; empty transition rows: {}; quantization error {:.6} / {:.6}",
            info.pair_count,
            info.empty_rows.len(),
            info.regressor_qe,
            info.deformation_qe,
        );
    }
}

/// Forecast `horizon` values from the end of the series. An empty strategy
/// name picks the natural stepping for the model (and tolerates horizons
/// that are not a multiple of `d` by simulating past them and truncating);
/// an explicit name is honored strictly.
fn run_forecast(
    model: &DvqModel,
    series: &TimeSeries,
    bag: &ConfigBag,
    seed: u64,
) -> Result<ForecastEnsemble> {
    let horizon = bag.get_usize("horizon")?;
    let n_sims = bag.get_usize("n_sims")?;
    let quantiles = bag.get_f64_list("quantiles")?;
    let strategy_name = bag.get("strategy");
    if strategy_name.is_empty() {
        model.forecast_span(series, series.len(), horizon, n_sims, seed, &quantiles)
    } else {
        let strat = strategy::by_name(strategy_name)?;
        let (window, anchor) = model.seed_state(series, series.len())?;
        model.monte_carlo(&window, anchor, horizon, strat, n_sims, seed, &quantiles)
    }
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct VariantReport {
    preprocessing: String,
    /// Why this variant produced no estimates, when it failed.
    skipped: Option<String>,
    estimates: Vec<DimensionEstimate>,
    plateaus: Vec<Plateau>,
    recommended_order: Option<usize>,
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    tool_version: &'a str,
    command: &'a str,
    config_hash: String,
    series: String,
    series_length: usize,
    known_values: usize,
    embedding_dims: Vec<usize>,
    variants: Vec<VariantReport>,
}

fn analyze_variant(
    series: &TimeSeries,
    pre: &'static dyn preprocess::Preprocessing,
    p_values: &[usize],
    config: &EmbeddingConfig,
    threshold: f64,
) -> Result<(VariantReport, String)> {
    use std::fmt::Write as _;
    let working = pre.apply(series)?;
    let results = estimate_dimension(&working, p_values, config)?;
    let estimates: Vec<DimensionEstimate> = results.iter().map(|(_, e)| e.clone()).collect();
    let saturation = detect_saturation(&estimates, threshold);
    let mut csv = String::from("embedding_dim,ln_r,ln_c\n");
    for (curve, _) in &results {
        for (ln_r, ln_c) in curve.log_points(1) {
            let _ = writeln!(csv, "{},{ln_r},{ln_c}", curve.embedding_dim);
        }
    }
    Ok((
        VariantReport {
            preprocessing: pre.name().to_string(),
            skipped: None,
            estimates,
            plateaus: saturation.plateaus,
            recommended_order: saturation.recommended_order,
        },
        csv,
    ))
}

pub fn analyze(bag: &ConfigBag, out_dir: &Path) -> Result<()> {
    let series = load_series(bag)?;
    let seed = bag.get_u64("seed")?;
    let p_min = bag.get_usize("p_min")?;
    let p_max = bag.get_usize("p_max")?;
    if p_min == 0 || p_max < p_min {
        return Err(DvqError::InvalidInput(format!(
            "embedding sweep needs 1 <= p_min <= p_max, got {p_min}..{p_max}"
        )));
    }
    let p_values: Vec<usize> = (p_min..=p_max).collect();
    let mut config = EmbeddingConfig::new(seed);
    config.radius_count = bag.get_usize("radius_count")?;
    config.max_points = bag.get_usize("max_points")?;
    config.window = bag.get_window("window")?;
    config.slope_tolerance = bag.get_f64("slope_tolerance")?;
    config.min_pair_count = bag.get_u64("min_pair_count")?;
    let threshold = bag.get_f64("saturation_threshold")?;
    let curves_prefix = bag.require("curves_prefix")?;

    println!(
        "series {}: {}/{} known values",
        series.name(),
        series.known_count(),
        series.len()
    );

    let mut variants = Vec::new();
    let mut first_error: Option<DvqError> = None;
    for name in bag.get_name_list("preprocessing")? {
        let pre = preprocess::by_name(&name)?;
        match analyze_variant(&series, pre, &p_values, &config, threshold) {
            Ok((report, csv)) => {
                let path = out_dir.join(format!("{curves_prefix}_{}.csv", pre.name()));
                write_output(&path, &format!("{}{csv}", bag.provenance()))?;
                for est in &report.estimates {
                    println!(
                        "variant {}: p={} dimension {:.4} (window {:.3} .. {:.3}, {} points)",
                        pre.name(),
                        est.embedding_dim,
                        est.dimension,
                        est.window.0,
                        est.window.1,
                        est.points_used,
                    );
                }
                match report.plateaus.first() {
                    Some(plateau) => println!(
                        "variant {}: saturates at dimension {:.4} (p {}..{}), recommended regressor order {}",
                        pre.name(),
                        plateau.dimension,
                        plateau.start_dim,
                        plateau.end_dim,
                        report.recommended_order.expect("plateau implies an order"),
                    ),
                    None => println!(
                        "variant {}: no saturation plateau up to p={p_max}",
                        pre.name()
                    ),
                }
                variants.push(report);
            }
            Err(error) => {
                warn!("variant {name} failed: {error}");
                println!("variant {name}: skipped ({error})");
                variants.push(VariantReport {
                    preprocessing: name,
                    skipped: Some(error.to_string()),
                    estimates: Vec::new(),
                    plateaus: Vec::new(),
                    recommended_order: None,
                });
                if first_error.is_none() {
                    first_error = Some(error);
                }
            }
        }
    }
    if variants.iter().all(|v| v.skipped.is_some()) {
        return Err(first_error.unwrap_or_else(|| {
            DvqError::EmptyResult("no preprocessing variants were analyzed".into())
        }));
    }
    if let Some((name, order)) = variants
        .iter()
        .find_map(|v| v.recommended_order.map(|o| (v.preprocessing.clone(), o)))
    {
        println!("recommended regressor order: {order} (variant {name})");
    }

    let report = AnalyzeReport {
        tool_version: TOOL_VERSION,
        command: bag.command(),
        config_hash: bag.hash(),
        series: series.name().to_string(),
        series_length: series.len(),
        known_values: series.known_count(),
        embedding_dims: p_values,
        variants,
    };
    write_json(&out_dir.join(bag.require("report_out")?), &report)?;
    write_run_config(bag, out_dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| DvqError::ModelFormat(format!("could not serialize report: {e}")))?;
    write_output(path, &format!("{text}\n"))
}

// ---------------------------------------------------------------------------
// crossval
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CrossvalReport<'a> {
    tool_version: &'a str,
    command: &'a str,
    config_hash: String,
    report: &'a dvq::selection::ValidationReport,
}

pub fn crossval(bag: &ConfigBag, out_dir: &Path) -> Result<()> {
    let series = load_series(bag)?;
    let seed = bag.get_u64("seed")?;
    let grid = GridSpec {
        p: bag.get_usize("p")?,
        d_values: bag.get_usize_list("d_grid")?,
        n1_values: bag.get_usize_list("n1_grid")?,
        n2_values: bag.get_usize_list("n2_grid")?,
        preprocessings: bag.get_name_list("preprocessing_grid")?,
    };
    let options = CvOptions {
        repetitions: bag.get_usize("repetitions")?,
        n_gaps: bag.get_usize("gaps")?,
        gap_len: bag.get_usize("gap_len")?,
        n_sims: bag.get_usize("cv_sims")?,
        fit: FitOptions::default(),
    };
    let configurations = grid.configurations()?.len();
    println!(
        "cross-validating {configurations} configurations x {} repetitions on {}",
        options.repetitions,
        series.name(),
    );
    let report = cross_validate(&series, &grid, &options, seed)?;

    write_output(
        &out_dir.join(bag.require("summary_out")?),
        &format!("{}{}", bag.provenance(), report.summary_csv()),
    )?;
    write_output(
        &out_dir.join(bag.require("detail_out")?),
        &format!("{}{}", bag.provenance(), report.detail_csv()),
    )?;
    write_json(
        &out_dir.join(bag.require("report_out")?),
        &CrossvalReport {
            tool_version: TOOL_VERSION,
            command: bag.command(),
            config_hash: bag.hash(),
            report: &report,
        },
    )?;

    match report.best_result() {
        Some(best) => println!(
            "best configuration: preprocessing={} d={} n1={} n2={} mean mse {:.6} ({} failed repetitions)",
            best.preprocessing,
            best.d,
            best.n1,
            best.n2,
            best.mean_mse.expect("best result always has a score"),
            best.failures,
        ),
        None => println!("no configuration produced a validation score"),
    }
    write_run_config(bag, out_dir)
}

// ---------------------------------------------------------------------------
// train / forecast / predict
// ---------------------------------------------------------------------------

pub fn train(bag: &ConfigBag, out_dir: &Path) -> Result<()> {
    let series = load_series(bag)?;
    let seed = bag.get_u64("seed")?;
    let params = params_from(bag)?;
    let model = fit_restarted(&series, &params, bag, seed)?;
    print_fit_summary(&model, &series);
    let path = out_dir.join(bag.require("model_out")?);
    model.save(&path)?;
    println!("model written to {}", path.display());
    write_run_config(bag, out_dir)
}

fn write_forecast(ensemble: &ForecastEnsemble, bag: &ConfigBag, out_dir: &Path) -> Result<()> {
    let path = out_dir.join(bag.require("forecast_out")?);
    write_output(&path, &format!("{}{}", bag.provenance(), ensemble.to_csv()))?;
    println!(
        "forecast: {} values, strategy {}, {} simulations",
        ensemble.horizon,
        ensemble.strategy,
        ensemble.trajectories.len(),
    );
    println!(
        "mean {:.6} .. {:.6}, last-step spread {:.6}",
        ensemble.mean.first().expect("nonempty forecast"),
        ensemble.mean.last().expect("nonempty forecast"),
        ensemble.std.last().expect("nonempty forecast"),
    );
    println!("forecast written to {}", path.display());
    Ok(())
}

pub fn forecast(bag: &ConfigBag, out_dir: &Path) -> Result<()> {
    let series = load_series(bag)?;
    let seed = bag.get_u64("seed")?;
    let params = params_from(bag)?;
    let model = fit_restarted(&series, &params, bag, seed)?;
    print_fit_summary(&model, &series);
    let model_path = out_dir.join(bag.require("model_out")?);
    model.save(&model_path)?;
    println!("model written to {}", model_path.display());
    let ensemble = run_forecast(&model, &series, bag, seed)?;
    write_forecast(&ensemble, bag, out_dir)?;
    write_run_config(bag, out_dir)
}

pub fn predict(bag: &ConfigBag, out_dir: &Path) -> Result<()> {
    let series = load_series(bag)?;
    let seed = bag.get_u64("seed")?;
    let model = DvqModel::load(Path::new(bag.require("model")?))?;
    println!(
        "loaded model: p={} d={} n1={} n2={} preprocessing={}",
        model.p(),
        model.d(),
        model.n1(),
        model.n2(),
        model.preprocessing().name(),
    );
    let ensemble = run_forecast(&model, &series, bag, seed)?;
    write_forecast(&ensemble, bag, out_dir)?;
    write_run_config(bag, out_dir)
}

// ---------------------------------------------------------------------------
// fill-gaps
// ---------------------------------------------------------------------------

fn directions(prediction: &GapPrediction) -> &'static str {
    match (
        prediction.correction.forward,
        prediction.correction.backward,
    ) {
        (true, true) => "forward and backward, both corrected",
        (true, false) => "forward only, corrected",
        (false, true) => "backward only, corrected",
        (false, false) => "raw forward mean (open end)",
    }
}

pub fn fill_gaps(bag: &ConfigBag, out_dir: &Path) -> Result<()> {
    let series = load_series(bag)?;
    let seed = bag.get_u64("seed")?;
    let gaps = series.gaps();
    if gaps.is_empty() {
        return Err(DvqError::InvalidInput(format!(
            "series {} has no missing values to fill",
            series.name()
        )));
    }
    println!("series {}: {} gaps to fill", series.name(), gaps.len());
    let params = params_from(bag)?;
    let n_sims = bag.get_usize("n_sims")?;
    let mode = bag.require("backward")?;
    if !matches!(mode, "separate" | "reuse" | "off") {
        return Err(DvqError::UnknownName {
            kind: "backward mode",
            name: mode.to_string(),
            available: "separate, reuse, off".into(),
        });
    }

    let forward = fit_restarted(
        &series,
        &params,
        bag,
        derive_seed(seed, &[stream::FILL_FORWARD]),
    )?;
    print_fit_summary(&forward, &series);
    let reversed_model;
    let backward = match mode {
        "separate" => {
            let reversed = gapfill::reverse_series(&series);
            reversed_model = fit_restarted(
                &reversed,
                &params,
                bag,
                derive_seed(seed, &[stream::FILL_BACKWARD]),
            )?;
            Some(&reversed_model)
        }
        "reuse" => Some(&forward),
        _ => None,
    };

    let (completed, predictions) = gapfill::fill_series(
        &series,
        &forward,
        backward,
        &FillOptions { n_sims },
        derive_seed(seed, &[stream::GAPS]),
    )?;
    for prediction in &predictions {
        println!(
            "gap at {}..{} ({} values): filled from {}",
            prediction.gap.start + 1,
            prediction.gap.end(),
            prediction.gap.len,
            directions(prediction),
        );
    }

    let fill_path = out_dir.join(bag.require("fill_out")?);
    write_output(
        &fill_path,
        &format!(
            "{}{}",
            bag.provenance(),
            gapfill::gap_predictions_csv(&predictions)
        ),
    )?;
    let completed_path = out_dir.join(bag.require("completed_out")?);
    write_output(
        &completed_path,
        &format!("{}{}", bag.provenance(), completed.to_csv_string()),
    )?;
    println!("gap report written to {}", fill_path.display());
    println!("completed series written to {}", completed_path.display());
    write_run_config(bag, out_dir)
}
