//! Hyperparameter selection by cross-validation on artificial gaps.
//!
//! Random non-overlapping gaps are punched into the series, a model is
//! fitted on what remains for every configuration in a grid, and each gap is
//! re-predicted by forecasting across it. The mean squared error over all
//! punched-out values, averaged over repetitions with fresh gap layouts,
//! ranks the configurations. One gap layout is shared by every
//! configuration inside a repetition so they compete on the same task.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DvqError, Result};
use crate::model::{DvqModel, DvqParams, FitOptions};
use crate::preprocess;
use crate::seeding::{derive_seed, stream};
use crate::series::{window_len, Gap, TimeSeries};

/// Attempts per gap before random placement gives up.
const PLACEMENT_ATTEMPTS: usize = 10_000;

/// A reproducible set of artificial gaps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSet {
    pub gaps: Vec<Gap>,
    /// Seed the layout was drawn from.
    pub seed: u64,
}

/// Draw `n_gaps` gaps of length `gap_len` uniformly at random, avoiding
/// `existing` gaps, each other, and the first `min_start` positions (which
/// must stay available as forecast context).
///
/// Placement is rejection sampling with a bounded number of retries; a
/// layout that cannot be placed yields [`DvqError::Placement`].
pub fn generate_gaps(
    series_len: usize,
    existing: &[Gap],
    n_gaps: usize,
    gap_len: usize,
    min_start: usize,
    seed: u64,
) -> Result<GapSet> {
    if n_gaps == 0 || gap_len == 0 {
        return Err(DvqError::InvalidInput(
            "gap count and gap length must be >= 1".into(),
        ));
    }
    if min_start + gap_len > series_len {
        return Err(DvqError::InvalidInput(format!(
            "series of length {series_len} has no room for a gap of {gap_len} after position {min_start}"
        )));
    }
    let max_start = series_len - gap_len;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<Gap> = Vec::with_capacity(n_gaps);
    for k in 0..n_gaps {
        let mut attempts = 0;
        loop {
            if attempts >= PLACEMENT_ATTEMPTS {
                return Err(DvqError::Placement(format!(
                    "could not place gap {} of {} after {PLACEMENT_ATTEMPTS} attempts",
                    k + 1,
                    n_gaps
                )));
            }
            attempts += 1;
            let candidate = Gap::new(rng.gen_range(min_start..=max_start), gap_len);
            let clear = !existing.iter().any(|g| g.overlaps(&candidate))
                && !placed.iter().any(|g| g.overlaps(&candidate));
            if clear {
                placed.push(candidate);
                break;
            }
        }
    }
    placed.sort_by_key(|g| g.start);
    Ok(GapSet { gaps: placed, seed })
}

/// Mean squared error between two equally long value sequences.
pub fn mse(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(DvqError::DimensionMismatch(format!(
            "{} predictions vs {} true values",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(DvqError::InvalidInput("cannot score zero values".into()));
    }
    let sum: f64 = predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// The hyperparameter grid swept by [`cross_validate`].
#[derive(Debug, Clone, Serialize)]
pub struct GridSpec {
    /// Regressor size, fixed across the grid (chosen from dimension
    /// analysis beforehand).
    pub p: usize,
    pub d_values: Vec<usize>,
    pub n1_values: Vec<usize>,
    pub n2_values: Vec<usize>,
    /// Preprocessing registry names.
    pub preprocessings: Vec<String>,
}

impl GridSpec {
    /// The full sweep: codebook sizes 5..=100 in steps of 5, spacings
    /// 1, 2, 5, 10 and 20, and all three preprocessing variants.
    pub fn standard(p: usize) -> Self {
        let sizes: Vec<usize> = (1..=20).map(|k| 5 * k).collect();
        GridSpec {
            p,
            d_values: vec![1, 2, 5, 10, 20],
            n1_values: sizes.clone(),
            n2_values: sizes,
            preprocessings: preprocess::names().iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Expand into concrete configurations, in a stable order:
    /// preprocessing, then d, then n1, then n2.
    pub fn configurations(&self) -> Result<Vec<DvqParams>> {
        if self.d_values.is_empty()
            || self.n1_values.is_empty()
            || self.n2_values.is_empty()
            || self.preprocessings.is_empty()
        {
            return Err(DvqError::InvalidInput("grid has an empty axis".into()));
        }
        let mut configs = Vec::new();
        for name in &self.preprocessings {
            let preprocessing = preprocess::by_name(name)?;
            for &d in &self.d_values {
                for &n1 in &self.n1_values {
                    for &n2 in &self.n2_values {
                        configs.push(DvqParams {
                            p: self.p,
                            d,
                            n1,
                            n2,
                            preprocessing,
                        });
                    }
                }
            }
        }
        Ok(configs)
    }

    /// Longest delay window over the grid, plus the anchor value a lagged
    /// preprocessing consumes; gaps must start after this many positions so
    /// every configuration can seed its forecasts.
    pub fn max_window_len(&self) -> usize {
        let max_d = self.d_values.iter().copied().max().unwrap_or(1);
        window_len(self.p.max(1), max_d) + 1
    }
}

/// Cross-validation controls.
#[derive(Debug, Clone)]
pub struct CvOptions {
    /// Independent repetitions with fresh gap layouts.
    pub repetitions: usize,
    /// Gaps per repetition.
    pub n_gaps: usize,
    /// Length of each artificial gap.
    pub gap_len: usize,
    /// Monte-Carlo simulations per gap forecast.
    pub n_sims: usize,
    pub fit: FitOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            repetitions: 20,
            n_gaps: 15,
            gap_len: 20,
            n_sims: 20,
            fit: FitOptions::default(),
        }
    }
}

/// Cross-validation outcome for one configuration.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigResult {
    pub preprocessing: String,
    pub d: usize,
    pub n1: usize,
    pub n2: usize,
    /// Per-repetition MSE; `None` where the configuration failed.
    pub rep_mse: Vec<Option<f64>>,
    /// Mean over successful repetitions; `None` when all failed.
    pub mean_mse: Option<f64>,
    pub failures: usize,
}

/// Full cross-validation report.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub p: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub results: Vec<ConfigResult>,
    /// Index of the winning configuration in `results`, if any succeeded.
    pub best: Option<usize>,
}

impl ValidationReport {
    pub fn best_result(&self) -> Option<&ConfigResult> {
        self.best.map(|i| &self.results[i])
    }

    /// One row per configuration: `preprocessing,d,n1,n2,mean_mse,failures`.
    pub fn summary_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("preprocessing,d,n1,n2,mean_mse,failures\n");
        for r in &self.results {
            let mean = r.mean_mse.map(|m| m.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.preprocessing, r.d, r.n1, r.n2, mean, r.failures
            );
        }
        out
    }

    /// One row per configuration and repetition:
    /// `preprocessing,d,n1,n2,repetition,mse`.
    pub fn detail_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("preprocessing,d,n1,n2,repetition,mse\n");
        for r in &self.results {
            for (rep, m) in r.rep_mse.iter().enumerate() {
                let value = m.map(|m| m.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.preprocessing,
                    r.d,
                    r.n1,
                    r.n2,
                    rep + 1,
                    value
                );
            }
        }
        out
    }
}

/// Winner: lowest mean MSE; ties prefer smaller n1, then n2, then d, then
/// the preprocessing name.
fn pick_best(results: &[ConfigResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        let Some(m) = r.mean_mse else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let other = &results[b];
                let key = (m, r.n1, r.n2, r.d, r.preprocessing.as_str());
                let other_key = (
                    other.mean_mse.expect("best always has a mean"),
                    other.n1,
                    other.n2,
                    other.d,
                    other.preprocessing.as_str(),
                );
                key < other_key
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Forecast one punched-out gap by simulating across the whole missing run
/// that contains it and keeping the stretch covering the gap. Returns the
/// predicted values on the original scale.
fn predict_gap(
    model: &DvqModel,
    punched: &TimeSeries,
    runs: &[Gap],
    gap: &Gap,
    n_sims: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let run = runs
        .iter()
        .find(|r| r.start <= gap.start && gap.end() <= r.end())
        .ok_or_else(|| {
            DvqError::InvalidInput(format!(
                "gap at position {} is not missing in the series",
                gap.start + 1
            ))
        })?;
    let count = gap.end() - run.start;
    let ensemble = model.forecast_span(punched, run.start, count, n_sims, seed, &[])?;
    let offset = gap.start - run.start;
    Ok(ensemble.mean[offset..offset + gap.len].to_vec())
}

/// Sweep the grid: for every repetition, punch a fresh set of gaps, fit
/// every configuration on the punched series and score it on the hidden
/// values. Failing configurations are recorded, not fatal.
pub fn cross_validate(
    series: &TimeSeries,
    grid: &GridSpec,
    options: &CvOptions,
    seed: u64,
) -> Result<ValidationReport> {
    if options.repetitions == 0 {
        return Err(DvqError::InvalidInput("repetitions must be >= 1".into()));
    }
    let configs = grid.configurations()?;
    let existing = series.gaps();
    let min_start = grid.max_window_len();
    let mut per_config: Vec<Vec<Option<f64>>> = vec![Vec::new(); configs.len()];

    for rep in 0..options.repetitions {
        let gapset = generate_gaps(
            series.len(),
            &existing,
            options.n_gaps,
            options.gap_len,
            min_start,
            derive_seed(seed, &[stream::GAPS, rep as u64]),
        )?;
        let punched = series.with_gaps(&gapset.gaps)?;
        let runs = punched.gaps();
        let truth: Vec<Vec<f64>> = gapset
            .gaps
            .iter()
            .map(|g| (g.start..g.end()).map(|i| series.values()[i]).collect())
            .collect();

        let rep_results: Vec<Option<f64>> = configs
            .par_iter()
            .enumerate()
            .map(|(ci, params)| {
                let fit_seed = derive_seed(seed, &[stream::CROSSVAL, rep as u64, ci as u64]);
                let model = match DvqModel::fit(&punched, params, &options.fit, fit_seed) {
                    Ok(m) => m,
                    Err(e) => {
                        warn!(
                            "repetition {}: configuration {} ({:?}) failed to fit: {e}",
                            rep + 1,
                            ci + 1,
                            params
                        );
                        return None;
                    }
                };
                let mut predictions = Vec::with_capacity(options.n_gaps * options.gap_len);
                let mut targets = Vec::with_capacity(options.n_gaps * options.gap_len);
                for (gi, gap) in gapset.gaps.iter().enumerate() {
                    let span_seed =
                        derive_seed(seed, &[stream::CROSSVAL, rep as u64, ci as u64, gi as u64]);
                    match predict_gap(&model, &punched, &runs, gap, options.n_sims, span_seed) {
                        Ok(mut p) => {
                            predictions.append(&mut p);
                            targets.extend_from_slice(&truth[gi]);
                        }
                        Err(e) => {
                            warn!(
                                "repetition {}: configuration {} cannot predict gap {}: {e}",
                                rep + 1,
                                ci + 1,
                                gi + 1
                            );
                            return None;
                        }
                    }
                }
                mse(&predictions, &targets).ok()
            })
            .collect();
        for (ci, r) in rep_results.into_iter().enumerate() {
            per_config[ci].push(r);
        }
    }

    let results: Vec<ConfigResult> = configs
        .iter()
        .zip(per_config)
        .map(|(params, rep_mse)| {
            let successes: Vec<f64> = rep_mse.iter().flatten().copied().collect();
            let mean_mse = if successes.is_empty() {
                None
            } else {
                Some(successes.iter().sum::<f64>() / successes.len() as f64)
            };
            ConfigResult {
                preprocessing: params.preprocessing.name().to_string(),
                d: params.d,
                n1: params.n1,
                n2: params.n2,
                failures: rep_mse.iter().filter(|r| r.is_none()).count(),
                rep_mse,
                mean_mse,
            }
        })
        .collect();
    let best = pick_best(&results);
    if best.is_none() {
        warn!("every configuration failed on every repetition");
    }
    Ok(ValidationReport {
        p: grid.p,
        repetitions: options.repetitions,
        seed,
        results,
        best,
    })
}
