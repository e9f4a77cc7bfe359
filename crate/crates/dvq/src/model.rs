//! The double vector quantization forecasting model.
//!
//! Two codebooks are fitted on the same series: one quantizes delay windows
//! (regressors), the other quantizes the changes between a window and the
//! one `d` steps later (deformations). A row-stochastic transition matrix
//! links them: row `i` holds the conditional frequencies of deformation
//! classes among training pairs whose regressor fell in class `i`. A
//! forecast step finds the current window's regressor class, draws a
//! deformation class from that row, and adds the deformation prototype to
//! the window; Monte-Carlo repetition turns the stochastic step into an
//! ensemble with pointwise statistics.

use std::fmt;
use std::fs;
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DvqError, Result};
use crate::preprocess::{self, Preprocessing};
use crate::seeding::{derive_seed, stream};
use crate::series::{build_deformations, build_regressors, window_len, TimeSeries};
use crate::som::{self, Codebook, TrainSchedule};
use crate::strategy::{self, ForecastStrategy};

/// Serialized model format version understood by this build.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Quantile levels reported by default in forecast ensembles.
pub const DEFAULT_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Model hyperparameters.
#[derive(Clone, Copy)]
pub struct DvqParams {
    /// Regressor size: how many past values describe the state.
    pub p: usize,
    /// Values predicted per step (window spacing).
    pub d: usize,
    /// Units in the regressor codebook.
    pub n1: usize,
    /// Units in the deformation codebook.
    pub n2: usize,
    pub preprocessing: &'static dyn Preprocessing,
}

impl DvqParams {
    /// Convenience constructor resolving the preprocessing by name.
    pub fn new(p: usize, d: usize, n1: usize, n2: usize, preprocessing: &str) -> Result<Self> {
        Ok(DvqParams {
            p,
            d,
            n1,
            n2,
            preprocessing: preprocess::by_name(preprocessing)?,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.p == 0 || self.d == 0 {
            return Err(DvqError::InvalidInput("p and d must be >= 1".into()));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(DvqError::InvalidInput("n1 and n2 must be >= 1".into()));
        }
        Ok(())
    }
}

impl fmt::Debug for DvqParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DvqParams")
            .field("p", &self.p)
            .field("d", &self.d)
            .field("n1", &self.n1)
            .field("n2", &self.n2)
            .field("preprocessing", &self.preprocessing.name())
            .finish()
    }
}

/// Optional overrides for the codebook training schedules.
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub regressor_schedule: Option<TrainSchedule>,
    pub deformation_schedule: Option<TrainSchedule>,
}

/// Diagnostics kept from a fit; not serialized with the model.
#[derive(Debug, Clone)]
pub struct FitInfo {
    /// Number of training regressors.
    pub regressor_count: usize,
    /// Number of (regressor, deformation) training pairs.
    pub pair_count: usize,
    /// Class assignment of every training pair.
    pub pair_classes: Vec<(usize, usize)>,
    /// Regressor classes that captured no pair (their transition row is
    /// uniform).
    pub empty_rows: Vec<usize>,
    /// Quantization error of the regressor codebook on its training data.
    pub regressor_qe: f64,
    /// Quantization error of the deformation codebook on its training data.
    pub deformation_qe: f64,
}

/// A fitted double-quantization model.
#[derive(Clone)]
pub struct DvqModel {
    regressor_codebook: Codebook,
    deformation_codebook: Codebook,
    /// Row-stochastic: `transition[i][j]` is the probability of deformation
    /// class `j` given regressor class `i`.
    transition: Vec<Vec<f64>>,
    p: usize,
    d: usize,
    preprocessing: &'static dyn Preprocessing,
    seed: u64,
    fit_info: Option<FitInfo>,
}

impl fmt::Debug for DvqModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DvqModel")
            .field("p", &self.p)
            .field("d", &self.d)
            .field("n1", &self.regressor_codebook.unit_count())
            .field("n2", &self.deformation_codebook.unit_count())
            .field("preprocessing", &self.preprocessing.name())
            .field("seed", &self.seed)
            .finish()
    }
}

impl PartialEq for DvqModel {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
            && self.d == other.d
            && self.preprocessing.name() == other.preprocessing.name()
            && self.seed == other.seed
            && self.transition == other.transition
            && self.regressor_codebook == other.regressor_codebook
            && self.deformation_codebook == other.deformation_codebook
    }
}

/// On-disk representation; diagnostics are deliberately dropped.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    p: usize,
    d: usize,
    preprocessing: String,
    seed: u64,
    regressor_codebook: Codebook,
    deformation_codebook: Codebook,
    transition: Vec<Vec<f64>>,
}

impl DvqModel {
    /// Fit both codebooks and the transition matrix on a series.
    ///
    /// The series is preprocessed first; delay windows that touch missing
    /// values are skipped. Fails when fewer training pairs remain than the
    /// larger codebook has units; a pair count under ten times that size is
    /// allowed but logged.
    pub fn fit(
        series: &TimeSeries,
        params: &DvqParams,
        options: &FitOptions,
        seed: u64,
    ) -> Result<DvqModel> {
        params.validate()?;
        let working = params.preprocessing.apply(series)?;
        let regressors = build_regressors(&working, params.p, params.d)?;
        let pairs = build_deformations(&working, params.p, params.d)?;
        let largest = params.n1.max(params.n2);
        if pairs.len() < largest {
            return Err(DvqError::InsufficientData(format!(
                "{} training pairs for codebooks of up to {} units",
                pairs.len(),
                largest
            )));
        }
        if pairs.len() < 10 * largest {
            warn!(
                "only {} training pairs for codebooks of up to {} units; estimates will be coarse",
                pairs.len(),
                largest
            );
        }

        let reg_data: Vec<Vec<f64>> = regressors.iter().map(|r| r.components.clone()).collect();
        let def_data: Vec<Vec<f64>> = pairs.iter().map(|(_, d)| d.components.clone()).collect();

        let reg_schedule = options
            .regressor_schedule
            .clone()
            .unwrap_or_else(|| TrainSchedule::standard(params.n1));
        let def_schedule = options
            .deformation_schedule
            .clone()
            .unwrap_or_else(|| TrainSchedule::standard(params.n2));
        let regressor_codebook = som::train(
            &reg_data,
            params.n1,
            &reg_schedule,
            derive_seed(seed, &[stream::REGRESSOR_SOM]),
        )?;
        let deformation_codebook = som::train(
            &def_data,
            params.n2,
            &def_schedule,
            derive_seed(seed, &[stream::DEFORMATION_SOM]),
        )?;

        let mut counts = vec![vec![0u64; params.n2]; params.n1];
        let mut pair_classes = Vec::with_capacity(pairs.len());
        for (reg, def) in &pairs {
            let i = regressor_codebook.best_matching_unit(&reg.components)?;
            let j = deformation_codebook.best_matching_unit(&def.components)?;
            counts[i][j] += 1;
            pair_classes.push((i, j));
        }
        let mut transition = Vec::with_capacity(params.n1);
        let mut empty_rows = Vec::new();
        for (i, row) in counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            if total == 0 {
                empty_rows.push(i);
                transition.push(vec![1.0 / params.n2 as f64; params.n2]);
            } else {
                transition.push(row.iter().map(|&c| c as f64 / total as f64).collect());
            }
        }
        if !empty_rows.is_empty() {
            warn!(
                "{} of {} regressor classes captured no training pair; their rows fall back to uniform",
                empty_rows.len(),
                params.n1
            );
        }

        Ok(DvqModel {
            fit_info: Some(FitInfo {
                regressor_count: reg_data.len(),
                pair_count: pairs.len(),
                pair_classes,
                empty_rows,
                regressor_qe: regressor_codebook.meta().quantization_error,
                deformation_qe: deformation_codebook.meta().quantization_error,
            }),
            regressor_codebook,
            deformation_codebook,
            transition,
            p: params.p,
            d: params.d,
            preprocessing: params.preprocessing,
            seed,
        })
    }

    /// Assemble a model from existing parts, validating consistency.
    pub fn from_parts(
        regressor_codebook: Codebook,
        deformation_codebook: Codebook,
        transition: Vec<Vec<f64>>,
        p: usize,
        d: usize,
        preprocessing: &'static dyn Preprocessing,
        seed: u64,
    ) -> Result<DvqModel> {
        if p == 0 || d == 0 {
            return Err(DvqError::InvalidInput("p and d must be >= 1".into()));
        }
        let m = window_len(p, d);
        regressor_codebook.validate()?;
        deformation_codebook.validate()?;
        if regressor_codebook.input_dim() != m {
            return Err(DvqError::DimensionMismatch(format!(
                "regressor codebook dimension {} does not match window length {m}",
                regressor_codebook.input_dim()
            )));
        }
        if deformation_codebook.input_dim() != m {
            return Err(DvqError::DimensionMismatch(format!(
                "deformation codebook dimension {} does not match window length {m}",
                deformation_codebook.input_dim()
            )));
        }
        let (n1, n2) = (
            regressor_codebook.unit_count(),
            deformation_codebook.unit_count(),
        );
        if transition.len() != n1 {
            return Err(DvqError::DimensionMismatch(format!(
                "transition matrix has {} rows but the regressor codebook has {n1} units",
                transition.len()
            )));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != n2 {
                return Err(DvqError::DimensionMismatch(format!(
                    "transition row {} has {} entries but the deformation codebook has {n2} units",
                    i + 1,
                    row.len()
                )));
            }
            if row.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(DvqError::ModelFormat(format!(
                    "transition row {} contains negative or non-finite entries",
                    i + 1
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(DvqError::ModelFormat(format!(
                    "transition row {} sums to {sum}, expected 1",
                    i + 1
                )));
            }
        }
        Ok(DvqModel {
            regressor_codebook,
            deformation_codebook,
            transition,
            p,
            d,
            preprocessing,
            seed,
            fit_info: None,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Delay-window length `p + d - 1`.
    pub fn window_len(&self) -> usize {
        window_len(self.p, self.d)
    }

    pub fn n1(&self) -> usize {
        self.regressor_codebook.unit_count()
    }

    pub fn n2(&self) -> usize {
        self.deformation_codebook.unit_count()
    }

    pub fn preprocessing(&self) -> &'static dyn Preprocessing {
        self.preprocessing
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn regressor_codebook(&self) -> &Codebook {
        &self.regressor_codebook
    }

    pub fn deformation_codebook(&self) -> &Codebook {
        &self.deformation_codebook
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn fit_info(&self) -> Option<&FitInfo> {
        self.fit_info.as_ref()
    }

    /// Draw a deformation class from the transition row of `regressor_class`
    /// by inverting the cumulative distribution left to right.
    pub fn sample_deformation_class<R: Rng>(&self, regressor_class: usize, rng: &mut R) -> usize {
        let row = &self.transition[regressor_class];
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        for (j, &prob) in row.iter().enumerate() {
            cumulative += prob;
            if u < cumulative {
                return j;
            }
        }
        row.len() - 1 // guards rounding shortfall in the cumulative sum
    }

    /// One stochastic prediction step: classify `window`, draw a deformation
    /// class, and add its prototype component-wise. Returns the predicted
    /// next window.
    pub fn predict_step<R: Rng>(&self, window: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let k = self.regressor_codebook.best_matching_unit(window)?;
        let l = self.sample_deformation_class(k, rng);
        let proto = self.deformation_codebook.prototype(l);
        Ok(window.iter().zip(proto).map(|(x, y)| x + y).collect())
    }

    /// The `d` genuinely new values in a predicted window.
    pub fn new_values<'a>(&self, predicted: &'a [f64]) -> &'a [f64] {
        &predicted[predicted.len() - self.d..]
    }

    fn simulate_steps<R: Rng>(
        &self,
        seed_window: &[f64],
        steps: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut window = seed_window.to_vec();
        let mut out = Vec::with_capacity(steps * self.d);
        for _ in 0..steps {
            let predicted = self.predict_step(&window, rng)?;
            out.extend_from_slice(self.new_values(&predicted));
            window.drain(..self.d);
            window.extend_from_slice(self.new_values(&predicted));
        }
        Ok(out)
    }

    /// Simulate one trajectory of `horizon` values (in the model's working
    /// scale) from a seed window, chaining steps as dictated by `strategy`.
    pub fn simulate<R: Rng>(
        &self,
        seed_window: &[f64],
        horizon: usize,
        strat: &dyn ForecastStrategy,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if seed_window.len() != self.window_len() {
            return Err(DvqError::DimensionMismatch(format!(
                "seed window has length {} but the model needs {}",
                seed_window.len(),
                self.window_len()
            )));
        }
        let steps = strat.steps(horizon, self.d)?;
        self.simulate_steps(seed_window, steps, rng)
    }

    #[allow(clippy::too_many_arguments)]
    fn ensemble_from_trajectories(
        &self,
        seed_window: &[f64],
        anchor: f64,
        steps: usize,
        count: usize,
        strategy_name: &str,
        n_sims: usize,
        seed: u64,
        quantile_levels: &[f64],
    ) -> Result<ForecastEnsemble> {
        if n_sims == 0 {
            return Err(DvqError::InvalidInput(
                "simulation count must be >= 1".into(),
            ));
        }
        for &q in quantile_levels {
            if !(0.0..=1.0).contains(&q) {
                return Err(DvqError::InvalidInput(format!(
                    "quantile level {q} is outside [0, 1]"
                )));
            }
        }
        let trajectories: Vec<Vec<f64>> = (0..n_sims)
            .into_par_iter()
            .map(|i| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stream::TRAJECTORY, i as u64]));
                let mut scalars = self.simulate_steps(seed_window, steps, &mut rng)?;
                scalars.truncate(count);
                Ok(self.preprocessing.invert_trajectory(anchor, &scalars))
            })
            .collect::<Result<_>>()?;

        let mut mean = vec![0.0; count];
        let mut std = vec![0.0; count];
        for t in 0..count {
            let mut sum = 0.0;
            for traj in &trajectories {
                sum += traj[t];
            }
            let mu = sum / n_sims as f64;
            let mut ss = 0.0;
            for traj in &trajectories {
                let e = traj[t] - mu;
                ss += e * e;
            }
            mean[t] = mu;
            std[t] = (ss / n_sims as f64).sqrt();
        }
        let mut quantiles = Vec::with_capacity(quantile_levels.len());
        for &q in quantile_levels {
            let mut per_step = Vec::with_capacity(count);
            for t in 0..count {
                let mut column: Vec<f64> = trajectories.iter().map(|traj| traj[t]).collect();
                column.sort_by(|a, b| a.partial_cmp(b).expect("trajectories are finite"));
                per_step.push(interpolated_quantile(&column, q));
            }
            quantiles.push(per_step);
        }
        Ok(ForecastEnsemble {
            horizon: count,
            strategy: strategy_name.to_string(),
            trajectories,
            mean,
            std,
            quantile_levels: quantile_levels.to_vec(),
            quantiles,
            seed,
        })
    }

    /// Monte-Carlo forecast from an explicit seed window.
    ///
    /// `anchor` is the last original-scale value before the forecast; each
    /// trajectory is simulated in the working scale, inverted onto the
    /// original scale, and the ensemble statistics are computed there.
    /// Trajectory `i` always uses the same derived seed, so results are
    /// independent of thread count and simulation order.
    #[allow(clippy::too_many_arguments)]
    pub fn monte_carlo(
        &self,
        seed_window: &[f64],
        anchor: f64,
        horizon: usize,
        strat: &dyn ForecastStrategy,
        n_sims: usize,
        seed: u64,
        quantile_levels: &[f64],
    ) -> Result<ForecastEnsemble> {
        if seed_window.len() != self.window_len() {
            return Err(DvqError::DimensionMismatch(format!(
                "seed window has length {} but the model needs {}",
                seed_window.len(),
                self.window_len()
            )));
        }
        if seed_window.iter().any(|v| !v.is_finite()) {
            return Err(DvqError::InvalidInput(
                "seed window contains a non-finite value".into(),
            ));
        }
        if !anchor.is_finite() {
            return Err(DvqError::InvalidInput("anchor value is not finite".into()));
        }
        let steps = strat.steps(horizon, self.d)?;
        self.ensemble_from_trajectories(
            seed_window,
            anchor,
            steps,
            horizon,
            strat.name(),
            n_sims,
            seed,
            quantile_levels,
        )
    }

    /// Build the simulation state for a forecast starting at position
    /// `start`: the working-scale seed window and the original-scale anchor
    /// value.
    ///
    /// The value immediately before `start` must be known (it anchors the
    /// inverse transform); the seed window gathers the last `p + d - 1`
    /// known working-scale values, skipping over interior gaps.
    pub fn seed_state(&self, series: &TimeSeries, start: usize) -> Result<(Vec<f64>, f64)> {
        if start > series.len() {
            return Err(DvqError::InvalidInput(format!(
                "forecast start {} is beyond the series end {}",
                start + 1,
                series.len()
            )));
        }
        if start == 0 {
            return Err(DvqError::Unfillable(
                "no known values before the forecast start".into(),
            ));
        }
        if !series.is_known(start - 1) {
            return Err(DvqError::Unfillable(format!(
                "value at position {start} (immediately before the forecast) is missing"
            )));
        }
        let anchor = series.values()[start - 1];
        let working = self.preprocessing.apply(series)?;
        // Entry t of the working series reads originals t ..= t + lag, so
        // entries strictly before start - lag are computed from known data
        // only up to position start - 1.
        let lag = self.preprocessing.lag();
        let limit = start - lag; // start >= 1 and lag <= 1, so this is safe
        let m = self.window_len();
        let mut seed_window = Vec::with_capacity(m);
        for idx in (0..limit).rev() {
            if let Some(v) = working.get(idx) {
                seed_window.push(v);
                if seed_window.len() == m {
                    break;
                }
            }
        }
        if seed_window.len() < m {
            return Err(DvqError::Unfillable(format!(
                "only {} usable values before position {}; the model needs {m}",
                seed_window.len(),
                start + 1
            )));
        }
        seed_window.reverse();
        Ok((seed_window, anchor))
    }

    /// Monte-Carlo forecast of `count` values for positions
    /// `start .. start + count` of `series`, seeding the window from the
    /// known values before `start` (see [`DvqModel::seed_state`]). When `d`
    /// does not divide `count`, enough whole steps are simulated and the
    /// surplus is dropped.
    pub fn forecast_span(
        &self,
        series: &TimeSeries,
        start: usize,
        count: usize,
        n_sims: usize,
        seed: u64,
        quantile_levels: &[f64],
    ) -> Result<ForecastEnsemble> {
        if count == 0 {
            return Err(DvqError::InvalidInput("forecast count must be >= 1".into()));
        }
        let (seed_window, anchor) = self.seed_state(series, start)?;
        let steps = count.div_ceil(self.d);
        self.ensemble_from_trajectories(
            &seed_window,
            anchor,
            steps,
            count,
            strategy::natural_name(count, self.d),
            n_sims,
            seed,
            quantile_levels,
        )
    }

    /// Serialize to versioned JSON.
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            p: self.p,
            d: self.d,
            preprocessing: self.preprocessing.name().to_string(),
            seed: self.seed,
            regressor_codebook: self.regressor_codebook.clone(),
            deformation_codebook: self.deformation_codebook.clone(),
            transition: self.transition.clone(),
        };
        serde_json::to_string_pretty(&file)
            .map_err(|e| DvqError::ModelFormat(format!("serialization failed: {e}")))
    }

    /// Parse a model from JSON, rejecting unknown format versions and
    /// structurally inconsistent content.
    pub fn from_json(text: &str) -> Result<DvqModel> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| DvqError::ModelFormat(format!("cannot parse model JSON: {e}")))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(DvqError::ModelFormat(format!(
                "model format version {} is not supported (this build reads version {})",
                file.format_version, MODEL_FORMAT_VERSION
            )));
        }
        let preprocessing = preprocess::by_name(&file.preprocessing)?;
        let mut model = DvqModel::from_parts(
            file.regressor_codebook,
            file.deformation_codebook,
            file.transition,
            file.p,
            file.d,
            preprocessing,
            file.seed,
        )?;
        model.fit_info = None;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|source| DvqError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<DvqModel> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DvqError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Interpolated quantile (linear between order statistics) of sorted data.
fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// A Monte-Carlo forecast: all trajectories plus pointwise statistics, on
/// the original scale of the series.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastEnsemble {
    /// Number of forecast values per trajectory.
    pub horizon: usize,
    /// Name of the strategy that shaped the simulation.
    pub strategy: String,
    pub trajectories: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Pointwise population standard deviation.
    pub std: Vec<f64>,
    pub quantile_levels: Vec<f64>,
    /// One row per quantile level, `horizon` values each.
    pub quantiles: Vec<Vec<f64>>,
    /// Master seed the trajectory seeds were derived from.
    pub seed: u64,
}

impl ForecastEnsemble {
    /// Render per-step statistics as CSV: `step,mean,std,q<level>...` with
    /// 1-based steps.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("step,mean,std");
        for q in &self.quantile_levels {
            let _ = write!(out, ",q{q}");
        }
        out.push('\n');
        for t in 0..self.horizon {
            let _ = write!(out, "{},{},{}", t + 1, self.mean[t], self.std[t]);
            for row in &self.quantiles {
                let _ = write!(out, ",{}", row[t]);
            }
            out.push('\n');
        }
        out
    }
}
