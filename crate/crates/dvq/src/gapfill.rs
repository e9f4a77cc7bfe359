//! Filling missing stretches by forecasting into them from both sides.
//!
//! An interior gap of length `h` is predicted forward from the values before
//! it and backward from the values after it (by forecasting on the reversed
//! series). Each direction simulates `h + 1` values so the last one lands on
//! a known neighbour of the gap; a linear drift correction then spreads the
//! overshoot at that known value across the horizon, pinning the final
//! predicted value to the truth. The fill is the average of the two
//! corrected directions. A terminal gap (nothing known after it) is filled
//! by the raw forward ensemble mean alone.

use log::warn;
use serde::Serialize;

use crate::error::{DvqError, Result};
use crate::model::{DvqModel, DvqParams, FitOptions};
use crate::seeding::{derive_seed, stream};
use crate::selection::{mse, GapSet};
use crate::series::{Gap, TimeSeries};

/// Reverse the time axis, keeping the missing-value mask aligned.
pub fn reverse_series(series: &TimeSeries) -> TimeSeries {
    let mut values: Vec<f64> = series.values().to_vec();
    let mut known: Vec<bool> = series.known().to_vec();
    values.reverse();
    known.reverse();
    TimeSeries::from_parts(series.name(), values, known)
        .expect("a valid series stays valid under reversal")
}

/// Spread the prediction error observed at a known endpoint linearly across
/// the horizon.
///
/// `trajectory` holds `h + 1` predicted values where the last one aligns
/// with the known `true_value`. Entry `k` receives `(k + 1) / (h + 1)` of
/// the endpoint error; the last entry is set to `true_value` itself.
pub fn linear_correction(trajectory: &[f64], true_value: f64) -> Result<Vec<f64>> {
    if trajectory.len() < 2 {
        return Err(DvqError::InvalidInput(
            "correction needs at least two predicted values".into(),
        ));
    }
    if !true_value.is_finite() || trajectory.iter().any(|v| !v.is_finite()) {
        return Err(DvqError::InvalidInput(
            "correction values must be finite".into(),
        ));
    }
    let h_plus_1 = trajectory.len() as f64;
    let error = true_value - trajectory[trajectory.len() - 1];
    let mut corrected: Vec<f64> = trajectory
        .iter()
        .enumerate()
        .map(|(k, &v)| v + ((k + 1) as f64 * error) / h_plus_1)
        .collect();
    let last = corrected.len() - 1;
    corrected[last] = true_value;
    Ok(corrected)
}

/// Which directions contributed a corrected prediction to a fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorrectionFlags {
    pub forward: bool,
    pub backward: bool,
}

/// Everything predicted for one gap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapPrediction {
    pub gap: Gap,
    /// Raw forward ensemble mean over the gap.
    pub forward_mean: Vec<f64>,
    /// Raw backward ensemble mean in chronological order, when available.
    pub backward_mean: Option<Vec<f64>>,
    /// Forward mean after drift correction, when the right edge is known.
    pub forward_corrected: Option<Vec<f64>>,
    /// Backward mean after drift correction, in chronological order.
    pub backward_corrected: Option<Vec<f64>>,
    /// The values written into the series.
    pub filled: Vec<f64>,
    pub correction: CorrectionFlags,
}

/// Controls for gap filling.
#[derive(Debug, Clone)]
pub struct FillOptions {
    /// Monte-Carlo simulations per direction.
    pub n_sims: usize,
}

impl Default for FillOptions {
    fn default() -> Self {
        FillOptions { n_sims: 100 }
    }
}

fn check_maximal_run(series: &TimeSeries, gap: &Gap) -> Result<()> {
    if gap.len == 0 || gap.end() > series.len() {
        return Err(DvqError::InvalidInput(format!(
            "gap {}..{} does not fit the series",
            gap.start + 1,
            gap.end()
        )));
    }
    for i in gap.start..gap.end() {
        if series.is_known(i) {
            return Err(DvqError::InvalidInput(format!(
                "position {} inside the gap is not missing",
                i + 1
            )));
        }
    }
    if gap.start > 0 && !series.is_known(gap.start - 1) {
        return Err(DvqError::InvalidInput(format!(
            "gap starting at position {} is not a maximal missing run",
            gap.start + 1
        )));
    }
    if gap.end() < series.len() && !series.is_known(gap.end()) {
        return Err(DvqError::InvalidInput(format!(
            "gap ending at position {} is not a maximal missing run",
            gap.end()
        )));
    }
    Ok(())
}

/// Fill one maximal missing run.
///
/// The forward model must be able to seed from the values before the gap.
/// A backward model is used when the right edge of the gap is known; pass
/// the forward model itself to reuse it on the reversed series, or a model
/// fitted on the reversed series for the dedicated variant. If backward
/// seeding fails (e.g. too few known values after the gap), the fill falls
/// back to the corrected forward prediction alone.
pub fn fill_gap(
    series: &TimeSeries,
    gap: Gap,
    forward: &DvqModel,
    backward: Option<&DvqModel>,
    options: &FillOptions,
    seed: u64,
) -> Result<GapPrediction> {
    check_maximal_run(series, &gap)?;
    let h = gap.len;
    let right_known = gap.end() < series.len();
    let forward_seed = derive_seed(seed, &[stream::FILL_FORWARD]);
    let backward_seed = derive_seed(seed, &[stream::FILL_BACKWARD]);

    let (forward_mean, forward_corrected) = if right_known {
        let ens =
            forward.forecast_span(series, gap.start, h + 1, options.n_sims, forward_seed, &[])?;
        let truth = series.values()[gap.end()];
        let corrected = linear_correction(&ens.mean, truth)?;
        (ens.mean[..h].to_vec(), Some(corrected[..h].to_vec()))
    } else {
        let ens = forward.forecast_span(series, gap.start, h, options.n_sims, forward_seed, &[])?;
        (ens.mean, None)
    };

    let (backward_mean, backward_corrected) = match (right_known, backward) {
        (true, Some(model)) => {
            let reversed = reverse_series(series);
            let rev_start = series.len() - gap.end();
            // In reversed coordinates the value after the gap is the
            // original left neighbour, which anchors the correction.
            match model.forecast_span(
                &reversed,
                rev_start,
                h + 1,
                options.n_sims,
                backward_seed,
                &[],
            ) {
                Ok(ens) => {
                    let truth = series.values()[gap.start - 1];
                    let corrected = linear_correction(&ens.mean, truth)?;
                    let mut mean: Vec<f64> = ens.mean[..h].to_vec();
                    let mut corr: Vec<f64> = corrected[..h].to_vec();
                    mean.reverse();
                    corr.reverse();
                    (Some(mean), Some(corr))
                }
                Err(e @ (DvqError::Unfillable(_) | DvqError::InsufficientData(_))) => {
                    warn!(
                        "backward prediction unavailable for gap at position {}: {e}",
                        gap.start + 1
                    );
                    (None, None)
                }
                Err(e) => return Err(e),
            }
        }
        _ => (None, None),
    };

    let filled = match (&forward_corrected, &backward_corrected) {
        (Some(f), Some(b)) => f.iter().zip(b).map(|(a, b)| (a + b) / 2.0).collect(),
        (Some(f), None) => f.clone(),
        (None, _) => forward_mean.clone(),
    };
    Ok(GapPrediction {
        gap,
        correction: CorrectionFlags {
            forward: forward_corrected.is_some(),
            backward: backward_corrected.is_some(),
        },
        forward_mean,
        backward_mean,
        forward_corrected,
        backward_corrected,
        filled,
    })
}

/// Fill every maximal missing run of the series.
///
/// Gaps are treated independently: each fill forecasts over the original
/// punched series, never over another gap's filled values. Returns the
/// completed series and the per-gap predictions; a series without gaps
/// comes back unchanged.
pub fn fill_series(
    series: &TimeSeries,
    forward: &DvqModel,
    backward: Option<&DvqModel>,
    options: &FillOptions,
    seed: u64,
) -> Result<(TimeSeries, Vec<GapPrediction>)> {
    let gaps = series.gaps();
    let mut completed = series.clone();
    let mut predictions = Vec::with_capacity(gaps.len());
    for (gi, gap) in gaps.into_iter().enumerate() {
        let prediction = fill_gap(
            series,
            gap,
            forward,
            backward,
            options,
            derive_seed(seed, &[gi as u64]),
        )?;
        completed = completed.with_filled(gap, &prediction.filled)?;
        predictions.push(prediction);
    }
    Ok((completed, predictions))
}

/// Fit `restarts` models with derived seeds and keep the one whose forecasts
/// score the lowest pooled MSE over the validation gap sets.
///
/// Each gap set contributes the mean squared error over all of its gap
/// positions (predicted forward from the values before each gap); a model's
/// score is the mean over the gap sets. With a single restart no scoring
/// happens. The series itself is not punched: the validation gaps cover
/// known values that the forecasts try to reproduce.
pub fn fit_with_restarts(
    series: &TimeSeries,
    params: &DvqParams,
    options: &FitOptions,
    restarts: usize,
    gapsets: &[GapSet],
    eval_sims: usize,
    seed: u64,
) -> Result<DvqModel> {
    if restarts == 0 {
        return Err(DvqError::InvalidInput("restart count must be >= 1".into()));
    }
    if restarts == 1 {
        return DvqModel::fit(
            series,
            params,
            options,
            derive_seed(seed, &[stream::RESTART, 0]),
        );
    }
    if gapsets.is_empty() {
        return Err(DvqError::InvalidInput(
            "restart selection needs at least one validation gap set".into(),
        ));
    }
    let mut best: Option<(f64, DvqModel)> = None;
    for r in 0..restarts {
        let model = DvqModel::fit(
            series,
            params,
            options,
            derive_seed(seed, &[stream::RESTART, r as u64]),
        )?;
        let mut set_scores = Vec::with_capacity(gapsets.len());
        for (si, gapset) in gapsets.iter().enumerate() {
            let mut predictions = Vec::new();
            let mut targets = Vec::new();
            for (gi, gap) in gapset.gaps.iter().enumerate() {
                let span_seed =
                    derive_seed(seed, &[stream::RESTART, r as u64, si as u64, gi as u64]);
                let ens =
                    model.forecast_span(series, gap.start, gap.len, eval_sims, span_seed, &[])?;
                for (offset, value) in ens.mean.iter().enumerate() {
                    let idx = gap.start + offset;
                    let truth = series.get(idx).ok_or_else(|| {
                        DvqError::InvalidInput(format!(
                            "validation position {} is missing in the series",
                            idx + 1
                        ))
                    })?;
                    predictions.push(*value);
                    targets.push(truth);
                }
            }
            set_scores.push(mse(&predictions, &targets)?);
        }
        let score = set_scores.iter().sum::<f64>() / set_scores.len() as f64;
        match &best {
            Some((s, _)) if *s <= score => {}
            _ => best = Some((score, model)),
        }
    }
    Ok(best.expect("at least one restart ran").1)
}

/// Render gap predictions as CSV, one row per filled position.
pub fn gap_predictions_csv(predictions: &[GapPrediction]) -> String {
    use std::fmt::Write as _;
    let mut out = String::from(
        "gap,position,filled,forward_mean,forward_corrected,backward_mean,backward_corrected,corrected_forward,corrected_backward\n",
    );
    for (gi, p) in predictions.iter().enumerate() {
        for offset in 0..p.gap.len {
            let opt = |v: &Option<Vec<f64>>| {
                v.as_ref()
                    .map(|v| v[offset].to_string())
                    .unwrap_or_default()
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                gi + 1,
                p.gap.start + offset + 1,
                p.filled[offset],
                p.forward_mean[offset],
                opt(&p.forward_corrected),
                opt(&p.backward_mean),
                opt(&p.backward_corrected),
                p.correction.forward,
                p.correction.backward,
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::by_name;
    use crate::selection::generate_gaps;

    fn line_series(n: usize) -> TimeSeries {
        TimeSeries::new("line", (0..n).map(|t| 3.0 * t as f64).collect()).unwrap()
    }

    fn line_model(series: &TimeSeries) -> DvqModel {
        let params = DvqParams {
            p: 2,
            d: 1,
            n1: 1,
            n2: 1,
            preprocessing: by_name("difference").unwrap(),
        };
        DvqModel::fit(series, &params, &FitOptions::default(), 7).unwrap()
    }

    #[test]
    fn reversal_is_an_involution() {
        let s = TimeSeries::from_options("t", vec![Some(1.0), None, Some(3.0), Some(4.0)]).unwrap();
        let r = reverse_series(&s);
        assert_eq!(r.get(0), Some(4.0));
        assert_eq!(r.get(2), None);
        assert_eq!(reverse_series(&r), s);
    }

    #[test]
    fn correction_pins_the_endpoint_exactly() {
        let corrected = linear_correction(&[10.0, 20.0, 30.0], 27.0).unwrap();
        assert_eq!(corrected, vec![9.0, 18.0, 27.0]);
        // The endpoint is the true value, bit for bit, however awkward the
        // arithmetic.
        let awkward = linear_correction(&[0.1, 0.2, 0.3, 0.4], 0.30000000000000004).unwrap();
        assert_eq!(awkward[3], 0.30000000000000004);
    }

    #[test]
    fn correction_distributes_error_linearly() {
        // Predictions overshoot by exactly k+1 at each step; a final error
        // of -(h+1) removes k+1 from step k.
        let h = 20usize;
        let truth: Vec<f64> = (1..=h + 1).map(|k| k as f64).collect();
        let predicted: Vec<f64> = truth
            .iter()
            .enumerate()
            .map(|(k, v)| v + (k + 1) as f64)
            .collect();
        let corrected = linear_correction(&predicted, truth[h]).unwrap();
        assert_eq!(corrected, truth);
    }

    #[test]
    fn correction_validates_input() {
        assert!(linear_correction(&[1.0], 1.0).is_err());
        assert!(linear_correction(&[1.0, f64::NAN], 1.0).is_err());
        assert!(linear_correction(&[1.0, 2.0], f64::INFINITY).is_err());
    }

    #[test]
    fn interior_gap_on_a_line_is_filled_exactly() {
        let full = line_series(200);
        let gap = Gap::new(80, 6);
        let punched = full.with_gaps(&[gap]).unwrap();
        let model = line_model(&punched);
        let prediction = fill_gap(
            &punched,
            gap,
            &model,
            Some(&model),
            &FillOptions::default(),
            3,
        )
        .unwrap();
        let expected: Vec<f64> = (80..86).map(|t| 3.0 * t as f64).collect();
        assert_eq!(prediction.filled, expected);
        assert!(prediction.correction.forward);
        assert!(prediction.correction.backward);
        assert_eq!(prediction.forward_mean.len(), 6);
        assert_eq!(prediction.backward_mean.as_ref().unwrap().len(), 6);
        // Both corrected directions agree on a perfectly predictable series.
        assert_eq!(prediction.forward_corrected.unwrap(), expected);
        assert_eq!(prediction.backward_corrected.unwrap(), expected);
    }

    #[test]
    fn terminal_gap_uses_forward_only() {
        let full = line_series(120);
        let gap = Gap::new(114, 6);
        let punched = full.with_gaps(&[gap]).unwrap();
        let model = line_model(&punched);
        let prediction = fill_gap(
            &punched,
            gap,
            &model,
            Some(&model),
            &FillOptions::default(),
            3,
        )
        .unwrap();
        assert_eq!(
            prediction.correction,
            CorrectionFlags {
                forward: false,
                backward: false
            }
        );
        assert!(prediction.backward_mean.is_none());
        assert!(prediction.forward_corrected.is_none());
        let expected: Vec<f64> = (114..120).map(|t| 3.0 * t as f64).collect();
        assert_eq!(prediction.filled, expected);
    }

    #[test]
    fn missing_backward_model_means_forward_fill() {
        let full = line_series(150);
        let gap = Gap::new(60, 5);
        let punched = full.with_gaps(&[gap]).unwrap();
        let model = line_model(&punched);
        let prediction = fill_gap(&punched, gap, &model, None, &FillOptions::default(), 1).unwrap();
        assert!(prediction.correction.forward);
        assert!(!prediction.correction.backward);
        assert!(prediction.backward_mean.is_none());
        assert_eq!(
            prediction.filled,
            (60..65).map(|t| 3.0 * t as f64).collect::<Vec<_>>()
        );
    }

    #[test]
    fn non_maximal_gaps_are_rejected() {
        let punched = line_series(100).with_gaps(&[Gap::new(40, 6)]).unwrap();
        let model = line_model(&punched);
        for bad in [
            Gap::new(41, 5),
            Gap::new(40, 5),
            Gap::new(39, 7),
            Gap::new(10, 3),
        ] {
            assert!(
                matches!(
                    fill_gap(&punched, bad, &model, None, &FillOptions::default(), 0),
                    Err(DvqError::InvalidInput(_))
                ),
                "{bad:?} should be rejected"
            );
        }
    }

    #[test]
    fn fill_series_completes_every_gap() {
        let full = line_series(300);
        let gaps = [Gap::new(50, 5), Gap::new(120, 8), Gap::new(294, 6)];
        let punched = full.with_gaps(&gaps).unwrap();
        let model = line_model(&punched);
        let (completed, predictions) =
            fill_series(&punched, &model, Some(&model), &FillOptions::default(), 9).unwrap();
        assert_eq!(predictions.len(), 3);
        assert!(completed.gaps().is_empty());
        assert_eq!(completed.values(), full.values());
        // The last gap is terminal: forward fill only.
        assert!(!predictions[2].correction.backward);
        assert!(predictions[1].correction.backward);
    }

    #[test]
    fn fill_series_without_gaps_is_identity() {
        let full = line_series(80);
        let model = line_model(&full);
        let (completed, predictions) =
            fill_series(&full, &model, None, &FillOptions::default(), 0).unwrap();
        assert_eq!(completed, full);
        assert!(predictions.is_empty());
    }

    #[test]
    fn restart_selection_is_deterministic() {
        let values: Vec<f64> = (0..400).map(|t| (t as f64 * 0.11).sin() * 2.0).collect();
        let series = TimeSeries::new("sine", values).unwrap();
        let params = DvqParams {
            p: 3,
            d: 1,
            n1: 4,
            n2: 3,
            preprocessing: by_name("none").unwrap(),
        };
        let gapsets = vec![
            generate_gaps(series.len(), &[], 3, 5, 3, 1).unwrap(),
            generate_gaps(series.len(), &[], 3, 5, 3, 2).unwrap(),
        ];
        let a = fit_with_restarts(&series, &params, &FitOptions::default(), 3, &gapsets, 4, 11)
            .unwrap();
        let b = fit_with_restarts(&series, &params, &FitOptions::default(), 3, &gapsets, 4, 11)
            .unwrap();
        assert_eq!(a, b);
        let single =
            fit_with_restarts(&series, &params, &FitOptions::default(), 1, &[], 4, 11).unwrap();
        assert_eq!(
            single,
            DvqModel::fit(
                &series,
                &params,
                &FitOptions::default(),
                derive_seed(11, &[stream::RESTART, 0])
            )
            .unwrap()
        );
    }

    #[test]
    fn restarts_require_validation_sets() {
        let series = line_series(100);
        let params = DvqParams {
            p: 2,
            d: 1,
            n1: 1,
            n2: 1,
            preprocessing: by_name("none").unwrap(),
        };
        assert!(matches!(
            fit_with_restarts(&series, &params, &FitOptions::default(), 3, &[], 4, 0),
            Err(DvqError::InvalidInput(_))
        ));
        assert!(matches!(
            fit_with_restarts(&series, &params, &FitOptions::default(), 0, &[], 4, 0),
            Err(DvqError::InvalidInput(_))
        ));
    }

    #[test]
    fn csv_lists_every_filled_position() {
        let full = line_series(100);
        let gap = Gap::new(30, 4);
        let punched = full.with_gaps(&[gap]).unwrap();
        let model = line_model(&punched);
        let (_, predictions) =
            fill_series(&punched, &model, Some(&model), &FillOptions::default(), 5).unwrap();
        let csv = gap_predictions_csv(&predictions);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 4);
        assert!(lines[0].starts_with("gap,position,filled"));
        assert!(lines[1].starts_with("1,31,90,")); // 1-based position 31, value 3*30
        assert!(lines[1].ends_with("true,true"));
    }
}
