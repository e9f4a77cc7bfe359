//! Correlation-dimension analysis for choosing the regressor size.
//!
//! The correlation integral `C(r)` is the fraction of point pairs within
//! distance `r`. Its log-log slope over the scaling region estimates the
//! correlation dimension; repeating the estimate for growing embedding
//! dimensions and watching the slope saturate yields the intrinsic
//! dimension and, through the embedding theorem, a recommended regressor
//! size `p = ceil(2 D + 1)`.
//!
//! Pair counting is exact: pairs are binned into integer histograms that
//! are summed over threads, so results do not depend on the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DvqError, Result};
use crate::seeding::{derive_seed, stream};
use crate::series::{build_regressors, TimeSeries};

/// Correlation counts for one embedding dimension over a radius grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCurve {
    /// Embedding dimension the points were built with.
    pub embedding_dim: usize,
    /// Strictly increasing radii.
    pub radii: Vec<f64>,
    /// Number of pairs with distance `<= radii[k]`.
    pub counts: Vec<u64>,
    /// Total number of distinct pairs, `n (n - 1) / 2`.
    pub total_pairs: u64,
}

impl CorrelationCurve {
    /// `C(radii[k])`: the fraction of pairs within the radius.
    pub fn correlation(&self, k: usize) -> f64 {
        self.counts[k] as f64 / self.total_pairs as f64
    }

    /// `(ln r, ln C)` for every radius with a nonzero count, requiring at
    /// least `min_count` pairs.
    pub fn log_points(&self, min_count: u64) -> Vec<(f64, f64)> {
        let floor = min_count.max(1);
        self.radii
            .iter()
            .zip(&self.counts)
            .filter(|(_, &c)| c >= floor)
            .map(|(&r, &c)| (r.ln(), (c as f64 / self.total_pairs as f64).ln()))
            .collect()
    }
}

/// Least-squares slope of the correlation curve over a `ln r` window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionEstimate {
    pub embedding_dim: usize,
    /// Fitted log-log slope: the correlation dimension estimate.
    pub dimension: f64,
    /// `ln r` bounds of the points actually used in the fit.
    pub window: (f64, f64),
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    /// Number of curve points in the fit.
    pub points_used: usize,
}

/// Parameters for dimension analysis.
#[derive(Debug, Clone)]
pub struct EmbeddingConfig {
    /// Number of log-spaced radii in the default grid.
    pub radius_count: usize,
    /// Fixed fit window in `ln r`; `None` selects one automatically.
    pub window: Option<(f64, f64)>,
    /// Relative slope variation tolerated inside an automatic window.
    pub slope_tolerance: f64,
    /// Curve points backed by fewer pairs are dropped from automatic fits;
    /// the left tail of the curve is statistically unreliable.
    pub min_pair_count: u64,
    /// Upper bound on points entering the O(n^2) pair scan; larger sets are
    /// subsampled with the run's seed.
    pub max_points: usize,
    pub seed: u64,
}

impl EmbeddingConfig {
    pub fn new(seed: u64) -> Self {
        EmbeddingConfig {
            radius_count: 50,
            window: None,
            slope_tolerance: 0.10,
            min_pair_count: 10,
            max_points: 5000,
            seed,
        }
    }
}

fn validate_points(points: &[Vec<f64>]) -> Result<usize> {
    if points.len() < 2 {
        return Err(DvqError::InsufficientData(
            "correlation analysis needs at least two points".into(),
        ));
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(DvqError::InvalidInput("points have zero dimension".into()));
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(DvqError::DimensionMismatch(format!(
                "point {} has dimension {} but expected {}",
                i + 1,
                p.len(),
                dim
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(DvqError::InvalidInput(format!(
                "point {} contains a non-finite value",
                i + 1
            )));
        }
    }
    Ok(dim)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Log-spaced radius grid from the smallest nonzero pair distance to the
/// largest. Degenerates to a single radius when they coincide; fails with
/// [`DvqError::ZeroSpread`] when every pair distance is zero.
pub fn default_radii(points: &[Vec<f64>], count: usize) -> Result<Vec<f64>> {
    validate_points(points)?;
    if count == 0 {
        return Err(DvqError::InvalidInput("radius count must be >= 1".into()));
    }
    let n = points.len();
    let (min_nz, max) = (0..n)
        .into_par_iter()
        .fold(
            || (f64::INFINITY, 0.0f64),
            |(mut lo, mut hi), i| {
                for j in (i + 1)..n {
                    let d = distance(&points[i], &points[j]);
                    if d > 0.0 && d < lo {
                        lo = d;
                    }
                    if d > hi {
                        hi = d;
                    }
                }
                (lo, hi)
            },
        )
        .reduce(
            || (f64::INFINITY, 0.0f64),
            |a, b| (a.0.min(b.0), a.1.max(b.1)),
        );
    if max == 0.0 {
        return Err(DvqError::ZeroSpread(
            "all pairwise distances are zero; cannot build a radius grid".into(),
        ));
    }
    if min_nz == max || count == 1 {
        return Ok(vec![max]);
    }
    let (ln_lo, ln_hi) = (min_nz.ln(), max.ln());
    let mut radii: Vec<f64> = (0..count)
        .map(|k| (ln_lo + (ln_hi - ln_lo) * k as f64 / (count - 1) as f64).exp())
        .collect();
    // Pin the endpoints so the extreme pairs are counted exactly once the
    // radius reaches them.
    radii[0] = min_nz;
    radii[count - 1] = max;
    Ok(radii)
}

/// Count, for every radius, the pairs of points within that distance.
///
/// The radii must be positive and strictly increasing. Counting distributes
/// pairs into integer histograms per thread and sums them, so the result is
/// identical for any worker count.
pub fn correlation_integral(points: &[Vec<f64>], radii: &[f64]) -> Result<CorrelationCurve> {
    let dim = validate_points(points)?;
    if radii.is_empty() {
        return Err(DvqError::InvalidInput("radius grid is empty".into()));
    }
    for w in radii.windows(2) {
        if w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less) {
            return Err(DvqError::InvalidInput(
                "radii must be strictly increasing".into(),
            ));
        }
    }
    if !radii[0].is_finite() || radii[0] <= 0.0 || !radii[radii.len() - 1].is_finite() {
        return Err(DvqError::InvalidInput(
            "radii must be positive and finite".into(),
        ));
    }
    let n = points.len();
    let bins = radii.len() + 1; // last bin: beyond the largest radius
    let hist = (0..n)
        .into_par_iter()
        .fold(
            || vec![0u64; bins],
            |mut hist, i| {
                let a = &points[i];
                for b in &points[(i + 1)..] {
                    let d = distance(a, b);
                    let idx = radii.partition_point(|&r| r < d);
                    hist[idx] += 1;
                }
                hist
            },
        )
        .reduce(
            || vec![0u64; bins],
            |mut acc, h| {
                for (a, b) in acc.iter_mut().zip(&h) {
                    *a += b;
                }
                acc
            },
        );
    let mut counts = Vec::with_capacity(radii.len());
    let mut running = 0u64;
    for &h in hist.iter().take(radii.len()) {
        running += h;
        counts.push(running);
    }
    Ok(CorrelationCurve {
        embedding_dim: dim,
        radii: radii.to_vec(),
        counts,
        total_pairs: (n as u64) * (n as u64 - 1) / 2,
    })
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut ss = 0.0;
    for (x, y) in points {
        let e = y - (intercept + slope * x);
        ss += e * e;
    }
    (slope, intercept, (ss / n).sqrt())
}

/// Fit the correlation dimension from a curve.
///
/// With a fixed window the slope is fitted over the curve points whose
/// `ln r` falls inside it. Otherwise the widest stretch whose local slopes
/// stay within `slope_tolerance` (relative) of their mean is selected, which
/// targets the linear scaling region between the noisy left tail and the
/// saturated right end.
pub fn fit_dimension(
    curve: &CorrelationCurve,
    config: &EmbeddingConfig,
) -> Result<DimensionEstimate> {
    let estimate = |pts: &[(f64, f64)], lo: usize, hi: usize| -> DimensionEstimate {
        let used = &pts[lo..=hi];
        let (slope, _, residual) = least_squares(used);
        DimensionEstimate {
            embedding_dim: curve.embedding_dim,
            dimension: slope,
            window: (used[0].0, used[used.len() - 1].0),
            residual,
            points_used: used.len(),
        }
    };

    if let Some((lo, hi)) = config.window {
        if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
            return Err(DvqError::InvalidInput(
                "fit window must have lo < hi".into(),
            ));
        }
        let pts: Vec<(f64, f64)> = curve
            .log_points(1)
            .into_iter()
            .filter(|(x, _)| *x >= lo && *x <= hi)
            .collect();
        if pts.len() < 2 {
            return Err(DvqError::InsufficientData(format!(
                "fit window [{lo}, {hi}] contains {} curve points; need at least 2",
                pts.len()
            )));
        }
        return Ok(estimate(&pts, 0, pts.len() - 1));
    }

    let pts = curve.log_points(config.min_pair_count);
    if pts.len() < 3 {
        return Err(DvqError::InsufficientData(format!(
            "curve has {} usable points; need at least 3 for automatic window selection",
            pts.len()
        )));
    }
    let slopes: Vec<f64> = pts
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();

    // Widest admissible slope window [i..=j] (at least two local slopes);
    // admissible when the slope spread stays within the relative tolerance.
    let mut best: Option<(f64, usize, usize)> = None; // (ln-r width, i, j)
    let mut fallback: Option<(f64, f64, usize, usize)> = None; // (ratio, width, i, j)
    for i in 0..slopes.len() {
        let mut min_s = slopes[i];
        let mut max_s = slopes[i];
        let mut sum = slopes[i];
        for j in (i + 1)..slopes.len() {
            min_s = min_s.min(slopes[j]);
            max_s = max_s.max(slopes[j]);
            sum += slopes[j];
            let mean = sum / (j - i + 1) as f64;
            let spread = max_s - min_s;
            let width = pts[j + 1].0 - pts[i].0;
            let ratio = spread / mean.abs().max(f64::MIN_POSITIVE);
            if ratio <= config.slope_tolerance && best.is_none_or(|(w, _, _)| width > w) {
                best = Some((width, i, j));
            }
            match fallback {
                Some((r, w, _, _)) if r < ratio || (r == ratio && w >= width) => {}
                _ => fallback = Some((ratio, width, i, j)),
            }
        }
    }
    let (i, j) = match best {
        Some((_, i, j)) => (i, j),
        None => {
            let (_, _, i, j) = fallback.expect("at least one slope window exists");
            (i, j)
        }
    };
    Ok(estimate(&pts, i, j + 1))
}

/// Embedding order suggested by the embedding theorem for a dimension
/// estimate: `ceil(2 D + 1)`.
pub fn recommended_order(dimension: f64) -> usize {
    (2.0 * dimension + 1.0).ceil().max(1.0) as usize
}

/// A run of embedding dimensions whose estimates stabilized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plateau {
    /// Dimension estimate at the start of the plateau.
    pub dimension: f64,
    /// First embedding dimension in the plateau.
    pub start_dim: usize,
    /// Last embedding dimension in the plateau.
    pub end_dim: usize,
}

/// Saturation analysis over a sweep of embedding dimensions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturationReport {
    /// All plateaus, in sweep order. More than one can appear when the
    /// series mixes regimes; the caller decides which to trust.
    pub plateaus: Vec<Plateau>,
    /// `ceil(2 D + 1)` for the first plateau, if any.
    pub recommended_order: Option<usize>,
}

/// Find where the dimension estimates stop growing with the embedding
/// dimension: maximal runs where successive estimates differ by less than
/// `threshold`.
pub fn detect_saturation(estimates: &[DimensionEstimate], threshold: f64) -> SaturationReport {
    let mut plateaus = Vec::new();
    if estimates.len() >= 2 {
        let mut k = 0;
        while k + 1 < estimates.len() {
            if (estimates[k + 1].dimension - estimates[k].dimension).abs() < threshold {
                let start = k;
                while k + 1 < estimates.len()
                    && (estimates[k + 1].dimension - estimates[k].dimension).abs() < threshold
                {
                    k += 1;
                }
                plateaus.push(Plateau {
                    dimension: estimates[start].dimension,
                    start_dim: estimates[start].embedding_dim,
                    end_dim: estimates[k].embedding_dim,
                });
            } else {
                k += 1;
            }
        }
    }
    let recommended_order = plateaus.first().map(|p| recommended_order(p.dimension));
    SaturationReport {
        plateaus,
        recommended_order,
    }
}

/// Sweep embedding dimensions: build delay windows for each `p`, count pair
/// distances and fit the correlation dimension.
///
/// Requires at least 100 windows at the largest `p`. Point sets above
/// `config.max_points` are subsampled deterministically from the seed.
pub fn estimate_dimension(
    series: &TimeSeries,
    p_values: &[usize],
    config: &EmbeddingConfig,
) -> Result<Vec<(CorrelationCurve, DimensionEstimate)>> {
    if p_values.is_empty() {
        return Err(DvqError::InvalidInput(
            "no embedding dimensions given".into(),
        ));
    }
    let max_p = *p_values.iter().max().expect("nonempty");
    let probe = build_regressors(series, max_p, 1)?;
    if probe.len() < 100 {
        return Err(DvqError::InsufficientData(format!(
            "only {} windows at embedding dimension {max_p}; need at least 100",
            probe.len()
        )));
    }
    drop(probe);
    let mut out = Vec::with_capacity(p_values.len());
    for &p in p_values {
        let regressors = build_regressors(series, p, 1)?;
        let mut points: Vec<Vec<f64>> = regressors.into_iter().map(|r| r.components).collect();
        if points.len() > config.max_points {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[stream::SUBSAMPLE, p as u64]));
            let mut keep =
                rand::seq::index::sample(&mut rng, points.len(), config.max_points).into_vec();
            keep.sort_unstable();
            points = keep
                .into_iter()
                .map(|i| std::mem::take(&mut points[i]))
                .collect();
        }
        let radii = default_radii(&points, config.radius_count)?;
        let curve = correlation_integral(&points, &radii)?;
        let estimate = fit_dimension(&curve, config)?;
        out.push((curve, estimate));
    }
    Ok(out)
}
