//! Series preprocessing: identity, first differences and relative returns.
//!
//! Each variant implements the [`Preprocessing`] trait and is registered
//! under a stable name, so models can record which transform they were
//! fitted on and configuration files can select one at runtime. Transforms
//! propagate missing values (an output entry is missing when any input it
//! touches is missing); inverses are exact given the anchor value that
//! precedes the transformed stretch.

use crate::error::{DvqError, Result};
use crate::series::TimeSeries;

/// First differences: `out[t] = x[t+1] - x[t]`, shortening the series by one.
pub fn difference_transform(series: &TimeSeries) -> Result<TimeSeries> {
    if series.len() < 2 {
        return Err(DvqError::InsufficientData(
            "difference transform needs at least two values".into(),
        ));
    }
    let n = series.len() - 1;
    let mut values = Vec::with_capacity(n);
    let mut known = Vec::with_capacity(n);
    for t in 0..n {
        match (series.get(t), series.get(t + 1)) {
            (Some(a), Some(b)) => {
                values.push(b - a);
                known.push(true);
            }
            _ => {
                values.push(f64::NAN);
                known.push(false);
            }
        }
    }
    TimeSeries::from_parts(series.name(), values, known)
}

/// Relative returns: `out[t] = (x[t+1] - x[t]) / x[t]`.
///
/// Fails when a computable pair has a zero denominator; pairs touching a
/// missing value simply yield a missing output.
pub fn returns_transform(series: &TimeSeries) -> Result<TimeSeries> {
    if series.len() < 2 {
        return Err(DvqError::InsufficientData(
            "returns transform needs at least two values".into(),
        ));
    }
    let n = series.len() - 1;
    let mut values = Vec::with_capacity(n);
    let mut known = Vec::with_capacity(n);
    for t in 0..n {
        match (series.get(t), series.get(t + 1)) {
            (Some(a), Some(b)) => {
                if a == 0.0 {
                    return Err(DvqError::DivisionByZero { position: t + 1 });
                }
                values.push((b - a) / a);
                known.push(true);
            }
            _ => {
                values.push(f64::NAN);
                known.push(false);
            }
        }
    }
    TimeSeries::from_parts(series.name(), values, known)
}

/// Rebuild the original series from first differences and the value that
/// precedes them. Fails on interior missing entries, which cannot be bridged.
pub fn inverse_difference(diffs: &TimeSeries, anchor: f64) -> Result<TimeSeries> {
    if !anchor.is_finite() {
        return Err(DvqError::InvalidInput("anchor value is not finite".into()));
    }
    let mut values = Vec::with_capacity(diffs.len() + 1);
    values.push(anchor);
    for t in 0..diffs.len() {
        match diffs.get(t) {
            Some(d) => values.push(values[t] + d),
            None => return Err(DvqError::GapBoundary { position: t + 1 }),
        }
    }
    TimeSeries::new(diffs.name(), values)
}

/// Rebuild the original series from relative returns and the value that
/// precedes them. The anchor must be nonzero for the inverse to be defined.
pub fn inverse_returns(returns: &TimeSeries, anchor: f64) -> Result<TimeSeries> {
    if !anchor.is_finite() {
        return Err(DvqError::InvalidInput("anchor value is not finite".into()));
    }
    if anchor == 0.0 {
        return Err(DvqError::InvalidInput(
            "returns cannot be inverted from a zero anchor".into(),
        ));
    }
    let mut values = Vec::with_capacity(returns.len() + 1);
    values.push(anchor);
    for t in 0..returns.len() {
        match returns.get(t) {
            Some(r) => values.push(values[t] * (1.0 + r)),
            None => return Err(DvqError::GapBoundary { position: t + 1 }),
        }
    }
    TimeSeries::new(returns.name(), values)
}

impl std::fmt::Debug for dyn Preprocessing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Preprocessing({})", self.name())
    }
}

/// A reversible series transform, selectable by name at runtime.
pub trait Preprocessing: Send + Sync {
    /// Stable registry name, also stored in serialized models.
    fn name(&self) -> &'static str;

    /// How many extra trailing original values each transformed entry
    /// consumes: entry `t` of the transformed series is computed from
    /// original entries `t ..= t + lag()`.
    fn lag(&self) -> usize;

    /// Transform a series (length shrinks by `lag()`).
    fn apply(&self, series: &TimeSeries) -> Result<TimeSeries>;

    /// Exact inverse of [`apply`](Preprocessing::apply); `anchor` is the
    /// original value preceding the transformed stretch (ignored by the
    /// identity transform). The result is `lag()` entries longer than the
    /// input and starts at `anchor` when `lag() > 0`.
    fn invert(&self, transformed: &TimeSeries, anchor: f64) -> Result<TimeSeries>;

    /// Invert a gap-free forecast trajectory in transformed space into
    /// original-scale values that continue right after `anchor`.
    fn invert_trajectory(&self, anchor: f64, values: &[f64]) -> Vec<f64>;
}

/// Identity transform.
struct NoTransform;

impl Preprocessing for NoTransform {
    fn name(&self) -> &'static str {
        "none"
    }

    fn lag(&self) -> usize {
        0
    }

    fn apply(&self, series: &TimeSeries) -> Result<TimeSeries> {
        Ok(series.clone())
    }

    fn invert(&self, transformed: &TimeSeries, _anchor: f64) -> Result<TimeSeries> {
        Ok(transformed.clone())
    }

    fn invert_trajectory(&self, _anchor: f64, values: &[f64]) -> Vec<f64> {
        values.to_vec()
    }
}

/// First-difference transform.
struct DifferenceTransform;

impl Preprocessing for DifferenceTransform {
    fn name(&self) -> &'static str {
        "difference"
    }

    fn lag(&self) -> usize {
        1
    }

    fn apply(&self, series: &TimeSeries) -> Result<TimeSeries> {
        difference_transform(series)
    }

    fn invert(&self, transformed: &TimeSeries, anchor: f64) -> Result<TimeSeries> {
        inverse_difference(transformed, anchor)
    }

    fn invert_trajectory(&self, anchor: f64, values: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(values.len());
        let mut level = anchor;
        for v in values {
            level += v;
            out.push(level);
        }
        out
    }
}

/// Relative-returns transform.
struct ReturnsTransform;

impl Preprocessing for ReturnsTransform {
    fn name(&self) -> &'static str {
        "returns"
    }

    fn lag(&self) -> usize {
        1
    }

    fn apply(&self, series: &TimeSeries) -> Result<TimeSeries> {
        returns_transform(series)
    }

    fn invert(&self, transformed: &TimeSeries, anchor: f64) -> Result<TimeSeries> {
        inverse_returns(transformed, anchor)
    }

    fn invert_trajectory(&self, anchor: f64, values: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(values.len());
        let mut level = anchor;
        for v in values {
            level *= 1.0 + v;
            out.push(level);
        }
        out
    }
}

static NONE: NoTransform = NoTransform;
static DIFFERENCE: DifferenceTransform = DifferenceTransform;
static RETURNS: ReturnsTransform = ReturnsTransform;

/// All registered transforms, in a stable order.
pub fn all() -> [&'static dyn Preprocessing; 3] {
    [&NONE, &DIFFERENCE, &RETURNS]
}

/// Registered transform names, in registry order.
pub fn names() -> Vec<&'static str> {
    all().iter().map(|p| p.name()).collect()
}

/// Look up a transform by name (case-insensitive; `diff` is accepted as an
/// alias for `difference`).
pub fn by_name(name: &str) -> Result<&'static dyn Preprocessing> {
    let key = name.trim().to_ascii_lowercase();
    let key = if key == "diff" {
        "difference".to_string()
    } else {
        key
    };
    for p in all() {
        if p.name() == key {
            return Ok(p);
        }
    }
    Err(DvqError::UnknownName {
        kind: "preprocessing",
        name: name.to_string(),
        available: names().join(", "),
    })
}
