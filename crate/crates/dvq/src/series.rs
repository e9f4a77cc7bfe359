//! Time series container, CSV I/O and delay-window construction.
//!
//! A [`TimeSeries`] stores one scalar sequence together with a mask of known
//! positions. Missing entries keep a `NaN` payload but are only ever
//! interpreted through the mask, so arithmetic never silently consumes them.
//! Indices are 0-based everywhere inside the library; user-facing messages
//! and reports are 1-based.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DvqError, Result};

/// A contiguous run of missing values: `start` is 0-based, the run covers
/// `start..start + len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub start: usize,
    pub len: usize,
}

impl Gap {
    pub fn new(start: usize, len: usize) -> Self {
        Gap { start, len }
    }

    /// One past the last missing index.
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    /// Whether the two runs share at least one index.
    pub fn overlaps(&self, other: &Gap) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

/// A scalar time series with a known/missing mask.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    name: String,
    values: Vec<f64>,
    known: Vec<bool>,
}

impl PartialEq for TimeSeries {
    /// Equality over the mask and the known values; the `NaN` payloads of
    /// missing entries compare equal.
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.known == other.known
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.known)
                .all(|((a, b), &k)| !k || a == b)
    }
}

impl TimeSeries {
    /// Build a fully known series. Every value must be finite.
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(DvqError::InvalidInput("series is empty".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DvqError::InvalidInput(format!(
                "value at position {} is not finite",
                pos + 1
            )));
        }
        let known = vec![true; values.len()];
        Ok(TimeSeries {
            name: name.into(),
            values,
            known,
        })
    }

    /// Build a series from optional values; `None` marks a missing entry.
    pub fn from_options(name: impl Into<String>, values: Vec<Option<f64>>) -> Result<Self> {
        let mut raw = Vec::with_capacity(values.len());
        let mut known = Vec::with_capacity(values.len());
        for (i, v) in values.iter().enumerate() {
            match v {
                Some(x) if x.is_finite() => {
                    raw.push(*x);
                    known.push(true);
                }
                Some(_) => {
                    return Err(DvqError::InvalidInput(format!(
                        "value at position {} is not finite",
                        i + 1
                    )));
                }
                None => {
                    raw.push(f64::NAN);
                    known.push(false);
                }
            }
        }
        Self::from_parts(name, raw, known)
    }

    /// Build a series from raw storage. Masked-out entries are normalized to
    /// `NaN`; known entries must be finite.
    pub fn from_parts(name: impl Into<String>, values: Vec<f64>, known: Vec<bool>) -> Result<Self> {
        if values.is_empty() {
            return Err(DvqError::InvalidInput("series is empty".into()));
        }
        if values.len() != known.len() {
            return Err(DvqError::DimensionMismatch(format!(
                "series has {} values but {} mask entries",
                values.len(),
                known.len()
            )));
        }
        let mut values = values;
        for (i, (v, k)) in values.iter_mut().zip(&known).enumerate() {
            if *k {
                if !v.is_finite() {
                    return Err(DvqError::InvalidInput(format!(
                        "value at position {} is marked known but is not finite",
                        i + 1
                    )));
                }
            } else {
                *v = f64::NAN;
            }
        }
        Ok(TimeSeries {
            name: name.into(),
            values,
            known,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// A series is never empty; kept for symmetry with collection APIs.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw storage; missing entries hold `NaN`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn known(&self) -> &[bool] {
        &self.known
    }

    /// Value at `index`, or `None` if missing. Panics when out of bounds.
    pub fn get(&self, index: usize) -> Option<f64> {
        if self.known[index] {
            Some(self.values[index])
        } else {
            None
        }
    }

    pub fn is_known(&self, index: usize) -> bool {
        self.known[index]
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }

    /// Index of the last known value strictly before `index`, if any.
    pub fn last_known_before(&self, index: usize) -> Option<usize> {
        (0..index.min(self.len())).rev().find(|&i| self.known[i])
    }

    /// All maximal runs of missing values, in increasing order.
    pub fn gaps(&self) -> Vec<Gap> {
        let mut gaps = Vec::new();
        let mut i = 0;
        while i < self.len() {
            if !self.known[i] {
                let start = i;
                while i < self.len() && !self.known[i] {
                    i += 1;
                }
                gaps.push(Gap::new(start, i - start));
            } else {
                i += 1;
            }
        }
        gaps
    }

    /// Copy of the series with the given ranges masked out.
    pub fn with_gaps(&self, gaps: &[Gap]) -> Result<TimeSeries> {
        let mut out = self.clone();
        for gap in gaps {
            if gap.len == 0 {
                return Err(DvqError::InvalidInput("gap of length zero".into()));
            }
            if gap.end() > self.len() {
                return Err(DvqError::InvalidInput(format!(
                    "gap {}..{} exceeds series length {}",
                    gap.start + 1,
                    gap.end(),
                    self.len()
                )));
            }
            for i in gap.start..gap.end() {
                out.values[i] = f64::NAN;
                out.known[i] = false;
            }
        }
        Ok(out)
    }

    /// Copy of the series with the values at `gap` replaced by `values` and
    /// marked known.
    pub fn with_filled(&self, gap: Gap, values: &[f64]) -> Result<TimeSeries> {
        if values.len() != gap.len {
            return Err(DvqError::DimensionMismatch(format!(
                "gap of length {} filled with {} values",
                gap.len,
                values.len()
            )));
        }
        if gap.end() > self.len() {
            return Err(DvqError::InvalidInput(format!(
                "gap {}..{} exceeds series length {}",
                gap.start + 1,
                gap.end(),
                self.len()
            )));
        }
        let mut out = self.clone();
        for (offset, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(DvqError::InvalidInput(format!(
                    "fill value at offset {offset} is not finite"
                )));
            }
            out.values[gap.start + offset] = *v;
            out.known[gap.start + offset] = true;
        }
        Ok(out)
    }

    /// Read a series from a CSV file with one value per line. An optional
    /// single header line is skipped; empty fields and `NaN` (any case) mark
    /// missing values.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|source| DvqError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "series".to_string());
        Self::from_csv_str(name, &content, &path.display().to_string())
    }

    /// Parse CSV content; `origin` labels parse errors (e.g. a file path).
    pub fn from_csv_str(
        name: impl Into<String>,
        content: &str,
        origin: &str,
    ) -> Result<TimeSeries> {
        let mut values: Vec<Option<f64>> = Vec::new();
        for (lineno, line) in content.lines().enumerate() {
            let field = line.trim();
            if field.is_empty() {
                values.push(None);
                continue;
            }
            if field.eq_ignore_ascii_case("nan") {
                values.push(None);
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(Some(v)),
                Ok(v) if v.is_nan() => values.push(None),
                Ok(_) => {
                    return Err(DvqError::Parse {
                        path: origin.to_string(),
                        line: lineno + 1,
                        message: format!("non-finite value '{field}'"),
                    });
                }
                Err(_) => {
                    // A non-numeric first line is a header; anywhere else it
                    // is a parse error.
                    if lineno == 0 {
                        continue;
                    }
                    return Err(DvqError::Parse {
                        path: origin.to_string(),
                        line: lineno + 1,
                        message: format!("cannot parse '{field}' as a number"),
                    });
                }
            }
        }
        // Drop a trailing run of empty lines only if the file ended with
        // separators rather than deliberate missing values: a single final
        // newline yields no extra entry with `lines()`, so nothing to do.
        if values.is_empty() {
            return Err(DvqError::InvalidInput(format!(
                "{origin} contains no values"
            )));
        }
        TimeSeries::from_options(name, values)
    }

    /// Serialize as one value per line; missing entries become `NaN`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for (v, k) in self.values.iter().zip(&self.known) {
            if *k {
                let _ = writeln!(out, "{v}");
            } else {
                out.push_str("NaN\n");
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|source| DvqError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// A delay window `{x(t-m+1), ..., x(t)}`; `anchor` is the index of the last
/// component.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    pub components: Vec<f64>,
    pub anchor: usize,
}

/// The component-wise change between a regressor at `anchor` and the one
/// `spacing` steps later.
#[derive(Debug, Clone, PartialEq)]
pub struct Deformation {
    pub components: Vec<f64>,
    pub anchor: usize,
    pub spacing: usize,
}

/// Window length used for regressors: `p` past values plus `d - 1` extra so
/// that a prediction step can advance the window by `d`.
pub fn window_len(p: usize, d: usize) -> usize {
    p + d - 1
}

/// Build all fully known delay windows of length `p + d - 1`.
///
/// Windows touching a missing value are skipped. Fails when the parameters
/// are invalid, the series is too short, or every window hits a gap.
pub fn build_regressors(series: &TimeSeries, p: usize, d: usize) -> Result<Vec<Regressor>> {
    if p == 0 {
        return Err(DvqError::InvalidInput(
            "regressor size p must be >= 1".into(),
        ));
    }
    if d == 0 {
        return Err(DvqError::InvalidInput(
            "prediction spacing d must be >= 1".into(),
        ));
    }
    let m = window_len(p, d);
    let n = series.len();
    if m > n {
        return Err(DvqError::InsufficientData(format!(
            "series of length {n} cannot hold windows of length {m}"
        )));
    }
    let values = series.values();
    let known = series.known();
    let mut regressors = Vec::new();
    for anchor in (m - 1)..n {
        let lo = anchor + 1 - m;
        if known[lo..=anchor].iter().all(|&k| k) {
            regressors.push(Regressor {
                components: values[lo..=anchor].to_vec(),
                anchor,
            });
        }
    }
    if regressors.is_empty() {
        return Err(DvqError::EmptyResult(
            "no gap-free windows available".into(),
        ));
    }
    Ok(regressors)
}

/// Build all (regressor, deformation) training pairs: for each window at
/// anchor `t` whose partner at `t + d` also exists, the deformation is the
/// component-wise difference of the two windows.
pub fn build_deformations(
    series: &TimeSeries,
    p: usize,
    d: usize,
) -> Result<Vec<(Regressor, Deformation)>> {
    let regressors = build_regressors(series, p, d)?;
    let by_anchor: HashMap<usize, usize> = regressors
        .iter()
        .enumerate()
        .map(|(i, r)| (r.anchor, i))
        .collect();
    let mut pairs = Vec::new();
    for reg in &regressors {
        if let Some(&j) = by_anchor.get(&(reg.anchor + d)) {
            let next = &regressors[j];
            let components: Vec<f64> = next
                .components
                .iter()
                .zip(&reg.components)
                .map(|(a, b)| a - b)
                .collect();
            pairs.push((
                reg.clone(),
                Deformation {
                    components,
                    anchor: reg.anchor,
                    spacing: d,
                },
            ));
        }
    }
    if pairs.is_empty() {
        return Err(DvqError::EmptyResult(
            "no regressor/deformation pairs available".into(),
        ));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> TimeSeries {
        TimeSeries::new("test", values.to_vec()).unwrap()
    }

    #[test]
    fn new_rejects_empty_and_non_finite() {
        assert!(matches!(
            TimeSeries::new("t", vec![]),
            Err(DvqError::InvalidInput(_))
        ));
        assert!(matches!(
            TimeSeries::new("t", vec![1.0, f64::NAN]),
            Err(DvqError::InvalidInput(_))
        ));
        assert!(matches!(
            TimeSeries::new("t", vec![f64::INFINITY]),
            Err(DvqError::InvalidInput(_))
        ));
    }

    #[test]
    fn from_options_tracks_missing() {
        let s = TimeSeries::from_options("t", vec![Some(1.0), None, Some(3.0)]).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.get(0), Some(1.0));
        assert_eq!(s.get(1), None);
        assert!(!s.is_known(1));
        assert_eq!(s.known_count(), 2);
        assert!(s.values()[1].is_nan());
    }

    #[test]
    fn gaps_finds_maximal_runs() {
        let s = TimeSeries::from_options("t", vec![None, Some(1.0), None, None, Some(2.0), None])
            .unwrap();
        assert_eq!(
            s.gaps(),
            vec![Gap::new(0, 1), Gap::new(2, 2), Gap::new(5, 1)]
        );
    }

    #[test]
    fn with_gaps_masks_ranges() {
        let s = series(&[1.0, 2.0, 3.0, 4.0]);
        let g = s.with_gaps(&[Gap::new(1, 2)]).unwrap();
        assert_eq!(g.get(0), Some(1.0));
        assert_eq!(g.get(1), None);
        assert_eq!(g.get(2), None);
        assert_eq!(g.get(3), Some(4.0));
        assert!(matches!(
            s.with_gaps(&[Gap::new(3, 2)]),
            Err(DvqError::InvalidInput(_))
        ));
    }

    #[test]
    fn with_filled_restores_values() {
        let s = series(&[1.0, 2.0, 3.0, 4.0]);
        let g = s.with_gaps(&[Gap::new(1, 2)]).unwrap();
        let f = g.with_filled(Gap::new(1, 2), &[9.0, 8.0]).unwrap();
        assert_eq!(f.values(), &[1.0, 9.0, 8.0, 4.0]);
        assert!(f.known().iter().all(|&k| k));
    }

    #[test]
    fn csv_roundtrip_preserves_values_and_gaps() {
        let s = TimeSeries::from_options(
            "t",
            vec![Some(1.5), None, Some(-0.25), Some(1e-12), Some(12345.6789)],
        )
        .unwrap();
        let text = s.to_csv_string();
        let back = TimeSeries::from_csv_str("t", &text, "<memory>").unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn csv_header_and_missing_forms() {
        let text = "value\n1.0\n\nNaN\nnan\n2.5\n";
        let s = TimeSeries::from_csv_str("t", text, "<memory>").unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.get(0), Some(1.0));
        assert_eq!(s.get(1), None);
        assert_eq!(s.get(2), None);
        assert_eq!(s.get(3), None);
        assert_eq!(s.get(4), Some(2.5));
    }

    #[test]
    fn csv_rejects_garbage_after_first_line() {
        let text = "1.0\nnot-a-number\n";
        match TimeSeries::from_csv_str("t", text, "input.csv") {
            Err(DvqError::Parse { path, line, .. }) => {
                assert_eq!(path, "input.csv");
                assert_eq!(line, 2);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_infinities() {
        assert!(matches!(
            TimeSeries::from_csv_str("t", "1.0\ninf\n", "<memory>"),
            Err(DvqError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn regressor_windows_match_hand_enumeration() {
        let s = series(&[1.0, 2.0, 4.0, 7.0]);
        let regs = build_regressors(&s, 2, 1).unwrap();
        assert_eq!(regs.len(), 3);
        assert_eq!(regs[0].components, vec![1.0, 2.0]);
        assert_eq!(regs[0].anchor, 1);
        assert_eq!(regs[2].components, vec![4.0, 7.0]);
        assert_eq!(regs[2].anchor, 3);
    }

    #[test]
    fn regressor_count_on_complete_series() {
        // A complete series of length n yields n - p + 1 windows at d = 1.
        let n = 50;
        let s = series(&(0..n).map(|i| i as f64).collect::<Vec<_>>());
        for p in [1, 2, 5, 10] {
            let regs = build_regressors(&s, p, 1).unwrap();
            assert_eq!(regs.len(), n as usize - p + 1, "p = {p}");
        }
    }

    #[test]
    fn vector_window_length_is_p_plus_d_minus_1() {
        let s = series(&(0..30).map(|i| i as f64).collect::<Vec<_>>());
        let regs = build_regressors(&s, 3, 5).unwrap();
        assert_eq!(regs[0].components.len(), 7);
        assert_eq!(regs[0].anchor, 6);
        assert_eq!(regs.len(), 30 - 7 + 1);
    }

    #[test]
    fn windows_skip_gaps() {
        let s = TimeSeries::from_options(
            "t",
            vec![Some(1.0), Some(2.0), None, Some(4.0), Some(5.0), Some(6.0)],
        )
        .unwrap();
        let regs = build_regressors(&s, 2, 1).unwrap();
        let anchors: Vec<usize> = regs.iter().map(|r| r.anchor).collect();
        assert_eq!(anchors, vec![1, 4, 5]);
    }

    #[test]
    fn all_windows_blocked_is_empty_result() {
        let s = TimeSeries::from_options("t", vec![Some(1.0), None, Some(3.0)]).unwrap();
        assert!(matches!(
            build_regressors(&s, 2, 1),
            Err(DvqError::EmptyResult(_))
        ));
    }

    #[test]
    fn deformations_match_hand_computation() {
        let s = series(&[1.0, 2.0, 4.0, 7.0]);
        let pairs = build_deformations(&s, 2, 1).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].0.components, vec![1.0, 2.0]);
        assert_eq!(pairs[0].1.components, vec![1.0, 2.0]);
        // {4,7} - {2,4}
        assert_eq!(pairs[1].0.components, vec![2.0, 4.0]);
        assert_eq!(pairs[1].1.components, vec![2.0, 3.0]);
        assert_eq!(pairs[1].1.anchor, 2);
        assert_eq!(pairs[1].1.spacing, 1);
    }

    #[test]
    fn deformation_count_on_complete_series() {
        // n - p pairs at d = 1 on a complete series.
        let n = 40usize;
        let s = series(&(0..n).map(|i| (i as f64).sin()).collect::<Vec<_>>());
        for p in [1, 3, 7] {
            let pairs = build_deformations(&s, p, 1).unwrap();
            assert_eq!(pairs.len(), n - p, "p = {p}");
        }
    }

    #[test]
    fn deformation_spacing_skips_d_anchors() {
        let s = series(&(0..20).map(|i| i as f64 * 0.5).collect::<Vec<_>>());
        let pairs = build_deformations(&s, 2, 3).unwrap();
        // m = 4, anchors 3..20, partner must exist at anchor + 3.
        assert_eq!(pairs.len(), 20 - 4 + 1 - 3);
        for (r, def) in &pairs {
            assert_eq!(def.spacing, 3);
            assert_eq!(def.anchor, r.anchor);
            // Constant-slope series: every deformation equals 3 steps of 0.5.
            for c in &def.components {
                assert!((c - 1.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_window_parameters_are_rejected() {
        let s = series(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            build_regressors(&s, 0, 1),
            Err(DvqError::InvalidInput(_))
        ));
        assert!(matches!(
            build_regressors(&s, 2, 0),
            Err(DvqError::InvalidInput(_))
        ));
        assert!(matches!(
            build_regressors(&s, 4, 1),
            Err(DvqError::InsufficientData(_))
        ));
    }
}
