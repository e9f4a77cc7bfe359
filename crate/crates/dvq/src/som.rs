//! One-dimensional self-organizing map used for both codebooks.
//!
//! Units live on a chain; the neighborhood kernel is a Gaussian over chain
//! distance. Training is sequential and fully determined by the seed: unit
//! initialization draws uniformly inside the data bounding box, and each
//! pass presents the data in a fresh seeded permutation. A trained
//! [`Codebook`] is immutable and safe to share across threads.

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DvqError, Result};

/// Learning-rate profile within one training phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RateSchedule {
    /// Linear interpolation from `start` to `end` over the phase.
    Linear { start: f64, end: f64 },
    /// `1 / (t + 1)` over the global presentation counter. With a single
    /// unit and zero radius this makes the prototype track the exact
    /// running mean of the presented data.
    InverseTime,
}

/// One stage of the annealing schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    /// Full passes over the data in this phase.
    pub passes: usize,
    /// Neighborhood radius at the start of the phase (chain distance).
    pub radius_start: f64,
    /// Neighborhood radius at the end of the phase; zero is winner-only.
    pub radius_end: f64,
    pub rate: RateSchedule,
}

/// A complete annealing schedule: phases run back to back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub phases: Vec<Phase>,
}

impl TrainSchedule {
    /// Default two-stage schedule: a short ordering phase with a wide
    /// shrinking neighborhood, then a long convergence phase that anneals
    /// to winner-only updates.
    pub fn standard(unit_count: usize) -> Self {
        TrainSchedule {
            phases: vec![
                Phase {
                    passes: 10,
                    radius_start: unit_count as f64 / 2.0,
                    radius_end: 1.0,
                    rate: RateSchedule::Linear {
                        start: 0.5,
                        end: 0.05,
                    },
                },
                Phase {
                    passes: 40,
                    radius_start: 1.0,
                    radius_end: 0.0,
                    rate: RateSchedule::Linear {
                        start: 0.05,
                        end: 0.01,
                    },
                },
            ],
        }
    }

    /// Winner-only schedule with an inverse-time rate; with one unit the
    /// prototype ends at the exact running mean of the data.
    pub fn running_mean(passes: usize) -> Self {
        TrainSchedule {
            phases: vec![Phase {
                passes,
                radius_start: 0.0,
                radius_end: 0.0,
                rate: RateSchedule::InverseTime,
            }],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(DvqError::InvalidInput("schedule has no phases".into()));
        }
        for (i, phase) in self.phases.iter().enumerate() {
            if phase.passes == 0 {
                return Err(DvqError::InvalidInput(format!(
                    "schedule phase {} has zero passes",
                    i + 1
                )));
            }
            if phase.radius_start < 0.0 || phase.radius_end < 0.0 {
                return Err(DvqError::InvalidInput(format!(
                    "schedule phase {} has a negative radius",
                    i + 1
                )));
            }
            if let RateSchedule::Linear { start, end } = phase.rate {
                if !(start.is_finite() && end.is_finite()) || start < 0.0 || end < 0.0 {
                    return Err(DvqError::InvalidInput(format!(
                        "schedule phase {} has an invalid learning rate",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    fn total_passes(&self) -> usize {
        self.phases.iter().map(|p| p.passes).sum()
    }
}

/// Metadata recorded by a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    /// Total passes over the data.
    pub passes: usize,
    /// Seed the run was started from.
    pub seed: u64,
    /// Mean squared distance to the winning unit on the training data.
    pub quantization_error: f64,
}

/// Class index per input vector, as produced by [`Codebook::quantize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub classes: Vec<usize>,
}

impl Assignment {
    /// Number of vectors assigned to each of `unit_count` classes.
    pub fn counts(&self, unit_count: usize) -> Vec<usize> {
        let mut counts = vec![0usize; unit_count];
        for &c in &self.classes {
            counts[c] += 1;
        }
        counts
    }
}

/// A trained set of prototype vectors on a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    prototypes: Vec<Vec<f64>>,
    input_dim: usize,
    meta: TrainMeta,
}

impl Codebook {
    /// Wrap externally supplied prototypes (e.g. for tests or hand-built
    /// models). Vectors must be non-empty, rectangular and finite.
    pub fn from_prototypes(prototypes: Vec<Vec<f64>>) -> Result<Self> {
        if prototypes.is_empty() {
            return Err(DvqError::InvalidInput("codebook has no prototypes".into()));
        }
        let input_dim = prototypes[0].len();
        if input_dim == 0 {
            return Err(DvqError::InvalidInput(
                "prototypes have zero dimension".into(),
            ));
        }
        for (i, p) in prototypes.iter().enumerate() {
            if p.len() != input_dim {
                return Err(DvqError::DimensionMismatch(format!(
                    "prototype {} has dimension {} but expected {}",
                    i + 1,
                    p.len(),
                    input_dim
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(DvqError::InvalidInput(format!(
                    "prototype {} contains a non-finite value",
                    i + 1
                )));
            }
        }
        Ok(Codebook {
            prototypes,
            input_dim,
            meta: TrainMeta {
                passes: 0,
                seed: 0,
                quantization_error: 0.0,
            },
        })
    }

    pub fn unit_count(&self) -> usize {
        self.prototypes.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn prototypes(&self) -> &[Vec<f64>] {
        &self.prototypes
    }

    pub fn prototype(&self, unit: usize) -> &[f64] {
        &self.prototypes[unit]
    }

    pub fn meta(&self) -> &TrainMeta {
        &self.meta
    }

    /// Re-check structural invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        let copy = Codebook::from_prototypes(self.prototypes.clone())?;
        if copy.input_dim != self.input_dim {
            return Err(DvqError::ModelFormat(format!(
                "codebook declares dimension {} but prototypes have {}",
                self.input_dim, copy.input_dim
            )));
        }
        if !self.meta.quantization_error.is_finite() {
            return Err(DvqError::ModelFormat(
                "codebook quantization error is not finite".into(),
            ));
        }
        Ok(())
    }

    /// Index of the nearest prototype in Euclidean distance; ties resolve
    /// to the lowest index.
    pub fn best_matching_unit(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.input_dim {
            return Err(DvqError::DimensionMismatch(format!(
                "input has dimension {} but codebook expects {}",
                x.len(),
                self.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DvqError::InvalidInput(
                "input vector contains a non-finite value".into(),
            ));
        }
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (u, proto) in self.prototypes.iter().enumerate() {
            let dist = squared_distance(x, proto);
            if dist < best_dist {
                best = u;
                best_dist = dist;
            }
        }
        Ok(best)
    }

    /// Assign every vector to its winning unit and report the mean squared
    /// distance to the winners.
    pub fn quantize(&self, data: &[Vec<f64>]) -> Result<(Assignment, f64)> {
        if data.is_empty() {
            return Err(DvqError::InvalidInput("no data to quantize".into()));
        }
        let mut classes = Vec::with_capacity(data.len());
        let mut total = 0.0;
        for x in data {
            let bmu = self.best_matching_unit(x)?;
            total += squared_distance(x, &self.prototypes[bmu]);
            classes.push(bmu);
        }
        let mse = total / data.len() as f64;
        Ok((Assignment { classes }, mse))
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Gaussian neighborhood over chain distance; zero radius is winner-only.
fn influence(delta: usize, radius: f64) -> f64 {
    if radius <= 0.0 {
        if delta == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        let d = delta as f64;
        (-(d * d) / (2.0 * radius * radius)).exp()
    }
}

/// Train a chain SOM on `data` with `unit_count` units.
///
/// The run is reproducible: identical inputs and seed yield bit-identical
/// prototypes. A unit count above the number of training vectors is allowed
/// but logged, since some units must end up unused.
pub fn train(
    data: &[Vec<f64>],
    unit_count: usize,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<Codebook> {
    if data.is_empty() {
        return Err(DvqError::InvalidInput("no training data".into()));
    }
    if unit_count == 0 {
        return Err(DvqError::InvalidInput("unit count must be >= 1".into()));
    }
    schedule.validate()?;
    let dim = data[0].len();
    if dim == 0 {
        return Err(DvqError::InvalidInput(
            "training vectors have zero dimension".into(),
        ));
    }
    for (i, x) in data.iter().enumerate() {
        if x.len() != dim {
            return Err(DvqError::DimensionMismatch(format!(
                "training vector {} has dimension {} but expected {}",
                i + 1,
                x.len(),
                dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DvqError::InvalidInput(format!(
                "training vector {} contains a non-finite value",
                i + 1
            )));
        }
    }
    if unit_count > data.len() {
        warn!(
            "codebook has {} units but only {} training vectors; some units will stay unused",
            unit_count,
            data.len()
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Initialize uniformly inside the per-dimension bounding box.
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for x in data {
        for k in 0..dim {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    let mut prototypes: Vec<Vec<f64>> = (0..unit_count)
        .map(|_| (0..dim).map(|k| rng.gen_range(lo[k]..=hi[k])).collect())
        .collect();

    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut global_step = 0usize;
    for phase in &schedule.phases {
        let steps = phase.passes * n;
        for s in 0..steps {
            if s % n == 0 {
                order.shuffle(&mut rng);
            }
            let frac = if steps > 1 {
                s as f64 / (steps - 1) as f64
            } else {
                0.0
            };
            let radius = phase.radius_start + (phase.radius_end - phase.radius_start) * frac;
            let rate = match phase.rate {
                RateSchedule::Linear { start, end } => start + (end - start) * frac,
                RateSchedule::InverseTime => 1.0 / (global_step + 1) as f64,
            };
            let x = &data[order[s % n]];
            let bmu = {
                let mut best = 0usize;
                let mut best_dist = f64::INFINITY;
                for (u, proto) in prototypes.iter().enumerate() {
                    let dist = squared_distance(x, proto);
                    if dist < best_dist {
                        best = u;
                        best_dist = dist;
                    }
                }
                best
            };
            for (u, proto) in prototypes.iter_mut().enumerate() {
                let delta = u.abs_diff(bmu);
                let h = influence(delta, radius);
                if h > 0.0 {
                    let step_size = rate * h;
                    for (w, &xi) in proto.iter_mut().zip(x) {
                        *w += step_size * (xi - *w);
                    }
                }
            }
            global_step += 1;
        }
    }

    let mut codebook = Codebook {
        prototypes,
        input_dim: dim,
        meta: TrainMeta {
            passes: schedule.total_passes(),
            seed,
            quantization_error: 0.0,
        },
    };
    let (_, qe) = codebook.quantize(data)?;
    codebook.meta.quantization_error = qe;
    Ok(codebook)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn scalar_data(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn single_unit_inverse_time_recovers_the_mean() {
        let values: Vec<f64> = vec![3.0, -1.0, 4.0, 1.5, -9.25, 2.0, 6.5];
        let data = scalar_data(&values);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let cb = train(&data, 1, &TrainSchedule::running_mean(1), 99).unwrap();
        let w = cb.prototype(0)[0];
        assert!(
            (w - mean).abs() <= 1e-12 * mean.abs().max(1.0),
            "prototype {w} vs mean {mean}"
        );
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<Vec<f64>> = (0..80)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let schedule = TrainSchedule::standard(6);
        let a = train(&data, 6, &schedule, 123).unwrap();
        let b = train(&data, 6, &schedule, 123).unwrap();
        assert_eq!(a.prototypes(), b.prototypes());
        let c = train(&data, 6, &schedule, 124).unwrap();
        assert_ne!(a.prototypes(), c.prototypes());
    }

    #[test]
    fn bmu_ties_pick_the_lowest_index() {
        let cb = Codebook::from_prototypes(vec![vec![0.0], vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(cb.best_matching_unit(&[0.0]).unwrap(), 0);
        // Equidistant between units 1 (at 0) and 2 (at 1): lowest index wins.
        assert_eq!(cb.best_matching_unit(&[0.5]).unwrap(), 0);
    }

    #[test]
    fn quantize_reports_mean_squared_distance() {
        let cb = Codebook::from_prototypes(vec![vec![0.0], vec![10.0]]).unwrap();
        let data = scalar_data(&[1.0, 9.0, 11.0]);
        let (assignment, qe) = cb.quantize(&data).unwrap();
        assert_eq!(assignment.classes, vec![0, 1, 1]);
        assert!((qe - 1.0).abs() < 1e-15);
        assert_eq!(assignment.counts(2), vec![1, 2]);
    }

    #[test]
    fn two_clusters_are_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut data = Vec::new();
        for _ in 0..60 {
            data.push(vec![rng.gen_range(-0.1..0.1) - 5.0]);
            data.push(vec![rng.gen_range(-0.1..0.1) + 5.0]);
        }
        let cb = train(&data, 2, &TrainSchedule::standard(2), 7).unwrap();
        let mut centers: Vec<f64> = cb.prototypes().iter().map(|p| p[0]).collect();
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(
            (centers[0] + 5.0).abs() < 0.5,
            "low center at {}",
            centers[0]
        );
        assert!(
            (centers[1] - 5.0).abs() < 0.5,
            "high center at {}",
            centers[1]
        );
        assert!(cb.meta().quantization_error < 0.05);
    }

    #[test]
    fn chain_unfolds_on_uniform_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.gen_range(0.0..1.0)]).collect();
        let cb = train(&data, 5, &TrainSchedule::standard(5), 42).unwrap();
        let centers: Vec<f64> = cb.prototypes().iter().map(|p| p[0]).collect();
        let increasing = centers.windows(2).all(|w| w[0] < w[1]);
        let decreasing = centers.windows(2).all(|w| w[0] > w[1]);
        assert!(
            increasing || decreasing,
            "chain should be ordered, got {centers:?}"
        );
    }

    #[test]
    fn degenerate_data_converges_exactly() {
        let data = scalar_data(&[2.5; 20]);
        let cb = train(&data, 3, &TrainSchedule::standard(3), 1).unwrap();
        for p in cb.prototypes() {
            assert_eq!(p[0], 2.5);
        }
        assert_eq!(cb.meta().quantization_error, 0.0);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let data = scalar_data(&[1.0, 2.0]);
        assert!(matches!(
            train(&[], 2, &TrainSchedule::standard(2), 0),
            Err(DvqError::InvalidInput(_))
        ));
        assert!(matches!(
            train(&data, 0, &TrainSchedule::standard(1), 0),
            Err(DvqError::InvalidInput(_))
        ));
        let ragged = vec![vec![1.0], vec![1.0, 2.0]];
        assert!(matches!(
            train(&ragged, 1, &TrainSchedule::standard(1), 0),
            Err(DvqError::DimensionMismatch(_))
        ));
        let empty_schedule = TrainSchedule { phases: vec![] };
        assert!(matches!(
            train(&data, 1, &empty_schedule, 0),
            Err(DvqError::InvalidInput(_))
        ));
    }

    #[test]
    fn bmu_validates_dimension_and_finiteness() {
        let cb = Codebook::from_prototypes(vec![vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            cb.best_matching_unit(&[1.0]),
            Err(DvqError::DimensionMismatch(_))
        ));
        assert!(matches!(
            cb.best_matching_unit(&[1.0, f64::NAN]),
            Err(DvqError::InvalidInput(_))
        ));
    }

    #[test]
    fn from_prototypes_validates_shape() {
        assert!(matches!(
            Codebook::from_prototypes(vec![]),
            Err(DvqError::InvalidInput(_))
        ));
        assert!(matches!(
            Codebook::from_prototypes(vec![vec![1.0], vec![1.0, 2.0]]),
            Err(DvqError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn codebook_serializes_roundtrip() {
        let data = scalar_data(&[1.0, 2.0, 3.0, 4.0]);
        let cb = train(&data, 2, &TrainSchedule::standard(2), 3).unwrap();
        let json = serde_json::to_string(&cb).unwrap();
        let back: Codebook = serde_json::from_str(&json).unwrap();
        assert_eq!(cb, back);
        back.validate().unwrap();
    }
}
