//! Synthetic Gaussian-cluster data and simulated annotators with pairwise label flips.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::dataset::{AnnotationRecord, AnnotatorId, LabeledSample, MultiRaterDataset};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticDatasetSpec {
    pub classes: usize,
    pub dim: usize,
    /// Annotated training samples per class.
    pub per_class: usize,
    /// Unannotated samples per class, the pool for validation and test sets.
    pub holdout_per_class: usize,
    /// Distance between any two class centers.
    pub separation: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 16,
            per_class: 600,
            holdout_per_class: 120,
            separation: 5.4,
            noise_scale: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.per_class == 0 {
            return Err(Error::Config("need at least two classes and one sample per class".into()));
        }
        if self.dim < self.classes {
            return Err(Error::Config(format!(
                "feature dimension {} is below the class count {}",
                self.dim, self.classes
            )));
        }
        if !(self.separation > 0.0) || !(self.noise_scale > 0.0) {
            return Err(Error::Config("separation and noise scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SyntheticData<T> {
    pub train: Vec<LabeledSample<T>>,
    pub holdout: Vec<LabeledSample<T>>,
}

/// Isotropic Gaussian clusters around `separation / sqrt(2) * e_c`.
pub fn generate_synthetic_dataset<T: Scalar>(spec: &SyntheticDatasetSpec) -> Result<SyntheticData<T>> {
    spec.validate()?;
    let normal = Normal::new(0.0, spec.noise_scale).map_err(|e| Error::Config(e.to_string()))?;
    let offset = spec.separation / std::f64::consts::SQRT_2;
    let make = |prefix: &str, per_class: usize, stream_base: u64| -> Vec<LabeledSample<T>> {
        (0..spec.classes * per_class)
            .into_par_iter()
            .map(|i| {
                let c = i / per_class;
                let mut r = rng::substream(spec.seed, stream_base + i as u64);
                let features = (0..spec.dim)
                    .map(|d| {
                        let center = if d == c { offset } else { 0.0 };
                        T::of(center + normal.sample(&mut r))
                    })
                    .collect();
                LabeledSample::new(format!("{prefix}-{i:06}"), features, Some(c))
            })
            .collect()
    };
    Ok(SyntheticData {
        train: make("tr", spec.per_class, 0),
        holdout: make("ho", spec.holdout_per_class, 1 << 32),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipProfileSpec {
    pub pair: (usize, usize),
    pub flip_rate: f64,
    pub users_per_profile: usize,
    /// Probability that a user labels any given sample.
    pub coverage: f64,
}

impl FlipProfileSpec {
    pub fn validate(&self, classes: usize) -> Result<()> {
        let (a, b) = self.pair;
        if a == b || a >= classes || b >= classes {
            return Err(Error::Config(format!("invalid flip pair ({a}, {b}) for {classes} classes")));
        }
        if !(0.0..=1.0).contains(&self.flip_rate) || !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::Config("flip rate must be in [0, 1] and coverage in (0, 1]".into()));
        }
        Ok(())
    }

    /// Label an annotator of this profile gives to an item of class `clean`.
    pub fn corrupt<R: Rng + ?Sized>(&self, clean: usize, rng: &mut R) -> usize {
        let (a, b) = self.pair;
        let flipped = if clean == a {
            b
        } else if clean == b {
            a
        } else {
            return clean;
        };
        if rng.random::<f64>() < self.flip_rate {
            flipped
        } else {
            clean
        }
    }
}

/// The three pairs used by default, for ten classes.
pub fn default_flip_profiles(flip_rate: f64) -> Vec<FlipProfileSpec> {
    [(0, 2), (4, 7), (1, 9)]
        .into_iter()
        .map(|pair| FlipProfileSpec {
            pair,
            flip_rate,
            users_per_profile: 5,
            coverage: 0.4,
        })
        .collect()
}

/// Group prefixes of simulated annotator ids.
pub const TRAIN_GROUP: &str = "train";
pub const TEST_GROUP: &str = "test";

pub fn simulated_annotator(group: &str, profile: usize, user: usize) -> AnnotatorId {
    AnnotatorId::new(format!("{group}-p{profile}-u{user}"))
}

/// Profile index encoded in a simulated annotator id.
pub fn simulated_profile(id: &AnnotatorId) -> Option<usize> {
    id.as_str().split('-').nth(1)?.strip_prefix('p')?.parse().ok()
}

/// For every profile, `users_per_profile` annotators in each of `groups`, each labeling an
/// independent coverage-sized subset of `samples`.
pub fn simulate_annotators<T: Scalar>(
    samples: Vec<LabeledSample<T>>,
    classes: usize,
    profiles: &[FlipProfileSpec],
    groups: &[&str],
    seed: u64,
) -> Result<MultiRaterDataset<T>> {
    for p in profiles {
        p.validate(classes)?;
    }
    if let Some(s) = samples.iter().find(|s| s.clean_label.is_none()) {
        return Err(Error::MissingCleanLabel(s.id.to_string()));
    }
    let users: Vec<(AnnotatorId, &FlipProfileSpec)> = groups
        .iter()
        .flat_map(|g| {
            profiles
                .iter()
                .enumerate()
                .flat_map(move |(k, p)| (0..p.users_per_profile).map(move |u| (simulated_annotator(g, k, u), p)))
        })
        .collect();
    let records: Vec<Vec<AnnotationRecord>> = users
        .par_iter()
        .map(|(id, profile)| {
            let mut r = rng::substream(rng::derive_seed(seed, id.as_str()), 0);
            let mut seen = vec![false; classes];
            let mut out = Vec::new();
            for s in &samples {
                if r.random::<f64>() >= profile.coverage {
                    continue;
                }
                let clean = s.clean_label.expect("checked above");
                seen[clean] = true;
                out.push(AnnotationRecord::new(s.id.clone(), id.clone(), profile.corrupt(clean, &mut r)));
            }
            if seen.iter().any(|&v| !v) {
                warn!(annotator = %id, "simulated annotator misses a class entirely");
            }
            out
        })
        .collect();
    MultiRaterDataset::new(classes, samples, records.into_iter().flatten().collect())
}

/// The profile list with every flip rate replaced, once per rate.
pub fn sweep_noise_rates(profiles: &[FlipProfileSpec], rates: &[f64]) -> Result<Vec<(f64, Vec<FlipProfileSpec>)>> {
    rates
        .iter()
        .map(|&rate| {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("noise rate {rate} outside [0, 1]")));
            }
            let grid = profiles
                .iter()
                .map(|p| FlipProfileSpec {
                    flip_rate: rate,
                    ..p.clone()
                })
                .collect();
            Ok((rate, grid))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_counts() {
        let spec = SyntheticDatasetSpec {
            per_class: 600,
            holdout_per_class: 10,
            ..SyntheticDatasetSpec::default()
        };
        let data = generate_synthetic_dataset::<f64>(&spec).unwrap();
        assert_eq!(data.train.len(), 6000);
        assert_eq!(data.holdout.len(), 100);
    }

    #[test]
    fn regeneration_is_identical() {
        let spec = SyntheticDatasetSpec {
            per_class: 20,
            ..SyntheticDatasetSpec::default()
        };
        let a = generate_synthetic_dataset::<f64>(&spec).unwrap();
        let b = generate_synthetic_dataset::<f64>(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_must_cover_classes() {
        let spec = SyntheticDatasetSpec {
            dim: 5,
            ..SyntheticDatasetSpec::default()
        };
        assert!(generate_synthetic_dataset::<f64>(&spec).is_err());
    }

    #[test]
    fn fifteen_users_per_group() {
        let spec = SyntheticDatasetSpec {
            per_class: 10,
            ..SyntheticDatasetSpec::default()
        };
        let data = generate_synthetic_dataset::<f64>(&spec).unwrap();
        let ds = simulate_annotators(data.train, 10, &default_flip_profiles(0.6), &[TRAIN_GROUP, TEST_GROUP], 1).unwrap();
        let train = ds.annotators().iter().filter(|a| a.as_str().starts_with("train-")).count();
        assert_eq!((train, ds.annotators().len()), (15, 30));
        assert_eq!(simulated_profile(&"test-p2-u4".into()), Some(2));
    }

    #[test]
    fn zero_flip_rate_is_perfect() {
        let spec = SyntheticDatasetSpec {
            per_class: 10,
            ..SyntheticDatasetSpec::default()
        };
        let data = generate_synthetic_dataset::<f64>(&spec).unwrap();
        let ds = simulate_annotators(data.train, 10, &default_flip_profiles(0.0), &[TRAIN_GROUP], 1).unwrap();
        for r in ds.annotations() {
            let s = ds.sample_position(&r.sample).unwrap();
            assert_eq!(Some(r.label), ds.samples()[s].clean_label);
        }
    }

    #[test]
    fn sweep_grid() {
        let grid = sweep_noise_rates(&default_flip_profiles(0.6), &[0.4, 0.6, 0.8, 0.9]).unwrap();
        assert_eq!(grid.len(), 4);
        assert!(grid[2].1.iter().all(|p| p.flip_rate == 0.8));
        assert!(sweep_noise_rates(&default_flip_profiles(0.6), &[]).unwrap().is_empty());
        assert!(sweep_noise_rates(&default_flip_profiles(0.6), &[1.5]).is_err());
    }
}
