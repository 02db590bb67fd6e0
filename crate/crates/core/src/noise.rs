//! Class-conditional label noise: transition matrix estimation and sampling of
//! synthetic noisy labels from a matrix.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_label_sets, AnnotatorId, MultiRaterDataset};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "kebab-case")]
pub enum MatrixOwner {
    Profile(usize),
    Annotator(AnnotatorId),
    Unspecified,
}

/// Row-stochastic `C x C` matrix of `P(noisy = n | consensus = c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TransitionMatrix<T> {
    entries: Vec<Vec<T>>,
    support: Vec<usize>,
    owner: MatrixOwner,
}

impl<T: Scalar> TransitionMatrix<T> {
    pub fn identity(class_count: usize) -> Self {
        let entries = (0..class_count)
            .map(|c| (0..class_count).map(|n| if c == n { T::one() } else { T::zero() }).collect())
            .collect();
        Self {
            entries,
            support: vec![0; class_count],
            owner: MatrixOwner::Unspecified,
        }
    }

    /// Builds a matrix from explicit rows, checking stochasticity.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let c = rows.len();
        let m = Self {
            support: vec![0; c],
            entries: rows,
            owner: MatrixOwner::Unspecified,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_owner(mut self, owner: MatrixOwner) -> Self {
        self.owner = owner;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.entries.len();
        for (i, row) in self.entries.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Shape {
                    context: "transition matrix row",
                    expected: c,
                    actual: row.len(),
                });
            }
            if row.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
                return Err(Error::Validation(format!("row {i} has entries outside [0, 1]")));
            }
            let total: T = row.iter().copied().sum();
            if (total.as_f64() - 1.0).abs() > ROW_TOLERANCE * (c.max(1) as f64) {
                return Err(Error::Validation(format!("row {i} sums to {total}, not 1")));
            }
        }
        Ok(())
    }

    pub fn class_count(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn get(&self, consensus: usize, noisy: usize) -> T {
        self.entries[consensus][noisy]
    }

    pub fn row(&self, consensus: usize) -> &[T] {
        &self.entries[consensus]
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.entries
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn owner(&self) -> &MatrixOwner {
        &self.owner
    }

    /// Rows estimated without any observation (filled with the identity row).
    pub fn unsupported_rows(&self) -> Vec<usize> {
        self.support
            .iter()
            .enumerate()
            .filter(|(_, &n)| n == 0)
            .map(|(c, _)| c)
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.entries
            .iter()
            .flatten()
            .zip(other.entries.iter().flatten())
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// `C x C` CSV body with the format header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(crate::dataset::FORMAT_HEADER);
        out.push('\n');
        for row in &self.entries {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    /// Pairwise flip matrix: classes `a` and `b` swap with probability `rate`, all others clean.
    pub fn pairwise_flip(class_count: usize, a: usize, b: usize, rate: T) -> Result<Self> {
        if a == b || a >= class_count || b >= class_count {
            return Err(Error::Config(format!("invalid flip pair ({a}, {b})")));
        }
        let mut m = Self::identity(class_count);
        for (x, y) in [(a, b), (b, a)] {
            m.entries[x][x] = T::one() - rate;
            m.entries[x][y] = rate;
        }
        m.validate()?;
        Ok(m)
    }
}

/// Empirical transition matrix from label sets indexed by consensus class.
///
/// Rows with no observation become identity rows and are reported by
/// [`TransitionMatrix::unsupported_rows`]. `smoothing` adds a Laplace pseudo-count to every
/// cell of supported rows.
pub fn estimate_transition_matrix<T: Scalar>(
    label_sets: &[Vec<usize>],
    class_count: usize,
    smoothing: f64,
) -> TransitionMatrix<T> {
    let mut m = TransitionMatrix::<T>::identity(class_count);
    for (c, labels) in label_sets.iter().enumerate().take(class_count) {
        let mut counts = vec![0usize; class_count];
        for &n in labels {
            if n < class_count {
                counts[n] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        m.support[c] = total;
        if total == 0 {
            continue;
        }
        let denom = total as f64 + smoothing * class_count as f64;
        for n in 0..class_count {
            m.entries[c][n] = T::of((counts[n] as f64 + smoothing) / denom);
        }
    }
    m
}

/// Transition matrix of a single annotator against the consensus.
pub fn estimate_user_matrix<T: Scalar>(
    dataset: &MultiRaterDataset<T>,
    consensus: &[usize],
    annotator: &AnnotatorId,
) -> Result<TransitionMatrix<T>> {
    let a = dataset.annotator_position(annotator)?;
    let sets = class_label_sets(dataset, consensus, a);
    Ok(estimate_transition_matrix::<T>(&sets, dataset.class_count(), 0.0)
        .with_owner(MatrixOwner::Annotator(annotator.clone())))
}

/// Pooled transition matrix of a group of annotators. Every annotation record counts once.
pub fn estimate_profile_matrix<T: Scalar>(
    dataset: &MultiRaterDataset<T>,
    consensus: &[usize],
    members: &[AnnotatorId],
    profile: usize,
    smoothing: f64,
) -> Result<TransitionMatrix<T>> {
    let mut sets = vec![Vec::new(); dataset.class_count()];
    for id in members {
        let a = dataset.annotator_position(id)?;
        for (c, labels) in class_label_sets(dataset, consensus, a).into_iter().enumerate() {
            sets[c].extend(labels);
        }
    }
    Ok(estimate_transition_matrix::<T>(&sets, dataset.class_count(), smoothing)
        .with_owner(MatrixOwner::Profile(profile)))
}

/// Per-sample synthetic noisy labels drawn from a profile's transition matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedDataset {
    pub profile: usize,
    pub seed: u64,
    /// Dataset positions of the augmented samples.
    pub samples: Vec<usize>,
    pub consensus: Vec<usize>,
    /// `G` labels per sample, aligned with `samples`.
    pub noisy: Vec<Vec<usize>>,
}

impl AugmentedDataset {
    pub fn draws_per_sample(&self) -> usize {
        self.noisy.first().map_or(0, Vec::len)
    }

    pub fn pair_count(&self) -> usize {
        self.noisy.iter().map(Vec::len).sum()
    }
}

fn row_samplers<T: Scalar>(matrix: &TransitionMatrix<T>) -> Result<Vec<WeightedIndex<f64>>> {
    matrix.validate()?;
    matrix
        .rows()
        .iter()
        .map(|row| {
            WeightedIndex::new(row.iter().map(|v| v.as_f64()))
                .map_err(|e| Error::Validation(format!("cannot sample transition row: {e}")))
        })
        .collect()
}

/// Draws `draws` i.i.d. labels per sample from the matrix row of its consensus class.
///
/// Sample `samples[i]` uses substream `samples[i]` of `seed`, so the output does not depend
/// on how the work is scheduled.
pub fn augment_labels<T: Scalar>(
    samples: &[usize],
    consensus: &[usize],
    matrix: &TransitionMatrix<T>,
    draws: usize,
    seed: u64,
    profile: usize,
) -> Result<AugmentedDataset> {
    if samples.len() != consensus.len() {
        return Err(Error::Alignment(format!(
            "{} samples but {} consensus labels",
            samples.len(),
            consensus.len()
        )));
    }
    if draws == 0 {
        return Err(Error::Config("augmentation needs at least one draw per sample".into()));
    }
    if let Some(&bad) = consensus.iter().find(|&&c| c >= matrix.class_count()) {
        return Err(Error::Validation(format!("consensus label {bad} out of range")));
    }
    let samplers = row_samplers(matrix)?;
    let noisy = samples
        .par_iter()
        .zip(consensus.par_iter())
        .map(|(&s, &c)| {
            let mut rng = rng::substream(seed, s as u64);
            (0..draws).map(|_| samplers[c].sample(&mut rng)).collect()
        })
        .collect();
    Ok(AugmentedDataset {
        profile,
        seed,
        samples: samples.to_vec(),
        consensus: consensus.to_vec(),
        noisy,
    })
}

/// One noisy label per clean label, drawn from the user's matrix.
pub fn simulate_test_set<T: Scalar>(
    clean: &[usize],
    user_matrix: &TransitionMatrix<T>,
    seed: u64,
) -> Result<Vec<usize>> {
    if let Some(&bad) = clean.iter().find(|&&c| c >= user_matrix.class_count()) {
        return Err(Error::Validation(format!("clean label {bad} out of range")));
    }
    let samplers = row_samplers(user_matrix)?;
    Ok(clean
        .par_iter()
        .enumerate()
        .map(|(i, &c)| samplers[c].sample(&mut rng::substream(seed, i as u64)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AnnotationRecord, LabeledSample};

    #[test]
    fn counting_example() {
        let m = estimate_transition_matrix::<f64>(&[vec![0, 0, 1, 1], vec![], vec![2]], 3, 0.0);
        assert_eq!(m.row(0), &[0.5, 0.5, 0.0]);
        assert_eq!(m.row(1), &[0.0, 1.0, 0.0]);
        assert_eq!(m.unsupported_rows(), vec![1]);
        assert_eq!(m.support(), &[4, 0, 1]);
    }

    #[test]
    fn pairwise_flip_rows() {
        // airplane = 0, bird = 2
        let m = TransitionMatrix::<f64>::pairwise_flip(10, 0, 2, 0.6).unwrap();
        assert!((m.get(0, 0) - 0.4).abs() < 1e-12);
        assert!((m.get(0, 2) - 0.6).abs() < 1e-12);
        assert!((m.get(2, 0) - 0.6).abs() < 1e-12);
        for c in [1, 3, 4, 5, 6, 7, 8, 9] {
            assert_eq!(m.get(c, c), 1.0);
        }
    }

    #[test]
    fn smoothing_keeps_rows_stochastic() {
        let m = estimate_transition_matrix::<f64>(&[vec![0, 0, 1], vec![1]], 2, 1.0);
        assert!((m.get(0, 0) - 0.6).abs() < 1e-12);
        m.validate().unwrap();
    }

    fn annotated() -> MultiRaterDataset<f64> {
        let samples = (0..4).map(|i| LabeledSample::new(format!("s{i}"), vec![], None)).collect();
        let mut recs = Vec::new();
        for i in 0..4 {
            recs.push(AnnotationRecord::new(format!("s{i}").as_str(), "perfect", i % 2));
            recs.push(AnnotationRecord::new(format!("s{i}").as_str(), "zero", 0));
        }
        MultiRaterDataset::new(2, samples, recs).unwrap()
    }

    #[test]
    fn user_matrices() {
        let ds = annotated();
        let consensus = [0, 1, 0, 1];
        let perfect = estimate_user_matrix(&ds, &consensus, &"perfect".into()).unwrap();
        assert_eq!(perfect.max_abs_diff(&TransitionMatrix::identity(2)), 0.0);
        let zero = estimate_user_matrix(&ds, &consensus, &"zero".into()).unwrap();
        assert_eq!(zero.row(0), &[1.0, 0.0]);
        assert_eq!(zero.row(1), &[1.0, 0.0]);
        assert!(matches!(
            estimate_user_matrix(&ds, &consensus, &"nobody".into()),
            Err(Error::UnknownAnnotator(_))
        ));
        let pooled =
            estimate_profile_matrix(&ds, &consensus, &["perfect".into(), "zero".into()], 0, 0.0).unwrap();
        assert_eq!(pooled.row(1), &[0.5, 0.5]);
        assert_eq!(pooled.owner(), &MatrixOwner::Profile(0));
    }

    #[test]
    fn identity_augmentation_copies_consensus() {
        let m = TransitionMatrix::<f64>::identity(4);
        let aug = augment_labels(&[0, 1, 2], &[3, 1, 0], &m, 5, 7, 0).unwrap();
        assert_eq!(aug.draws_per_sample(), 5);
        assert!(aug.noisy[0].iter().all(|&l| l == 3));
        assert!(aug.noisy[2].iter().all(|&l| l == 0));
    }

    #[test]
    fn augmentation_rejects_non_stochastic() {
        let bad = TransitionMatrix {
            entries: vec![vec![0.5, 0.4], vec![0.0, 1.0]],
            support: vec![0, 0],
            owner: MatrixOwner::Unspecified,
        };
        assert!(matches!(augment_labels(&[0], &[0], &bad, 1, 0, 0), Err(Error::Validation(_))));
        assert!(matches!(simulate_test_set(&[0], &bad, 0), Err(Error::Validation(_))));
    }

    #[test]
    fn sampling_frequency_within_binomial_band() {
        // row [0.4, 0.6], n = 10_000, 4 sigma = 4 * sqrt(0.24 / 10_000) ~ 0.0196
        let m = TransitionMatrix::from_rows(vec![vec![0.4, 0.6], vec![0.0, 1.0]]).unwrap();
        let samples: Vec<usize> = (0..10_000).collect();
        let aug = augment_labels(&samples, &vec![0; 10_000], &m, 1, 42, 0).unwrap();
        let ones = aug.noisy.iter().filter(|l| l[0] == 1).count() as f64 / 10_000.0;
        assert!((0.58..=0.62).contains(&ones), "{ones}");
    }

    #[test]
    fn simulated_test_set_follows_user_matrix() {
        let clean: Vec<usize> = (0..4000).map(|i| if i % 2 == 0 { 9 } else { 1 }).collect();
        assert_eq!(simulate_test_set(&clean, &TransitionMatrix::<f64>::identity(10), 3).unwrap(), clean);
        // truck (9) <-> automobile (1) at 60%
        let m = TransitionMatrix::<f64>::pairwise_flip(10, 1, 9, 0.6).unwrap();
        let noisy = simulate_test_set(&clean, &m, 3).unwrap();
        let kept = clean
            .iter()
            .zip(&noisy)
            .filter(|(&c, _)| c == 9)
            .filter(|(c, n)| c == n)
            .count() as f64
            / 2000.0;
        assert!((kept - 0.4).abs() <= 0.03, "{kept}");
    }

    #[test]
    fn augmentation_is_seed_deterministic() {
        let m = TransitionMatrix::<f64>::pairwise_flip(3, 0, 1, 0.3).unwrap();
        let s: Vec<usize> = (0..50).collect();
        let c: Vec<usize> = s.iter().map(|i| i % 3).collect();
        let a = augment_labels(&s, &c, &m, 4, 11, 1).unwrap();
        let b = augment_labels(&s, &c, &m, 4, 11, 1).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
