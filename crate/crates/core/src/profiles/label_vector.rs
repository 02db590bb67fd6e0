use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_label_sets, AnnotatorId, MultiRaterDataset};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    /// One coordinate per slot holding the class index.
    RawIndex,
    /// A length-C indicator per slot.
    #[default]
    OneHot,
}

impl std::str::FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw-index" => Ok(Encoding::RawIndex),
            "one-hot" => Ok(Encoding::OneHot),
            other => Err(Error::Config(format!("unknown encoding `{other}`"))),
        }
    }
}

/// `L` labels per consensus class, class-block-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub annotator: AnnotatorId,
    pub class_count: usize,
    pub per_class: usize,
    pub labels: Vec<usize>,
}

impl LabelVector {
    /// Labels of class block `c`.
    pub fn block(&self, c: usize) -> &[usize] {
        &self.labels[c * self.per_class..(c + 1) * self.per_class]
    }

    pub fn encoded_len(&self, encoding: Encoding) -> usize {
        encoded_len(self.class_count, self.per_class, encoding)
    }

    pub fn encode<T: Scalar>(&self, encoding: Encoding) -> Vec<T> {
        encode_labels(&self.labels, self.class_count, encoding)
    }
}

pub fn encoded_len(class_count: usize, per_class: usize, encoding: Encoding) -> usize {
    match encoding {
        Encoding::RawIndex => class_count * per_class,
        Encoding::OneHot => class_count * per_class * class_count,
    }
}

pub(crate) fn encode_labels<T: Scalar>(labels: &[usize], class_count: usize, encoding: Encoding) -> Vec<T> {
    match encoding {
        Encoding::RawIndex => labels.iter().map(|&l| T::of_usize(l)).collect(),
        Encoding::OneHot => {
            let mut v = vec![T::zero(); labels.len() * class_count];
            for (slot, &l) in labels.iter().enumerate() {
                v[slot * class_count + l] = T::one();
            }
            v
        }
    }
}

/// Draws `per_class` labels without replacement from each per-class label set, in set order.
pub(crate) fn sample_blocks(
    sets: &[Vec<usize>],
    per_class: usize,
    seed: u64,
    annotator: &AnnotatorId,
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(sets.len() * per_class);
    for (c, set) in sets.iter().enumerate() {
        if set.len() < per_class {
            return Err(Error::TooFewLabels {
                annotator: annotator.to_string(),
                class: c,
                available: set.len(),
                required: per_class,
            });
        }
        let mut pool = set.clone();
        let mut r = rng::substream(seed, c as u64);
        let (chosen, _) = pool.partial_shuffle(&mut r, per_class);
        out.extend_from_slice(chosen);
    }
    Ok(out)
}

/// Label vector of one annotator. The draw depends on `seed` and the annotator id only.
pub fn build_label_vector<T>(
    dataset: &MultiRaterDataset<T>,
    consensus: &[usize],
    annotator: &AnnotatorId,
    per_class: usize,
    seed: u64,
) -> Result<LabelVector> {
    if per_class == 0 {
        return Err(Error::Config("labels per class must be at least 1".into()));
    }
    if consensus.len() != dataset.len() {
        return Err(Error::Alignment("consensus does not cover the dataset".into()));
    }
    let a = dataset.annotator_position(annotator)?;
    let sets = class_label_sets(dataset, consensus, a);
    let labels = sample_blocks(&sets, per_class, rng::derive_seed(seed, annotator.as_str()), annotator)?;
    Ok(LabelVector {
        annotator: annotator.clone(),
        class_count: dataset.class_count(),
        per_class,
        labels,
    })
}
