use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AnnotatorId, LabeledSample, MultiRaterDataset, SampleId};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// Labels `annotator` gave to samples whose consensus class is `class`, in sample-id order.
///
/// `consensus` holds one class index per dataset sample, aligned with
/// [`MultiRaterDataset::samples`].
pub fn gather_class_labels<T>(
    dataset: &MultiRaterDataset<T>,
    consensus: &[usize],
    annotator: &AnnotatorId,
    class: usize,
) -> Result<Vec<usize>> {
    if class >= dataset.class_count() {
        return Err(Error::Validation(format!("class {class} out of range")));
    }
    let a = dataset.annotator_position(annotator)?;
    Ok(dataset
        .labels_of_annotator(a)
        .iter()
        .filter(|&&(s, _)| consensus[s] == class)
        .map(|&(_, label)| label)
        .collect())
}

/// The per-class label sets of one annotator (index = consensus class).
pub fn class_label_sets<T>(
    dataset: &MultiRaterDataset<T>,
    consensus: &[usize],
    annotator: usize,
) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); dataset.class_count()];
    for &(s, label) in dataset.labels_of_annotator(annotator) {
        sets[consensus[s]].push(label);
    }
    sets
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<AnnotatorId>,
    pub test: Vec<AnnotatorId>,
    /// Annotators dropped for having fewer than `min_labels_per_class` labels in some class.
    #[serde(default)]
    pub excluded: Vec<AnnotatorId>,
    pub min_labels_per_class: usize,
}

/// Whether each annotator has at least `min_labels_per_class` labels in every class that
/// occurs in `consensus`.
pub fn passes_label_filter<T>(dataset: &MultiRaterDataset<T>, consensus: &[usize], min_labels_per_class: usize) -> Vec<bool> {
    let mut present = vec![false; dataset.class_count()];
    for &c in consensus {
        present[c] = true;
    }
    (0..dataset.annotators().len())
        .map(|a| {
            let mut counts = vec![0usize; dataset.class_count()];
            for &(s, _) in dataset.labels_of_annotator(a) {
                counts[consensus[s]] += 1;
            }
            counts.iter().zip(&present).all(|(&n, &p)| !p || n >= min_labels_per_class)
        })
        .collect()
}

fn filtered<T>(
    dataset: &MultiRaterDataset<T>,
    consensus: &[usize],
    min_labels_per_class: usize,
) -> Result<(Vec<AnnotatorId>, Vec<AnnotatorId>)> {
    if min_labels_per_class == 0 {
        return Err(Error::Config("minimum labels per class must be at least 1".into()));
    }
    if consensus.len() != dataset.len() {
        return Err(Error::Alignment("consensus does not cover the dataset".into()));
    }
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for (id, ok) in dataset.annotators().iter().zip(passes_label_filter(dataset, consensus, min_labels_per_class)) {
        if ok {
            kept.push(id.clone());
        } else {
            excluded.push(id.clone());
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptySplit {
            min_labels: min_labels_per_class,
        });
    }
    Ok((kept, excluded))
}

/// Filters annotators by the per-class minimum (over classes that occur in `consensus`)
/// and splits the survivors in half by a
/// seeded shuffle. An odd survivor count gives the extra annotator to the test side.
pub fn split_annotators<T>(
    dataset: &MultiRaterDataset<T>,
    consensus: &[usize],
    min_labels_per_class: usize,
    seed: u64,
) -> Result<SplitSpec> {
    let (mut kept, excluded) = filtered(dataset, consensus, min_labels_per_class)?;
    kept.shuffle(&mut rng::substream(seed, 0));
    let mut test = kept.split_off(kept.len() / 2);
    let mut train = kept;
    train.sort();
    test.sort();
    Ok(SplitSpec {
        train,
        test,
        excluded,
        min_labels_per_class,
    })
}

/// Filters as [`split_annotators`], then assigns survivors by id prefix. Ids matching
/// neither prefix are left out.
pub fn designated_split<T>(
    dataset: &MultiRaterDataset<T>,
    consensus: &[usize],
    min_labels_per_class: usize,
    train_prefix: &str,
    test_prefix: &str,
) -> Result<SplitSpec> {
    let (kept, excluded) = filtered(dataset, consensus, min_labels_per_class)?;
    let pick = |prefix: &str| -> Vec<AnnotatorId> {
        let mut ids: Vec<AnnotatorId> = kept.iter().filter(|a| a.as_str().starts_with(prefix)).cloned().collect();
        ids.sort();
        ids
    };
    let (train, test) = (pick(train_prefix), pick(test_prefix));
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptySplit {
            min_labels: min_labels_per_class,
        });
    }
    Ok(SplitSpec {
        train,
        test,
        excluded,
        min_labels_per_class,
    })
}

/// Clean-labeled onboarding items, `per_class` of each class, stored class-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ValidationSet<T> {
    pub items: Vec<LabeledSample<T>>,
    pub per_class: usize,
    pub class_count: usize,
}

impl<T> ValidationSet<T> {
    pub fn ids(&self) -> HashSet<SampleId> {
        self.items.iter().map(|s| s.id.clone()).collect()
    }

    /// Clean class of item `i`; always present by construction.
    pub fn class_of(&self, i: usize) -> usize {
        self.items[i].clean_label.expect("validation items carry clean labels")
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl<T: Clone> ValidationSet<T> {
    /// The pool minus the validation items.
    pub fn exclude_from(&self, pool: &[LabeledSample<T>]) -> Vec<LabeledSample<T>> {
        let ids = self.ids();
        pool.iter().filter(|s| !ids.contains(&s.id)).cloned().collect()
    }
}

pub fn build_validation_set<T: Clone>(
    pool: &[LabeledSample<T>],
    per_class: usize,
    class_count: usize,
    seed: u64,
) -> Result<ValidationSet<T>> {
    let mut by_class: Vec<Vec<&LabeledSample<T>>> = vec![Vec::new(); class_count];
    for s in pool {
        if let Some(c) = s.clean_label {
            if c < class_count {
                by_class[c].push(s);
            }
        }
    }
    let mut items = Vec::with_capacity(per_class * class_count);
    for (c, candidates) in by_class.iter_mut().enumerate() {
        if candidates.len() < per_class {
            return Err(Error::Capacity {
                class: c,
                available: candidates.len(),
                required: per_class,
            });
        }
        candidates.sort_by(|a, b| a.id.cmp(&b.id));
        let mut rng = rng::substream(seed, c as u64);
        let (chosen, _) = candidates.partial_shuffle(&mut rng, per_class);
        let mut chosen: Vec<_> = chosen.to_vec();
        chosen.sort_by(|a, b| a.id.cmp(&b.id));
        items.extend(chosen.into_iter().cloned());
    }
    Ok(ValidationSet {
        items,
        per_class,
        class_count,
    })
}
