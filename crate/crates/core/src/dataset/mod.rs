//! Sparse multi-rater classification data: samples, annotation records and the
//! file formats used to move them around.

mod io;
mod split;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use io::{
    load_clean_labels, load_dataset, load_features, load_samples, save_dataset, write_clean_labels,
    write_features, AnnotationFormat, DatasetSources, FORMAT_HEADER,
};
pub use split::{
    build_validation_set, class_label_sets, designated_split, gather_class_labels, passes_label_filter,
    split_annotators, SplitSpec, ValidationSet,
};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Opaque sample identifier.
    SampleId
);
string_id!(
    /// Opaque annotator (user) identifier.
    AnnotatorId
);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LabeledSample<T> {
    pub id: SampleId,
    pub features: Vec<T>,
    pub clean_label: Option<usize>,
}

impl<T> LabeledSample<T> {
    pub fn new(id: impl Into<SampleId>, features: Vec<T>, clean_label: Option<usize>) -> Self {
        Self {
            id: id.into(),
            features,
            clean_label,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sample: SampleId,
    pub annotator: AnnotatorId,
    pub label: usize,
}

impl AnnotationRecord {
    pub fn new(sample: impl Into<SampleId>, annotator: impl Into<AnnotatorId>, label: usize) -> Self {
        Self {
            sample: sample.into(),
            annotator: annotator.into(),
            label,
        }
    }
}

/// Immutable multi-rater dataset.
///
/// Samples are kept sorted by id and annotators sorted by id, so every index-based view
/// (per-sample labels, per-annotator labels) is deterministic regardless of input order.
#[derive(Clone, Debug)]
pub struct MultiRaterDataset<T> {
    class_count: usize,
    samples: Vec<LabeledSample<T>>,
    annotators: Vec<AnnotatorId>,
    sample_index: HashMap<SampleId, usize>,
    annotator_index: HashMap<AnnotatorId, usize>,
    by_sample: Vec<Vec<(usize, usize)>>,
    by_annotator: Vec<Vec<(usize, usize)>>,
}

impl<T: Scalar> MultiRaterDataset<T> {
    pub fn new(
        class_count: usize,
        mut samples: Vec<LabeledSample<T>>,
        annotations: Vec<AnnotationRecord>,
    ) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::Validation(format!(
                "class count must be at least 2, got {class_count}"
            )));
        }
        samples.sort_by(|a, b| a.id.cmp(&b.id));
        let mut sample_index = HashMap::with_capacity(samples.len());
        let dim = samples.first().map_or(0, |s| s.features.len());
        for (i, s) in samples.iter().enumerate() {
            if sample_index.insert(s.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate sample id `{}`", s.id)));
            }
            if s.features.len() != dim {
                return Err(Error::Validation(format!(
                    "sample `{}` has {} features, expected {dim}",
                    s.id,
                    s.features.len()
                )));
            }
            if let Some(c) = s.clean_label {
                if c >= class_count {
                    return Err(Error::Validation(format!(
                        "clean label {c} of sample `{}` is out of range for {class_count} classes",
                        s.id
                    )));
                }
            }
        }

        let mut annotators: Vec<AnnotatorId> =
            annotations.iter().map(|r| r.annotator.clone()).collect();
        annotators.sort();
        annotators.dedup();
        let annotator_index: HashMap<AnnotatorId, usize> = annotators
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();

        let mut by_sample = vec![Vec::new(); samples.len()];
        let mut by_annotator = vec![Vec::new(); annotators.len()];
        for r in &annotations {
            let s = *sample_index
                .get(&r.sample)
                .ok_or_else(|| Error::UnknownSample(r.sample.to_string()))?;
            if r.label >= class_count {
                return Err(Error::Validation(format!(
                    "label {} from `{}` on `{}` is out of range for {class_count} classes",
                    r.label, r.annotator, r.sample
                )));
            }
            let a = annotator_index[&r.annotator];
            by_sample[s].push((a, r.label));
            by_annotator[a].push((s, r.label));
        }
        for (s, labels) in by_sample.iter_mut().enumerate() {
            labels.sort_unstable();
            if labels.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Validation(format!(
                    "sample `{}` has more than one record from the same annotator",
                    samples[s].id
                )));
            }
        }
        for labels in &mut by_annotator {
            labels.sort_unstable();
        }

        Ok(Self {
            class_count,
            samples,
            annotators,
            sample_index,
            annotator_index,
            by_sample,
            by_annotator,
        })
    }

    /// Returns a copy with the features (and optionally clean labels) replaced from
    /// the given lookup. Every sample must be covered by `features`.
    pub fn with_features(
        mut self,
        features: &HashMap<SampleId, Vec<T>>,
        clean: Option<&HashMap<SampleId, usize>>,
    ) -> Result<Self> {
        let mut dim = None;
        for s in &mut self.samples {
            let f = features
                .get(&s.id)
                .ok_or_else(|| Error::Validation(format!("no features for sample `{}`", s.id)))?;
            if *dim.get_or_insert(f.len()) != f.len() {
                return Err(Error::Validation(format!(
                    "sample `{}` has {} features, expected {}",
                    s.id,
                    f.len(),
                    dim.unwrap_or_default()
                )));
            }
            s.features = f.clone();
            if let Some(c) = clean.and_then(|m| m.get(&s.id)) {
                if *c >= self.class_count {
                    return Err(Error::Validation(format!(
                        "clean label {c} of sample `{}` is out of range",
                        s.id
                    )));
                }
                s.clean_label = Some(*c);
            }
        }
        Ok(self)
    }
}

impl<T> MultiRaterDataset<T> {
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn samples(&self) -> &[LabeledSample<T>] {
        &self.samples
    }

    pub fn annotators(&self) -> &[AnnotatorId] {
        &self.annotators
    }

    pub fn sample_position(&self, id: &SampleId) -> Option<usize> {
        self.sample_index.get(id).copied()
    }

    pub fn annotator_position(&self, id: &AnnotatorId) -> Result<usize> {
        self.annotator_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownAnnotator(id.to_string()))
    }

    /// `(annotator position, label)` pairs for one sample, ordered by annotator.
    pub fn labels_of_sample(&self, sample: usize) -> &[(usize, usize)] {
        &self.by_sample[sample]
    }

    /// `(sample position, label)` pairs for one annotator, ordered by sample.
    pub fn labels_of_annotator(&self, annotator: usize) -> &[(usize, usize)] {
        &self.by_annotator[annotator]
    }

    pub fn annotation_count(&self) -> usize {
        self.by_sample.iter().map(Vec::len).sum()
    }

    /// All records in (sample, annotator) order.
    pub fn annotations(&self) -> impl Iterator<Item = AnnotationRecord> + '_ {
        self.by_sample.iter().enumerate().flat_map(move |(s, labels)| {
            labels.iter().map(move |&(a, label)| AnnotationRecord {
                sample: self.samples[s].id.clone(),
                annotator: self.annotators[a].clone(),
                label,
            })
        })
    }

    /// Clean labels for every sample, if all are present.
    pub fn clean_labels(&self) -> Option<Vec<usize>> {
        self.samples.iter().map(|s| s.clean_label).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str) -> LabeledSample<f64> {
        LabeledSample::new(id, vec![0.0], None)
    }

    #[test]
    fn indexes_are_sorted_and_consistent() {
        let ds = MultiRaterDataset::new(
            3,
            vec![sample("b"), sample("a")],
            vec![
                AnnotationRecord::new("b", "u2", 2),
                AnnotationRecord::new("a", "u2", 1),
                AnnotationRecord::new("b", "u1", 0),
            ],
        )
        .unwrap();
        assert_eq!(ds.samples()[0].id.as_str(), "a");
        assert_eq!(ds.annotators()[0].as_str(), "u1");
        assert_eq!(ds.labels_of_sample(1), &[(0, 0), (1, 2)]);
        assert_eq!(ds.labels_of_annotator(1), &[(0, 1), (1, 2)]);
        assert_eq!(ds.annotation_count(), 3);
    }

    #[test]
    fn rejects_duplicate_pair_and_bad_labels() {
        let dup = MultiRaterDataset::new(
            2,
            vec![sample("a")],
            vec![AnnotationRecord::new("a", "u", 0), AnnotationRecord::new("a", "u", 1)],
        );
        assert!(matches!(dup, Err(Error::Validation(_))));
        let range = MultiRaterDataset::new(2, vec![sample("a")], vec![AnnotationRecord::new("a", "u", 2)]);
        assert!(matches!(range, Err(Error::Validation(_))));
        let missing = MultiRaterDataset::new(2, vec![sample("a")], vec![AnnotationRecord::new("z", "u", 0)]);
        assert!(matches!(missing, Err(Error::UnknownSample(_))));
    }

    #[test]
    fn rejects_ragged_features() {
        let r = MultiRaterDataset::new(
            2,
            vec![sample("a"), LabeledSample::new("b", vec![1.0, 2.0], None)],
            vec![],
        );
        assert!(matches!(r, Err(Error::Validation(_))));
    }
}
