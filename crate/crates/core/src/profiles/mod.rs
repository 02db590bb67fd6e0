//! Annotator noise profiles: fixed-length label vectors, fuzzy c-means clustering and
//! silhouette-based choice of the profile count.

mod fuzzy;
mod label_vector;
mod silhouette;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatorId, FORMAT_HEADER};
use crate::scalar::Scalar;

pub use fuzzy::{fuzzy_kmeans, fuzzy_objective, FuzzyConfig, ProfileAssignment};
pub use label_vector::{build_label_vector, encoded_len, Encoding, LabelVector};
pub use silhouette::{select_k, silhouette_score, KSelection, SilhouetteReport};

/// Profile assignment of the training annotators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AnnotatorProfiles<T> {
    pub annotators: Vec<AnnotatorId>,
    pub encoding: Encoding,
    pub per_class: usize,
    pub assignment: ProfileAssignment<T>,
}

impl<T: Scalar> AnnotatorProfiles<T> {
    pub fn k(&self) -> usize {
        self.assignment.k
    }

    pub fn members(&self, profile: usize) -> Vec<AnnotatorId> {
        self.assignment
            .members(profile)
            .into_iter()
            .map(|j| self.annotators[j].clone())
            .collect()
    }

    pub fn profile_of(&self, annotator: &AnnotatorId) -> Option<usize> {
        self.annotators
            .iter()
            .position(|a| a == annotator)
            .map(|j| self.assignment.hard[j])
    }

    /// `annotator_id,profile,membership_0,...` lines.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{FORMAT_HEADER}\nannotator_id,profile");
        for k in 0..self.k() {
            out.push_str(&format!(",membership_{k}"));
        }
        out.push('\n');
        for (j, a) in self.annotators.iter().enumerate() {
            out.push_str(&format!("{a},{}", self.assignment.hard[j]));
            for u in &self.assignment.memberships[j] {
                out.push_str(&format!(",{u}"));
            }
            out.push('\n');
        }
        out
    }
}
