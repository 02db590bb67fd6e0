//! Onboarding of unseen users: validation-set label vectors, OVA SVM profiling, the entry
//! condition and cooperative inference with the matched profile models.

mod svm;

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coopnet::CoopNet;
use crate::dataset::{AnnotatorId, SampleId, ValidationSet};
use crate::error::{Error, Result};
use crate::profiles::LabelVector;
use crate::rng;
use crate::scalar::{argmax, Scalar};

pub use svm::{train_ova_svm, OvaSvm, ProfileScores, SvmConfig};

/// Block-ordered user labels on the validation set. Missing items are reported by id.
pub fn build_onboarding_vector<T>(
    user: &AnnotatorId,
    validation: &ValidationSet<T>,
    labels: &HashMap<SampleId, usize>,
) -> Result<LabelVector> {
    let missing: Vec<String> = validation
        .items
        .iter()
        .filter(|s| !labels.contains_key(&s.id))
        .map(|s| s.id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Incomplete(missing));
    }
    let mut out = Vec::with_capacity(validation.len());
    for s in &validation.items {
        let label = labels[&s.id];
        if label >= validation.class_count {
            return Err(Error::Validation(format!("label {label} for `{}` out of range", s.id)));
        }
        out.push(label);
    }
    Ok(LabelVector {
        annotator: user.clone(),
        class_count: validation.class_count,
        per_class: validation.per_class,
        labels: out,
    })
}

/// Accepted only when the base model is strictly more accurate than the user.
pub fn entry_condition(base_accuracy: f64, user_accuracy: f64) -> bool {
    base_accuracy > user_accuracy
}

/// Fraction of validation items whose label in `labels` matches the clean class.
pub fn validation_accuracy<T>(validation: &ValidationSet<T>, labels: &LabelVector) -> f64 {
    if validation.is_empty() {
        return 0.0;
    }
    let correct = (0..validation.len())
        .filter(|&i| labels.labels[i] == validation.class_of(i))
        .count();
    correct as f64 / validation.len() as f64
}

pub fn base_validation_accuracy<T: Scalar>(validation: &ValidationSet<T>, model: &CoopNet<T>) -> Result<f64> {
    if validation.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for (i, s) in validation.items.iter().enumerate() {
        if model.base_prediction(&s.features)? == validation.class_of(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / validation.len() as f64)
}

/// A random profile other than `predicted`, for profiling-error experiments.
pub fn inject_profile_error(predicted: usize, k: usize, seed: u64) -> usize {
    if k < 2 {
        return predicted;
    }
    let shift = rng::substream(seed, 0).random_range(1..k);
    (predicted + shift) % k
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentMode {
    #[default]
    Hard,
    Soft,
}

impl std::str::FromStr for AssignmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(AssignmentMode::Hard),
            "soft" => Ok(AssignmentMode::Soft),
            other => Err(Error::Config(format!("unknown assignment mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OnboardingResult<T> {
    pub user: AnnotatorId,
    pub profile_scores: Vec<T>,
    pub hard_profile: usize,
    /// Profile whose model serves the user; differs from `hard_profile` only under error injection.
    pub assigned_profile: usize,
    pub user_val_accuracy: f64,
    pub base_val_accuracy: f64,
    pub accepted: bool,
}

/// Profiles the user, applies the entry condition against the assigned profile's base model.
pub fn onboard_user<T: Scalar>(
    vector: &LabelVector,
    encoded: &[T],
    validation: &ValidationSet<T>,
    svm: &OvaSvm<T>,
    models: &[CoopNet<T>],
    profile_error_seed: Option<u64>,
) -> Result<OnboardingResult<T>> {
    if models.len() != svm.k() {
        return Err(Error::Config(format!("{} models for {} profiles", models.len(), svm.k())));
    }
    let scores = svm.profile_user(encoded)?;
    let assigned = match profile_error_seed {
        Some(seed) => inject_profile_error(scores.hard, svm.k(), seed),
        None => scores.hard,
    };
    let user_val_accuracy = validation_accuracy(validation, vector);
    let base_val_accuracy = base_validation_accuracy(validation, &models[assigned])?;
    Ok(OnboardingResult {
        user: vector.annotator.clone(),
        profile_scores: scores.probabilities,
        hard_profile: scores.hard,
        assigned_profile: assigned,
        user_val_accuracy,
        base_val_accuracy,
        accepted: entry_condition(base_val_accuracy, user_val_accuracy),
    })
}

/// Mixture `sum_k w_k * m_k(x, label)` used by soft assignment.
pub fn soft_distribution<T: Scalar>(models: &[CoopNet<T>], weights: &[T], features: &[T], label: usize) -> Result<Vec<T>> {
    let mut mix = vec![T::zero(); models.first().map_or(0, |m| m.class_count)];
    for (m, &w) in models.iter().zip(weights) {
        for (acc, p) in mix.iter_mut().zip(m.forward(features, label)?) {
            *acc += w * p;
        }
    }
    Ok(mix)
}

/// Cooperative predictions for `(features, user label)` pairs.
pub fn cooperative_inference<T: Scalar>(
    result: &OnboardingResult<T>,
    models: &[CoopNet<T>],
    mode: AssignmentMode,
    stream: &[(&[T], usize)],
) -> Result<Vec<usize>> {
    if !result.accepted {
        return Err(Error::Policy(format!("user `{}` was rejected and operates alone", result.user)));
    }
    if models.len() != result.profile_scores.len() {
        return Err(Error::Config(format!(
            "{} models for {} profile scores",
            models.len(),
            result.profile_scores.len()
        )));
    }
    stream
        .iter()
        .map(|&(x, y)| match mode {
            AssignmentMode::Hard => models[result.assigned_profile].scalar_prediction(x, y),
            AssignmentMode::Soft => Ok(argmax(&soft_distribution(models, &result.profile_scores, x, y)?)),
        })
        .collect()
}
