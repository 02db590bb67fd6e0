//! Versioned JSON artifacts shared by the pipeline and the session service.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::coopnet::{CoopNet, TrainSummary};
use crate::dataset::{LabeledSample, ValidationSet};
use crate::error::{Error, Result};
use crate::onboarding::{AssignmentMode, OvaSvm};
use crate::profiles::Encoding;
use crate::scalar::Scalar;

pub const MODEL_SCHEMA: &str = "coopclass-model-v1";
pub const SVM_SCHEMA: &str = "coopclass-svm-v1";
pub const BUNDLE_SCHEMA: &str = "coopclass-bundle-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelArtifact<T> {
    pub schema: String,
    pub model: CoopNet<T>,
    pub summary: TrainSummary,
}

impl<T: Scalar> ModelArtifact<T> {
    pub fn new(model: CoopNet<T>, summary: TrainSummary) -> Self {
        Self {
            schema: MODEL_SCHEMA.into(),
            model,
            summary,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SvmArtifact<T> {
    pub schema: String,
    pub encoding: Encoding,
    pub svm: OvaSvm<T>,
}

impl<T: Scalar> SvmArtifact<T> {
    pub fn new(svm: OvaSvm<T>, encoding: Encoding) -> Self {
        Self {
            schema: SVM_SCHEMA.into(),
            encoding,
            svm,
        }
    }
}

/// Everything a live onboarding and cooperation session needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ServingBundle<T> {
    pub schema: String,
    pub class_count: usize,
    pub encoding: Encoding,
    pub assignment: AssignmentMode,
    pub validation: ValidationSet<T>,
    /// Cooperation items. Clean labels, when present, enable running statistics.
    pub test_items: Vec<LabeledSample<T>>,
    pub models: Vec<CoopNet<T>>,
    pub svm: OvaSvm<T>,
    pub config_hash: String,
}

impl<T: Scalar> ServingBundle<T> {
    pub fn validate(&self) -> Result<()> {
        if self.schema != BUNDLE_SCHEMA {
            return Err(Error::Validation(format!("unsupported bundle schema `{}`", self.schema)));
        }
        if self.models.is_empty() || self.models.len() != self.svm.k() {
            return Err(Error::Validation(format!(
                "{} models for {} profiles",
                self.models.len(),
                self.svm.k()
            )));
        }
        if self.models.iter().any(|m| m.class_count != self.class_count) || self.validation.class_count != self.class_count {
            return Err(Error::Validation("class counts disagree".into()));
        }
        Ok(())
    }
}

/// Reads a JSON artifact and checks its `schema` field.
pub fn read_artifact<A: DeserializeOwned>(path: impl AsRef<Path>, schema: &str) -> Result<A> {
    let text = fs::read_to_string(path.as_ref())?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get("schema").and_then(|s| s.as_str()) {
        Some(s) if s == schema => Ok(serde_json::from_value(value)?),
        other => Err(Error::Validation(format!(
            "{}: expected schema `{schema}`, found {other:?}",
            path.as_ref().display()
        ))),
    }
}

pub fn write_artifact<A: Serialize>(path: impl AsRef<Path>, artifact: &A) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(artifact)? + "\n")?;
    Ok(())
}
