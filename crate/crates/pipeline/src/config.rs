//! Pipeline configuration: a single TOML document with an explicit schema version.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use coopclass_core::coopnet::{Architecture, ComponentMode, TrainConfig};
use coopclass_core::dataset::DatasetSources;
use coopclass_core::onboarding::{AssignmentMode, SvmConfig};
use coopclass_core::profiles::{Encoding, FuzzyConfig};
use coopclass_core::rng::derive_seed;
use coopclass_core::sim::{default_flip_profiles, FlipProfileSpec, SyntheticDatasetSpec};

use crate::error::{PipelineError, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Output directory; not part of the config hash.
    pub out: PathBuf,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub consensus: ConsensusConfig,
    pub profiles: ProfilesConfig,
    pub training: TrainingConfig,
    pub onboarding: OnboardingConfig,
    pub evaluation: EvaluationConfig,
    pub ablation: AblationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            split: SplitConfig::default(),
            consensus: ConsensusConfig::default(),
            profiles: ProfilesConfig::default(),
            training: TrainingConfig::default(),
            onboarding: OnboardingConfig::default(),
            evaluation: EvaluationConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    /// Gaussian class clusters annotated by simulated flip profiles. Annotator ids carry
    /// their group (`train-…` / `test-…`) and true profile.
    Synthetic {
        #[serde(default)]
        spec: SyntheticDatasetSpec,
        #[serde(default = "default_profiles")]
        profiles: Vec<FlipProfileSpec>,
    },
    /// Annotations and features on disk plus a clean-labeled holdout pool.
    Files {
        classes: usize,
        sources: DatasetSources,
        holdout_features: PathBuf,
        holdout_clean_labels: PathBuf,
    },
}

fn default_profiles() -> Vec<FlipProfileSpec> {
    default_flip_profiles(0.6)
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic {
            spec: SyntheticDatasetSpec::default(),
            profiles: default_profiles(),
        }
    }
}

impl DataConfig {
    pub fn class_count(&self) -> usize {
        match self {
            DataConfig::Synthetic { spec, .. } => spec.classes,
            DataConfig::Files { classes, .. } => *classes,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Train and test users from the `train-` / `test-` id prefixes.
    #[default]
    Groups,
    /// A seeded half split of all annotators that pass the label filter.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub mode: SplitMode,
    pub min_labels_per_class: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            mode: SplitMode::Groups,
            min_labels_per_class: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsensusMethod {
    /// Majority vote, a classifier fit to it and a trust-weighted ensemble.
    #[default]
    Crowdlab,
    Majority,
    /// Clean labels stand in for the consensus.
    Clean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusConfig {
    pub method: ConsensusMethod,
    pub classifier: TrainConfig,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            method: ConsensusMethod::Crowdlab,
            classifier: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfilesConfig {
    /// Labels per consensus class in each annotator's label vector.
    pub labels_per_class: usize,
    pub encoding: Encoding,
    pub k_range: Vec<usize>,
    /// Skips the silhouette sweep. `1` is the no-profiles baseline.
    pub fixed_k: Option<usize>,
    pub fuzzy: FuzzyConfig,
    /// Additive count smoothing for profile transition matrices.
    pub matrix_smoothing: f64,
}

impl Default for ProfilesConfig {
    fn default() -> Self {
        Self {
            labels_per_class: 20,
            encoding: Encoding::OneHot,
            k_range: vec![2, 3, 4, 5, 6],
            fixed_k: None,
            fuzzy: FuzzyConfig::default(),
            matrix_smoothing: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub architecture: Architecture,
    pub mode: ComponentMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            architecture: Architecture::default(),
            mode: ComponentMode::Full,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnboardingConfig {
    /// Validation items per class; must equal the label-vector length per class.
    pub per_class: usize,
    pub svm: SvmConfig,
    pub assignment: AssignmentMode,
    /// Serve every user with a randomly chosen wrong profile.
    pub profile_error: bool,
}

impl Default for OnboardingConfig {
    fn default() -> Self {
        Self {
            per_class: 20,
            svm: SvmConfig::default(),
            assignment: AssignmentMode::Hard,
            profile_error: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Improvement tolerance for improved / maintained / not-improved.
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub augmentation: Vec<usize>,
    pub k: Vec<usize>,
    pub lambda: Vec<f64>,
    pub noise_rate: Vec<f64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            augmentation: vec![0, 1, 3, 5],
            k: vec![1, 2, 3, 6, 10],
            lambda: vec![0.0, 0.01, 0.1, 1.0, 10.0],
            noise_rate: vec![0.4, 0.6, 0.8, 0.9],
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(e.to_string())
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(config_err(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        match &self.data {
            DataConfig::Synthetic { spec, profiles } => {
                spec.validate()?;
                if profiles.is_empty() {
                    return Err(config_err("synthetic data needs at least one flip profile"));
                }
                for p in profiles {
                    p.validate(spec.classes)?;
                }
            }
            DataConfig::Files {
                classes,
                sources,
                holdout_features,
                holdout_clean_labels,
            } => {
                if *classes < 2 {
                    return Err(config_err("need at least two classes"));
                }
                let mut paths = vec![&sources.annotations, holdout_features, holdout_clean_labels];
                paths.extend(sources.features.iter());
                paths.extend(sources.clean_labels.iter());
                if let Some(missing) = paths.into_iter().find(|p| !p.exists()) {
                    return Err(config_err(format!("{} does not exist", missing.display())));
                }
                if self.split.mode == SplitMode::Groups {
                    return Err(config_err("file data needs `split.mode = \"random\"`"));
                }
            }
        }
        let p = &self.profiles;
        if p.labels_per_class == 0 || self.split.min_labels_per_class == 0 {
            return Err(config_err("labels per class must be at least 1"));
        }
        if self.onboarding.per_class != p.labels_per_class {
            return Err(config_err(format!(
                "onboarding.per_class ({}) must equal profiles.labels_per_class ({}) so onboarding vectors match the profile space",
                self.onboarding.per_class, p.labels_per_class
            )));
        }
        if self.split.min_labels_per_class < p.labels_per_class {
            return Err(config_err("split.min_labels_per_class must be at least profiles.labels_per_class"));
        }
        match p.fixed_k {
            Some(0) => return Err(config_err("fixed_k must be at least 1")),
            Some(_) => {}
            None if p.k_range.is_empty() || p.k_range.iter().any(|&k| k < 2) => {
                return Err(config_err("k_range must be nonempty with every K >= 2"));
            }
            None => {}
        }
        self.consensus.classifier.validate()?;
        self.training.train.validate()?;
        if !(self.evaluation.tolerance >= 0.0) {
            return Err(config_err("evaluation.tolerance must be nonnegative"));
        }
        if self.onboarding.svm.c <= 0.0 {
            return Err(config_err("svm.c must be positive"));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        digest(&[&serde_json::to_string(&canonical).expect("config serializes")])
    }

    /// Seed for one named random stream, derived from the global seed.
    pub fn seed_for(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }
}

pub fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}
