//! Stage computations. Each stage is a function of the config and upstream artifacts;
//! the runner caches its serialized result.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use coopclass_core::bundle::ModelArtifact;
use coopclass_core::consensus::{bypass_with_clean_labels, estimate_consensus, majority_vote, ConsensusDataset};
use coopclass_core::coopnet::{pretrain_base, train_profile_model, CoopNet, MlpParams, TrainConfig, TrainSummary};
use coopclass_core::dataset::{
    build_validation_set, designated_split, load_samples, split_annotators, AnnotationRecord, AnnotatorId, SplitSpec,
};
use coopclass_core::metrics::{alteration_metrics, joint_decision_table, JointDecisionTable, UserAlteration};
use coopclass_core::noise::{augment_labels, estimate_profile_matrix, estimate_user_matrix, simulate_test_set, AugmentedDataset};
use coopclass_core::onboarding::{build_onboarding_vector, cooperative_inference, onboard_user, train_ova_svm};
use coopclass_core::profiles::{build_label_vector, fuzzy_kmeans, select_k, AnnotatorProfiles, ProfileAssignment};
use coopclass_core::rng::{derive_seed, substream};
use coopclass_core::sim::{generate_synthetic_dataset, simulate_annotators, simulated_profile, TEST_GROUP, TRAIN_GROUP};
use coopclass_core::{Consensus, Dataset, Mlp, Model, Onboarding, Profiles, Sample, Svm, Transition, Validation};

use crate::config::{ConsensusMethod, DataConfig, PipelineConfig, SplitMode};
use crate::error::{PipelineError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Data,
    Consensus,
    Split,
    Profiles,
    Matrices,
    Augment,
    Base,
    Models,
    Svm,
    Onboard,
    Evaluate,
    Reports,
}

impl Stage {
    pub const ALL: [Stage; 12] = [
        Stage::Data,
        Stage::Consensus,
        Stage::Split,
        Stage::Profiles,
        Stage::Matrices,
        Stage::Augment,
        Stage::Base,
        Stage::Models,
        Stage::Svm,
        Stage::Onboard,
        Stage::Evaluate,
        Stage::Reports,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Data => "data",
            Stage::Consensus => "consensus",
            Stage::Split => "split",
            Stage::Profiles => "profiles",
            Stage::Matrices => "matrices",
            Stage::Augment => "augment",
            Stage::Base => "base",
            Stage::Models => "models",
            Stage::Svm => "svm",
            Stage::Onboard => "onboard",
            Stage::Evaluate => "evaluate",
            Stage::Reports => "reports",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataArtifact {
    pub class_count: usize,
    /// Annotator ids encode group and true profile.
    pub simulated: bool,
    pub samples: Vec<Sample>,
    pub records: Vec<AnnotationRecord>,
    pub holdout: Vec<Sample>,
}

impl DataArtifact {
    pub fn dataset(&self) -> Result<Dataset> {
        Ok(Dataset::new(self.class_count, self.samples.clone(), self.records.clone())?)
    }
}

pub fn build_data(cfg: &PipelineConfig) -> Result<DataArtifact> {
    match &cfg.data {
        DataConfig::Synthetic { spec, profiles } => {
            let mut spec = spec.clone();
            spec.seed = derive_seed(cfg.seed, &format!("features:{}", spec.seed));
            let data = generate_synthetic_dataset::<f64>(&spec)?;
            let ds = simulate_annotators(
                data.train,
                spec.classes,
                profiles,
                &[TRAIN_GROUP, TEST_GROUP],
                cfg.seed_for("annotators"),
            )?;
            Ok(DataArtifact {
                class_count: spec.classes,
                simulated: true,
                samples: ds.samples().to_vec(),
                records: ds.annotations().collect(),
                holdout: data.holdout,
            })
        }
        DataConfig::Files {
            classes,
            sources,
            holdout_features,
            holdout_clean_labels,
        } => {
            let ds: Dataset = sources.load(*classes)?;
            let holdout = load_samples(holdout_features, Some(holdout_clean_labels.as_path()), *classes)?;
            Ok(DataArtifact {
                class_count: *classes,
                simulated: false,
                samples: ds.samples().to_vec(),
                records: ds.annotations().collect(),
                holdout,
            })
        }
    }
}

fn with_seed(config: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..config.clone()
    }
}

pub fn build_consensus(cfg: &PipelineConfig, ds: &Dataset) -> Result<Consensus> {
    let c = &cfg.consensus;
    match c.method {
        ConsensusMethod::Crowdlab => {
            let train = with_seed(&c.classifier, derive_seed(cfg.seed_for("consensus"), &c.classifier.seed.to_string()));
            Ok(estimate_consensus(ds, &train)?.0)
        }
        ConsensusMethod::Majority => {
            let labels = majority_vote(ds)?;
            let classes = ds.class_count();
            Ok(ConsensusDataset {
                sample_ids: ds.samples().iter().map(|s| s.id.clone()).collect(),
                distributions: labels
                    .iter()
                    .map(|&l| (0..classes).map(|c| if c == l { 1.0 } else { 0.0 }).collect())
                    .collect(),
                labels,
                annotator_weights: vec![1.0; ds.annotators().len()],
                model_weight: 0.0,
            })
        }
        ConsensusMethod::Clean => Ok(bypass_with_clean_labels(ds)?),
    }
}

pub fn build_split(cfg: &PipelineConfig, ds: &Dataset, consensus: &Consensus) -> Result<SplitSpec> {
    let min = cfg.split.min_labels_per_class;
    Ok(match cfg.split.mode {
        SplitMode::Groups => designated_split(ds, &consensus.labels, min, &format!("{TRAIN_GROUP}-"), &format!("{TEST_GROUP}-"))?,
        SplitMode::Random => split_annotators(ds, &consensus.labels, min, cfg.seed_for("split"))?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilesArtifact {
    pub profiles: Profiles,
    /// Encoded label vectors of the training annotators, aligned with `profiles.annotators`.
    pub vectors: Vec<Vec<f64>>,
    /// `(K, mean silhouette)` for every swept K; empty when K was fixed.
    pub sweep: Vec<(usize, f64)>,
    pub requested_k: usize,
}

/// Drops profiles without hard members and renumbers the rest in centroid order.
fn compact(assignment: ProfileAssignment<f64>) -> ProfileAssignment<f64> {
    let sizes = assignment.sizes();
    let keep: Vec<usize> = (0..assignment.k).filter(|&p| sizes[p] > 0).collect();
    if keep.len() == assignment.k {
        return assignment;
    }
    let mut renumber = vec![usize::MAX; assignment.k];
    for (new, &old) in keep.iter().enumerate() {
        renumber[old] = new;
    }
    let memberships = assignment
        .memberships
        .iter()
        .map(|row| {
            let kept: Vec<f64> = keep.iter().map(|&p| row[p]).collect();
            let total: f64 = kept.iter().sum();
            kept.iter().map(|u| u / total).collect()
        })
        .collect();
    ProfileAssignment {
        k: keep.len(),
        memberships,
        hard: assignment.hard.iter().map(|&h| renumber[h]).collect(),
        centroids: keep.iter().map(|&p| assignment.centroids[p].clone()).collect(),
        objective: assignment.objective,
        converged: assignment.converged,
    }
}

pub fn build_profiles(cfg: &PipelineConfig, ds: &Dataset, consensus: &Consensus, split: &SplitSpec) -> Result<ProfilesArtifact> {
    let p = &cfg.profiles;
    let seed = cfg.seed_for("label-vectors");
    let vectors: Vec<Vec<f64>> = split
        .train
        .par_iter()
        .map(|id| Ok(build_label_vector(ds, &consensus.labels, id, p.labels_per_class, seed)?.encode::<f64>(p.encoding)))
        .collect::<Result<_>>()?;
    let mut fuzzy = p.fuzzy.clone();
    fuzzy.seed = derive_seed(cfg.seed_for("fuzzy"), &fuzzy.seed.to_string());
    let (assignment, sweep, requested_k) = match p.fixed_k {
        Some(k) => (fuzzy_kmeans(&vectors, k, &fuzzy)?, Vec::new(), k),
        None => {
            let selection = select_k(&vectors, &p.k_range, &fuzzy)?;
            let sweep = selection.sweep.iter().map(|(r, _)| (r.k, r.score)).collect();
            (selection.best().1.clone(), sweep, selection.best_k)
        }
    };
    let assignment = compact(assignment);
    if assignment.k < requested_k {
        tracing::warn!(requested_k, effective_k = assignment.k, "empty profiles dropped");
    }
    Ok(ProfilesArtifact {
        profiles: AnnotatorProfiles {
            annotators: split.train.clone(),
            encoding: p.encoding,
            per_class: p.labels_per_class,
            assignment,
        },
        vectors,
        sweep,
        requested_k,
    })
}

pub fn build_matrices(cfg: &PipelineConfig, ds: &Dataset, consensus: &Consensus, profiles: &Profiles) -> Result<Vec<Transition>> {
    (0..profiles.k())
        .map(|k| {
            Ok(estimate_profile_matrix(
                ds,
                &consensus.labels,
                &profiles.members(k),
                k,
                cfg.profiles.matrix_smoothing,
            )?)
        })
        .collect()
}

/// `G` draws per sample from each profile matrix; with `G = 0` the members' own labels.
pub fn build_augmented(
    cfg: &PipelineConfig,
    ds: &Dataset,
    consensus: &Consensus,
    profiles: &Profiles,
    matrices: &[Transition],
) -> Result<Vec<AugmentedDataset>> {
    let draws = cfg.training.train.augmentation;
    let positions: Vec<usize> = (0..ds.len()).collect();
    (0..profiles.k())
        .map(|k| {
            if draws > 0 {
                let seed = cfg.seed_for(&format!("augment:{k}"));
                return Ok(augment_labels(&positions, &consensus.labels, &matrices[k], draws, seed, k)?);
            }
            let mut members = Vec::new();
            for id in profiles.members(k) {
                members.push(ds.annotator_position(&id)?);
            }
            let mut noisy: Vec<Vec<usize>> = vec![Vec::new(); ds.len()];
            for &a in &members {
                for &(s, label) in ds.labels_of_annotator(a) {
                    noisy[s].push(label);
                }
            }
            let samples: Vec<usize> = positions.iter().copied().filter(|&s| !noisy[s].is_empty()).collect();
            Ok(AugmentedDataset {
                profile: k,
                seed: 0,
                consensus: samples.iter().map(|&s| consensus.labels[s]).collect(),
                noisy: samples.iter().map(|&s| std::mem::take(&mut noisy[s])).collect(),
                samples,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseArtifact {
    pub base: Mlp,
    pub summary: TrainSummary,
}

/// Inputs of the base model, kept apart from the joint-training knobs so ablations over
/// those reuse one base.
#[derive(Serialize)]
pub struct BaseInputs<'a> {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub architecture: &'a coopclass_core::coopnet::Architecture,
}

impl<'a> BaseInputs<'a> {
    pub fn of(cfg: &'a PipelineConfig) -> Self {
        let t = &cfg.training.train;
        Self {
            max_epochs: t.max_epochs,
            patience: t.patience,
            batch_size: t.batch_size,
            learning_rate: t.base_learning_rate,
            holdout_fraction: t.holdout_fraction,
            seed: t.seed,
            architecture: &cfg.training.architecture,
        }
    }
}

pub fn build_base(cfg: &PipelineConfig, ds: &Dataset, consensus: &Consensus) -> Result<BaseArtifact> {
    let arch = &cfg.training.architecture;
    let init = MlpParams::init(
        &arch.base_dims(ds.feature_dim(), ds.class_count()),
        &mut substream(cfg.seed_for("base-init"), 0),
    );
    let features: Vec<&[f64]> = ds.samples().iter().map(|s| s.features.as_slice()).collect();
    let train = with_seed(&cfg.training.train, derive_seed(cfg.seed_for("base"), &cfg.training.train.seed.to_string()));
    let (base, summary) = pretrain_base(init, &features, &consensus.labels, &train)?;
    Ok(BaseArtifact { base, summary })
}

pub fn build_models(
    cfg: &PipelineConfig,
    ds: &Dataset,
    base: &Mlp,
    matrices: &[Transition],
    augmented: &[AugmentedDataset],
) -> Result<Vec<ModelArtifact<f64>>> {
    let t = &cfg.training;
    let features: Vec<&[f64]> = ds.samples().iter().map(|s| s.features.as_slice()).collect();
    augmented
        .par_iter()
        .map(|aug| {
            let k = aug.profile;
            let mut init = substream(cfg.seed_for("model-init"), k as u64);
            let net = CoopNet::new(base.clone(), &t.architecture, k, t.train.lambda, matrices[k].clone(), t.mode, &mut init)?;
            let train = with_seed(&t.train, derive_seed(cfg.seed_for(&format!("model:{k}")), &t.train.seed.to_string()));
            let (model, summary) = train_profile_model(net, &features, aug, &train)?;
            tracing::info!(profile = k, epochs = summary.epochs_run, best = summary.best_holdout_loss, "profile model trained");
            Ok(ModelArtifact::new(model, summary))
        })
        .collect()
}

pub fn build_svm(cfg: &PipelineConfig, profiles: &ProfilesArtifact) -> Result<Svm> {
    let mut svm = cfg.onboarding.svm.clone();
    svm.seed = derive_seed(cfg.seed_for("svm"), &svm.seed.to_string());
    Ok(train_ova_svm(&profiles.vectors, &profiles.profiles.assignment.hard, profiles.profiles.k(), &svm)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserOnboarding {
    pub user: AnnotatorId,
    /// Profile index from the simulated id, when the data is simulated.
    pub true_profile: Option<usize>,
    pub matrix: Transition,
    pub validation_labels: Vec<usize>,
    pub result: Onboarding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnboardArtifact {
    pub validation: Validation,
    /// Clean-labeled holdout items outside the validation set.
    pub test: Vec<Sample>,
    pub users: Vec<UserOnboarding>,
}

pub fn build_onboarding(
    cfg: &PipelineConfig,
    data: &DataArtifact,
    ds: &Dataset,
    consensus: &Consensus,
    split: &SplitSpec,
    svm: &Svm,
    models: &[Model],
) -> Result<OnboardArtifact> {
    let m = cfg.onboarding.per_class;
    let validation = build_validation_set(&data.holdout, m, data.class_count, cfg.seed_for("validation"))?;
    let test: Vec<Sample> = validation
        .exclude_from(&data.holdout)
        .into_iter()
        .filter(|s| s.clean_label.is_some())
        .collect();
    if test.is_empty() {
        return Err(PipelineError::Config("no clean-labeled holdout items remain for testing".into()));
    }
    let clean: Vec<usize> = (0..validation.len()).map(|i| validation.class_of(i)).collect();
    let encoding = cfg.profiles.encoding;
    let users = split
        .test
        .par_iter()
        .map(|id| {
            let matrix = estimate_user_matrix::<f64>(ds, &consensus.labels, id)?;
            let labels = simulate_test_set(&clean, &matrix, cfg.seed_for(&format!("validation-labels:{id}")))?;
            let map: HashMap<_, _> = validation.items.iter().map(|s| s.id.clone()).zip(labels.iter().copied()).collect();
            let vector = build_onboarding_vector(id, &validation, &map)?;
            let error_seed = cfg.onboarding.profile_error.then(|| cfg.seed_for(&format!("profile-error:{id}")));
            let result = onboard_user(&vector, &vector.encode::<f64>(encoding), &validation, svm, models, error_seed)?;
            Ok(UserOnboarding {
                user: id.clone(),
                true_profile: if data.simulated { simulated_profile(id) } else { None },
                matrix,
                validation_labels: labels,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OnboardArtifact { validation, test, users })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserEvaluation {
    pub user: AnnotatorId,
    pub accepted: bool,
    pub assigned_profile: usize,
    pub alteration: UserAlteration,
    pub joint: JointDecisionTable,
}

/// Simulated test labels per user, cooperative predictions for accepted users (rejected
/// users keep their own labels), and the resulting metrics.
pub fn build_evaluation(cfg: &PipelineConfig, onboard: &OnboardArtifact, models: &[Model]) -> Result<Vec<UserEvaluation>> {
    let clean: Vec<usize> = onboard.test.iter().map(|s| s.clean_label.expect("filtered")).collect();
    onboard
        .users
        .par_iter()
        .map(|u| {
            let labels = simulate_test_set(&clean, &u.matrix, cfg.seed_for(&format!("test-labels:{}", u.user)))?;
            let stream: Vec<(&[f64], usize)> = onboard.test.iter().map(|s| s.features.as_slice()).zip(labels.iter().copied()).collect();
            let coop = if u.result.accepted {
                cooperative_inference(&u.result, models, cfg.onboarding.assignment, &stream)?
            } else {
                labels.clone()
            };
            let base_model = &models[u.result.assigned_profile];
            let base = onboard
                .test
                .iter()
                .map(|s| base_model.base_prediction(&s.features))
                .collect::<coopclass_core::Result<Vec<_>>>()?;
            Ok(UserEvaluation {
                user: u.user.clone(),
                accepted: u.result.accepted,
                assigned_profile: u.result.assigned_profile,
                alteration: alteration_metrics(u.user.as_str(), &clean, &labels, &coop)?,
                joint: joint_decision_table(&clean, &labels, &base, &coop)?,
            })
        })
        .collect()
}
