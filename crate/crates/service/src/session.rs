//! Session state machine, independent of the HTTP transport.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use coopclass_core::dataset::SampleId;
use coopclass_core::metrics::{alteration_metrics, joint_decision_table, JointDecisionTable, UserAlteration};
use coopclass_core::onboarding::{build_onboarding_vector, onboard_user, soft_distribution, AssignmentMode};
use coopclass_core::rng::derive_seed;
use coopclass_core::scalar::argmax;
use coopclass_core::{Bundle, Onboarding};

use crate::error::ApiError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Onboarding,
    Profiled,
    Cooperating,
    Rejected,
    Closed,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Onboarding,
        Phase::Profiled,
        Phase::Cooperating,
        Phase::Rejected,
        Phase::Closed,
    ];

    /// Position along the forward order; the two outcomes of profiling share a rank.
    pub fn rank(self) -> u8 {
        match self {
            Phase::Onboarding => 0,
            Phase::Profiled => 1,
            Phase::Cooperating | Phase::Rejected => 2,
            Phase::Closed => 3,
        }
    }

    pub fn can_advance_to(self, next: Phase) -> bool {
        matches!(
            (self, next),
            (Phase::Onboarding, Phase::Profiled)
                | (Phase::Profiled, Phase::Cooperating)
                | (Phase::Profiled, Phase::Rejected)
                | (Phase::Cooperating, Phase::Closed)
                | (Phase::Rejected, Phase::Closed)
        )
    }
}

/// Trained artifacts plus lookup tables, shared read-only by all sessions.
#[derive(Debug)]
pub struct Deployment {
    pub bundle: Bundle,
    validation_index: HashMap<SampleId, usize>,
    test_index: HashMap<SampleId, usize>,
    /// Every test item carries a clean label, so running statistics can be reported.
    pub evaluation: bool,
}

impl Deployment {
    pub fn new(bundle: Bundle) -> coopclass_core::Result<Self> {
        bundle.validate()?;
        let validation_index = bundle.validation.items.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        let test_index = bundle.test_items.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        let evaluation = !bundle.test_items.is_empty() && bundle.test_items.iter().all(|s| s.clean_label.is_some());
        Ok(Self {
            bundle,
            validation_index,
            test_index,
            evaluation,
        })
    }

    pub fn class_count(&self) -> usize {
        self.bundle.class_count
    }

    pub fn validation_total(&self) -> usize {
        self.bundle.validation.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub sample_id: String,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub sample_id: String,
    pub previous: usize,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub submitted: usize,
    pub remaining: usize,
    pub overwritten: bool,
}

/// One cooperation request and its answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub sample_id: String,
    pub user_label: usize,
    pub prediction: usize,
    pub base_prediction: usize,
    pub altered: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clean_label: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub alteration: UserAlteration,
    pub joint: JointDecisionTable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Evaluation,
    Blind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub user_id: String,
    pub phase: Phase,
    pub mode: Mode,
    pub onboarding: Option<Onboarding>,
    pub steps: Vec<Step>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<RunningStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub user_id: String,
    pub phase: Phase,
    pub history: Vec<Phase>,
    pub seed: u64,
    pub class_count: usize,
    pub validation_total: usize,
    pub submitted: usize,
    pub remaining: usize,
    pub labels: BTreeMap<String, usize>,
    pub audit: Vec<AuditEntry>,
    pub onboarding: Option<Onboarding>,
    pub cooperated: usize,
    pub test_total: usize,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<RunningStats>,
}

#[derive(Clone, Debug)]
pub struct Session {
    pub id: String,
    pub user_id: String,
    pub seed: u64,
    phase: Phase,
    history: Vec<Phase>,
    labels: BTreeMap<String, usize>,
    audit: Vec<AuditEntry>,
    onboarding: Option<Onboarding>,
    steps: Vec<Step>,
    answered: HashMap<String, usize>,
}

impl Session {
    pub fn new(id: impl Into<String>, user_id: impl Into<String>, seed: u64) -> Self {
        Self {
            id: id.into(),
            user_id: user_id.into(),
            seed,
            phase: Phase::Onboarding,
            history: vec![Phase::Onboarding],
            labels: BTreeMap::new(),
            audit: Vec::new(),
            onboarding: None,
            steps: Vec::new(),
            answered: HashMap::new(),
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn onboarding(&self) -> Option<&Onboarding> {
        self.onboarding.as_ref()
    }

    fn advance(&mut self, next: Phase) -> Result<(), ApiError> {
        if !self.phase.can_advance_to(next) {
            return Err(ApiError::conflict(format!("cannot move from {:?} to {next:?}", self.phase)));
        }
        self.phase = next;
        self.history.push(next);
        Ok(())
    }

    fn require(&self, phase: Phase, action: &str) -> Result<(), ApiError> {
        if self.phase == phase {
            return Ok(());
        }
        if self.phase == Phase::Rejected && phase == Phase::Cooperating {
            return Err(ApiError::forbidden(format!(
                "user `{}` was rejected and operates alone",
                self.user_id
            )));
        }
        Err(ApiError::conflict(format!("{action} needs phase {phase:?}, session is {:?}", self.phase)))
    }

    /// Items in a per-session shuffled order so the class-major layout is not revealed.
    fn shuffled<'a>(&self, items: impl Iterator<Item = (&'a SampleId, &'a [f64])>) -> Vec<Item> {
        let mut out: Vec<(u64, Item)> = items
            .map(|(id, x)| {
                (
                    derive_seed(self.seed, id.as_str()),
                    Item {
                        sample_id: id.to_string(),
                        features: x.to_vec(),
                    },
                )
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.sample_id.cmp(&b.1.sample_id)));
        out.into_iter().map(|(_, item)| item).collect()
    }

    pub fn validation_manifest(&self, dep: &Deployment) -> Vec<Item> {
        self.shuffled(dep.bundle.validation.items.iter().map(|s| (&s.id, s.features.as_slice())))
    }

    pub fn test_manifest(&self, dep: &Deployment) -> Result<Vec<Item>, ApiError> {
        let closed_after_cooperating = self.phase == Phase::Closed && self.onboarding.as_ref().is_some_and(|o| o.accepted);
        if !closed_after_cooperating {
            self.require(Phase::Cooperating, "listing test items")?;
        }
        Ok(self.shuffled(dep.bundle.test_items.iter().map(|s| (&s.id, s.features.as_slice()))))
    }

    pub fn submit_label(&mut self, dep: &Deployment, sample_id: &str, label: usize) -> Result<Progress, ApiError> {
        self.require(Phase::Onboarding, "submitting validation labels")?;
        if !dep.validation_index.contains_key(&SampleId::new(sample_id)) {
            return Err(ApiError::not_found(format!("`{sample_id}` is not a validation item")));
        }
        if label >= dep.class_count() {
            return Err(ApiError::bad_request(format!(
                "label {label} out of range for {} classes",
                dep.class_count()
            )));
        }
        let previous = self.labels.insert(sample_id.to_string(), label);
        if let Some(previous) = previous {
            self.audit.push(AuditEntry {
                sample_id: sample_id.to_string(),
                previous,
                label,
            });
        }
        Ok(Progress {
            submitted: self.labels.len(),
            remaining: dep.validation_total() - self.labels.len(),
            overwritten: previous.is_some(),
        })
    }

    pub fn finalize(&mut self, dep: &Deployment) -> Result<&Onboarding, ApiError> {
        self.require(Phase::Onboarding, "finalizing onboarding")?;
        let labels: HashMap<SampleId, usize> = self.labels.iter().map(|(k, &v)| (SampleId::new(k.as_str()), v)).collect();
        let user = self.user_id.as_str().into();
        let vector = build_onboarding_vector(&user, &dep.bundle.validation, &labels)?;
        let encoded = vector.encode::<f64>(dep.bundle.encoding);
        let result = onboard_user(&vector, &encoded, &dep.bundle.validation, &dep.bundle.svm, &dep.bundle.models, None)?;
        self.advance(Phase::Profiled)?;
        let next = if result.accepted {
            Phase::Cooperating
        } else {
            Phase::Rejected
        };
        self.onboarding = Some(result);
        self.advance(next)?;
        Ok(self.onboarding.as_ref().expect("just set"))
    }

    /// Joint prediction for one test item. Repeating an answered item with the same label
    /// returns the recorded step; a different label is a conflict.
    pub fn cooperate(&mut self, dep: &Deployment, sample_id: &str, user_label: usize) -> Result<Step, ApiError> {
        self.require(Phase::Cooperating, "cooperation")?;
        let &index = dep
            .test_index
            .get(&SampleId::new(sample_id))
            .ok_or_else(|| ApiError::not_found(format!("`{sample_id}` is not a test item")))?;
        if user_label >= dep.class_count() {
            return Err(ApiError::bad_request(format!(
                "label {user_label} out of range for {} classes",
                dep.class_count()
            )));
        }
        if let Some(&i) = self.answered.get(sample_id) {
            let step = &self.steps[i];
            if step.user_label != user_label {
                return Err(ApiError::conflict(format!(
                    "`{sample_id}` was already answered with label {}",
                    step.user_label
                )));
            }
            return Ok(step.clone());
        }
        let result = self.onboarding.as_ref().expect("cooperating sessions are profiled");
        let item = &dep.bundle.test_items[index];
        let models = &dep.bundle.models;
        let assigned = &models[result.assigned_profile];
        let prediction = match dep.bundle.assignment {
            AssignmentMode::Hard => assigned.scalar_prediction(&item.features, user_label)?,
            AssignmentMode::Soft => argmax(&soft_distribution(models, &result.profile_scores, &item.features, user_label)?),
        };
        let step = Step {
            sample_id: sample_id.to_string(),
            user_label,
            prediction,
            base_prediction: assigned.base_prediction(&item.features)?,
            altered: prediction != user_label,
            clean_label: item.clean_label,
        };
        self.answered.insert(sample_id.to_string(), self.steps.len());
        self.steps.push(step.clone());
        Ok(step)
    }

    pub fn mode(&self, dep: &Deployment) -> Mode {
        if dep.evaluation {
            Mode::Evaluation
        } else {
            Mode::Blind
        }
    }

    /// Alteration statistics over the transcript so far; `None` in blind mode.
    pub fn stats(&self, dep: &Deployment) -> Result<Option<RunningStats>, ApiError> {
        if !dep.evaluation || self.onboarding.is_none() {
            return Ok(None);
        }
        let clean: Vec<usize> = self.steps.iter().map(|s| s.clean_label.expect("evaluation mode")).collect();
        let human: Vec<usize> = self.steps.iter().map(|s| s.user_label).collect();
        let base: Vec<usize> = self.steps.iter().map(|s| s.base_prediction).collect();
        let coop: Vec<usize> = self.steps.iter().map(|s| s.prediction).collect();
        Ok(Some(RunningStats {
            alteration: alteration_metrics(&self.user_id, &clean, &human, &coop)?,
            joint: joint_decision_table(&clean, &human, &base, &coop)?,
        }))
    }

    pub fn report(&self, dep: &Deployment) -> Result<SessionReport, ApiError> {
        if self.phase.rank() < Phase::Cooperating.rank() {
            return Err(ApiError::conflict("no report before onboarding is finalized"));
        }
        Ok(SessionReport {
            session_id: self.id.clone(),
            user_id: self.user_id.clone(),
            phase: self.phase,
            mode: self.mode(dep),
            onboarding: self.onboarding.clone(),
            steps: self.steps.clone(),
            stats: self.stats(dep)?,
        })
    }

    pub fn close(&mut self, dep: &Deployment) -> Result<SessionReport, ApiError> {
        if self.phase.rank() < Phase::Cooperating.rank() {
            return Err(ApiError::conflict("cannot close a session before onboarding is finalized"));
        }
        self.advance(Phase::Closed)?;
        self.report(dep)
    }

    pub fn view(&self, dep: &Deployment) -> Result<SessionView, ApiError> {
        Ok(SessionView {
            session_id: self.id.clone(),
            user_id: self.user_id.clone(),
            phase: self.phase,
            history: self.history.clone(),
            seed: self.seed,
            class_count: dep.class_count(),
            validation_total: dep.validation_total(),
            submitted: self.labels.len(),
            remaining: dep.validation_total() - self.labels.len(),
            labels: self.labels.clone(),
            audit: self.audit.clone(),
            onboarding: self.onboarding.clone(),
            cooperated: self.steps.len(),
            test_total: dep.bundle.test_items.len(),
            mode: self.mode(dep),
            stats: self.stats(dep)?,
        })
    }
}
