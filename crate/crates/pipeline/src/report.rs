//! Report tables and the run summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use coopclass_core::bundle::ModelArtifact;
use coopclass_core::metrics::{aggregate_users, classify_outcome, AggregateReport, JointDecisionTable, UserAlteration, JOINT_CELLS};
use coopclass_core::sim::simulated_profile;

use crate::error::{PipelineError, Result};
use crate::run::{write_json, write_text};
use crate::stages::{BaseArtifact, OnboardArtifact, ProfilesArtifact, UserEvaluation};

pub const REPORT_SCHEMA: &str = "coopclass-report-v1";
pub const SUMMARY_FILE: &str = "reports/summary.json";

pub struct ReportInputs<'a> {
    pub config_hash: String,
    pub tolerance: f64,
    pub profiles: &'a ProfilesArtifact,
    pub base: &'a BaseArtifact,
    pub models: &'a [ModelArtifact<f64>],
    pub onboard: &'a OnboardArtifact,
    pub evaluation: &'a [UserEvaluation],
}

/// Users whose discovered profile agrees with the true one under a one-to-one matching.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilingReport {
    pub train_correct: usize,
    pub train_total: usize,
    pub test_correct: usize,
    pub test_total: usize,
    /// True profile to discovered profile, from the training users.
    pub mapping: BTreeMap<usize, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub profile: usize,
    pub members: usize,
    pub epochs_run: usize,
    pub best_holdout_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub config_hash: String,
    pub k: usize,
    pub requested_k: usize,
    pub silhouette: Vec<(usize, f64)>,
    pub users: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub no_accepted_users: bool,
    /// Over accepted users.
    pub aggregate: Option<AggregateReport>,
    /// Mean original accuracy over every test user.
    pub all_users_original_accuracy: f64,
    /// Summed over accepted users.
    pub joint: JointDecisionTable,
    pub profiling: Option<ProfilingReport>,
    pub base_epochs: usize,
    pub models: Vec<ModelRow>,
}

impl Summary {
    pub fn load(out: &Path) -> Result<Self> {
        let path = out.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::Dependency(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn not_improved(&self) -> usize {
        self.aggregate.as_ref().map_or(0, |a| a.not_improved)
    }

    pub fn post_accuracy(&self) -> Option<f64> {
        self.aggregate.as_ref().map(|a| a.post_accuracy)
    }
}

/// Greedy one-to-one matching by descending co-occurrence count, ties to lower indices.
pub fn match_profiles(pairs: &[(usize, usize)]) -> BTreeMap<usize, usize> {
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &p in pairs {
        *counts.entry(p).or_default() += 1;
    }
    let mut ranked: Vec<((usize, usize), usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut mapping = BTreeMap::new();
    let mut used = std::collections::BTreeSet::new();
    for ((t, d), _) in ranked {
        if !mapping.contains_key(&t) && !used.contains(&d) {
            mapping.insert(t, d);
            used.insert(d);
        }
    }
    mapping
}

fn profiling(inputs: &ReportInputs<'_>) -> Option<ProfilingReport> {
    let p = &inputs.profiles.profiles;
    let train: Vec<(usize, usize)> = p
        .annotators
        .iter()
        .zip(&p.assignment.hard)
        .map(|(id, &h)| simulated_profile(id).map(|t| (t, h)))
        .collect::<Option<_>>()?;
    let test: Vec<(usize, usize)> = inputs
        .onboard
        .users
        .iter()
        .map(|u| u.true_profile.map(|t| (t, u.result.hard_profile)))
        .collect::<Option<_>>()?;
    let mapping = match_profiles(&train);
    let correct = |pairs: &[(usize, usize)]| pairs.iter().filter(|(t, d)| mapping.get(t) == Some(d)).count();
    Some(ProfilingReport {
        train_correct: correct(&train),
        train_total: train.len(),
        test_correct: correct(&test),
        test_total: test.len(),
        mapping,
    })
}

fn opt(v: Option<usize>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// Writes the summary and CSV tables; returns their paths relative to `out`.
pub fn emit_reports(inputs: &ReportInputs<'_>, out: &Path) -> Result<Vec<String>> {
    let accepted: Vec<&UserEvaluation> = inputs.evaluation.iter().filter(|u| u.accepted).collect();
    let alterations: Vec<UserAlteration> = accepted.iter().map(|u| u.alteration.clone()).collect();
    let aggregate = if alterations.is_empty() {
        None
    } else {
        Some(aggregate_users(&alterations, inputs.tolerance)?)
    };
    let mut joint = JointDecisionTable::default();
    for u in &accepted {
        joint.merge(&u.joint);
    }
    let k = inputs.profiles.profiles.k();
    let n = inputs.evaluation.len();
    let sizes = inputs.profiles.profiles.assignment.sizes();
    let summary = Summary {
        schema: REPORT_SCHEMA.to_string(),
        config_hash: inputs.config_hash.clone(),
        k,
        requested_k: inputs.profiles.requested_k,
        silhouette: inputs.profiles.sweep.clone(),
        users: n,
        accepted: accepted.len(),
        rejected: n - accepted.len(),
        no_accepted_users: accepted.is_empty(),
        aggregate: aggregate.clone(),
        all_users_original_accuracy: if n == 0 {
            0.0
        } else {
            inputs.evaluation.iter().map(|u| u.alteration.original_accuracy).sum::<f64>() / n as f64
        },
        joint: joint.clone(),
        profiling: profiling(inputs),
        base_epochs: inputs.base.summary.epochs_run,
        models: inputs
            .models
            .iter()
            .enumerate()
            .map(|(p, m)| ModelRow {
                profile: p,
                members: sizes[p],
                epochs_run: m.summary.epochs_run,
                best_holdout_loss: m.summary.best_holdout_loss,
            })
            .collect(),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;

    let mut agg = String::from("K,users,I,M,NI,original,post,a_plus,a_minus\n");
    match &aggregate {
        Some(a) => agg.push_str(&format!(
            "{k},{},{},{},{},{},{},{},{}\n",
            a.users, a.improved, a.maintained, a.not_improved, a.original_accuracy, a.post_accuracy, a.a_plus, a.a_minus
        )),
        None => agg.push_str(&format!("{k},0,,,,,,,\n# no accepted users\n")),
    }
    write_text(&out.join("reports/aggregate.csv"), &agg)?;

    let mut users = String::from("user,profile,test_size,incorrect,fixed,correct,broken,a_plus,a_minus,original,post,outcome\n");
    for u in &accepted {
        let a = &u.alteration;
        users.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{:?}\n",
            u.user,
            u.assigned_profile,
            a.test_size,
            a.incorrect,
            a.fixed,
            a.correct,
            a.broken,
            a.a_plus,
            a.a_minus,
            a.original_accuracy,
            a.post_accuracy,
            classify_outcome(a.original_accuracy, a.post_accuracy, inputs.tolerance),
        ));
    }
    write_text(&out.join("reports/users.csv"), &users)?;

    let mut onboarding = String::from("user,true_profile,hard_profile,assigned_profile,scores,user_val_accuracy,base_val_accuracy,accepted\n");
    for u in &inputs.onboard.users {
        let r = &u.result;
        let scores: Vec<String> = r.profile_scores.iter().map(f64::to_string).collect();
        onboarding.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            u.user,
            opt(u.true_profile),
            r.hard_profile,
            r.assigned_profile,
            scores.join(";"),
            r.user_val_accuracy,
            r.base_val_accuracy,
            r.accepted
        ));
    }
    write_text(&out.join("reports/onboarding.csv"), &onboarding)?;

    let mark = |b: bool| if b { "correct" } else { "wrong" };
    let mut table = String::from("human,base,cooperation,count,proportion\n");
    let proportions = joint.proportions();
    for (i, &(h, b, c)) in JOINT_CELLS.iter().enumerate() {
        table.push_str(&format!("{},{},{},{},{}\n", mark(h), mark(b), mark(c), joint.counts[i], proportions[i]));
    }
    write_text(&out.join("reports/joint_decisions.csv"), &table)?;

    Ok([SUMMARY_FILE, "reports/aggregate.csv", "reports/users.csv", "reports/onboarding.csv", "reports/joint_decisions.csv"]
        .into_iter()
        .map(String::from)
        .collect())
}
