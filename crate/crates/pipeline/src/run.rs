//! Stage orchestration with caching, a run manifest and per-stage outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use coopclass_core::bundle::{self, ModelArtifact, SvmArtifact, BUNDLE_SCHEMA};
use coopclass_core::dataset::{save_dataset, write_clean_labels, write_features, SplitSpec};
use coopclass_core::noise::AugmentedDataset;
use coopclass_core::{Bundle, Consensus, Dataset, Model, Svm, Transition};

use crate::cache::{RunLock, StageCache};
use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};
use crate::report::{emit_reports, ReportInputs};
use crate::stages::{self, BaseArtifact, BaseInputs, DataArtifact, OnboardArtifact, ProfilesArtifact, Stage, UserEvaluation};

pub const MANIFEST_SCHEMA: &str = "coopclass-manifest-v1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_LOG_FILE: &str = "run_log.json";

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Defaults to `<out>/cache`.
    pub cache: Option<PathBuf>,
    /// Last stage to run; `None` runs through the reports.
    pub until: Option<Stage>,
    pub write_bundle: bool,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            cache: None,
            until: None,
            write_bundle: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub key: String,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub error: String,
}

/// Deterministic record of a run; wall-clock data lives in the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub config_hash: String,
    pub versions: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub completed: bool,
    pub failed: Option<StageFailure>,
}

impl Manifest {
    fn new(config_hash: String) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("coopclass".to_string(), env!("CARGO_PKG_VERSION").to_string());
        Self {
            schema: MANIFEST_SCHEMA.to_string(),
            config_hash,
            versions,
            stages: Vec::new(),
            completed: false,
            failed: None,
        }
    }

    pub fn load(out: &Path) -> Result<Self> {
        let text = fs::read_to_string(out.join(MANIFEST_FILE))
            .map_err(|e| PipelineError::Dependency(format!("no manifest in {}: {e}", out.display())))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(PipelineError::Dependency(format!("unsupported manifest schema `{}`", m.schema)));
        }
        Ok(m)
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    /// Reloads every listed artifact: JSON must parse and CSV must have a header.
    pub fn verify(&self, out: &Path) -> Result<()> {
        for record in &self.stages {
            for rel in &record.artifacts {
                let path = out.join(rel);
                let text = fs::read_to_string(&path)
                    .map_err(|e| PipelineError::Dependency(format!("{}: {e}", path.display())))?;
                let ok = match path.extension().and_then(|e| e.to_str()) {
                    Some("json") => serde_json::from_str::<serde_json::Value>(&text).is_ok(),
                    _ => text.lines().next().is_some_and(|l| !l.is_empty()),
                };
                if !ok {
                    return Err(PipelineError::Dependency(format!("{} is unreadable", path.display())));
                }
            }
        }
        Ok(())
    }

    fn write(&self, out: &Path) -> Result<()> {
        write_json(&out.join(MANIFEST_FILE), self)
    }
}

#[derive(Clone, Debug, Serialize)]
struct RunLog {
    started: String,
    finished: String,
    executed: Vec<Stage>,
    cached: Vec<Stage>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub executed: Vec<Stage>,
    pub cached: Vec<Stage>,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    out: &'a Path,
    cache: StageCache,
    manifest: Manifest,
    executed: Vec<Stage>,
    cached: Vec<Stage>,
}

impl Runner<'_> {
    /// Loads a stage result from the cache or computes and stores it, then writes its outputs.
    fn stage<I, T, F, W>(&mut self, stage: Stage, inputs: &I, upstream: &[&str], compute: F, outputs: W) -> Result<(T, String)>
    where
        I: Serialize,
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
        W: FnOnce(&T, &Path) -> Result<Vec<String>>,
    {
        let run = || -> Result<(T, String, bool)> {
            let seed = self.cfg.seed;
            let key = StageCache::key(stage.name(), &(seed, inputs), upstream)?;
            if let Some(v) = self.cache.load(stage.name(), &key)? {
                return Ok((v, key, true));
            }
            let _span = tracing::info_span!("stage", name = stage.name()).entered();
            let v = compute()?;
            self.cache.store(stage.name(), &key, &v)?;
            Ok((v, key, false))
        };
        let (value, key, hit) = run().and_then(|(v, key, hit)| {
            let artifacts = outputs(&v, self.out)?;
            self.manifest.stages.push(StageRecord {
                stage,
                key: key.clone(),
                artifacts,
            });
            Ok((v, key, hit))
        })
        .map_err(|e| self.fail(stage, e))?;
        tracing::info!(stage = stage.name(), cached = hit, "stage done");
        if hit { &mut self.cached } else { &mut self.executed }.push(stage);
        Ok((value, key))
    }

    fn fail(&mut self, stage: Stage, e: PipelineError) -> PipelineError {
        self.manifest.failed = Some(StageFailure {
            stage,
            error: e.to_string(),
        });
        if let Err(w) = self.manifest.write(self.out) {
            tracing::error!(error = %w, "could not write partial manifest");
        }
        PipelineError::Stage {
            stage: stage.name(),
            source: Box::new(e),
        }
    }

    fn done(&self, stage: Stage, until: Option<Stage>) -> bool {
        until.is_some_and(|u| stage >= u)
    }
}

fn rel(out: &Path, path: &Path) -> String {
    path.strip_prefix(out).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

fn models_of(artifacts: &[ModelArtifact<f64>]) -> Vec<Model> {
    artifacts.iter().map(|a| a.model.clone()).collect()
}

/// Runs the stages up to `opts.until`, reusing cached results whose inputs are unchanged.
pub fn run_pipeline(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let out = opts.out.as_path();
    let _lock = RunLock::acquire(out)?;
    let started = chrono::Utc::now().to_rfc3339();
    let cache = StageCache::new(opts.cache.clone().unwrap_or_else(|| out.join("cache")));
    let mut r = Runner {
        cfg,
        out,
        cache,
        manifest: Manifest::new(cfg.hash()),
        executed: Vec::new(),
        cached: Vec::new(),
    };
    let until = opts.until;
    run_stages(&mut r, until, opts.write_bundle)?;
    r.manifest.completed = true;
    r.manifest.write(out)?;
    write_json(
        &out.join(RUN_LOG_FILE),
        &RunLog {
            started,
            finished: chrono::Utc::now().to_rfc3339(),
            executed: r.executed.clone(),
            cached: r.cached.clone(),
        },
    )?;
    Ok(RunOutcome {
        manifest: r.manifest,
        executed: r.executed,
        cached: r.cached,
    })
}

fn run_stages(r: &mut Runner<'_>, until: Option<Stage>, write_bundle: bool) -> Result<()> {
    let cfg = r.cfg;

    let (data, data_key) = r.stage(Stage::Data, &cfg.data, &[], || stages::build_data(cfg), |d: &DataArtifact, out| {
        let ds = d.dataset()?;
        let dir = out.join("data");
        fs::create_dir_all(&dir)?;
        save_dataset(&ds, dir.join("annotations.csv"))?;
        write_features(ds.samples(), dir.join("features.csv"))?;
        write_features(&d.holdout, dir.join("holdout_features.csv"))?;
        write_clean_labels(&d.holdout, dir.join("holdout_clean_labels.csv"))?;
        let mut files = vec!["annotations.csv", "features.csv", "holdout_features.csv", "holdout_clean_labels.csv"];
        if ds.clean_labels().is_some() {
            write_clean_labels(ds.samples(), dir.join("clean_labels.csv"))?;
            files.push("clean_labels.csv");
        }
        Ok(files.into_iter().map(|f| format!("data/{f}")).collect())
    })?;
    if r.done(Stage::Data, until) {
        return Ok(());
    }
    let ds: Dataset = data.dataset()?;

    let (consensus, consensus_key) = r.stage(
        Stage::Consensus,
        &cfg.consensus,
        &[&data_key],
        || stages::build_consensus(cfg, &ds),
        |c: &Consensus, out| {
            write_text(&out.join("reports/consensus.csv"), &c.to_csv())?;
            Ok(vec!["reports/consensus.csv".into()])
        },
    )?;
    if r.done(Stage::Consensus, until) {
        return Ok(());
    }

    let (split, split_key) = r.stage(
        Stage::Split,
        &cfg.split,
        &[&data_key, &consensus_key],
        || stages::build_split(cfg, &ds, &consensus),
        |s: &SplitSpec, out| {
            write_json(&out.join("reports/split.json"), s)?;
            Ok(vec!["reports/split.json".into()])
        },
    )?;
    if r.done(Stage::Split, until) {
        return Ok(());
    }

    let (profiles, profiles_key) = r.stage(
        Stage::Profiles,
        &cfg.profiles,
        &[&data_key, &consensus_key, &split_key],
        || stages::build_profiles(cfg, &ds, &consensus, &split),
        |p: &ProfilesArtifact, out| {
            write_text(&out.join("reports/profiles.csv"), &p.profiles.to_csv())?;
            let mut sweep = String::from("k,silhouette\n");
            for (k, s) in &p.sweep {
                sweep.push_str(&format!("{k},{s}\n"));
            }
            write_text(&out.join("reports/silhouette.csv"), &sweep)?;
            Ok(vec!["reports/profiles.csv".into(), "reports/silhouette.csv".into()])
        },
    )?;
    if r.done(Stage::Profiles, until) {
        return Ok(());
    }

    let (matrices, matrices_key) = r.stage(
        Stage::Matrices,
        &cfg.profiles.matrix_smoothing,
        &[&data_key, &consensus_key, &profiles_key],
        || stages::build_matrices(cfg, &ds, &consensus, &profiles.profiles),
        |ms: &Vec<Transition>, out| {
            let mut files = Vec::new();
            for (k, m) in ms.iter().enumerate() {
                let path = out.join(format!("reports/matrices/profile_{k}.csv"));
                write_text(&path, &m.to_csv())?;
                files.push(rel(out, &path));
            }
            Ok(files)
        },
    )?;
    if r.done(Stage::Matrices, until) {
        return Ok(());
    }

    let (augmented, augment_key) = r.stage(
        Stage::Augment,
        &cfg.training.train.augmentation,
        &[&data_key, &consensus_key, &profiles_key, &matrices_key],
        || stages::build_augmented(cfg, &ds, &consensus, &profiles.profiles, &matrices),
        |a: &Vec<AugmentedDataset>, out| {
            let mut csv = String::from("profile,samples,pairs\n");
            for d in a {
                csv.push_str(&format!("{},{},{}\n", d.profile, d.samples.len(), d.pair_count()));
            }
            write_text(&out.join("reports/augmentation.csv"), &csv)?;
            Ok(vec!["reports/augmentation.csv".into()])
        },
    )?;
    if r.done(Stage::Augment, until) {
        return Ok(());
    }

    let (base, base_key) = r.stage(
        Stage::Base,
        &BaseInputs::of(cfg),
        &[&data_key, &consensus_key],
        || stages::build_base(cfg, &ds, &consensus),
        |b: &BaseArtifact, out| {
            write_json(&out.join("artifacts/base.json"), b)?;
            Ok(vec!["artifacts/base.json".into()])
        },
    )?;
    if r.done(Stage::Base, until) {
        return Ok(());
    }

    let (model_artifacts, models_key) = r.stage(
        Stage::Models,
        &cfg.training,
        &[&data_key, &base_key, &matrices_key, &augment_key],
        || stages::build_models(cfg, &ds, &base.base, &matrices, &augmented),
        |ms: &Vec<ModelArtifact<f64>>, out| {
            let mut files = Vec::new();
            for (k, m) in ms.iter().enumerate() {
                let path = out.join(format!("artifacts/models/profile_{k}.json"));
                bundle::write_artifact(&path, m)?;
                files.push(rel(out, &path));
            }
            Ok(files)
        },
    )?;
    let models = models_of(&model_artifacts);
    if r.done(Stage::Models, until) {
        return Ok(());
    }

    let encoding = cfg.profiles.encoding;
    let (svm, svm_key) = r.stage(
        Stage::Svm,
        &cfg.onboarding.svm,
        &[&profiles_key],
        || stages::build_svm(cfg, &profiles),
        |s: &Svm, out| {
            bundle::write_artifact(out.join("artifacts/svm.json"), &SvmArtifact::new(s.clone(), encoding))?;
            Ok(vec!["artifacts/svm.json".into()])
        },
    )?;
    if r.done(Stage::Svm, until) {
        return Ok(());
    }

    let (onboard, onboard_key) = r.stage(
        Stage::Onboard,
        &cfg.onboarding,
        &[&data_key, &consensus_key, &split_key, &svm_key, &models_key],
        || stages::build_onboarding(cfg, &data, &ds, &consensus, &split, &svm, &models),
        |o: &OnboardArtifact, out| {
            write_json(&out.join("artifacts/onboarding.json"), o)?;
            Ok(vec!["artifacts/onboarding.json".into()])
        },
    )?;
    if r.done(Stage::Onboard, until) {
        return Ok(());
    }

    let (evaluation, evaluate_key) = r.stage(
        Stage::Evaluate,
        &cfg.onboarding.assignment,
        &[&onboard_key, &models_key],
        || stages::build_evaluation(cfg, &onboard, &models),
        |e: &Vec<UserEvaluation>, out| {
            write_json(&out.join("artifacts/evaluation.json"), e)?;
            Ok(vec!["artifacts/evaluation.json".into()])
        },
    )?;
    if r.done(Stage::Evaluate, until) {
        return Ok(());
    }

    let inputs = ReportInputs {
        config_hash: r.manifest.config_hash.clone(),
        tolerance: cfg.evaluation.tolerance,
        profiles: &profiles,
        base: &base,
        models: &model_artifacts,
        onboard: &onboard,
        evaluation: &evaluation,
    };
    let bundle_value = write_bundle.then(|| Bundle {
        schema: BUNDLE_SCHEMA.to_string(),
        class_count: data.class_count,
        encoding,
        assignment: cfg.onboarding.assignment,
        validation: onboard.validation.clone(),
        test_items: onboard.test.clone(),
        models: models.clone(),
        svm: svm.clone(),
        config_hash: r.manifest.config_hash.clone(),
    });
    let key = StageCache::key(Stage::Reports.name(), &(cfg.seed, cfg.evaluation.tolerance, write_bundle), &[&evaluate_key])?;
    let artifacts = (|| {
        let mut files = emit_reports(&inputs, r.out)?;
        if let Some(b) = &bundle_value {
            b.validate()?;
            bundle::write_artifact(r.out.join("artifacts/bundle.json"), b)?;
            files.push("artifacts/bundle.json".into());
        }
        Ok(files)
    })()
    .map_err(|e| r.fail(Stage::Reports, e))?;
    r.manifest.stages.push(StageRecord {
        stage: Stage::Reports,
        key,
        artifacts,
    });
    r.executed.push(Stage::Reports);
    Ok(())
}
