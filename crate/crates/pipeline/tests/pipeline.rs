mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use coopclass_core::dataset::{AnnotationFormat, DatasetSources};
use coopclass_pipeline::config::DataConfig;
use coopclass_pipeline::report::Summary;
use coopclass_pipeline::run::{Manifest, MANIFEST_FILE};
use coopclass_pipeline::{run_ablation, run_pipeline, Knob, PipelineConfig, PipelineError, RunOptions, Stage};
use common::{flip, small_config};

fn run(cfg: &PipelineConfig, out: &Path) -> coopclass_pipeline::RunOutcome {
    run_pipeline(cfg, &RunOptions::new(out)).unwrap()
}

fn reports(out: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(out.join("reports"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn full_run_writes_verified_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run(&small_config(), dir.path());
    assert!(outcome.manifest.completed && outcome.manifest.failed.is_none());
    assert_eq!(outcome.executed, Stage::ALL.to_vec());
    let manifest = Manifest::load(dir.path()).unwrap();
    assert_eq!(manifest, outcome.manifest);
    manifest.verify(dir.path()).unwrap();

    let joint = fs::read_to_string(dir.path().join("reports/joint_decisions.csv")).unwrap();
    assert_eq!(joint.lines().count(), 9);
    let aggregate = fs::read_to_string(dir.path().join("reports/aggregate.csv")).unwrap();
    assert!(aggregate.starts_with("K,users,I,M,NI,original,post,a_plus,a_minus\n"));

    let summary = Summary::load(dir.path()).unwrap();
    assert_eq!(summary.users, 6);
    assert_eq!(summary.accepted + summary.rejected, summary.users);
    let onboarding = fs::read_to_string(dir.path().join("reports/onboarding.csv")).unwrap();
    assert_eq!(onboarding.lines().count(), 1 + summary.users);
    let users = fs::read_to_string(dir.path().join("reports/users.csv")).unwrap();
    assert_eq!(users.lines().count(), 1 + summary.accepted);

    let deployment = coopclass_service::load_deployment(dir.path().join("artifacts/bundle.json")).unwrap();
    assert!(deployment.evaluation);
}

#[test]
fn rerun_is_cached_and_byte_identical() {
    let cfg = small_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run(&cfg, a.path());
    let before = reports(a.path());
    let again = run(&cfg, a.path());
    assert_eq!(again.executed, vec![Stage::Reports]);
    assert_eq!(again.cached.len(), Stage::ALL.len() - 1);
    assert_eq!(again.manifest, first.manifest);
    assert!(reports(a.path()) == before, "rerun changed the reports");

    run(&cfg, b.path());
    assert!(reports(b.path()) == before, "fresh run differs");
    assert_eq!(
        fs::read(a.path().join(MANIFEST_FILE)).unwrap(),
        fs::read(b.path().join(MANIFEST_FILE)).unwrap()
    );
}

#[test]
fn joint_training_knobs_reuse_the_base_model() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    run(&cfg, dir.path());
    cfg.training.train.lambda = 1.0;
    let outcome = run(&cfg, dir.path());
    for stage in [Stage::Data, Stage::Consensus, Stage::Profiles, Stage::Augment, Stage::Base, Stage::Svm] {
        assert!(outcome.cached.contains(&stage), "{stage} recomputed");
    }
    for stage in [Stage::Models, Stage::Onboard, Stage::Evaluate] {
        assert!(outcome.executed.contains(&stage), "{stage} reused");
    }
    cfg.training.train.augmentation = 3;
    let outcome = run(&cfg, dir.path());
    assert!(outcome.cached.contains(&Stage::Base));
    assert!(outcome.executed.contains(&Stage::Augment));
}

#[test]
fn config_hash_changes_with_the_seed_not_the_output() {
    let a = small_config();
    let mut b = a.clone();
    b.out = "elsewhere".into();
    assert_eq!(a.hash(), b.hash());
    b.seed = 1;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn until_stops_after_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        until: Some(Stage::Profiles),
        ..RunOptions::new(dir.path())
    };
    let outcome = run_pipeline(&small_config(), &opts).unwrap();
    assert_eq!(outcome.executed, vec![Stage::Data, Stage::Consensus, Stage::Split, Stage::Profiles]);
    assert!(dir.path().join("reports/silhouette.csv").exists());
    assert!(!dir.path().join("reports/summary.json").exists());
    outcome.manifest.verify(dir.path()).unwrap();
}

#[test]
fn locked_output_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(".lock"), "1\n").unwrap();
    let err = run_pipeline(&small_config(), &RunOptions::new(dir.path())).unwrap_err();
    assert!(matches!(err, PipelineError::Locked(_)));
    assert_eq!(err.exit_code(), 5);
}

#[test]
fn failing_stage_leaves_a_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    if let DataConfig::Synthetic { spec, .. } = &mut cfg.data {
        spec.holdout_per_class = 4;
    }
    let err = run_pipeline(&cfg, &RunOptions::new(dir.path())).unwrap_err();
    assert!(matches!(err, PipelineError::Stage { stage: "onboard", .. }), "{err}");
    let manifest = Manifest::load(dir.path()).unwrap();
    assert!(!manifest.completed);
    assert_eq!(manifest.failed.as_ref().unwrap().stage, Stage::Onboard);
    assert_eq!(manifest.stages.last().unwrap().stage, Stage::Svm);
    assert!(!dir.path().join(".lock").exists());
}

#[test]
fn perfect_users_are_all_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    if let DataConfig::Synthetic { profiles, .. } = &mut cfg.data {
        *profiles = vec![flip((0, 1), 0.0), flip((2, 3), 0.0)];
    }
    cfg.profiles.fixed_k = Some(1);
    run(&cfg, dir.path());
    let summary = Summary::load(dir.path()).unwrap();
    assert!(summary.no_accepted_users);
    assert_eq!(summary.aggregate, None);
    assert_eq!(summary.joint.total, 0);
    let aggregate = fs::read_to_string(dir.path().join("reports/aggregate.csv")).unwrap();
    assert!(aggregate.contains("# no accepted users"));
    let users = fs::read_to_string(dir.path().join("reports/users.csv")).unwrap();
    assert_eq!(users.lines().count(), 1);
}

#[test]
fn single_profile_baseline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.profiles.fixed_k = Some(1);
    run(&cfg, dir.path());
    let summary = Summary::load(dir.path()).unwrap();
    assert_eq!((summary.k, summary.requested_k), (1, 1));
    assert!(summary.silhouette.is_empty());
    assert_eq!(summary.models.len(), 1);
}

#[test]
fn ablation_writes_one_row_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.ablation.lambda = vec![0.0, 1.0];
    let rows = run_ablation(&cfg, Knob::Lambda, dir.path()).unwrap();
    assert_eq!(rows.len(), 2);
    let csv = fs::read_to_string(dir.path().join("ablations/ablation_lambda.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("0,"));
    assert!(dir.path().join("ablations/lambda/1/reports/summary.json").exists());
}

#[test]
fn unknown_knob_is_a_config_error() {
    let err = "depth".parse::<Knob>().unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn noise_sweep_needs_synthetic_data() {
    let mut cfg = small_config();
    cfg.data = DataConfig::Files {
        classes: 2,
        sources: DatasetSources {
            annotations: "missing.csv".into(),
            format: AnnotationFormat::AnnotationTriples,
            features: None,
            clean_labels: None,
        },
        holdout_features: "missing.csv".into(),
        holdout_clean_labels: "missing.csv".into(),
    };
    let err = coopclass_pipeline::ablation::variants(&cfg, Knob::NoiseRate).unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)));
}
