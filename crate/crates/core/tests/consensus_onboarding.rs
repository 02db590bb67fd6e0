use std::collections::HashMap;

use coopclass_core::consensus::{
    estimate_trust_weights, majority_vote, train_consensus_classifier, weighted_ensemble, ConsensusClassifier,
    TrustWeights,
};
use coopclass_core::coopnet::{Architecture, ComponentMode, CoopNet, MlpParams, TrainConfig, TrainSummary};
use coopclass_core::dataset::{AnnotationRecord, LabeledSample, MultiRaterDataset, SampleId, ValidationSet};
use coopclass_core::noise::TransitionMatrix;
use coopclass_core::onboarding::{
    cooperative_inference, onboard_user, train_ova_svm, AssignmentMode, OnboardingResult, SvmConfig,
};
use coopclass_core::profiles::Encoding;
use coopclass_core::rng::substream;
use coopclass_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn blob_dataset(n: usize, classes: usize, seed: u64) -> MultiRaterDataset<f64> {
    let mut r = substream(seed, 0);
    let samples = (0..n)
        .map(|i| {
            let c = i % classes;
            let x = vec![c as f64 * 4.0 + r.random::<f64>(), r.random::<f64>()];
            LabeledSample::new(format!("s{i:04}"), x, Some(c))
        })
        .collect();
    let records = (0..n).map(|i| AnnotationRecord::new(format!("s{i:04}"), "a", i % classes)).collect();
    MultiRaterDataset::new(classes, samples, records).unwrap()
}

fn short_config() -> TrainConfig {
    TrainConfig {
        max_epochs: 150,
        ..TrainConfig::default()
    }
}

#[test]
fn classifier_fits_separable_blobs() {
    let ds = blob_dataset(400, 2, 1);
    let targets = majority_vote(&ds).unwrap();
    let clf = train_consensus_classifier(&ds, &targets, &short_config()).unwrap();
    assert!(clf.summary.best_holdout_loss < clf.summary.initial_holdout_loss);
    let acc = ds
        .samples()
        .iter()
        .zip(&targets)
        .filter(|(s, &t)| clf.predict(&s.features).unwrap() == t)
        .count() as f64
        / ds.len() as f64;
    assert!(acc >= 0.95);
    for s in ds.samples() {
        let p = clf.predict_proba(&s.features).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn single_class_collapses() {
    // Two classes declared, every sample in class 0.
    let ds = blob_dataset(1000, 2, 2);
    let clf = train_consensus_classifier(&ds, &vec![0; 1000], &TrainConfig::default()).unwrap();
    for s in ds.samples() {
        assert!(clf.predict_proba(&s.features).unwrap()[0] >= 0.99);
    }
}

#[test]
fn zero_epochs_keep_initialization() {
    let ds = blob_dataset(50, 2, 3);
    let cfg = TrainConfig {
        max_epochs: 0,
        patience: 0,
        ..TrainConfig::default()
    };
    let a = train_consensus_classifier(&ds, &majority_vote(&ds).unwrap(), &cfg).unwrap();
    let b = train_consensus_classifier(&ds, &majority_vote(&ds).unwrap(), &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.summary.epochs_run, 0);
}

fn constant_classifier(classes: usize, favored: usize) -> ConsensusClassifier<f64> {
    let mut params = MlpParams::<f64>::zeros(&[2, 1, classes]);
    params.layers_mut()[1].bias[favored] = 5.0;
    ConsensusClassifier {
        params,
        seed: 0,
        summary: TrainSummary::default(),
    }
}

#[test]
fn trust_weight_counts() {
    // Annotator `a` agrees with the majority on 80 of 100 samples, `b` never does.
    let mut samples = Vec::new();
    let mut records = Vec::new();
    for i in 0..100 {
        let id = format!("s{i:03}");
        samples.push(LabeledSample::new(id.clone(), vec![0.0, 0.0], None));
        for m in ["m1", "m2", "m3"] {
            records.push(AnnotationRecord::new(id.clone(), m, 0));
        }
        records.push(AnnotationRecord::new(id.clone(), "a", usize::from(i >= 80)));
        records.push(AnnotationRecord::new(id, "b", 1));
    }
    let ds = MultiRaterDataset::new(2, samples, records).unwrap();
    let majority = majority_vote(&ds).unwrap();
    assert!(majority.iter().all(|&m| m == 0));
    let w = estimate_trust_weights(&ds, &majority, &constant_classifier(2, 0)).unwrap();
    let pos = |id: &str| ds.annotator_position(&id.into()).unwrap();
    assert!((w.annotators[pos("a")] - 0.8).abs() < 1e-12);
    assert_eq!(w.annotators[pos("b")], 0.0);
    assert_eq!(w.model, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn unanimity_dominates(
        label in 0usize..4,
        voters in 1usize..5,
        weights in proptest::collection::vec(0.01f64..1.0, 5),
        probs in proptest::collection::vec(0.0f64..1.0, 4),
    ) {
        let samples = vec![LabeledSample::new("s", vec![0.0], None)];
        let records: Vec<AnnotationRecord> = (0..voters).map(|v| AnnotationRecord::new("s", format!("a{v}"), label)).collect();
        let ds = MultiRaterDataset::new(4, samples, records).unwrap();
        let annotator_weights = weights[..voters].to_vec();
        let min_w = annotator_weights.iter().copied().fold(f64::INFINITY, f64::min);
        let total: f64 = probs.iter().sum::<f64>() + 1e-9;
        let model_probs: Vec<f64> = probs.iter().map(|p| (p + 1e-9 / 4.0) / total).collect();
        let w = TrustWeights { model: min_w, annotators: annotator_weights };
        let out = weighted_ensemble(&ds, &[model_probs], &w).unwrap();
        prop_assert_eq!(out.labels[0], label);
        prop_assert!((out.distributions[0].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(out.validate().is_ok());
    }

    #[test]
    fn equal_weights_without_model_reproduce_majority(
        votes in proptest::collection::vec(proptest::collection::vec(0usize..3, 1..6), 1..20),
    ) {
        let mut samples = Vec::new();
        let mut records = Vec::new();
        for (i, vs) in votes.iter().enumerate() {
            samples.push(LabeledSample::new(format!("s{i:02}"), vec![0.0], None));
            for (j, &l) in vs.iter().enumerate() {
                records.push(AnnotationRecord::new(format!("s{i:02}"), format!("a{j}"), l));
            }
        }
        let ds = MultiRaterDataset::<f64>::new(3, samples, records).unwrap();
        let w = TrustWeights { model: 0.0, annotators: vec![0.5; ds.annotators().len()] };
        let probs = vec![vec![1.0 / 3.0; 3]; ds.len()];
        let out = weighted_ensemble(&ds, &probs, &w).unwrap();
        let majority = majority_vote(&ds).unwrap();
        for (s, vs) in votes.iter().enumerate() {
            let mut counts = [0usize; 3];
            vs.iter().for_each(|&l| counts[l] += 1);
            let top = *counts.iter().max().unwrap();
            if counts.iter().filter(|&&c| c == top).count() == 1 {
                prop_assert_eq!(out.labels[s], majority[s]);
            }
        }
    }
}

// Simple perceptron: a second witness that the toy vectors are separable.
fn perceptron_separates(xs: &[Vec<f64>], ys: &[f64]) -> bool {
    let mut w = vec![0.0; xs[0].len() + 1];
    for _ in 0..1000 {
        let mut errors = 0;
        for (x, &y) in xs.iter().zip(ys) {
            let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[x.len()];
            if y * s <= 0.0 {
                errors += 1;
                for (wi, xi) in w.iter_mut().zip(x) {
                    *wi += y * xi;
                }
                w[x.len()] += y;
            }
        }
        if errors == 0 {
            return true;
        }
    }
    false
}

#[test]
fn svm_fits_separable_profiles() {
    let mut r = substream(5, 0);
    let mut xs = Vec::new();
    let mut ps = Vec::new();
    for i in 0..20 {
        let p = i % 2;
        let x: Vec<f64> = (0..12)
            .map(|d| if d % 2 == p { 1.0 } else { 0.0 } + 0.1 * r.random::<f64>())
            .collect();
        xs.push(x);
        ps.push(p);
    }
    let ys: Vec<f64> = ps.iter().map(|&p| if p == 0 { 1.0 } else { -1.0 }).collect();
    assert!(perceptron_separates(&xs, &ys));
    let svm = train_ova_svm(&xs, &ps, 2, &SvmConfig::default()).unwrap();
    assert_eq!(svm.training_accuracy, 1.0);
    for history in &svm.objective {
        assert!(history.windows(2).all(|w| w[1] <= w[0]));
    }
    for x in &xs {
        let s = svm.profile_user(x).unwrap();
        assert!((s.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

fn toy_models(k: usize) -> Vec<CoopNet<f64>> {
    let arch = Architecture {
        base_hidden: 4,
        encoder_hidden: 3,
        decision_hidden: [5, 4],
    };
    (0..k)
        .map(|p| {
            let mut r = substream(p as u64, 0);
            let base = MlpParams::init(&[2, 4, 3], &mut r);
            CoopNet::new(base, &arch, p, 0.1, TransitionMatrix::identity(3), ComponentMode::Full, &mut r).unwrap()
        })
        .collect()
}

fn result(scores: Vec<f64>, hard: usize, accepted: bool) -> OnboardingResult<f64> {
    OnboardingResult {
        user: "u".into(),
        profile_scores: scores,
        hard_profile: hard,
        assigned_profile: hard,
        user_val_accuracy: 0.5,
        base_val_accuracy: 0.9,
        accepted,
    }
}

#[test]
fn soft_equals_hard_for_one_hot_scores() {
    let models = toy_models(3);
    let mut r = substream(1, 1);
    let xs: Vec<Vec<f64>> = (0..50).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect();
    let stream: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), i % 3)).collect();
    let res = result(vec![0.0, 1.0, 0.0], 1, true);
    let hard = cooperative_inference(&res, &models, AssignmentMode::Hard, &stream).unwrap();
    let soft = cooperative_inference(&res, &models, AssignmentMode::Soft, &stream).unwrap();
    assert_eq!(hard, soft);

    let single = toy_models(1);
    let res = result(vec![1.0], 0, true);
    assert_eq!(
        cooperative_inference(&res, &single, AssignmentMode::Hard, &stream).unwrap(),
        cooperative_inference(&res, &single, AssignmentMode::Soft, &stream).unwrap()
    );
}

#[test]
fn rejected_user_operates_alone() {
    let models = toy_models(2);
    let res = result(vec![0.5, 0.5], 0, false);
    let x = [0.0, 0.0];
    assert!(matches!(
        cooperative_inference(&res, &models, AssignmentMode::Hard, &[(&x, 0)]),
        Err(Error::Policy(_))
    ));
}

#[test]
fn onboarding_applies_entry_condition() {
    let models = toy_models(1);
    let svm = train_ova_svm(&[vec![0.0; 18]], &[0], 1, &SvmConfig::default()).unwrap();
    let items: Vec<LabeledSample<f64>> = (0..6)
        .map(|i| LabeledSample::new(format!("v{i}"), vec![i as f64, 1.0], Some(i / 2)))
        .collect();
    let validation = ValidationSet {
        items,
        per_class: 2,
        class_count: 3,
    };
    let perfect: HashMap<SampleId, usize> = validation
        .items
        .iter()
        .map(|s| (s.id.clone(), s.clean_label.unwrap()))
        .collect();
    let v = coopclass_core::onboarding::build_onboarding_vector(&"u".into(), &validation, &perfect).unwrap();
    let res = onboard_user(&v, &v.encode::<f64>(Encoding::OneHot), &validation, &svm, &models, None).unwrap();
    assert_eq!(res.user_val_accuracy, 1.0);
    assert!(!res.accepted, "a perfect user can never be beaten");
}
