#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use coopclass_core::bundle::{ServingBundle, BUNDLE_SCHEMA};
use coopclass_core::coopnet::{pretrain_base, train_profile_model, Architecture, ComponentMode, CoopNet, MlpParams, TrainConfig};
use coopclass_core::dataset::{build_validation_set, LabeledSample};
use coopclass_core::noise::{augment_labels, TransitionMatrix};
use coopclass_core::onboarding::{train_ova_svm, AssignmentMode, SvmConfig};
use coopclass_core::profiles::{Encoding, LabelVector};
use coopclass_core::rng::substream;
use coopclass_core::sim::{generate_synthetic_dataset, SyntheticDatasetSpec};
use coopclass_core::Bundle;
use coopclass_service::{router, AppState, Deployment, ServiceConfig};

pub const CLASSES: usize = 3;
pub const PER_CLASS: usize = 4;

/// Profile 0 is noise free, profiles 1 and 2 flip one pair at 60%.
pub fn profile_matrix(k: usize) -> TransitionMatrix<f64> {
    match k {
        0 => TransitionMatrix::identity(CLASSES),
        1 => TransitionMatrix::pairwise_flip(CLASSES, 0, 1, 0.6).unwrap(),
        _ => TransitionMatrix::pairwise_flip(CLASSES, 1, 2, 0.6).unwrap(),
    }
}

/// Validation labels of a user of profile `k`: each class-major block uses the fixed
/// pattern "flip the first three of four items in the pair".
pub fn profile_labels(k: usize, clean: &[usize]) -> Vec<usize> {
    let pair = match k {
        0 => return clean.to_vec(),
        1 => (0, 1),
        _ => (1, 2),
    };
    clean
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let flip = i % PER_CLASS < 3;
            match c {
                c if c == pair.0 && flip => pair.1,
                c if c == pair.1 && flip => pair.0,
                c => c,
            }
        })
        .collect()
}

fn build_bundle() -> Bundle {
    let spec = SyntheticDatasetSpec {
        classes: CLASSES,
        dim: 3,
        per_class: 150,
        holdout_per_class: 30,
        separation: 6.0,
        seed: 11,
        ..SyntheticDatasetSpec::default()
    };
    let data = generate_synthetic_dataset::<f64>(&spec).unwrap();
    let validation = build_validation_set(&data.holdout, PER_CLASS, CLASSES, 3).unwrap();
    let test_items = validation.exclude_from(&data.holdout);

    let features: Vec<&[f64]> = data.train.iter().map(|s| s.features.as_slice()).collect();
    let clean: Vec<usize> = data.train.iter().map(|s| s.clean_label.unwrap()).collect();
    let arch = Architecture::default();
    let cfg = TrainConfig {
        max_epochs: 40,
        patience: 10,
        batch_size: 32,
        base_learning_rate: 1e-2,
        joint_learning_rate: 5e-3,
        ..TrainConfig::default()
    };
    let mut rng = substream(5, 0);
    let base = MlpParams::init(&arch.base_dims(3, CLASSES), &mut rng);
    let (base, _) = pretrain_base(base, &features, &clean, &cfg).unwrap();
    let positions: Vec<usize> = (0..data.train.len()).collect();
    let models: Vec<CoopNet<f64>> = (0..3)
        .map(|k| {
            let m = profile_matrix(k);
            let aug = augment_labels(&positions, &clean, &m, 3, 100 + k as u64, k).unwrap();
            let net = CoopNet::new(base.clone(), &arch, k, 0.1, m, ComponentMode::Full, &mut substream(6, k as u64)).unwrap();
            train_profile_model(net, &features, &aug, &cfg).unwrap().0
        })
        .collect();

    let vclean: Vec<usize> = (0..validation.len()).map(|i| validation.class_of(i)).collect();
    let mut vectors = Vec::new();
    let mut targets = Vec::new();
    for k in 0..3 {
        for u in 0..4 {
            let mut labels = profile_labels(k, &vclean);
            // Vary users within a profile a little.
            if k > 0 && u % 2 == 1 {
                let i = labels.len() - 1 - u;
                labels[i] = vclean[i];
            }
            let v = LabelVector {
                annotator: format!("train-p{k}-u{u}").into(),
                class_count: CLASSES,
                per_class: PER_CLASS,
                labels,
            };
            vectors.push(v.encode::<f64>(Encoding::OneHot));
            targets.push(k);
        }
    }
    let svm = train_ova_svm(&vectors, &targets, 3, &SvmConfig::default()).unwrap();
    ServingBundle {
        schema: BUNDLE_SCHEMA.into(),
        class_count: CLASSES,
        encoding: Encoding::OneHot,
        assignment: AssignmentMode::Hard,
        validation,
        test_items,
        models,
        svm,
        config_hash: "fixture".into(),
    }
}

pub fn bundle() -> &'static Bundle {
    static BUNDLE: OnceLock<Bundle> = OnceLock::new();
    BUNDLE.get_or_init(build_bundle)
}

pub fn app_with(bundle: Option<Bundle>, config: ServiceConfig) -> (Router, Arc<AppState>) {
    let state = AppState::new(bundle.map(|b| Deployment::new(b).unwrap()), config);
    (router(state.clone()), state)
}

pub fn app() -> Router {
    app_with(Some(bundle().clone()), ServiceConfig::default()).0
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

pub async fn open(app: &Router, user: &str) -> String {
    let (status, v) = call(app, Method::POST, "/sessions", Some(json!({ "schema": "coopclass-api-v1", "user_id": user }))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

/// Submits the labels a user of profile `k` gives on the validation set.
pub async fn label_as_profile(app: &Router, id: &str, k: usize) {
    let b = bundle();
    let clean: Vec<usize> = (0..b.validation.len()).map(|i| b.validation.class_of(i)).collect();
    let labels = profile_labels(k, &clean);
    for (item, label) in b.validation.items.iter().zip(labels) {
        let uri = format!("/sessions/{id}/validation/{}", item.id);
        let (status, v) = call(app, Method::PUT, &uri, Some(json!({ "label": label }))).await;
        assert_eq!(status, StatusCode::OK, "{v}");
    }
}

pub async fn phase(app: &Router, id: &str) -> String {
    let (_, v) = call(app, Method::GET, &format!("/sessions/{id}"), None).await;
    v["phase"].as_str().unwrap().to_string()
}

pub fn test_item_clean(sample_id: &str) -> Option<usize> {
    bundle().test_items.iter().find(|s| s.id.as_str() == sample_id).and_then(|s| s.clean_label)
}

pub fn strip_clean(bundle: &Bundle) -> Bundle {
    let mut b = bundle.clone();
    b.test_items = b
        .test_items
        .iter()
        .map(|s| LabeledSample::new(s.id.clone(), s.features.clone(), None))
        .collect();
    b
}
