#![allow(dead_code)]

use coopclass_core::sim::{FlipProfileSpec, SyntheticDatasetSpec};
use coopclass_pipeline::config::DataConfig;
use coopclass_pipeline::PipelineConfig;

pub fn flip(pair: (usize, usize), rate: f64) -> FlipProfileSpec {
    FlipProfileSpec {
        pair,
        flip_rate: rate,
        users_per_profile: 3,
        coverage: 0.8,
    }
}

/// Four classes, two flip profiles, short training.
pub fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.data = DataConfig::Synthetic {
        spec: SyntheticDatasetSpec {
            classes: 4,
            dim: 4,
            per_class: 80,
            holdout_per_class: 30,
            separation: 6.0,
            noise_scale: 1.0,
            seed: 0,
        },
        profiles: vec![flip((0, 1), 0.5), flip((2, 3), 0.5)],
    };
    cfg.split.min_labels_per_class = 8;
    cfg.profiles.labels_per_class = 8;
    cfg.profiles.k_range = vec![2, 3];
    cfg.onboarding.per_class = 8;
    cfg.consensus.classifier.max_epochs = 20;
    cfg.consensus.classifier.patience = 5;
    cfg.training.train.max_epochs = 20;
    cfg.training.train.patience = 5;
    cfg.training.train.augmentation = 2;
    cfg.training.architecture.base_hidden = 16;
    cfg.training.architecture.encoder_hidden = 8;
    cfg.training.architecture.decision_hidden = [16, 8];
    cfg
}
