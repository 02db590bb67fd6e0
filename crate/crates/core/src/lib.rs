//! Learning to complement human annotators: noise-profile discovery, cooperative
//! classifiers and onboarding of new users.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix the
//! precision used by the pipeline and the service.

pub mod bundle;
pub mod consensus;
pub mod coopnet;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod noise;
pub mod onboarding;
pub mod profiles;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = dataset::MultiRaterDataset<f64>;
pub type Dataset32 = dataset::MultiRaterDataset<f32>;
pub type Sample = dataset::LabeledSample<f64>;
pub type Validation = dataset::ValidationSet<f64>;
pub type Consensus = consensus::ConsensusDataset<f64>;
pub type Transition = noise::TransitionMatrix<f64>;
pub type Transition32 = noise::TransitionMatrix<f32>;
pub type Model = coopnet::CoopNet<f64>;
pub type Model32 = coopnet::CoopNet<f32>;
pub type Mlp = coopnet::MlpParams<f64>;
pub type Profiles = profiles::AnnotatorProfiles<f64>;
pub type Svm = onboarding::OvaSvm<f64>;
pub type Onboarding = onboarding::OnboardingResult<f64>;
pub type Bundle = bundle::ServingBundle<f64>;
