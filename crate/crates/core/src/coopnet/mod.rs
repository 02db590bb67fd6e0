//! The cooperative model: base classifier, human-label encoder and decision head,
//! trained jointly on augmented noisy labels.

mod loss;
mod mlp;
mod net;
mod optim;
mod train;

pub use loss::{accumulate_gradients, backprop_gradients, composite_loss, Example, PROBABILITY_FLOOR};
pub use mlp::{Dense, MlpParams, Trace};
pub use net::{Architecture, ComponentMode, CoopGradients, CoopNet, Pass};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{classifier_loss, pretrain_base, train_profile_model, TrainConfig, TrainSummary};
