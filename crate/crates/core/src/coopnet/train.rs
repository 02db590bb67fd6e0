//! Minibatch training with early stopping on a held-out slice.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{accumulate_gradients, composite_loss, Example, PROBABILITY_FLOOR};
use super::mlp::{MlpParams, Trace};
use super::net::CoopNet;
use super::optim::{Optimizer, OptimizerKind};
use crate::error::{Error, Result};
use crate::noise::AugmentedDataset;
use crate::rng;
use crate::scalar::{softmax, Scalar};

/// Consecutive non-finite epochs tolerated before giving up.
const MAX_NON_FINITE_EPOCHS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Stop after this many epochs without held-out improvement.
    pub patience: usize,
    pub lambda: f64,
    pub batch_size: usize,
    pub base_learning_rate: f64,
    pub joint_learning_rate: f64,
    pub seed: u64,
    /// Noisy labels drawn per sample during augmentation.
    pub augmentation: usize,
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 500,
            patience: 20,
            lambda: 0.1,
            batch_size: 128,
            base_learning_rate: 1e-3,
            joint_learning_rate: 1e-3,
            seed: 0,
            augmentation: 5,
            holdout_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config("lambda must be finite and nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub initial_holdout_loss: f64,
    pub best_holdout_loss: f64,
    pub holdout_losses: Vec<f64>,
    pub stopped_early: bool,
}

/// Splits `0..n` into (train, holdout) index sets by a seeded shuffle.
fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let held = (n as f64 * fraction).round() as usize;
    if held == 0 || held >= n {
        return (idx.clone(), idx);
    }
    idx.shuffle(&mut rng::substream(seed, u64::MAX));
    let holdout = idx.split_off(n - held);
    (idx, holdout)
}

/// Early-stopping bookkeeping shared by both trainers.
struct Stopper<P> {
    best: P,
    best_loss: f64,
    best_epoch: usize,
    waited: usize,
    non_finite: usize,
    summary: TrainSummary,
}

enum EpochOutcome {
    Continue,
    Stop,
}

impl<P: Clone> Stopper<P> {
    fn new(initial: P, initial_loss: f64) -> Self {
        Self {
            best: initial,
            best_loss: initial_loss,
            best_epoch: 0,
            waited: 0,
            non_finite: 0,
            summary: TrainSummary {
                initial_holdout_loss: initial_loss,
                best_holdout_loss: initial_loss,
                ..TrainSummary::default()
            },
        }
    }

    /// Records one epoch. On a non-finite loss the caller's parameters are rolled back.
    fn record(&mut self, epoch: usize, loss: f64, params: &mut P, patience: usize, what: &str) -> Result<EpochOutcome> {
        self.summary.epochs_run = epoch;
        self.summary.holdout_losses.push(loss);
        if !loss.is_finite() {
            self.non_finite += 1;
            if self.non_finite >= MAX_NON_FINITE_EPOCHS {
                return Err(Error::Divergence(format!(
                    "{what}: {MAX_NON_FINITE_EPOCHS} consecutive non-finite epochs"
                )));
            }
            *params = self.best.clone();
            return Ok(EpochOutcome::Continue);
        }
        self.non_finite = 0;
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best = params.clone();
            self.best_epoch = epoch;
            self.waited = 0;
        } else {
            self.waited += 1;
            if self.waited >= patience {
                self.summary.stopped_early = true;
                return Ok(EpochOutcome::Stop);
            }
        }
        Ok(EpochOutcome::Continue)
    }

    fn finish(mut self) -> (P, TrainSummary) {
        self.summary.best_epoch = self.best_epoch;
        self.summary.best_holdout_loss = self.best_loss;
        (self.best, self.summary)
    }
}

/// Mean cross-entropy of a softmax classifier on the given rows.
pub fn classifier_loss<T: Scalar>(net: &MlpParams<T>, features: &[&[T]], labels: &[usize], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let floor = T::of(PROBABILITY_FLOOR);
    let mut trace = Trace::default();
    let mut total = 0.0;
    for &i in rows {
        net.forward_traced(features[i], &mut trace);
        let p = softmax(trace.output());
        total += -p[labels[i]].max(floor).ln().as_f64();
    }
    total / rows.len() as f64
}

/// Trains a softmax classifier on `(features[i], labels[i])` with Adam, keeping the
/// parameters of the best held-out epoch.
pub fn pretrain_base<T: Scalar>(
    base: MlpParams<T>,
    features: &[&[T]],
    labels: &[usize],
    config: &TrainConfig,
) -> Result<(MlpParams<T>, TrainSummary)> {
    config.validate()?;
    if features.len() != labels.len() {
        return Err(Error::Alignment(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let classes = base.output_dim();
    if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Validation(format!("label {bad} out of range")));
    }
    if let Some(row) = features.iter().find(|r| r.len() != base.input_dim()) {
        return Err(Error::Shape {
            context: "feature vector",
            expected: base.input_dim(),
            actual: row.len(),
        });
    }
    let (mut train, holdout) = holdout_split(features.len(), config.holdout_fraction, config.seed);
    let mut net = base;
    let initial = classifier_loss(&net, features, labels, &holdout);
    let mut stopper = Stopper::new(net.clone(), initial);
    let mut optimizer = Optimizer::new(OptimizerKind::Adam, config.base_learning_rate);
    let mut grads = net.zeros_like();
    let mut trace = Trace::default();
    for epoch in 1..=config.max_epochs {
        train.shuffle(&mut rng::substream(config.seed, epoch as u64));
        for batch in train.chunks(config.batch_size) {
            grads.fill_zero();
            for &i in batch {
                net.forward_traced(features[i], &mut trace);
                let mut d = softmax(trace.output());
                d[labels[i]] -= T::one();
                net.backward(&trace, &d, &mut grads);
            }
            grads.scale(T::one() / T::of_usize(batch.len()));
            optimizer.update(net.slices_mut(), grads.slices());
        }
        let loss = if net.is_finite() {
            classifier_loss(&net, features, labels, &holdout)
        } else {
            f64::NAN
        };
        if let EpochOutcome::Stop = stopper.record(epoch, loss, &mut net, config.patience, "base model")? {
            break;
        }
    }
    Ok(stopper.finish())
}

/// Fits a cooperative model to augmented `(x, consensus, noisy)` pairs with NAdam,
/// early-stopping on the composite loss of a held-out slice of samples.
///
/// `features` is indexed by the dataset positions stored in `augmented.samples`.
pub fn train_profile_model<T: Scalar>(
    net: CoopNet<T>,
    features: &[&[T]],
    augmented: &AugmentedDataset,
    config: &TrainConfig,
) -> Result<(CoopNet<T>, TrainSummary)> {
    config.validate()?;
    if augmented.samples.is_empty() || augmented.pair_count() == 0 {
        return Err(Error::Config(format!(
            "profile {} has no augmented training data",
            augmented.profile
        )));
    }
    let (train_samples, holdout_samples) =
        holdout_split(augmented.samples.len(), config.holdout_fraction, config.seed);
    let pairs = |rows: &[usize]| -> Vec<Example<'_, T>> {
        let mut out = Vec::new();
        for &r in rows {
            let x = features[augmented.samples[r]];
            for &y in &augmented.noisy[r] {
                out.push(Example {
                    features: x,
                    consensus: augmented.consensus[r],
                    noisy: y,
                });
            }
        }
        out
    };
    let mut train = pairs(&train_samples);
    let holdout = pairs(&holdout_samples);
    let mut net = net;
    let transition = net.transition.clone();
    let lambda = net.lambda;
    let eval = |n: &CoopNet<T>| -> f64 {
        composite_loss(n, &holdout, &transition, lambda).map_or(f64::NAN, |l| l.as_f64())
    };
    let initial = eval(&net);
    if !initial.is_finite() {
        return Err(Error::Divergence("initial composite loss is not finite".into()));
    }
    let mut stopper = Stopper::new(net.clone(), initial);
    let mut optimizer = Optimizer::new(OptimizerKind::Nadam, config.joint_learning_rate);
    let mut grads = net.gradients();
    for epoch in 1..=config.max_epochs {
        train.shuffle(&mut rng::substream(config.seed, epoch as u64));
        let mut failed = false;
        for batch in train.chunks(config.batch_size) {
            match accumulate_gradients(&net, batch, &transition, lambda, &mut grads) {
                Ok(_) => optimizer.update(net.slices_mut(), grads.slices()),
                Err(Error::Divergence(_)) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let loss = if failed || !net.is_finite() { f64::NAN } else { eval(&net) };
        let what = format!("profile {} model", net.profile);
        if let EpochOutcome::Stop = stopper.record(epoch, loss, &mut net, config.patience, &what)? {
            break;
        }
    }
    Ok(stopper.finish())
}
