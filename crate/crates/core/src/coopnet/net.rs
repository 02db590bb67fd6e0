use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{MlpParams, Trace};
use crate::error::{Error, Result};
use crate::noise::TransitionMatrix;
use crate::scalar::{argmax, softmax, Scalar};

/// Which learned components take part in the joint prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentMode {
    /// `softmax(d(f(x) ++ h(onehot(y))))`
    #[default]
    Full,
    /// `softmax(d(f(x) ++ onehot(y)))`
    NoEncoder,
    /// `softmax(f(x) + h(onehot(y)))`: the two class blocks are summed.
    NoDecision,
    /// `softmax(f(x) + onehot(y))`
    Neither,
}

impl ComponentMode {
    pub const ALL: [ComponentMode; 4] = [
        ComponentMode::Full,
        ComponentMode::NoEncoder,
        ComponentMode::NoDecision,
        ComponentMode::Neither,
    ];

    pub fn uses_encoder(self) -> bool {
        matches!(self, ComponentMode::Full | ComponentMode::NoDecision)
    }

    pub fn uses_decision(self) -> bool {
        matches!(self, ComponentMode::Full | ComponentMode::NoEncoder)
    }
}

impl std::str::FromStr for ComponentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "no-encoder" | "no_encoder" => Ok(Self::NoEncoder),
            "no-decision" | "no_decision" => Ok(Self::NoDecision),
            "neither" => Ok(Self::Neither),
            other => Err(Error::Config(format!("unknown component mode `{other}`"))),
        }
    }
}

/// Hidden widths of the three sub-networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub base_hidden: usize,
    pub encoder_hidden: usize,
    pub decision_hidden: [usize; 2],
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            base_hidden: 64,
            encoder_hidden: 32,
            decision_hidden: [64, 32],
        }
    }
}

impl Architecture {
    pub fn base_dims(&self, features: usize, classes: usize) -> Vec<usize> {
        vec![features, self.base_hidden, classes]
    }
}

/// Per-profile cooperative classifier: base model over features, label encoder over the
/// human label and a decision head over their concatenation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CoopNet<T> {
    pub base: MlpParams<T>,
    pub encoder: MlpParams<T>,
    pub decision: MlpParams<T>,
    pub class_count: usize,
    pub profile: usize,
    pub lambda: T,
    pub transition: TransitionMatrix<T>,
    #[serde(default)]
    pub mode: ComponentMode,
}

/// Scratch state of one forward pass, reused between samples.
#[derive(Clone, Debug, Default)]
pub struct Pass<T> {
    pub(crate) base: Trace<T>,
    pub(crate) encoder: Trace<T>,
    pub(crate) decision: Trace<T>,
    pub(crate) joint: Vec<T>,
    pub(crate) probabilities: Vec<T>,
}

impl<T: Scalar> Pass<T> {
    pub fn probabilities(&self) -> &[T] {
        &self.probabilities
    }

    pub fn base_logits(&self) -> &[T] {
        self.base.output()
    }
}

/// Parameter gradients with the same shapes as the network.
#[derive(Clone, Debug, PartialEq)]
pub struct CoopGradients<T> {
    pub base: MlpParams<T>,
    pub encoder: MlpParams<T>,
    pub decision: MlpParams<T>,
}

impl<T: Scalar> CoopGradients<T> {
    pub fn slices(&self) -> Vec<&[T]> {
        let mut v = self.base.slices();
        v.extend(self.encoder.slices());
        v.extend(self.decision.slices());
        v
    }

    pub fn fill_zero(&mut self) {
        self.base.fill_zero();
        self.encoder.fill_zero();
        self.decision.fill_zero();
    }

    pub fn scale(&mut self, alpha: T) {
        self.base.scale(alpha);
        self.encoder.scale(alpha);
        self.decision.scale(alpha);
    }

    pub fn is_finite(&self) -> bool {
        self.base.is_finite() && self.encoder.is_finite() && self.decision.is_finite()
    }
}

impl<T: Scalar> CoopNet<T> {
    /// Wraps a (pretrained) base model with freshly initialized encoder and decision head.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        base: MlpParams<T>,
        architecture: &Architecture,
        profile: usize,
        lambda: T,
        transition: TransitionMatrix<T>,
        mode: ComponentMode,
        rng: &mut R,
    ) -> Result<Self> {
        let c = base.output_dim();
        if transition.class_count() != c {
            return Err(Error::Shape {
                context: "transition matrix classes",
                expected: c,
                actual: transition.class_count(),
            });
        }
        if !(lambda >= T::zero()) {
            return Err(Error::Config("lambda must be nonnegative".into()));
        }
        let encoder = MlpParams::init(&[c, architecture.encoder_hidden, c], rng);
        let [h1, h2] = architecture.decision_hidden;
        let decision = MlpParams::init(&[2 * c, h1, h2, c], rng);
        Ok(Self {
            base,
            encoder,
            decision,
            class_count: c,
            profile,
            lambda,
            transition,
            mode,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.base.input_dim()
    }

    pub fn with_mode(&self, mode: ComponentMode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn gradients(&self) -> CoopGradients<T> {
        CoopGradients {
            base: self.base.zeros_like(),
            encoder: self.encoder.zeros_like(),
            decision: self.decision.zeros_like(),
        }
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.base.slices_mut();
        v.extend(self.encoder.slices_mut());
        v.extend(self.decision.slices_mut());
        v
    }

    pub fn is_finite(&self) -> bool {
        self.base.is_finite() && self.encoder.is_finite() && self.decision.is_finite()
    }

    fn check(&self, features: &[T], label: usize) -> Result<()> {
        if features.len() != self.feature_dim() {
            return Err(Error::Shape {
                context: "feature vector",
                expected: self.feature_dim(),
                actual: features.len(),
            });
        }
        if label >= self.class_count {
            return Err(Error::Validation(format!(
                "human label {label} out of range for {} classes",
                self.class_count
            )));
        }
        Ok(())
    }

    /// Unchecked forward pass into `pass`.
    pub(crate) fn run(&self, features: &[T], label: usize, pass: &mut Pass<T>) {
        let c = self.class_count;
        self.base.forward_traced(features, &mut pass.base);
        let mut onehot = vec![T::zero(); c];
        onehot[label] = T::one();
        let human: &[T] = if self.mode.uses_encoder() {
            self.encoder.forward_traced(&onehot, &mut pass.encoder);
            pass.encoder.output()
        } else {
            &onehot
        };
        let base_logits = pass.base.output();
        pass.joint.clear();
        if self.mode.uses_decision() {
            pass.joint.extend_from_slice(base_logits);
            pass.joint.extend_from_slice(human);
            self.decision.forward_traced(&pass.joint, &mut pass.decision);
            pass.probabilities = softmax(pass.decision.output());
        } else {
            pass.joint.extend(base_logits.iter().zip(human).map(|(&a, &b)| a + b));
            pass.probabilities = softmax(&pass.joint);
        }
    }

    /// Backpropagates `d_probabilities` (gradient of a loss with respect to the output
    /// distribution) of a recorded pass, accumulating into `grads`.
    pub(crate) fn backward(&self, pass: &Pass<T>, d_probabilities: &[T], grads: &mut CoopGradients<T>) {
        let p = &pass.probabilities;
        let dot: T = p.iter().zip(d_probabilities).map(|(&a, &b)| a * b).sum();
        let d_logits: Vec<T> = p
            .iter()
            .zip(d_probabilities)
            .map(|(&pi, &di)| pi * (di - dot))
            .collect();
        let c = self.class_count;
        let (d_base, d_human) = if self.mode.uses_decision() {
            let d_joint = self.decision.backward(&pass.decision, &d_logits, &mut grads.decision);
            (d_joint[..c].to_vec(), d_joint[c..].to_vec())
        } else {
            (d_logits.clone(), d_logits)
        };
        self.base.backward(&pass.base, &d_base, &mut grads.base);
        if self.mode.uses_encoder() {
            self.encoder.backward(&pass.encoder, &d_human, &mut grads.encoder);
        }
    }

    /// Joint distribution over classes for features `x` and human label `label`.
    pub fn forward(&self, features: &[T], label: usize) -> Result<Vec<T>> {
        self.check(features, label)?;
        let mut pass = Pass::default();
        self.run(features, label, &mut pass);
        Ok(pass.probabilities)
    }

    /// Class with the largest joint probability, lowest index on ties.
    pub fn scalar_prediction(&self, features: &[T], label: usize) -> Result<usize> {
        Ok(argmax(&self.forward(features, label)?))
    }

    /// Class predicted by the base model alone.
    pub fn base_prediction(&self, features: &[T]) -> Result<usize> {
        Ok(argmax(&self.base.forward(features)?))
    }

    pub fn base_probabilities(&self, features: &[T]) -> Result<Vec<T>> {
        Ok(softmax(&self.base.forward(features)?))
    }
}
