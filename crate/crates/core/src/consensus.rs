//! Consensus labels from sparse annotations: majority vote, a classifier trained on it,
//! and a trust-weighted ensemble of the two.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::coopnet::{pretrain_base, MlpParams, TrainConfig, TrainSummary};
use crate::dataset::{MultiRaterDataset, SampleId, FORMAT_HEADER};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{argmax, normalize, one_hot, softmax, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ConsensusDataset<T> {
    pub sample_ids: Vec<SampleId>,
    pub labels: Vec<usize>,
    pub distributions: Vec<Vec<T>>,
    /// Aligned with [`MultiRaterDataset::annotators`].
    pub annotator_weights: Vec<T>,
    pub model_weight: T,
}

impl<T: Scalar> ConsensusDataset<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_ids.len() != self.labels.len() || self.labels.len() != self.distributions.len() {
            return Err(Error::Validation("consensus columns have different lengths".into()));
        }
        for (i, (d, &label)) in self.distributions.iter().zip(&self.labels).enumerate() {
            let total: f64 = d.iter().map(|p| p.as_f64()).sum();
            if (total - 1.0).abs() > 1e-9 || d.iter().any(|p| *p < T::zero()) {
                return Err(Error::Validation(format!("distribution of `{}` is not normalized", self.sample_ids[i])));
            }
            if argmax(d) != label {
                return Err(Error::Validation(format!("label of `{}` is not its argmax", self.sample_ids[i])));
            }
        }
        let weights_ok = self
            .annotator_weights
            .iter()
            .chain(std::iter::once(&self.model_weight))
            .all(|w| w.is_finite() && *w >= T::zero());
        if !weights_ok {
            return Err(Error::Validation("trust weights must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// `sample_id,consensus_label,p_0,...` under the format header.
    pub fn to_csv(&self) -> String {
        let classes = self.distributions.first().map_or(0, Vec::len);
        let mut out = format!("{FORMAT_HEADER}\nsample_id,consensus_label");
        for c in 0..classes {
            out.push_str(&format!(",p_{c}"));
        }
        out.push('\n');
        for ((id, label), d) in self.sample_ids.iter().zip(&self.labels).zip(&self.distributions) {
            out.push_str(&format!("{id},{label}"));
            for p in d {
                out.push_str(&format!(",{p}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Modal label per sample, lowest class index on ties.
pub fn majority_vote<T>(dataset: &MultiRaterDataset<T>) -> Result<Vec<usize>> {
    let missing: Vec<String> = (0..dataset.len())
        .filter(|&s| dataset.labels_of_sample(s).is_empty())
        .map(|s| dataset.samples()[s].id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage(missing));
    }
    let classes = dataset.class_count();
    Ok((0..dataset.len())
        .map(|s| {
            let mut counts = vec![0usize; classes];
            for &(_, label) in dataset.labels_of_sample(s) {
                counts[label] += 1;
            }
            let mut best = 0;
            for c in 1..classes {
                if counts[c] > counts[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ConsensusClassifier<T> {
    pub params: MlpParams<T>,
    pub seed: u64,
    pub summary: TrainSummary,
}

impl<T: Scalar> ConsensusClassifier<T> {
    pub fn predict_proba(&self, features: &[T]) -> Result<Vec<T>> {
        Ok(softmax(&self.params.forward(features)?))
    }

    pub fn predict(&self, features: &[T]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(features)?))
    }
}

/// Width of the consensus classifier's hidden layer.
pub const CONSENSUS_HIDDEN: usize = 64;

/// One-hidden-layer classifier fit to `targets` with the base-model trainer.
pub fn train_consensus_classifier<T: Scalar>(
    dataset: &MultiRaterDataset<T>,
    targets: &[usize],
    config: &TrainConfig,
) -> Result<ConsensusClassifier<T>> {
    if targets.len() != dataset.len() {
        return Err(Error::Alignment(format!(
            "{} targets for {} samples",
            targets.len(),
            dataset.len()
        )));
    }
    let dim = dataset.feature_dim();
    if dim == 0 {
        return Err(Error::Config("consensus classifier needs sample features".into()));
    }
    let seed = rng::derive_seed(config.seed, "consensus-classifier");
    let init = MlpParams::init(
        &[dim, CONSENSUS_HIDDEN, dataset.class_count()],
        &mut rng::substream(seed, 0),
    );
    let features: Vec<&[T]> = dataset.samples().iter().map(|s| s.features.as_slice()).collect();
    let config = TrainConfig { seed, ..config.clone() };
    let (params, summary) = pretrain_base(init, &features, targets, &config)?;
    Ok(ConsensusClassifier { params, seed, summary })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrustWeights<T> {
    pub model: T,
    /// Aligned with [`MultiRaterDataset::annotators`].
    pub annotators: Vec<T>,
}

/// Agreement rate of each annotator, and of the classifier's top-1 prediction, with `majority`.
pub fn estimate_trust_weights<T: Scalar>(
    dataset: &MultiRaterDataset<T>,
    majority: &[usize],
    classifier: &ConsensusClassifier<T>,
) -> Result<TrustWeights<T>> {
    if majority.len() != dataset.len() {
        return Err(Error::Alignment("majority vote does not cover the dataset".into()));
    }
    let annotators = (0..dataset.annotators().len())
        .map(|a| {
            let labels = dataset.labels_of_annotator(a);
            if labels.is_empty() {
                warn!(annotator = %dataset.annotators()[a], "annotator has no labels, weight set to 0");
                return T::zero();
            }
            let agree = labels.iter().filter(|&&(s, l)| majority[s] == l).count();
            T::of_usize(agree) / T::of_usize(labels.len())
        })
        .collect();
    let model = if dataset.is_empty() {
        T::zero()
    } else {
        let agree = dataset
            .samples()
            .par_iter()
            .zip(majority.par_iter())
            .map(|(s, &m)| classifier.predict(&s.features).map(|p| usize::from(p == m)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum::<usize>();
        T::of_usize(agree) / T::of_usize(dataset.len())
    };
    Ok(TrustWeights { model, annotators })
}

/// Per-sample distribution proportional to `w_model * f(x) + sum_j w_j * onehot(label_j)`.
///
/// `model_probabilities` holds the classifier output per sample. A sample whose weights all
/// vanish falls back to the one-hot majority label.
pub fn weighted_ensemble<T: Scalar>(
    dataset: &MultiRaterDataset<T>,
    model_probabilities: &[Vec<T>],
    weights: &TrustWeights<T>,
) -> Result<ConsensusDataset<T>> {
    let classes = dataset.class_count();
    if model_probabilities.len() != dataset.len() {
        return Err(Error::Alignment("classifier outputs do not cover the dataset".into()));
    }
    if weights.annotators.len() != dataset.annotators().len() {
        return Err(Error::Alignment("one trust weight per annotator required".into()));
    }
    let majority = majority_vote(dataset).ok();
    let distributions: Vec<Vec<T>> = (0..dataset.len())
        .into_par_iter()
        .map(|s| {
            let mut scores: Vec<T> = model_probabilities[s].iter().map(|&p| weights.model * p).collect();
            for &(a, label) in dataset.labels_of_sample(s) {
                scores[label] += weights.annotators[a];
            }
            normalize(&scores).unwrap_or_else(|| {
                warn!(sample = %dataset.samples()[s].id, "all ensemble weights vanish, using majority vote");
                let fallback = majority.as_ref().map_or(0, |m| m[s]);
                one_hot(fallback, classes)
            })
        })
        .collect();
    Ok(ConsensusDataset {
        sample_ids: dataset.samples().iter().map(|s| s.id.clone()).collect(),
        labels: distributions.iter().map(|d| argmax(d)).collect(),
        distributions,
        annotator_weights: weights.annotators.clone(),
        model_weight: weights.model,
    })
}

/// [`weighted_ensemble`] with probabilities taken from `classifier`.
pub fn crowdlab_ensemble<T: Scalar>(
    dataset: &MultiRaterDataset<T>,
    classifier: &ConsensusClassifier<T>,
    weights: &TrustWeights<T>,
) -> Result<ConsensusDataset<T>> {
    let probabilities = dataset
        .samples()
        .par_iter()
        .map(|s| classifier.predict_proba(&s.features))
        .collect::<Result<Vec<_>>>()?;
    weighted_ensemble(dataset, &probabilities, weights)
}

/// Consensus equal to the clean labels, with one-hot distributions.
pub fn bypass_with_clean_labels<T: Scalar>(dataset: &MultiRaterDataset<T>) -> Result<ConsensusDataset<T>> {
    let mut labels = Vec::with_capacity(dataset.len());
    for s in dataset.samples() {
        labels.push(s.clean_label.ok_or_else(|| Error::MissingCleanLabel(s.id.to_string()))?);
    }
    Ok(ConsensusDataset {
        sample_ids: dataset.samples().iter().map(|s| s.id.clone()).collect(),
        distributions: labels.iter().map(|&l| one_hot(l, dataset.class_count())).collect(),
        labels,
        annotator_weights: vec![T::one(); dataset.annotators().len()],
        model_weight: T::zero(),
    })
}

/// Majority vote, classifier, trust weights and ensemble in one pass.
pub fn estimate_consensus<T: Scalar>(
    dataset: &MultiRaterDataset<T>,
    config: &TrainConfig,
) -> Result<(ConsensusDataset<T>, ConsensusClassifier<T>)> {
    let majority = majority_vote(dataset)?;
    let classifier = train_consensus_classifier(dataset, &majority, config)?;
    let weights = estimate_trust_weights(dataset, &majority, &classifier)?;
    let consensus = crowdlab_ensemble(dataset, &classifier, &weights)?;
    Ok((consensus, classifier))
}
