use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{argmax, softmax, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    /// Inverse regularization strength; the L2 weight is `1 / (c * n)`.
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 200,
            seed: 0,
        }
    }
}

/// One linear scorer per profile; the bias is the weight of a constant trailing feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OvaSvm<T> {
    pub dim: usize,
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<T>,
    pub config: SvmConfig,
    pub training_accuracy: f64,
    /// Per scorer, the regularized hinge objective of the kept iterate after each epoch.
    pub objective: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ProfileScores<T> {
    pub raw: Vec<T>,
    pub probabilities: Vec<T>,
    pub hard: usize,
}

impl<T: Scalar> OvaSvm<T> {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn decision_scores(&self, vector: &[T]) -> Result<Vec<T>> {
        if vector.len() != self.dim {
            return Err(Error::Shape {
                context: "onboarding vector",
                expected: self.dim,
                actual: vector.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, &b)| w.iter().zip(vector).map(|(&wi, &xi)| wi * xi).sum::<T>() + b)
            .collect())
    }

    /// Decision scores mapped onto the simplex by softmax; `hard` is their argmax.
    pub fn profile_user(&self, vector: &[T]) -> Result<ProfileScores<T>> {
        let raw = self.decision_scores(vector)?;
        if raw.iter().any(|s| !s.is_finite()) {
            return Err(Error::Divergence("non-finite profile score".into()));
        }
        let probabilities = softmax(&raw);
        Ok(ProfileScores {
            hard: argmax(&raw),
            raw,
            probabilities,
        })
    }
}

fn objective(w: &[f64], xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let norm: f64 = w.iter().map(|v| v * v).sum();
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| (1.0 - y * dot(w, x)).max(0.0))
        .sum::<f64>()
        / xs.len() as f64;
    0.5 * lambda * norm + hinge
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pegasos on one binary problem. The running average is adopted at the end of an epoch
/// only when it lowers the objective, so the kept iterate's objective never rises.
fn fit_binary(xs: &[Vec<f64>], ys: &[f64], lambda: f64, epochs: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let dim = xs[0].len();
    let mut w = vec![0.0; dim];
    let mut avg = vec![0.0; dim];
    let mut kept = vec![0.0; dim];
    let mut kept_objective = objective(&kept, xs, ys, lambda);
    let mut history = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let radius = 1.0 / lambda.sqrt();
    let mut t = 0usize;
    for epoch in 0..epochs {
        order.shuffle(&mut rng::substream(seed, epoch as u64));
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = ys[i] * dot(&w, &xs[i]);
            let shrink = 1.0 - eta * lambda;
            for v in w.iter_mut() {
                *v *= shrink;
            }
            if margin < 1.0 {
                for (v, &x) in w.iter_mut().zip(&xs[i]) {
                    *v += eta * ys[i] * x;
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                for v in w.iter_mut() {
                    *v *= radius / norm;
                }
            }
            let step = 1.0 / t as f64;
            for (a, &v) in avg.iter_mut().zip(&w) {
                *a += (v - *a) * step;
            }
        }
        let candidate = objective(&avg, xs, ys, lambda);
        if candidate < kept_objective {
            kept.clone_from(&avg);
            kept_objective = candidate;
        }
        history.push(kept_objective);
    }
    (kept, history)
}

/// One-vs-rest linear SVMs over `vectors` labeled with `profiles`. With a single profile
/// the result is the constant classifier for profile 0.
pub fn train_ova_svm<T: Scalar>(vectors: &[Vec<T>], profiles: &[usize], k: usize, config: &SvmConfig) -> Result<OvaSvm<T>> {
    if vectors.len() != profiles.len() {
        return Err(Error::Alignment("one profile per vector required".into()));
    }
    if vectors.is_empty() || k == 0 {
        return Err(Error::Config("SVM needs at least one vector and one profile".into()));
    }
    if !(config.c > 0.0) {
        return Err(Error::Config("SVM C must be positive".into()));
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::Shape {
            context: "onboarding vector",
            expected: dim,
            actual: v.len(),
        });
    }
    let mut sizes = vec![0usize; k];
    for &p in profiles {
        if p >= k {
            return Err(Error::Validation(format!("profile {p} out of range for K={k}")));
        }
        sizes[p] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&n| n == 0) {
        return Err(Error::Config(format!("profile {empty} has no training users")));
    }
    if k == 1 {
        return Ok(OvaSvm {
            dim,
            weights: vec![vec![T::zero(); dim]],
            biases: vec![T::zero()],
            config: config.clone(),
            training_accuracy: 1.0,
            objective: vec![Vec::new()],
        });
    }
    let xs: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().map(|x| x.as_f64()).chain(std::iter::once(1.0)).collect())
        .collect();
    let lambda = 1.0 / (config.c * xs.len() as f64);
    let mut weights = Vec::with_capacity(k);
    let mut biases = Vec::with_capacity(k);
    let mut objectives = Vec::with_capacity(k);
    for p in 0..k {
        let ys: Vec<f64> = profiles.iter().map(|&q| if q == p { 1.0 } else { -1.0 }).collect();
        let (w, history) = fit_binary(&xs, &ys, lambda, config.epochs, rng::derive_seed(config.seed, &format!("ova-{p}")));
        weights.push(w[..dim].iter().map(|&v| T::of(v)).collect());
        biases.push(T::of(w[dim]));
        objectives.push(history);
    }
    let mut svm = OvaSvm {
        dim,
        weights,
        biases,
        config: config.clone(),
        training_accuracy: 0.0,
        objective: objectives,
    };
    let correct = vectors
        .iter()
        .zip(profiles)
        .filter(|(v, &p)| svm.decision_scores(v).map(|s| argmax(&s) == p).unwrap_or(false))
        .count();
    svm.training_accuracy = correct as f64 / vectors.len() as f64;
    Ok(svm)
}
