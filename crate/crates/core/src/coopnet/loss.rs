//! Composite training objective: cross-entropy against the consensus label plus a
//! forward-corrected cross-entropy against the noisy label,
//! `-ln m[c] + lambda * -ln (T^T m)[y]`.

use super::net::{CoopGradients, CoopNet, Pass};
use crate::error::{Error, Result};
use crate::noise::TransitionMatrix;
use crate::scalar::Scalar;

/// Probabilities are clamped here before taking logarithms.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// One training pair: features, consensus class and a (sampled) noisy human label.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a, T> {
    pub features: &'a [T],
    pub consensus: usize,
    pub noisy: usize,
}

fn check_batch<T: Scalar>(net: &CoopNet<T>, batch: &[Example<'_, T>], transition: &TransitionMatrix<T>) -> Result<()> {
    if transition.class_count() != net.class_count {
        return Err(Error::Shape {
            context: "transition matrix classes",
            expected: net.class_count,
            actual: transition.class_count(),
        });
    }
    for e in batch {
        if e.features.len() != net.feature_dim() {
            return Err(Error::Shape {
                context: "feature vector",
                expected: net.feature_dim(),
                actual: e.features.len(),
            });
        }
        if e.consensus >= net.class_count || e.noisy >= net.class_count {
            return Err(Error::Validation("label out of range in training batch".into()));
        }
    }
    Ok(())
}

/// `(loss, d loss / d probabilities)` of one example given the output distribution.
pub(crate) fn example_loss<T: Scalar>(
    probabilities: &[T],
    consensus: usize,
    noisy: usize,
    transition: &TransitionMatrix<T>,
    lambda: T,
    gradient: Option<&mut [T]>,
) -> T {
    let floor = T::of(PROBABILITY_FLOOR);
    let p_clean = probabilities[consensus];
    let corrected: T = probabilities
        .iter()
        .enumerate()
        .map(|(c, &p)| transition.get(c, noisy) * p)
        .sum();
    let loss = -p_clean.max(floor).ln() - lambda * corrected.max(floor).ln();
    if let Some(g) = gradient {
        g.iter_mut().for_each(|v| *v = T::zero());
        if p_clean > floor {
            g[consensus] = -T::one() / p_clean;
        }
        if lambda != T::zero() && corrected > floor {
            let scale = lambda / corrected;
            for (c, gc) in g.iter_mut().enumerate() {
                *gc -= scale * transition.get(c, noisy);
            }
        }
    }
    loss
}

/// Mean composite loss over the batch.
pub fn composite_loss<T: Scalar>(
    net: &CoopNet<T>,
    batch: &[Example<'_, T>],
    transition: &TransitionMatrix<T>,
    lambda: T,
) -> Result<T> {
    check_batch(net, batch, transition)?;
    if batch.is_empty() {
        return Ok(T::zero());
    }
    let mut pass = Pass::default();
    let mut total = T::zero();
    for e in batch {
        net.run(e.features, e.noisy, &mut pass);
        total += example_loss(&pass.probabilities, e.consensus, e.noisy, transition, lambda, None);
    }
    Ok(total / T::of_usize(batch.len()))
}

/// Mean composite loss and its exact gradient with respect to every parameter.
pub fn backprop_gradients<T: Scalar>(
    net: &CoopNet<T>,
    batch: &[Example<'_, T>],
    transition: &TransitionMatrix<T>,
    lambda: T,
) -> Result<(T, CoopGradients<T>)> {
    let mut grads = net.gradients();
    let loss = accumulate_gradients(net, batch, transition, lambda, &mut grads)?;
    Ok((loss, grads))
}

/// As [`backprop_gradients`], writing into a reusable accumulator (overwritten).
pub fn accumulate_gradients<T: Scalar>(
    net: &CoopNet<T>,
    batch: &[Example<'_, T>],
    transition: &TransitionMatrix<T>,
    lambda: T,
    grads: &mut CoopGradients<T>,
) -> Result<T> {
    check_batch(net, batch, transition)?;
    grads.fill_zero();
    if batch.is_empty() {
        return Ok(T::zero());
    }
    let mut pass = Pass::default();
    let mut d_prob = vec![T::zero(); net.class_count];
    let mut total = T::zero();
    for e in batch {
        net.run(e.features, e.noisy, &mut pass);
        total += example_loss(&pass.probabilities, e.consensus, e.noisy, transition, lambda, Some(&mut d_prob));
        net.backward(&pass, &d_prob, grads);
    }
    let inv = T::one() / T::of_usize(batch.len());
    grads.scale(inv);
    if !grads.is_finite() {
        return Err(Error::Divergence("non-finite gradient in cooperative model".into()));
    }
    Ok(total * inv)
}
