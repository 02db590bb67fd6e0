//! Adaptive moment optimizers over lists of parameter tensors.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    /// Adam with Nesterov momentum.
    Nadam,
}

#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    learning_rate: T,
    beta1: T,
    beta2: T,
    epsilon: T,
    step: i32,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate: T::of(learning_rate),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// One update. `params` and `grads` must list tensors in the same order on every call.
    pub fn update(&mut self, params: Vec<&mut [T]>, grads: Vec<&[T]>) {
        assert_eq!(params.len(), grads.len(), "parameter and gradient lists differ");
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let one = T::one();
        let b1 = self.beta1;
        let b2 = self.beta2;
        let bias1 = one - b1.powi(self.step);
        let bias2 = one - b2.powi(self.step);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                let direction = match self.kind {
                    OptimizerKind::Adam => m_hat,
                    OptimizerKind::Nadam => b1 * m_hat + (one - b1) * gi / bias1,
                };
                p[i] -= self.learning_rate * direction / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimize(kind: OptimizerKind) -> f64 {
        // f(x, y) = (x - 3)^2 + 10 (y + 1)^2
        let mut p = vec![0.0f64, 0.0];
        let mut opt = Optimizer::new(kind, 0.05);
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 3.0), 20.0 * (p[1] + 1.0)];
            opt.update(vec![p.as_mut_slice()], vec![g.as_slice()]);
        }
        (p[0] - 3.0).abs().max((p[1] + 1.0).abs())
    }

    #[test]
    fn both_variants_converge_on_a_quadratic() {
        assert!(minimize(OptimizerKind::Adam) < 1e-3);
        assert!(minimize(OptimizerKind::Nadam) < 1e-3);
    }

    #[test]
    fn first_adam_step_has_learning_rate_magnitude() {
        let mut p = vec![1.0f64];
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1);
        opt.update(vec![p.as_mut_slice()], vec![&[5.0]]);
        assert!((p[0] - 0.9).abs() < 1e-6);
    }
}
