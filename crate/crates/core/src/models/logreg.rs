use serde::{Deserialize, Serialize};

use super::{bce_with_logit, target, Differentiable, Example, Scorer};
use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::scalar::{sigmoid, Scalar};

/// Logistic regression: `p = σ(w·x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct LogRegModel<T> {
    pub weights: Vec<T>,
    pub bias: T,
}

impl<T: Scalar> LogRegModel<T> {
    pub fn zeros(dim: usize) -> Self {
        LogRegModel {
            weights: vec![T::zero(); dim],
            bias: T::zero(),
        }
    }
}

impl<T: Scalar> Differentiable<T> for LogRegModel<T> {
    fn input_dim(&self) -> usize {
        self.weights.len()
    }

    fn flat_params(&self) -> Vec<T> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    fn set_flat_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.weights.len() + 1 {
            return Err(Error::Dimension {
                expected: self.weights.len() + 1,
                got: params.len(),
            });
        }
        let (w, b) = params.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.bias = b[0];
        Ok(())
    }

    fn objective(&self, batch: &[Example<'_, T>], l2: T) -> (T, Vec<T>) {
        let d = self.weights.len();
        let mut grad = vec![T::zero(); d + 1];
        let total: T = batch.iter().map(|e| e.weight).sum();
        let mut loss = T::zero();
        if total > T::zero() {
            for e in batch {
                let z = self.logit(e.x);
                let s = e.weight / total;
                loss += s * bce_with_logit(z, e.label);
                let delta = s * (sigmoid(z) - target::<T>(e.label));
                for &(i, v) in e.x.entries() {
                    grad[i] += delta * v;
                }
                grad[d] += delta;
            }
        }
        let mut norm = T::zero();
        for (g, &w) in grad.iter_mut().zip(&self.weights) {
            norm += w * w;
            *g += l2 * w;
        }
        (loss + T::of(0.5) * l2 * norm, grad)
    }

    fn descend(&mut self, grad: &[T], learning_rate: T) {
        for (w, &g) in self.weights.iter_mut().zip(grad) {
            *w -= learning_rate * g;
        }
        self.bias -= learning_rate * grad[self.weights.len()];
    }

    fn logit(&self, x: &SparseVector<T>) -> T {
        x.dot(&self.weights) + self.bias
    }
}

impl<T: Scalar> Scorer<T> for LogRegModel<T> {
    fn input_dim(&self) -> usize {
        self.weights.len()
    }

    fn embed_width(&self) -> usize {
        1
    }

    fn accumulate(&self, feature: usize, value: T, acc: &mut [T]) {
        acc[0] += value * self.weights[feature];
    }

    fn finish(&self, acc: &[T]) -> T {
        acc[0] + self.bias
    }
}
