use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bce_with_logit, target, Differentiable, Example, Scorer};
use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::scalar::{sigmoid, Scalar};

/// Fully connected layer. `weights[i * outputs + j]` connects input `i` to
/// output `j`, so a sparse input touches contiguous rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct DenseLayer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> DenseLayer<T> {
    fn init(inputs: usize, outputs: usize, limit: f64, rng: &mut ChaCha8Rng) -> Self {
        let weights = (0..inputs * outputs)
            .map(|_| T::of(rng.gen_range(-limit..=limit)))
            .collect();
        DenseLayer {
            inputs,
            outputs,
            weights,
            biases: vec![T::zero(); outputs],
        }
    }

    fn row(&self, i: usize) -> &[T] {
        &self.weights[i * self.outputs..(i + 1) * self.outputs]
    }

    fn forward_dense(&self, input: &[T]) -> Vec<T> {
        let mut out = self.biases.clone();
        for (i, &a) in input.iter().enumerate() {
            if a != T::zero() {
                for (o, &w) in out.iter_mut().zip(self.row(i)) {
                    *o += a * w;
                }
            }
        }
        out
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// ReLU hidden layers with a single sigmoid output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct MlpModel<T> {
    /// Hidden layers followed by the one-unit output layer.
    pub layers: Vec<DenseLayer<T>>,
}

fn relu<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

impl<T: Scalar> MlpModel<T> {
    /// He-uniform hidden layers, Glorot-uniform output, zero biases.
    pub fn init(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::invalid("mlp", "at least one hidden layer is required"));
        }
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::invalid("mlp", "layer widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for &width in hidden {
            let limit = (6.0 / fan_in as f64).sqrt();
            layers.push(DenseLayer::init(fan_in, width, limit, &mut rng));
            fan_in = width;
        }
        let limit = (6.0 / (fan_in + 1) as f64).sqrt();
        layers.push(DenseLayer::init(fan_in, 1, limit, &mut rng));
        Ok(MlpModel { layers })
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.outputs).collect()
    }

    fn first_pre_activation(&self, x: &SparseVector<T>) -> Vec<T> {
        let first = &self.layers[0];
        let mut acc = first.biases.clone();
        for &(i, v) in x.entries() {
            for (a, &w) in acc.iter_mut().zip(first.row(i)) {
                *a += v * w;
            }
        }
        acc
    }

    /// Pre-activations of every layer; the last holds the logit.
    fn forward(&self, x: &SparseVector<T>) -> Vec<Vec<T>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        pre.push(self.first_pre_activation(x));
        for layer in &self.layers[1..] {
            let mut input = pre.last().unwrap().clone();
            relu(&mut input);
            pre.push(layer.forward_dense(&input));
        }
        pre
    }

    fn from_first_pre_activation(&self, mut h: Vec<T>) -> T {
        for layer in &self.layers[1..] {
            relu(&mut h);
            h = layer.forward_dense(&h);
        }
        h[0]
    }
}

impl<T: Scalar> Differentiable<T> for MlpModel<T> {
    fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    fn flat_params(&self) -> Vec<T> {
        let mut p = Vec::with_capacity(self.layers.iter().map(DenseLayer::n_params).sum());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.biases);
        }
        p
    }

    fn set_flat_params(&mut self, params: &[T]) -> Result<()> {
        let expected: usize = self.layers.iter().map(DenseLayer::n_params).sum();
        if params.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: params.len(),
            });
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            let (b, r) = r.split_at(l.biases.len());
            l.weights.copy_from_slice(w);
            l.biases.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    fn objective(&self, batch: &[Example<'_, T>], l2: T) -> (T, Vec<T>) {
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |off, l| {
                let start = *off;
                *off += l.n_params();
                Some(start)
            })
            .collect();
        let n_params: usize = self.layers.iter().map(DenseLayer::n_params).sum();
        let mut grad = vec![T::zero(); n_params];
        let total: T = batch.iter().map(|e| e.weight).sum();
        let mut loss = T::zero();

        if total > T::zero() {
            let last = self.layers.len() - 1;
            for e in batch {
                let pre = self.forward(e.x);
                let z = pre[last][0];
                let s = e.weight / total;
                loss += s * bce_with_logit(z, e.label);
                let mut delta = vec![s * (sigmoid(z) - target::<T>(e.label))];

                for l in (0..=last).rev() {
                    let layer = &self.layers[l];
                    let off = offsets[l];
                    let (gw, gb) = grad[off..off + layer.n_params()].split_at_mut(layer.weights.len());
                    for (g, &d) in gb.iter_mut().zip(&delta) {
                        *g += d;
                    }
                    if l == 0 {
                        for &(i, v) in e.x.entries() {
                            let row = &mut gw[i * layer.outputs..(i + 1) * layer.outputs];
                            for (g, &d) in row.iter_mut().zip(&delta) {
                                *g += v * d;
                            }
                        }
                        break;
                    }
                    let below = &pre[l - 1];
                    let mut next = vec![T::zero(); layer.inputs];
                    for (i, (&p, n)) in below.iter().zip(next.iter_mut()).enumerate() {
                        if p <= T::zero() {
                            continue;
                        }
                        let row = &mut gw[i * layer.outputs..(i + 1) * layer.outputs];
                        let mut back = T::zero();
                        for ((g, &d), &w) in row.iter_mut().zip(&delta).zip(layer.row(i)) {
                            *g += p * d;
                            back += w * d;
                        }
                        *n = back;
                    }
                    delta = next;
                }
            }
        }

        let mut norm = T::zero();
        for (layer, &off) in self.layers.iter().zip(&offsets) {
            for (g, &w) in grad[off..off + layer.weights.len()].iter_mut().zip(&layer.weights) {
                norm += w * w;
                *g += l2 * w;
            }
        }
        (loss + T::of(0.5) * l2 * norm, grad)
    }

    fn descend(&mut self, grad: &[T], learning_rate: T) {
        let mut rest = grad;
        for l in &mut self.layers {
            let (gw, r) = rest.split_at(l.weights.len());
            let (gb, r) = r.split_at(l.biases.len());
            for (w, &g) in l.weights.iter_mut().zip(gw) {
                *w -= learning_rate * g;
            }
            for (b, &g) in l.biases.iter_mut().zip(gb) {
                *b -= learning_rate * g;
            }
            rest = r;
        }
    }

    fn logit(&self, x: &SparseVector<T>) -> T {
        self.from_first_pre_activation(self.first_pre_activation(x))
    }
}

impl<T: Scalar> Scorer<T> for MlpModel<T> {
    fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    fn embed_width(&self) -> usize {
        self.layers[0].outputs
    }

    fn accumulate(&self, feature: usize, value: T, acc: &mut [T]) {
        for (a, &w) in acc.iter_mut().zip(self.layers[0].row(feature)) {
            *a += value * w;
        }
    }

    fn finish(&self, acc: &[T]) -> T {
        let h = acc.iter().zip(&self.layers[0].biases).map(|(&a, &b)| a + b).collect();
        self.from_first_pre_activation(h)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{fit, TrainConfig};
    use super::*;
    use crate::labeling::Label;

    #[test]
    fn zero_hidden_layers_rejected() {
        assert!(MlpModel::<f64>::init(3, &[], 0).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = MlpModel::<f64>::init(5, &[4, 3], 9).unwrap();
        let b = MlpModel::<f64>::init(5, &[4, 3], 9).unwrap();
        let c = MlpModel::<f64>::init(5, &[4, 3], 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.hidden_widths(), vec![4, 3]);
    }

    #[test]
    fn flat_params_round_trip() {
        let mut m = MlpModel::<f64>::init(3, &[2], 1).unwrap();
        let p = m.flat_params();
        assert_eq!(p.len(), 3 * 2 + 2 + 2 + 1);
        let shifted: Vec<f64> = p.iter().map(|v| v + 1.0).collect();
        m.set_flat_params(&shifted).unwrap();
        assert_eq!(m.flat_params(), shifted);
        assert!(m.set_flat_params(&p[1..]).is_err());
    }

    #[test]
    fn scorer_matches_logit() {
        let m = MlpModel::<f64>::init(4, &[5, 3], 2).unwrap();
        let x = SparseVector::from_dense(&[1.0, 0.0, 2.0, 1.0]);
        let a = m.score_dense(&x.to_dense());
        assert!((a - m.logit(&x)).abs() < 1e-12);
    }

    #[test]
    fn learns_xor() {
        let xs: Vec<SparseVector<f64>> = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
            .iter()
            .map(|r| SparseVector::from_dense(r))
            .collect();
        let labels = [Label::NotPnD, Label::PnD, Label::PnD, Label::NotPnD];
        let cfg = TrainConfig {
            learning_rate: 0.5,
            epochs: 4000,
            batch_size: 4,
            l2: 0.0,
            hidden: vec![8],
            seed: 3,
            ..Default::default()
        };
        let mut m = MlpModel::init(2, &cfg.hidden, cfg.seed).unwrap();
        let report = fit(&mut m, &xs, &labels, None, &cfg).unwrap();
        let final_loss = *report.epoch_losses.last().unwrap();
        assert!(final_loss < 0.01, "final loss {final_loss}");
    }
}
