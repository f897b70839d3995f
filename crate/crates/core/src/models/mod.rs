//! Class-weighted binary classifiers over sparse count vectors.
//!
//! Both models minimize
//!
//! ```text
//! L(θ) = Σ_i s_i ℓ(y_i, f_θ(x_i)) / Σ_i s_i  +  λ/2 · ‖W‖²
//! ```
//!
//! where `s_i` is the class weight times the optional per-sample weight,
//! `ℓ` is binary cross-entropy on the logit and `W` excludes biases.
//! Normalizing by the total weight makes a duplicated sample and a doubled
//! weight the same objective.

mod logreg;
mod mlp;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{class_weights, ClassWeights, SparseVector, Vocabulary, Weighting};
use crate::labeling::Label;
use crate::scalar::{sigmoid, softplus, Scalar};

pub use logreg::LogRegModel;
pub use mlp::{DenseLayer, MlpModel};

/// Decision threshold on the predicted probability.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    LogReg,
    #[default]
    Mlp,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(ModelKind::LogReg),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::invalid("model kind", format!("`{other}` (expected logreg or mlp)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"))]
pub struct TrainConfig<T> {
    pub learning_rate: T,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// `None` derives balanced weights from the training labels.
    pub class_weights: Option<ClassWeights<T>>,
    pub l2: T,
    /// Hidden layer widths for the MLP; ignored by logistic regression.
    pub hidden: Vec<usize>,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            learning_rate: T::of(0.1),
            epochs: 30,
            batch_size: 32,
            seed: 42,
            class_weights: None,
            l2: T::of(1e-4),
            hidden: vec![64],
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("train config", "learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("train config", "epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("train config", "batch size must be at least 1"));
        }
        if self.l2 < T::zero() {
            return Err(Error::invalid("train config", "l2 must be non-negative"));
        }
        if let Some(w) = &self.class_weights {
            if !(w.weight_pnd > T::zero() && w.weight_not > T::zero()) {
                return Err(Error::invalid("train config", "class weights must be positive"));
            }
        }
        Ok(())
    }
}

/// One weighted training example.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a, T> {
    pub x: &'a SparseVector<T>,
    pub label: Label,
    pub weight: T,
}

/// Models with a flat parameter vector and an analytic gradient.
pub trait Differentiable<T: Scalar> {
    fn input_dim(&self) -> usize;

    fn flat_params(&self) -> Vec<T>;

    fn set_flat_params(&mut self, params: &[T]) -> Result<()>;

    /// Weighted mean cross-entropy plus L2, and its gradient in
    /// [`flat_params`](Self::flat_params) order.
    fn objective(&self, batch: &[Example<'_, T>], l2: T) -> (T, Vec<T>);

    /// `θ ← θ − lr · grad`
    fn descend(&mut self, grad: &[T], learning_rate: T);

    fn logit(&self, x: &SparseVector<T>) -> T;
}

/// Models whose first layer is linear in the input, so the pre-activation
/// can be updated one feature at a time. Used by the attribution sampler.
pub trait Scorer<T: Scalar>: Sync {
    fn input_dim(&self) -> usize;

    /// Width of the first-layer pre-activation.
    fn embed_width(&self) -> usize;

    /// `acc += value · column(feature)`
    fn accumulate(&self, feature: usize, value: T, acc: &mut [T]);

    /// Logit from a first-layer pre-activation (biases not yet added).
    fn finish(&self, acc: &[T]) -> T;

    fn score_dense(&self, x: &[T]) -> T {
        let mut acc = vec![T::zero(); self.embed_width()];
        for (i, &v) in x.iter().enumerate() {
            if v != T::zero() {
                self.accumulate(i, v, &mut acc);
            }
        }
        self.finish(&acc)
    }
}

/// Per-sample cross-entropy on a logit.
pub(crate) fn bce_with_logit<T: Scalar>(logit: T, label: Label) -> T {
    if label.is_pnd() {
        softplus(-logit)
    } else {
        softplus(logit)
    }
}

pub(crate) fn target<T: Scalar>(label: Label) -> T {
    if label.is_pnd() {
        T::one()
    } else {
        T::zero()
    }
}

/// Per-epoch training history.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Objective over the full training set after each epoch.
    pub epoch_losses: Vec<f64>,
}

fn check_training_set<T: Scalar>(xs: &[SparseVector<T>], labels: &[Label], dim: usize) -> Result<()> {
    if xs.len() != labels.len() {
        return Err(Error::Dimension {
            expected: xs.len(),
            got: labels.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::invalid("training set", "need at least two examples"));
    }
    let positives = labels.iter().filter(|l| l.is_pnd()).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass {
            positives,
            negatives: labels.len() - positives,
        });
    }
    if let Some(x) = xs.iter().find(|x| x.dim() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: x.dim(),
        });
    }
    Ok(())
}

/// Mini-batch gradient descent with a seeded shuffle each epoch.
pub fn fit<T: Scalar, M: Differentiable<T>>(
    model: &mut M,
    xs: &[SparseVector<T>],
    labels: &[Label],
    sample_weights: Option<&[T]>,
    cfg: &TrainConfig<T>,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_training_set(xs, labels, model.input_dim())?;
    if let Some(w) = sample_weights {
        if w.len() != xs.len() {
            return Err(Error::Dimension {
                expected: xs.len(),
                got: w.len(),
            });
        }
    }
    let cw = match cfg.class_weights {
        Some(w) => w,
        None => class_weights(labels)?,
    };
    let examples: Vec<Example<'_, T>> = xs
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (x, &label))| Example {
            x,
            label,
            weight: cw.of(label) * sample_weights.map_or(T::one(), |w| w[i]),
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut report = TrainReport::default();
    let full_batch = cfg.batch_size >= examples.len();

    for epoch in 0..cfg.epochs {
        if !full_batch {
            order.shuffle(&mut rng);
        }
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| examples[i]));
            let (loss, grad) = model.objective(&batch, cfg.l2);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    loss: loss.as_f64(),
                });
            }
            model.descend(&grad, cfg.learning_rate);
        }
        let (loss, _) = model.objective(&examples, cfg.l2);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                loss: loss.as_f64(),
            });
        }
        report.epoch_losses.push(loss.as_f64());
    }
    Ok(report)
}

pub fn train_logreg<T: Scalar>(
    xs: &[SparseVector<T>],
    labels: &[Label],
    cfg: &TrainConfig<T>,
) -> Result<(LogRegModel<T>, TrainReport)> {
    let dim = xs.first().map_or(0, SparseVector::dim);
    let mut model = LogRegModel::zeros(dim);
    let report = fit(&mut model, xs, labels, None, cfg)?;
    Ok((model, report))
}

pub fn train_mlp<T: Scalar>(
    xs: &[SparseVector<T>],
    labels: &[Label],
    cfg: &TrainConfig<T>,
) -> Result<(MlpModel<T>, TrainReport)> {
    let dim = xs.first().map_or(0, SparseVector::dim);
    let mut model = MlpModel::init(dim, &cfg.hidden, cfg.seed)?;
    let report = fit(&mut model, xs, labels, None, cfg)?;
    Ok((model, report))
}

/// A trained model of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[serde(bound(deserialize = "T: Scalar"))]
pub enum Classifier<T> {
    LogReg(LogRegModel<T>),
    Mlp(MlpModel<T>),
}

impl<T: Scalar> Classifier<T> {
    pub fn train(kind: ModelKind, xs: &[SparseVector<T>], labels: &[Label], cfg: &TrainConfig<T>) -> Result<(Self, TrainReport)> {
        Ok(match kind {
            ModelKind::LogReg => {
                let (m, r) = train_logreg(xs, labels, cfg)?;
                (Classifier::LogReg(m), r)
            }
            ModelKind::Mlp => {
                let (m, r) = train_mlp(xs, labels, cfg)?;
                (Classifier::Mlp(m), r)
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Classifier::LogReg(_) => ModelKind::LogReg,
            Classifier::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Classifier::LogReg(m) => Differentiable::input_dim(m),
            Classifier::Mlp(m) => Differentiable::input_dim(m),
        }
    }

    pub fn logit(&self, x: &SparseVector<T>) -> Result<T> {
        check_dim(self.input_dim(), x)?;
        Ok(match self {
            Classifier::LogReg(m) => m.logit(x),
            Classifier::Mlp(m) => m.logit(x),
        })
    }

    /// Probability of the P&D class.
    pub fn predict(&self, x: &SparseVector<T>) -> Result<T> {
        self.logit(x).map(sigmoid)
    }

    pub fn classify(&self, x: &SparseVector<T>) -> Result<Label> {
        Ok(Label::from_bool(self.predict(x)? >= T::of(DECISION_THRESHOLD)))
    }

    pub fn as_scorer(&self) -> &dyn Scorer<T> {
        match self {
            Classifier::LogReg(m) => m,
            Classifier::Mlp(m) => m,
        }
    }
}

pub(crate) fn check_dim<T: Scalar>(expected: usize, x: &SparseVector<T>) -> Result<()> {
    if x.dim() != expected {
        return Err(Error::Dimension {
            expected,
            got: x.dim(),
        });
    }
    Ok(())
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to reload a model against its vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct Checkpoint<T> {
    pub format_version: u32,
    pub vocab_hash: String,
    pub vocab_size: usize,
    pub weighting: Weighting,
    pub config: TrainConfig<T>,
    pub model: Classifier<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(model: Classifier<T>, config: TrainConfig<T>, vocab: &Vocabulary, weighting: Weighting) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            vocab_hash: vocab.hash(),
            vocab_size: vocab.len(),
            weighting,
            config,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    /// Loads a checkpoint and checks it was trained against `vocab`.
    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let ckpt: Checkpoint<T> = serde_json::from_reader(file)?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_VERSION})",
                ckpt.format_version
            )));
        }
        let hash = vocab.hash();
        if ckpt.vocab_hash != hash {
            return Err(Error::Checkpoint(format!(
                "vocabulary hash mismatch: checkpoint {} vs vocabulary {hash}",
                ckpt.vocab_hash
            )));
        }
        if ckpt.model.input_dim() != vocab.len() {
            return Err(Error::Dimension {
                expected: vocab.len(),
                got: ckpt.model.input_dim(),
            });
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<SparseVector<f64>>, Vec<Label>) {
        let xs = vec![
            SparseVector::from_dense(&[1.0, 0.0, 2.0]),
            SparseVector::from_dense(&[0.0, 1.0, 0.0]),
            SparseVector::from_dense(&[2.0, 0.0, 1.0]),
            SparseVector::from_dense(&[0.0, 2.0, 1.0]),
        ];
        (xs, vec![Label::PnD, Label::NotPnD, Label::PnD, Label::NotPnD])
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::<f64>::default();
        assert!(cfg.validate().is_ok());
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig::<f64> { epochs: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn single_class_rejected() {
        let (xs, _) = toy();
        let labels = vec![Label::PnD; 4];
        assert!(matches!(
            train_logreg(&xs, &labels, &TrainConfig::default()),
            Err(Error::SingleClass { .. })
        ));
    }

    #[test]
    fn non_finite_loss_aborts() {
        let (xs, labels) = toy();
        let cfg = TrainConfig { learning_rate: 1e300, epochs: 5, ..Default::default() };
        let err = train_logreg(&xs, &labels, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
    }

    #[test]
    fn checkpoint_round_trip_and_hash_check() {
        let (xs, labels) = toy();
        let cfg = TrainConfig::<f64> { epochs: 3, hidden: vec![4], ..Default::default() };
        let (model, _) = Classifier::train(ModelKind::Mlp, &xs, &labels, &cfg).unwrap();
        let docs: Vec<Vec<String>> = vec![vec!["a".into(), "b".into(), "c".into()]];
        let vocab = Vocabulary::build(docs.iter().map(Vec::as_slice), 1).unwrap();
        let ckpt = Checkpoint::new(model, cfg, &vocab, Weighting::Counts);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ckpt.save(&path).unwrap();
        let back: Checkpoint<f64> = Checkpoint::load(&path, &vocab).unwrap();
        assert_eq!(back, ckpt);

        let other_docs: Vec<Vec<String>> = vec![vec!["a".into(), "b".into(), "d".into()]];
        let other = Vocabulary::build(other_docs.iter().map(Vec::as_slice), 1).unwrap();
        assert!(matches!(Checkpoint::<f64>::load(&path, &other), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn predict_checks_dimension() {
        let model = Classifier::LogReg(LogRegModel::<f64>::zeros(3));
        assert!(model.predict(&SparseVector::empty(4)).is_err());
        assert_eq!(model.predict(&SparseVector::empty(3)).unwrap(), 0.5);
    }
}
