use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pnd_core::features::{ClassWeights, SparseVector};
use pnd_core::labeling::Label;
use pnd_core::models::{
    fit, train_logreg, train_mlp, Classifier, Differentiable, Example, LogRegModel, MlpModel, TrainConfig,
};

/// Central-difference gradient, one parameter at a time.
fn numeric_gradient<M: Differentiable<f64> + Clone>(model: &M, batch: &[Example<'_, f64>], l2: f64) -> Vec<f64> {
    let params = model.flat_params();
    let h = 1e-6;
    (0..params.len())
        .map(|i| {
            let mut probe = model.clone();
            let mut p = params.clone();
            p[i] = params[i] + h;
            probe.set_flat_params(&p).unwrap();
            let up = probe.objective(batch, l2).0;
            p[i] = params[i] - h;
            probe.set_flat_params(&p).unwrap();
            let down = probe.objective(batch, l2).0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-6)
}

fn toy_data(seed: u64, n: usize, dim: usize) -> (Vec<SparseVector<f64>>, Vec<Label>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = (0..n)
        .map(|_| {
            let dense: Vec<f64> = (0..dim)
                .map(|_| if rng.gen_bool(0.6) { rng.gen_range(1..4) as f64 } else { 0.0 })
                .collect();
            SparseVector::from_dense(&dense)
        })
        .collect();
    let labels = (0..n).map(|i| Label::from_bool(i % 3 == 0)).collect();
    let weights = (0..n).map(|_| rng.gen_range(0.5..3.0)).collect();
    (xs, labels, weights)
}

fn batch<'a>(xs: &'a [SparseVector<f64>], labels: &[Label], weights: &[f64]) -> Vec<Example<'a, f64>> {
    xs.iter()
        .zip(labels)
        .zip(weights)
        .map(|((x, &label), &weight)| Example { x, label, weight })
        .collect()
}

fn assert_gradient_matches<M: Differentiable<f64> + Clone>(model: &M, examples: &[Example<'_, f64>], l2: f64) {
    let (_, analytic) = model.objective(examples, l2);
    let numeric = numeric_gradient(model, examples, l2);
    assert_eq!(analytic.len(), numeric.len());
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = relative_error(*a, *n);
        assert!(err <= 1e-5, "parameter {i}: analytic {a} numeric {n} (rel {err:e})");
    }
}

#[test]
fn logreg_gradient_matches_finite_differences() {
    let (xs, labels, w) = toy_data(1, 12, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = LogRegModel {
        weights: (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        bias: 0.2,
    };
    assert_gradient_matches(&model, &batch(&xs, &labels, &w), 0.01);
}

#[test]
fn mlp_gradient_matches_finite_differences_in_every_layer() {
    let (xs, labels, w) = toy_data(3, 12, 5);
    let mut model = MlpModel::<f64>::init(5, &[4, 3], 9).unwrap();
    // shift biases so no hidden unit sits exactly on the rectifier kink
    let p: Vec<f64> = model.flat_params().iter().map(|v| v + 0.03).collect();
    model.set_flat_params(&p).unwrap();
    assert_eq!(model.layers.len(), 3);
    assert_gradient_matches(&model, &batch(&xs, &labels, &w), 0.01);
}

#[test]
fn fixed_seed_training_is_bitwise_reproducible() {
    let (xs, labels, _) = toy_data(4, 40, 6);
    let cfg = TrainConfig { epochs: 15, batch_size: 7, hidden: vec![5], seed: 99, ..Default::default() };
    let bits = |m: &dyn Fn() -> Vec<f64>| m().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let run_mlp = || train_mlp(&xs, &labels, &cfg).unwrap().0.flat_params();
    let run_lr = || train_logreg(&xs, &labels, &cfg).unwrap().0.flat_params();
    assert_eq!(bits(&run_mlp), bits(&run_mlp));
    assert_eq!(bits(&run_lr), bits(&run_lr));
    let other = TrainConfig { seed: 100, ..cfg.clone() };
    assert_ne!(train_mlp(&xs, &labels, &other).unwrap().0.flat_params(), run_mlp());
}

#[test]
fn duplicating_a_sample_equals_doubling_its_weight() {
    let (xs, labels, _) = toy_data(5, 9, 4);
    let mut dup_xs = xs.clone();
    let mut dup_labels = labels.clone();
    dup_xs.push(xs[2].clone());
    dup_labels.push(labels[2]);
    let mut weights = vec![1.0; xs.len()];
    weights[2] = 2.0;

    let cfg = TrainConfig {
        epochs: 25,
        batch_size: 64,
        learning_rate: 0.2,
        hidden: vec![3],
        class_weights: Some(ClassWeights { weight_pnd: 2.0, weight_not: 1.0 }),
        ..Default::default()
    };
    for kind in ["logreg", "mlp"] {
        let (dup_report, weighted_report, dup_params, weighted_params) = if kind == "logreg" {
            let (mut a, mut b) = (LogRegModel::zeros(4), LogRegModel::zeros(4));
            let ra = fit(&mut a, &dup_xs, &dup_labels, None, &cfg).unwrap();
            let rb = fit(&mut b, &xs, &labels, Some(&weights), &cfg).unwrap();
            (ra, rb, a.flat_params(), b.flat_params())
        } else {
            let mut a = MlpModel::init(4, &cfg.hidden, cfg.seed).unwrap();
            let mut b = a.clone();
            let ra = fit(&mut a, &dup_xs, &dup_labels, None, &cfg).unwrap();
            let rb = fit(&mut b, &xs, &labels, Some(&weights), &cfg).unwrap();
            (ra, rb, a.flat_params(), b.flat_params())
        };
        for (a, b) in dup_report.epoch_losses.iter().zip(&weighted_report.epoch_losses) {
            assert!((a - b).abs() < 1e-12, "{kind}: loss {a} vs {b}");
        }
        for (a, b) in dup_params.iter().zip(&weighted_params) {
            assert!((a - b).abs() < 1e-12, "{kind}: param {a} vs {b}");
        }
    }
}

#[test]
fn full_batch_loss_never_increases() {
    let (xs, labels, _) = toy_data(6, 30, 5);
    let cfg = TrainConfig { epochs: 200, batch_size: 30, learning_rate: 0.05, hidden: vec![6], ..Default::default() };
    for (name, losses) in [
        ("logreg", train_logreg(&xs, &labels, &cfg).unwrap().1.epoch_losses),
        ("mlp", train_mlp(&xs, &labels, &cfg).unwrap().1.epoch_losses),
    ] {
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{name}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn two_separable_points_are_fit() {
    let xs = vec![SparseVector::from_dense(&[1.0, 0.0]), SparseVector::from_dense(&[0.0, 1.0])];
    let labels = vec![Label::PnD, Label::NotPnD];
    let cfg = TrainConfig { epochs: 100, batch_size: 2, learning_rate: 0.5, hidden: vec![4], ..Default::default() };
    for kind in [pnd_core::models::ModelKind::LogReg, pnd_core::models::ModelKind::Mlp] {
        let (model, _) = Classifier::train(kind, &xs, &labels, &cfg).unwrap();
        for (x, &l) in xs.iter().zip(&labels) {
            assert_eq!(model.classify(x).unwrap(), l, "{kind:?}");
        }
    }
}

#[test]
fn four_unit_network_fits_xor() {
    let xs: Vec<SparseVector<f64>> = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
        .iter()
        .map(|r| SparseVector::from_dense(r))
        .collect();
    let labels = vec![Label::NotPnD, Label::PnD, Label::PnD, Label::NotPnD];
    let cfg = TrainConfig {
        learning_rate: 0.5,
        epochs: 5000,
        batch_size: 4,
        l2: 0.0,
        hidden: vec![4],
        seed: 1,
        ..Default::default()
    };
    let (model, report) = train_mlp(&xs, &labels, &cfg).unwrap();
    assert!(*report.epoch_losses.last().unwrap() < 0.01);
    let model = Classifier::Mlp(model);
    for (x, &l) in xs.iter().zip(&labels) {
        assert_eq!(model.classify(x).unwrap(), l);
    }
}

#[test]
fn zero_hidden_layers_is_a_config_error() {
    let xs = vec![SparseVector::from_dense(&[1.0]), SparseVector::from_dense(&[0.0])];
    let labels = vec![Label::PnD, Label::NotPnD];
    let cfg = TrainConfig::<f64> { hidden: vec![], ..Default::default() };
    assert!(train_mlp(&xs, &labels, &cfg).is_err());
}
