//! Monte Carlo permutation Shapley values.
//!
//! Each sample draws a feature ordering and a background instance, then
//! walks from the background to the instance one feature at a time,
//! crediting each feature with the change in model output. Features
//! outside the instance and background support are never visited and get
//! exactly zero.
//!
//! Orderings are drawn in antithetic pairs: each seeded ordering is also
//! walked in reverse against the same background instance. Background
//! instances are drawn round-robin over a seeded shuffle and the sample
//! count is rounded up to a multiple of twice the background size, so every
//! background instance is used equally often. The attributions then sum
//! exactly to `output - base`.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::models::Scorer;
use crate::scalar::{sigmoid, Scalar};

/// Samples per parallel work unit; fixed so results do not depend on the
/// thread count.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputSpace {
    #[default]
    Probability,
    Logit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapleyConfig {
    /// Minimum number of permutations per instance.
    pub samples: usize,
    pub seed: u64,
    pub output: OutputSpace,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        ShapleyConfig {
            samples: 2000,
            seed: 11,
            output: OutputSpace::Probability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution<T> {
    /// Visited features, ascending.
    pub features: Vec<usize>,
    pub values: Vec<T>,
    /// Mean model output over the background.
    pub base: T,
    /// Model output on the instance.
    pub output: T,
    pub samples_used: usize,
}

impl<T: Scalar> Attribution<T> {
    pub fn get(&self, feature: usize) -> T {
        self.features
            .binary_search(&feature)
            .map_or(T::zero(), |i| self.values[i])
    }

    pub fn total(&self) -> T {
        self.values.iter().copied().sum()
    }

    /// `|Σ values + base − output|`
    pub fn efficiency_gap(&self) -> T {
        (self.total() + self.base - self.output).abs()
    }
}

fn evaluate<T: Scalar>(model: &dyn Scorer<T>, acc: &[T], space: OutputSpace) -> T {
    let z = model.finish(acc);
    match space {
        OutputSpace::Logit => z,
        OutputSpace::Probability => sigmoid(z),
    }
}

fn embed<T: Scalar>(model: &dyn Scorer<T>, x: &SparseVector<T>) -> Vec<T> {
    let mut acc = vec![T::zero(); model.embed_width()];
    for &(i, v) in x.entries() {
        model.accumulate(i, v, &mut acc);
    }
    acc
}

fn check_input<T: Scalar>(model: &dyn Scorer<T>, x: &SparseVector<T>) -> Result<()> {
    if x.dim() != model.input_dim() {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            got: x.dim(),
        });
    }
    Ok(())
}

/// Model output on `x` in the requested space.
pub fn model_output<T: Scalar>(model: &dyn Scorer<T>, x: &SparseVector<T>, space: OutputSpace) -> T {
    evaluate(model, &embed(model, x), space)
}

pub fn shapley_attribute<T: Scalar>(
    model: &dyn Scorer<T>,
    x: &SparseVector<T>,
    background: &[SparseVector<T>],
    cfg: &ShapleyConfig,
) -> Result<Attribution<T>> {
    if cfg.samples == 0 {
        return Err(Error::invalid("shapley config", "samples must be at least 1"));
    }
    if background.is_empty() {
        return Err(Error::Empty("background set"));
    }
    check_input(model, x)?;
    for b in background {
        check_input(model, b)?;
    }

    let support: BTreeSet<usize> = x
        .entries()
        .iter()
        .chain(background.iter().flat_map(|b| b.entries()))
        .map(|&(i, _)| i)
        .collect();
    let features: Vec<usize> = support.into_iter().collect();
    let slot = |f: usize| features.binary_search(&f).expect("feature in support");

    let n_bg = background.len();
    // orderings come in reversed pairs sharing one background draw
    let samples = cfg.samples.div_ceil(2 * n_bg) * 2 * n_bg;
    let mut bg_order: Vec<usize> = (0..n_bg).collect();
    bg_order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba5e));

    let bg_embed: Vec<Vec<T>> = background.iter().map(|b| embed(model, b)).collect();
    let x_dense_at = |f: usize| x.get(f);

    let partials: Vec<Vec<T>> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut phi = vec![T::zero(); features.len()];
            for s in chunk * CHUNK..((chunk + 1) * CHUNK).min(samples) {
                let pair = s / 2;
                let mut order = features.clone();
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(pair as u64);
                order.shuffle(&mut rng);
                if s % 2 == 1 {
                    order.reverse();
                }
                let bi = bg_order[pair % n_bg];
                let b = &background[bi];
                let mut acc = bg_embed[bi].clone();
                let mut prev = evaluate(model, &acc, cfg.output);
                for &f in &order {
                    let delta = x_dense_at(f) - b.get(f);
                    if delta == T::zero() {
                        continue;
                    }
                    model.accumulate(f, delta, &mut acc);
                    let cur = evaluate(model, &acc, cfg.output);
                    phi[slot(f)] += cur - prev;
                    prev = cur;
                }
            }
            phi
        })
        .collect();

    let mut values = vec![T::zero(); features.len()];
    for p in partials {
        for (v, d) in values.iter_mut().zip(p) {
            *v += d;
        }
    }
    let n = T::of_usize(samples);
    for v in &mut values {
        *v /= n;
    }
    let base = bg_embed.iter().map(|a| evaluate(model, a, cfg.output)).sum::<T>() / T::of_usize(n_bg);
    Ok(Attribution {
        features,
        values,
        base,
        output: model_output(model, x, cfg.output),
        samples_used: samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactEntry {
    pub feature: usize,
    pub term: String,
    pub mean_abs_value: f64,
}

/// Terms ordered by mean absolute attribution, highest first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImpactRanking {
    pub entries: Vec<ImpactEntry>,
}

/// Attributes every instance (each with the same seed, so an instance's
/// attribution does not depend on its position) and averages `|value|`
/// per feature, counting absent features as zero.
pub fn rank_impact<T: Scalar>(
    model: &dyn Scorer<T>,
    instances: &[SparseVector<T>],
    background: &[SparseVector<T>],
    cfg: &ShapleyConfig,
    terms: &[String],
    top_n: usize,
) -> Result<(ImpactRanking, Vec<Attribution<T>>)> {
    if instances.is_empty() {
        return Err(Error::Empty("instances to rank"));
    }
    if terms.len() != model.input_dim() {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            got: terms.len(),
        });
    }
    let attributions = instances
        .par_iter()
        .map(|x| shapley_attribute(model, x, background, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut per_feature: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for a in &attributions {
        for (&f, v) in a.features.iter().zip(&a.values) {
            per_feature.entry(f).or_default().push(v.as_f64().abs());
        }
    }
    let n = instances.len() as f64;
    let mut entries: Vec<ImpactEntry> = per_feature
        .into_iter()
        .map(|(feature, mut vals)| {
            // Summing in sorted order keeps the mean independent of instance order.
            vals.sort_by(f64::total_cmp);
            ImpactEntry {
                feature,
                term: terms[feature].clone(),
                mean_abs_value: vals.iter().sum::<f64>() / n,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.mean_abs_value
            .total_cmp(&a.mean_abs_value)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    entries.truncate(top_n);
    Ok((ImpactRanking { entries }, attributions))
}

/// `doc_id,term,value` rows for the nonzero attributions of each document.
pub fn write_attributions<T: Scalar, W: Write>(
    writer: W,
    rows: &[(&str, &Attribution<T>)],
    terms: &[String],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["doc_id", "term", "value"])?;
    for (doc, a) in rows {
        for (&f, v) in a.features.iter().zip(&a.values) {
            if *v != T::zero() {
                w.write_record([doc, terms[f].as_str(), v.to_string().as_str()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_ranking<W: Write>(writer: W, ranking: &ImpactRanking) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "term", "mean_abs_value"])?;
    for (i, e) in ranking.entries.iter().enumerate() {
        w.write_record([(i + 1).to_string(), e.term.clone(), e.mean_abs_value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
