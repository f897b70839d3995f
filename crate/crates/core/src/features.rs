//! Vocabulary, sparse count vectors and class weights.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::labeling::Label;
use crate::scalar::Scalar;

/// Term index ordered by descending corpus frequency, ties broken
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    counts: Vec<u64>,
    doc_freq: Vec<u64>,
    n_docs: u64,
    index: HashMap<String, usize>,
    min_count: u64,
}

impl Vocabulary {
    pub fn build<'a, I, S>(corpus: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut freq: HashMap<&str, (u64, u64)> = HashMap::new();
        let mut n_docs = 0u64;
        for doc in corpus {
            n_docs += 1;
            let mut seen = HashSet::new();
            for t in doc {
                let t = t.as_ref();
                let e = freq.entry(t).or_default();
                e.0 += 1;
                if seen.insert(t) {
                    e.1 += 1;
                }
            }
        }
        if n_docs == 0 {
            return Err(Error::Empty("vocabulary corpus"));
        }
        let mut entries: Vec<(&str, u64, u64)> = freq
            .into_iter()
            .filter(|(_, (c, _))| *c >= min_count)
            .map(|(t, (c, df))| (t, c, df))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let terms: Vec<String> = entries.iter().map(|e| e.0.to_string()).collect();
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Vocabulary {
            counts: entries.iter().map(|e| e.1).collect(),
            doc_freq: entries.iter().map(|e| e.2).collect(),
            terms,
            index,
            n_docs,
            min_count,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// Smoothed inverse document frequency, `ln((1 + n) / (1 + df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.doc_freq[index] as f64)).ln() + 1.0
    }

    /// `term<TAB>index<TAB>count` lines, preceded by a header comment that
    /// carries the document statistics.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_tsv().as_bytes())?;
        Ok(())
    }

    fn to_tsv(&self) -> String {
        let mut out = format!("# docs={} min_count={}\n", self.n_docs, self.min_count);
        for (i, t) in self.terms.iter().enumerate() {
            out.push_str(&format!("{t}\t{i}\t{}\t{}\n", self.counts[i], self.doc_freq[i]));
        }
        out
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut terms = Vec::new();
        let mut counts = Vec::new();
        let mut doc_freq = Vec::new();
        let mut n_docs = 0;
        let mut min_count = 1;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let bad = |m: &str| Error::Record {
                line: i + 1,
                message: m.to_string(),
            };
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("docs", v)) => n_docs = v.parse().map_err(|_| bad("bad docs"))?,
                        Some(("min_count", v)) => min_count = v.parse().map_err(|_| bad("bad min_count"))?,
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 3 {
                return Err(bad("expected term<TAB>index<TAB>count"));
            }
            let idx: usize = fields[1].parse().map_err(|_| bad("bad index"))?;
            if idx != terms.len() {
                return Err(bad("indices must be dense and ascending"));
            }
            terms.push(fields[0].to_string());
            counts.push(fields[2].parse().map_err(|_| bad("bad count"))?);
            doc_freq.push(match fields.get(3) {
                Some(df) => df.parse().map_err(|_| bad("bad document frequency"))?,
                None => 1,
            });
        }
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Vocabulary {
            terms,
            counts,
            doc_freq,
            n_docs,
            index,
            min_count,
        })
    }

    /// SHA-256 of the persisted form; checkpoints record it.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_tsv().as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    #[default]
    Counts,
    TfIdf,
}

/// `(index, value)` pairs with strictly ascending indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector<T> {
    entries: Vec<(usize, T)>,
    dim: usize,
}

impl<T: Scalar> SparseVector<T> {
    pub fn new(dim: usize, entries: impl IntoIterator<Item = (usize, T)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, v) in entries {
            if i >= dim {
                return Err(Error::Dimension { expected: dim, got: i + 1 });
            }
            *map.entry(i).or_insert(T::zero()) += v;
        }
        Ok(SparseVector {
            entries: map.into_iter().filter(|(_, v)| *v != T::zero()).collect(),
            dim,
        })
    }

    pub fn empty(dim: usize) -> Self {
        SparseVector { entries: Vec::new(), dim }
    }

    pub fn from_dense(values: &[T]) -> Self {
        SparseVector {
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != T::zero())
                .map(|(i, v)| (i, *v))
                .collect(),
            dim: values.len(),
        }
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, T)] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> T {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map(|p| self.entries[p].1)
            .unwrap_or(T::zero())
    }

    pub fn total(&self) -> T {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn dot(&self, dense: &[T]) -> T {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }
}

/// Counts of in-vocabulary tokens; out-of-vocabulary tokens are dropped.
pub fn vectorize<T: Scalar, S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> SparseVector<T> {
    vectorize_weighted(tokens, vocab, Weighting::Counts)
}

pub fn vectorize_weighted<T: Scalar, S: AsRef<str>>(
    tokens: &[S],
    vocab: &Vocabulary,
    weighting: Weighting,
) -> SparseVector<T> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for t in tokens {
        if let Some(i) = vocab.index_of(t.as_ref()) {
            *counts.entry(i).or_default() += 1;
        }
    }
    SparseVector {
        entries: counts
            .into_iter()
            .map(|(i, c)| {
                let v = match weighting {
                    Weighting::Counts => c as f64,
                    Weighting::TfIdf => c as f64 * vocab.idf(i),
                };
                (i, T::of(v))
            })
            .collect(),
        dim: vocab.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights<T> {
    pub weight_pnd: T,
    pub weight_not: T,
}

impl<T: Scalar> ClassWeights<T> {
    pub fn uniform() -> Self {
        ClassWeights {
            weight_pnd: T::one(),
            weight_not: T::one(),
        }
    }

    pub fn of(&self, label: Label) -> T {
        match label {
            Label::PnD => self.weight_pnd,
            Label::NotPnD => self.weight_not,
        }
    }
}

/// Balanced weights `N / (2 N_c)`.
pub fn class_weights<T: Scalar>(labels: &[Label]) -> Result<ClassWeights<T>> {
    let positives = labels.iter().filter(|l| l.is_pnd()).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass { positives, negatives });
    }
    let n = labels.len() as f64;
    Ok(ClassWeights {
        weight_pnd: T::of(n / (2.0 * positives as f64)),
        weight_not: T::of(n / (2.0 * negatives as f64)),
    })
}
