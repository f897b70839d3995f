//! Stratified k-fold cross-validation and confusion-matrix metrics.
//!
//! Scores are percentages. A ratio whose denominator is zero is reported
//! as 0 and flagged in [`Metrics::undefined`].

use std::fmt::{self, Write as _};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{vectorize_weighted, SparseVector, Vocabulary, Weighting};
use crate::labeling::{Label, LabeledDocument};
use crate::models::{Classifier, ModelKind, TrainConfig};
use crate::scalar::Scalar;
use crate::text::DocKind;

pub const DEFAULT_FOLDS: usize = 5;

/// Counts with P&D as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::PnD, Label::PnD) => self.tp += 1,
            (Label::PnD, Label::NotPnD) => self.fp += 1,
            (Label::NotPnD, Label::NotPnD) => self.tn += 1,
            (Label::NotPnD, Label::PnD) => self.fn_ += 1,
        }
    }

    /// `fp / (fp + tn)` as a percentage, or `None` with no negatives.
    pub fn false_positive_rate(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ConfusionMatrix::new(self.tp + o.tp, self.fp + o.fp, self.tn + o.tn, self.fn_ + o.fn_)
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionMatrix::default(), |a, b| a + b)
    }
}

pub fn confusion(predictions: &[Label], labels: &[Label]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &a) in predictions.iter().zip(labels) {
        cm.record(p, a);
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Which ratios had a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Undefined {
    pub accuracy: bool,
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl Undefined {
    pub fn any(&self) -> bool {
        self.accuracy || self.precision || self.recall || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default)]
    pub undefined: Undefined,
}

impl Metrics {
    pub fn as_array(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}

pub const METRIC_NAMES: [&str; 4] = ["accuracy", "precision", "recall", "f1"];

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let mut undefined = Undefined::default();
    let take = |r: Option<f64>, flag: &mut bool| {
        r.unwrap_or_else(|| {
            *flag = true;
            0.0
        })
    };
    let accuracy = take(ratio(cm.tp + cm.tn, cm.total()), &mut undefined.accuracy);
    let precision = take(ratio(cm.tp, cm.tp + cm.fp), &mut undefined.precision);
    let recall = take(ratio(cm.tp, cm.tp + cm.fn_), &mut undefined.recall);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined.f1 = true;
        0.0
    };
    Metrics {
        accuracy,
        precision,
        recall,
        f1,
        undefined,
    }
}

/// Splits indices into `k` folds, preserving class proportions.
///
/// Each class is shuffled with the seed and dealt round-robin; the deal
/// continues where the previous class stopped so fold sizes differ by at
/// most one. Indices within a fold are ascending.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("fold count", format!("k must be at least 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [Label::PnD, Label::NotPnD] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::ClassTooSmall {
                members: members.len(),
                k,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Mean and sample standard deviation across folds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Spread::default();
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Spread { mean, std }
    }
}

impl fmt::Display for Spread {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} (±{:.2})", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub condition: String,
    pub folds: Vec<Metrics>,
    pub fold_confusion: Vec<ConfusionMatrix>,
    /// Summed over folds; every record is counted once.
    pub confusion: ConfusionMatrix,
    pub accuracy: Spread,
    pub precision: Spread,
    pub recall: Spread,
    pub f1: Spread,
}

impl FoldReport {
    pub fn from_folds(condition: impl Into<String>, fold_confusion: Vec<ConfusionMatrix>) -> Self {
        let folds: Vec<Metrics> = fold_confusion.iter().map(metrics).collect();
        let col = |i: usize| Spread::of(&folds.iter().map(|m| m.as_array()[i]).collect::<Vec<_>>());
        FoldReport {
            condition: condition.into(),
            confusion: fold_confusion.iter().copied().sum(),
            accuracy: col(0),
            precision: col(1),
            recall: col(2),
            f1: col(3),
            folds,
            fold_confusion,
        }
    }

    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Human-readable report: per-fold scores, then the summary row.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "condition: {}", self.condition);
        let _ = writeln!(s, "folds: {}", self.k());
        let _ = writeln!(
            s,
            "{:<6} {:>8} {:>9} {:>8} {:>8} {:>7} {:>7} {:>7} {:>7}",
            "fold", "accuracy", "precision", "recall", "f1", "tp", "fp", "tn", "fn"
        );
        for (i, (m, cm)) in self.folds.iter().zip(&self.fold_confusion).enumerate() {
            let _ = writeln!(
                s,
                "{:<6} {:>8.2} {:>9.2} {:>8.2} {:>8.2} {:>7} {:>7} {:>7} {:>7}{}",
                i + 1,
                m.accuracy,
                m.precision,
                m.recall,
                m.f1,
                cm.tp,
                cm.fp,
                cm.tn,
                cm.fn_,
                if m.undefined.any() { "  (undefined ratio reported as 0)" } else { "" }
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "accuracy   {}", self.accuracy);
        let _ = writeln!(s, "precision  {}", self.precision);
        let _ = writeln!(s, "recall     {}", self.recall);
        let _ = writeln!(s, "f1         {}", self.f1);
        let cm = &self.confusion;
        let _ = writeln!(s, "tp {}  fp {}  tn {}  fn {}", cm.tp, cm.fp, cm.tn, cm.fn_);
        if let Some(fpr) = cm.false_positive_rate() {
            let _ = writeln!(s, "false positive rate {fpr:.1}%");
        }
        s
    }
}

pub const EVAL_TABLE_HEADER: [&str; 9] = [
    "model",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "tp",
    "fp",
    "tn",
    "fn",
];

/// One delimited row per report, each score written as `mean (±std)`.
pub fn write_eval_table<W: Write>(writer: W, rows: &[(&str, &FoldReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EVAL_TABLE_HEADER)?;
    for (name, r) in rows {
        let cm = &r.confusion;
        w.write_record([
            format!("{name} {}", r.condition),
            r.accuracy.to_string(),
            r.precision.to_string(),
            r.recall.to_string(),
            r.f1.to_string(),
            cm.tp.to_string(),
            cm.fp.to_string(),
            cm.tn.to_string(),
            cm.fn_.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Which documents enter an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocFilter {
    Posts,
    #[default]
    All,
}

impl DocFilter {
    pub fn keeps(self, doc: &LabeledDocument) -> bool {
        match self {
            DocFilter::Posts => doc.kind == DocKind::Post,
            DocFilter::All => true,
        }
    }

    pub fn apply(self, docs: &[LabeledDocument]) -> Vec<LabeledDocument> {
        docs.iter().filter(|d| self.keeps(d)).cloned().collect()
    }

    pub fn describe(self) -> &'static str {
        match self {
            DocFilter::Posts => "Posts",
            DocFilter::All => "Posts and Comments",
        }
    }
}

impl std::str::FromStr for DocFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "posts" => Ok(DocFilter::Posts),
            "all" => Ok(DocFilter::All),
            other => Err(Error::invalid("document filter", format!("`{other}` (expected posts or all)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    pub min_count: u64,
    pub weighting: Weighting,
    pub docs: DocFilter,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: DEFAULT_FOLDS,
            seed: 7,
            min_count: 1,
            weighting: Weighting::Counts,
            docs: DocFilter::All,
        }
    }
}

/// Builds the vocabulary on `train` and vectorizes both sides with it.
pub fn featurize<T: Scalar>(
    train: &[&LabeledDocument],
    test: &[&LabeledDocument],
    min_count: u64,
    weighting: Weighting,
) -> Result<(Vocabulary, Vec<SparseVector<T>>, Vec<SparseVector<T>>)> {
    let vocab = Vocabulary::build(train.iter().map(|d| d.tokens.as_slice()), min_count)?;
    if vocab.is_empty() {
        return Err(Error::Empty("vocabulary after min-count filtering"));
    }
    let vec = |docs: &[&LabeledDocument]| -> Vec<SparseVector<T>> {
        docs.iter().map(|d| vectorize_weighted(&d.tokens, &vocab, weighting)).collect()
    };
    let (xtr, xte) = (vec(train), vec(test));
    Ok((vocab, xtr, xte))
}

/// Trains on `k - 1` folds and scores the held-out fold, for every fold.
/// Folds run in parallel; the report keeps fold order.
pub fn cross_validate<T: Scalar>(
    docs: &[LabeledDocument],
    kind: ModelKind,
    train_cfg: &TrainConfig<T>,
    cv: &CvConfig,
) -> Result<FoldReport> {
    train_cfg.validate()?;
    let docs: Vec<&LabeledDocument> = docs.iter().filter(|d| cv.docs.keeps(d)).collect();
    let labels: Vec<Label> = docs.iter().map(|d| d.label).collect();
    let folds = stratified_kfold(&labels, cv.k, cv.seed)?;

    let per_fold: Vec<Result<ConfusionMatrix>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, test_idx)| {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect();
            let train: Vec<&LabeledDocument> = train_idx.iter().map(|&i| docs[i]).collect();
            let test: Vec<&LabeledDocument> = test_idx.iter().map(|&i| docs[i]).collect();
            let (_, xtr, xte) = featurize::<T>(&train, &test, cv.min_count, cv.weighting)?;
            let ytr: Vec<Label> = train.iter().map(|d| d.label).collect();
            let (model, _) = Classifier::train(kind, &xtr, &ytr, train_cfg)?;
            let mut cm = ConfusionMatrix::default();
            for (x, d) in xte.iter().zip(&test) {
                cm.record(model.classify(x)?, d.label);
            }
            Ok(cm)
        })
        .collect();
    let fold_confusion = per_fold.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(FoldReport::from_folds(cv.docs.describe(), fold_confusion))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::LabelSource;

    fn round2(x: f64) -> f64 {
        (x * 100.0).round() / 100.0
    }

    #[test]
    fn reference_rows_reproduce() {
        let m = metrics(&ConfusionMatrix::new(2304, 2068, 13481, 702));
        assert_eq!(m.as_array().map(round2), [85.07, 52.70, 76.65, 62.46]);
        let m = metrics(&ConfusionMatrix::new(2382, 1718, 13831, 624));
        assert_eq!(m.as_array().map(round2), [87.38, 58.10, 79.24, 67.04]);
        let fpr = ConfusionMatrix::new(2304, 2068, 13481, 702).false_positive_rate().unwrap();
        assert_eq!((fpr * 10.0).round() / 10.0, 13.3);
    }

    #[test]
    fn hand_counted_toy() {
        use Label::*;
        let pred = [PnD, PnD, NotPnD, NotPnD, PnD, NotPnD, NotPnD];
        let real = [PnD, NotPnD, NotPnD, PnD, PnD, NotPnD, NotPnD];
        let cm = confusion(&pred, &real).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(2, 1, 3, 1));
        assert!(confusion(&pred[1..], &real).is_err());
    }

    #[test]
    fn degenerate_matrices_flag_undefined() {
        let m = metrics(&ConfusionMatrix::new(0, 5, 0, 0));
        assert_eq!(m.accuracy, 0.0);
        assert_eq!(m.precision, 0.0);
        assert!(m.undefined.recall && m.undefined.f1);
        let m = metrics(&ConfusionMatrix::new(3, 0, 4, 0));
        assert_eq!(m.f1, 100.0);
        assert!(!m.undefined.any());
    }

    #[test]
    fn balanced_ten_into_five() {
        let labels: Vec<Label> = (0..10).map(|i| Label::from_bool(i % 2 == 0)).collect();
        let folds = stratified_kfold(&labels, 5, 1).unwrap();
        for f in &folds {
            assert_eq!(f.len(), 2);
            assert_eq!(f.iter().filter(|&&i| labels[i].is_pnd()).count(), 1);
        }
    }

    #[test]
    fn small_class_rejected() {
        let labels = [Label::PnD, Label::NotPnD, Label::NotPnD, Label::NotPnD];
        assert!(matches!(stratified_kfold(&labels, 2, 0), Err(Error::ClassTooSmall { members: 1, k: 2 })));
        assert!(stratified_kfold(&labels, 1, 0).is_err());
    }

    #[test]
    fn spread_uses_sample_divisor() {
        let s = Spread::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(Spread { mean: 85.07, std: 1.25 }.to_string(), "85.07 (±1.25)");
    }

    fn doc(i: usize, pnd: bool) -> LabeledDocument {
        let word = if pnd { "moon" } else { "dividend" };
        LabeledDocument {
            id: format!("d{i}"),
            kind: if i % 3 == 0 { DocKind::Comment } else { DocKind::Post },
            label: Label::from_bool(pnd),
            label_source: LabelSource::MarketShape,
            no_window: false,
            tokens: vec![word.into(), "stock".into()],
        }
    }

    #[test]
    fn separable_corpus_scores_perfectly_with_zero_spread() {
        let docs: Vec<_> = (0..60).map(|i| doc(i, i % 4 == 0)).collect();
        let cfg = TrainConfig::<f64> { learning_rate: 0.5, epochs: 40, batch_size: 8, ..Default::default() };
        let report = cross_validate(&docs, ModelKind::LogReg, &cfg, &CvConfig::default()).unwrap();
        assert_eq!(report.k(), 5);
        assert_eq!(report.confusion.total(), 60);
        assert_eq!(report.accuracy.mean, 100.0);
        assert_eq!(report.f1.std, 0.0);
        assert!(report.to_text().contains("f1         100.00 (±0.00)"));
    }

    #[test]
    fn posts_filter_drops_comments() {
        let docs: Vec<_> = (0..60).map(|i| doc(i, i % 4 == 0)).collect();
        let cv = CvConfig { docs: DocFilter::Posts, ..Default::default() };
        let cfg = TrainConfig::<f64> { learning_rate: 0.5, epochs: 5, ..Default::default() };
        let report = cross_validate(&docs, ModelKind::LogReg, &cfg, &cv).unwrap();
        assert_eq!(report.confusion.total(), 40);
        assert_eq!(report.condition, "Posts");
    }

    #[test]
    fn eval_table_row() {
        let r = FoldReport::from_folds("Posts", vec![ConfusionMatrix::new(1, 0, 1, 0); 2]);
        let mut out = Vec::new();
        write_eval_table(&mut out, &[("MLP", &r)]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "MLP Posts,100.00 (±0.00),100.00 (±0.00),100.00 (±0.00),100.00 (±0.00),2,0,2,0"
        );
    }
}
