//! One function per subcommand. Each reads its inputs, checks every path
//! up front, and writes its outputs under the configured output directory.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Cursor, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pnd_core::evaluation::{cross_validate, write_eval_table, CvConfig, FoldReport};
use pnd_core::explain::{rank_impact, write_attributions, write_ranking, ImpactRanking};
use pnd_core::features::{vectorize_weighted, SparseVector, Vocabulary};
use pnd_core::ingestion::{
    listings_from, parse_comments, parse_listings, parse_ohlcv, parse_posts, parse_sector_map, utc_date,
    window_posts, write_comments, write_posts, Comment, IngestStats, OhlcvBar, Post, PostWindow,
};
use pnd_core::labeling::{
    assemble_dataset, read_labeled, write_labeled, AgreementLexicon, ClassDistribution, LabeledDocument,
    BUNDLED_CUSTOM_TERMS, BUNDLED_EMPATH_TERMS,
};
use pnd_core::market_events::{
    baseline_stats, calibrate_slope_threshold, classify_with_stats, write_verdicts, AnomalyParams, VerdictRow,
};
use pnd_core::models::{Checkpoint, Classifier, ModelKind, TrainReport};
use pnd_core::synth::{generate_corpus, GroundTruth, LISTINGS_FILE};
use pnd_core::text::{extract_symbols, SectorMap, TextPipeline};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult, Stage};

pub const POSTS_OUT: &str = "posts.jsonl";
pub const COMMENTS_OUT: &str = "comments.jsonl";
pub const WINDOWS_OUT: &str = "windows.jsonl";
pub const INGEST_STATS_JSON: &str = "ingest_stats.json";
pub const INGEST_STATS_TXT: &str = "ingest_stats.txt";
pub const VERDICTS_OUT: &str = "verdicts.csv";
pub const LABELED_OUT: &str = "labeled.jsonl";
pub const DISTRIBUTION_TXT: &str = "class_distribution.txt";
pub const DISTRIBUTION_JSON: &str = "class_distribution.json";
pub const VOCAB_OUT: &str = "vocab.tsv";
pub const MODEL_OUT: &str = "model.json";
pub const TRAIN_REPORT_OUT: &str = "train_report.json";
pub const EVAL_REPORT_TXT: &str = "eval_report.txt";
pub const EVAL_REPORT_JSON: &str = "eval_report.json";
pub const EVAL_TABLE_OUT: &str = "eval_table.csv";
pub const ATTRIBUTIONS_OUT: &str = "attributions.csv";
pub const RANKING_OUT: &str = "ranking.csv";
pub const SECTOR_HISTOGRAM_OUT: &str = "sector_histogram.csv";
pub const DAILY_COUNTS_OUT: &str = "daily_counts.csv";
pub const SIMULATED_CONFIG: &str = "config.toml";

/// One line of `windows.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub post_id: String,
    pub outcome: PostWindow<f64>,
}

fn open(stage: Stage, path: &Path) -> CliResult<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::data(stage, format!("cannot open {}: {e}", path.display())))
}

fn read_with<T>(
    stage: Stage,
    path: &Path,
    parse: impl FnOnce(BufReader<fs::File>) -> pnd_core::Result<T>,
) -> CliResult<T> {
    parse(open(stage, path)?).map_err(|e| CliError::reading(stage, path, e))
}

fn write_with(
    stage: Stage,
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> pnd_core::Result<()>,
) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::writing(stage, parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| CliError::writing(stage, path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| CliError::writing(stage, path, e))?;
    w.flush().map_err(|e| CliError::writing(stage, path, e))
}

fn write_json<T: Serialize>(stage: Stage, path: &Path, value: &T) -> CliResult<()> {
    write_with(stage, path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn write_text(stage: Stage, path: &Path, text: &str) -> CliResult<()> {
    write_with(stage, path, |w| Ok(w.write_all(text.as_bytes())?))
}

fn text_pipeline(cfg: &PipelineConfig, stage: Stage) -> CliResult<TextPipeline> {
    let p = &cfg.paths;
    let resolve = |o: &Option<PathBuf>| o.as_ref().map(|p| cfg.resolve(p));
    let (s, c, l) = (resolve(&p.stopwords), resolve(&p.contractions), resolve(&p.lemmas));
    TextPipeline::load(s.as_deref(), c.as_deref(), l.as_deref()).map_err(|e| CliError::core(stage, e))
}

fn lexicon(cfg: &PipelineConfig, pipeline: &TextPipeline, stage: Stage) -> CliResult<AgreementLexicon> {
    let p = &cfg.paths;
    if p.empath_terms.is_none() && p.custom_terms.is_none() {
        return Ok(AgreementLexicon::bundled(pipeline));
    }
    let source = |o: &Option<PathBuf>, bundled: &'static str| -> CliResult<Box<dyn BufRead>> {
        Ok(match o {
            Some(path) => Box::new(open(stage, &cfg.resolve(path))?),
            None => Box::new(Cursor::new(bundled)),
        })
    };
    AgreementLexicon::from_readers(
        source(&p.empath_terms, BUNDLED_EMPATH_TERMS)?,
        source(&p.custom_terms, BUNDLED_CUSTOM_TERMS)?,
        pipeline,
    )
    .map_err(|e| CliError::core(stage, e))
}

fn sector_map(cfg: &PipelineConfig, stage: Stage) -> CliResult<SectorMap> {
    let path = cfg.resolve(&cfg.paths.sectors);
    read_with(stage, &path, parse_sector_map)
}

fn listings(cfg: &PipelineConfig, sectors: &SectorMap, stage: Stage) -> CliResult<HashSet<String>> {
    match &cfg.paths.listings {
        Some(p) => read_with(stage, &cfg.resolve(p), parse_listings),
        None => Ok(listings_from(sectors)),
    }
}

/// Every `*.csv` in the market data directory, keyed by upper-cased file stem.
fn load_bars(stage: Stage, dir: &Path) -> CliResult<BTreeMap<String, Vec<OhlcvBar<f64>>>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::data(stage, format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    let mut bars = BTreeMap::new();
    for path in files {
        let symbol = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_ascii_uppercase())
            .unwrap_or_default();
        let series = read_with(stage, &path, |r| parse_ohlcv(r))?;
        bars.insert(symbol, series);
    }
    Ok(bars)
}

/// `resolved` plus the configured word lists.
fn input_paths(cfg: &PipelineConfig, resolved: &[&Path]) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = resolved.iter().map(|p| p.to_path_buf()).collect();
    v.extend(cfg.word_lists().into_iter().map(|p| cfg.resolve(p)));
    v
}

/// Fails with the first missing path, before a stage does any work.
fn require(stage: Stage, resolved: &[PathBuf]) -> CliResult<()> {
    match resolved.iter().find(|p| !p.exists()) {
        Some(p) => Err(CliError::missing(stage, p.clone())),
        None => Ok(()),
    }
}

pub fn format_ingest_stats(s: &IngestStats) -> String {
    let rows = [
        ("posts", s.posts),
        ("comments", s.comments),
        ("windowed", s.windowed),
        ("skipped-no-symbol", s.skipped_no_symbol),
        ("skipped-multi-symbol", s.skipped_multi_symbol),
        ("skipped-insufficient-data", s.skipped_insufficient_data),
    ];
    rows.iter().map(|(k, v)| format!("{k:<26}{v:>10}\n")).collect()
}

/// Parses the raw inputs, resolves tickers and cuts market windows.
pub fn ingest(cfg: &PipelineConfig) -> CliResult<IngestStats> {
    let stage = Stage::Ingest;
    let p = &cfg.paths;
    let mut required: Vec<PathBuf> =
        [&p.posts, &p.comments, &p.ohlcv_dir, &p.sectors].iter().map(|x| cfg.resolve(x)).collect();
    required.extend(p.listings.as_ref().map(|x| cfg.resolve(x)));
    require(stage, &required)?;

    let mut posts = read_with(stage, &cfg.resolve(&p.posts), parse_posts)?;
    let comments = read_with(stage, &cfg.resolve(&p.comments), parse_comments)?;
    let sectors = sector_map(cfg, stage)?;
    let listed = listings(cfg, &sectors, stage)?;
    let bars = load_bars(stage, &cfg.resolve(&p.ohlcv_dir))?;

    let (outcomes, mut stats) = window_posts(&mut posts, &listed, &bars);
    stats.comments = comments.len();

    write_with(stage, &cfg.out(POSTS_OUT), |w| write_posts(w, &posts))?;
    write_with(stage, &cfg.out(COMMENTS_OUT), |w| write_comments(w, &comments))?;
    write_with(stage, &cfg.out(WINDOWS_OUT), |w| {
        for (post, outcome) in posts.iter().zip(outcomes) {
            serde_json::to_writer(&mut *w, &WindowRecord { post_id: post.id.clone(), outcome })?;
            writeln!(w)?;
        }
        Ok(())
    })?;
    write_json(stage, &cfg.out(INGEST_STATS_JSON), &stats)?;
    write_text(stage, &cfg.out(INGEST_STATS_TXT), &format_ingest_stats(&stats))?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub slope_threshold: f64,
    pub calibrated: bool,
    pub distribution: ClassDistribution,
}

fn read_windows(stage: Stage, path: &Path) -> CliResult<Vec<WindowRecord>> {
    read_with(stage, path, |r| {
        let mut out = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| pnd_core::Error::Record {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(out)
    })
}

/// Classifies every market window and labels posts and comments.
pub fn label(cfg: &PipelineConfig) -> CliResult<LabelSummary> {
    let stage = Stage::Label;
    let (posts_in, comments_in, windows_in) = (cfg.out(POSTS_OUT), cfg.out(COMMENTS_OUT), cfg.out(WINDOWS_OUT));
    let sectors_in = cfg.resolve(&cfg.paths.sectors);
    require(stage, &input_paths(cfg, &[&posts_in, &comments_in, &windows_in, &sectors_in]))?;
    let pipeline = text_pipeline(cfg, stage)?;
    let lexicon = lexicon(cfg, &pipeline, stage)?;
    let sectors = sector_map(cfg, stage)?;
    let posts: Vec<Post> = read_with(stage, &posts_in, parse_posts)?;
    let comments: Vec<Comment> = read_with(stage, &comments_in, parse_comments)?;
    let windows = read_windows(stage, &windows_in)?;
    if windows.len() != posts.len() || windows.iter().zip(&posts).any(|(w, p)| w.post_id != p.id) {
        return Err(CliError::data(
            stage,
            format!("{} does not match {}; rerun ingest", windows_in.display(), posts_in.display()),
        ));
    }

    let market = &cfg.market;
    let slope_threshold = if market.calibrate_slope {
        calibrate_slope_threshold(windows.iter().filter_map(|w| w.outcome.window()), market.sigma_multiplier)
            .map_err(|e| CliError::data(stage, format!("cannot calibrate slope threshold: {e}")))?
    } else {
        market.slope_threshold
    };
    let params = AnomalyParams { sigma_multiplier: market.sigma_multiplier, slope_threshold };

    let mut rows = Vec::new();
    let mut verdicts = HashMap::new();
    for rec in &windows {
        if let Some(w) = rec.outcome.window() {
            let stats = baseline_stats(w);
            let verdict = classify_with_stats(w, &stats, &params);
            verdicts.insert(rec.post_id.clone(), verdict.clone());
            rows.push(VerdictRow { post_id: rec.post_id.clone(), symbol: w.symbol.clone(), stats, verdict });
        }
    }

    let (docs, distribution) = assemble_dataset(&posts, &comments, &verdicts, &lexicon, &pipeline, &sectors)
        .map_err(|e| CliError::core(stage, e))?;

    write_with(stage, &cfg.out(VERDICTS_OUT), |w| write_verdicts(w, &rows))?;
    write_with(stage, &cfg.out(LABELED_OUT), |w| write_labeled(w, &docs))?;
    write_text(stage, &cfg.out(DISTRIBUTION_TXT), &distribution.to_string())?;
    let summary = LabelSummary { slope_threshold, calibrated: market.calibrate_slope, distribution };
    write_json(stage, &cfg.out(DISTRIBUTION_JSON), &summary)?;
    Ok(summary)
}

fn labeled_docs(cfg: &PipelineConfig, stage: Stage) -> CliResult<Vec<LabeledDocument>> {
    let path = cfg.out(LABELED_OUT);
    require(stage, &[path.clone()])?;
    read_with(stage, &path, read_labeled)
}

fn model_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::LogReg => "LogReg",
        ModelKind::Mlp => "MLP",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub documents: usize,
    pub vocabulary: usize,
    pub report: TrainReport,
}

/// Fits the configured model on the full labeled set.
pub fn train(cfg: &PipelineConfig) -> CliResult<TrainSummary> {
    let stage = Stage::Train;
    let docs = cfg.model.docs.apply(&labeled_docs(cfg, stage)?);
    let f = &cfg.features;
    let vocab = Vocabulary::build(docs.iter().map(|d| d.tokens.as_slice()), f.min_count)
        .map_err(|e| CliError::core(stage, e))?;
    if vocab.is_empty() {
        return Err(CliError::data(stage, "vocabulary is empty after min-count filtering"));
    }
    let xs: Vec<SparseVector<f64>> = docs.iter().map(|d| vectorize_weighted(&d.tokens, &vocab, f.weighting)).collect();
    let labels: Vec<_> = docs.iter().map(|d| d.label).collect();
    let (model, report) =
        Classifier::train(cfg.model.kind, &xs, &labels, &cfg.train).map_err(|e| CliError::core(stage, e))?;

    let vocab_path = cfg.out(VOCAB_OUT);
    write_with(stage, &vocab_path, |w| vocab.write(w))?;
    let ckpt = Checkpoint::new(model, cfg.train.clone(), &vocab, f.weighting);
    let model_path = cfg.out(MODEL_OUT);
    ckpt.save(&model_path).map_err(|e| CliError::writing(stage, &model_path, e))?;
    let summary = TrainSummary { documents: docs.len(), vocabulary: vocab.len(), report };
    write_json(stage, &cfg.out(TRAIN_REPORT_OUT), &summary)?;
    Ok(summary)
}

/// Stratified k-fold cross-validation, one report per document condition.
pub fn eval(cfg: &PipelineConfig) -> CliResult<Vec<FoldReport>> {
    let stage = Stage::Eval;
    let docs = labeled_docs(cfg, stage)?;
    let mut reports = Vec::new();
    for &condition in &cfg.eval.conditions {
        let cv = CvConfig {
            k: cfg.eval.k,
            seed: cfg.eval.seed,
            min_count: cfg.features.min_count,
            weighting: cfg.features.weighting,
            docs: condition,
        };
        let mut report =
            cross_validate(&docs, cfg.model.kind, &cfg.train, &cv).map_err(|e| CliError::core(stage, e))?;
        report.condition = condition.describe().to_string();
        reports.push(report);
    }

    let name = model_name(cfg.model.kind);
    let mut text = format!("model: {name}\nconfig sha256: {}\n", cfg.hash());
    for r in &reports {
        text.push('\n');
        text.push_str(&r.to_text());
    }
    write_text(stage, &cfg.out(EVAL_REPORT_TXT), &text)?;
    write_json(stage, &cfg.out(EVAL_REPORT_JSON), &reports)?;
    let rows: Vec<(&str, &FoldReport)> = reports.iter().map(|r| (name, r)).collect();
    write_with(stage, &cfg.out(EVAL_TABLE_OUT), |w| write_eval_table(w, &rows))?;
    Ok(reports)
}

/// `count` indices spread evenly over `0..len`, starting at `offset`
/// fractions of a stride.
pub fn spread_indices(len: usize, count: usize, offset: f64) -> Vec<usize> {
    let count = count.min(len);
    let stride = len as f64 / count.max(1) as f64;
    (0..count).map(|i| ((i as f64 + offset) * stride) as usize).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainSummary {
    pub instances: usize,
    pub background: usize,
    /// Largest `|sum of attributions + base - output|` over the instances.
    pub max_efficiency_gap: f64,
    pub ranking: ImpactRanking,
}

/// Shapley attributions for a spread of labeled documents, and the
/// corpus-level term ranking.
pub fn explain(cfg: &PipelineConfig, checkpoint: Option<&Path>) -> CliResult<ExplainSummary> {
    let stage = Stage::Explain;
    let vocab_path = cfg.out(VOCAB_OUT);
    let model_path = checkpoint.map(|p| cfg.resolve(p)).unwrap_or_else(|| cfg.out(MODEL_OUT));
    require(stage, &[cfg.out(LABELED_OUT), vocab_path.clone(), model_path.clone()])?;
    let docs = labeled_docs(cfg, stage)?;
    if docs.is_empty() {
        return Err(CliError::data(stage, "no labeled documents to explain"));
    }
    let vocab = read_with(stage, &vocab_path, Vocabulary::read)?;
    let ckpt: Checkpoint<f64> =
        Checkpoint::load(&model_path, &vocab).map_err(|e| CliError::reading(stage, &model_path, e))?;

    let x = |d: &LabeledDocument| vectorize_weighted(&d.tokens, &vocab, ckpt.weighting);
    let e = &cfg.explain;
    let chosen = spread_indices(docs.len(), e.instances, 0.0);
    let instances: Vec<SparseVector<f64>> = chosen.iter().map(|&i| x(&docs[i])).collect();
    let background: Vec<SparseVector<f64>> =
        spread_indices(docs.len(), e.background, 0.5).iter().map(|&i| x(&docs[i])).collect();

    let (ranking, attributions) =
        rank_impact(ckpt.model.as_scorer(), &instances, &background, &e.shapley, vocab.terms(), e.top_n)
            .map_err(|err| CliError::core(stage, err))?;
    let rows: Vec<(&str, &_)> = chosen.iter().map(|&i| docs[i].id.as_str()).zip(&attributions).collect();
    write_with(stage, &cfg.out(ATTRIBUTIONS_OUT), |w| write_attributions(w, &rows, vocab.terms()))?;
    write_with(stage, &cfg.out(RANKING_OUT), |w| write_ranking(w, &ranking))?;
    let max_efficiency_gap = attributions.iter().map(|a| a.efficiency_gap()).fold(0.0, f64::max);
    Ok(ExplainSummary { instances: instances.len(), background: background.len(), max_efficiency_gap, ranking })
}

/// Writes a synthetic corpus to `dir`, plus a config that runs the
/// pipeline on it.
pub fn simulate(cfg: &PipelineConfig, dir: &Path) -> CliResult<GroundTruth> {
    let stage = Stage::Simulate;
    require(stage, &input_paths(cfg, &[]))?;
    let pipeline = text_pipeline(cfg, stage)?;
    let lexicon = lexicon(cfg, &pipeline, stage)?;
    let corpus = generate_corpus(&cfg.simulate, &lexicon, &pipeline).map_err(|e| CliError::core(stage, e))?;
    corpus.write_to(dir).map_err(|e| CliError::writing(stage, dir, e))?;

    let mut follow = cfg.clone();
    follow.paths = crate::config::Paths {
        listings: Some(LISTINGS_FILE.into()),
        out_dir: "out".into(),
        ..Default::default()
    };
    // word lists stay where they were
    let absolute = |o: &Option<PathBuf>| o.as_ref().map(|p| std::path::absolute(cfg.resolve(p)).unwrap_or_else(|_| cfg.resolve(p)));
    follow.paths.stopwords = absolute(&cfg.paths.stopwords);
    follow.paths.contractions = absolute(&cfg.paths.contractions);
    follow.paths.lemmas = absolute(&cfg.paths.lemmas);
    follow.paths.empath_terms = absolute(&cfg.paths.empath_terms);
    follow.paths.custom_terms = absolute(&cfg.paths.custom_terms);
    write_text(stage, &dir.join(SIMULATED_CONFIG), &follow.to_toml())?;
    Ok(corpus.truth)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Single-ticker posts per sector, most mentioned first.
    pub sectors: Vec<(String, usize)>,
    /// `(date, posts, comments)` in date order.
    pub daily: Vec<(String, usize, usize)>,
}

impl CorpusStats {
    pub fn histogram(&self) -> String {
        let max = self.sectors.iter().map(|s| s.1).max().unwrap_or(0).max(1);
        let width = self.sectors.iter().map(|s| s.0.len()).max().unwrap_or(0);
        self.sectors
            .iter()
            .map(|(name, n)| format!("{name:<width$} {n:>7} {}\n", "#".repeat((n * 50).div_ceil(max))))
            .collect()
    }
}

/// Sector histogram of single-ticker posts and per-day submission counts.
pub fn stats(cfg: &PipelineConfig) -> CliResult<CorpusStats> {
    let stage = Stage::Stats;
    let p = &cfg.paths;
    let mut required: Vec<PathBuf> = [&p.posts, &p.comments, &p.sectors].iter().map(|x| cfg.resolve(x)).collect();
    required.extend(p.listings.as_ref().map(|x| cfg.resolve(x)));
    require(stage, &required)?;
    let posts = read_with(stage, &cfg.resolve(&p.posts), parse_posts)?;
    let comments = read_with(stage, &cfg.resolve(&p.comments), parse_comments)?;
    let sectors = sector_map(cfg, stage)?;
    let listed = listings(cfg, &sectors, stage)?;

    let mut per_sector: BTreeMap<String, usize> = BTreeMap::new();
    let mut daily: BTreeMap<_, (usize, usize)> = BTreeMap::new();
    for post in &posts {
        let symbols = extract_symbols(&post.text(), &listed);
        if symbols.len() == 1 {
            let symbol = symbols.first().expect("one symbol");
            *per_sector.entry(sectors.sector(symbol).to_string()).or_default() += 1;
        }
        daily.entry(post.date()).or_default().0 += 1;
    }
    for c in &comments {
        daily.entry(utc_date(c.created)).or_default().1 += 1;
    }
    let mut sector_rows: Vec<(String, usize)> = per_sector.into_iter().collect();
    sector_rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let out = CorpusStats {
        sectors: sector_rows,
        daily: daily.into_iter().map(|(d, (p, c))| (d.to_string(), p, c)).collect(),
    };

    write_with(stage, &cfg.out(SECTOR_HISTOGRAM_OUT), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["sector", "posts"])?;
        for (s, n) in &out.sectors {
            csv.write_record([s.as_str(), &n.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    write_with(stage, &cfg.out(DAILY_COUNTS_OUT), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["date", "posts", "comments"])?;
        for (d, p, c) in &out.daily {
            csv.write_record([d.as_str(), &p.to_string(), &c.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(out)
}
