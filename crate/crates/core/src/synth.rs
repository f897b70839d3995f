//! Synthetic market windows and forum corpora with known labels.
//!
//! Windows are built relative to their own baseline statistics, so each
//! scenario clears or misses the detection gates by construction. Bars have
//! `open = high = low = close`, so the daily average price is the bar price.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Duration, NaiveDate, Weekday};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{
    next_business_day, write_comments, write_ohlcv, write_posts, write_sector_map, Comment, EventWindow, IngestStats,
    OhlcvBar, Post, SkipReason, BASELINE_DAYS, MAX_EVENT_DAYS,
};
use crate::labeling::{AgreementLexicon, ClassDistribution, Label};
use crate::market_events::{rising_slope, DEFAULT_SIGMA_MULTIPLIER, DEFAULT_SLOPE_THRESHOLD};
use crate::scalar::Scalar;
use crate::text::{SectorMap, TextPipeline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Pnd,
    Normal,
    PriceOnlySpike,
    VolumeOnlySpike,
    SteepNews,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Pnd,
        ScenarioKind::Normal,
        ScenarioKind::PriceOnlySpike,
        ScenarioKind::VolumeOnlySpike,
        ScenarioKind::SteepNews,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Pnd => "pnd",
            ScenarioKind::Normal => "normal",
            ScenarioKind::PriceOnlySpike => "price_only_spike",
            ScenarioKind::VolumeOnlySpike => "volume_only_spike",
            ScenarioKind::SteepNews => "steep_news",
        }
    }

    fn price_spike(self) -> bool {
        matches!(self, ScenarioKind::Pnd | ScenarioKind::PriceOnlySpike | ScenarioKind::SteepNews)
    }

    fn volume_spike(self) -> bool {
        matches!(self, ScenarioKind::Pnd | ScenarioKind::VolumeOnlySpike | ScenarioKind::SteepNews)
    }

    /// Gate results the detector must report for this kind. The slope is
    /// only evaluated when both anomalies hold.
    pub fn expected_gates(self) -> GateOutcome {
        let both = self.price_spike() && self.volume_spike();
        GateOutcome {
            price_anomaly: self.price_spike(),
            volume_anomaly: self.volume_spike(),
            gentle_slope: both.then_some(self == ScenarioKind::Pnd),
        }
    }

    pub fn label(self) -> Label {
        Label::from_bool(self == ScenarioKind::Pnd)
    }

    /// Allowed pump durations in days.
    fn duration_range(self) -> (usize, usize) {
        match self {
            ScenarioKind::Pnd => (3, MAX_EVENT_DAYS),
            ScenarioKind::SteepNews => (2, MAX_EVENT_DAYS),
            _ => (1, MAX_EVENT_DAYS),
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid("scenario kind", format!("`{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub price_anomaly: bool,
    pub volume_anomaly: bool,
    pub gentle_slope: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub symbol: String,
    /// First baseline day; moved forward to a weekday if needed.
    pub start: NaiveDate,
    pub base_price: f64,
    pub base_volume: u64,
    /// Relative baseline noise: each baseline value is scaled by
    /// `1 + jitter·u` with `u` uniform on `[-1, 1]`.
    pub jitter: f64,
    /// Peak height above the baseline mean, in baseline price sigmas.
    pub pump_sigmas: f64,
    pub pump_days: usize,
    pub volume_multiplier: f64,
    pub sigma_multiplier: f64,
    pub slope_threshold: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            kind: ScenarioKind::Pnd,
            symbol: "SYNT".into(),
            start: NaiveDate::from_ymd_opt(2021, 3, 1).expect("valid date"),
            base_price: 1.5,
            base_volume: 200_000,
            jitter: 0.0,
            pump_sigmas: 5.0,
            pump_days: 3,
            volume_multiplier: 10.0,
            sigma_multiplier: DEFAULT_SIGMA_MULTIPLIER,
            slope_threshold: DEFAULT_SLOPE_THRESHOLD,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        ScenarioSpec {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_price > 0.0 && self.base_price.is_finite()) {
            return Err(Error::invalid("scenario", "base price must be positive"));
        }
        if self.base_volume == 0 {
            return Err(Error::invalid("scenario", "base volume must be positive"));
        }
        if !(0.0..=0.5).contains(&self.jitter) {
            return Err(Error::invalid("scenario", "jitter must lie in [0, 0.5]"));
        }
        if !(self.sigma_multiplier > 0.0) {
            return Err(Error::invalid("scenario", "sigma multiplier must be positive"));
        }
        if self.kind == ScenarioKind::Normal {
            return Ok(());
        }
        let (lo, hi) = self.kind.duration_range();
        if !(lo..=hi).contains(&self.pump_days) {
            return Err(Error::Scenario(format!(
                "{} needs a pump of {lo}..={hi} days, got {}",
                self.kind.as_str(),
                self.pump_days
            )));
        }
        if self.kind.price_spike() && !(self.pump_sigmas > self.sigma_multiplier) {
            return Err(Error::Scenario(format!(
                "pump of {} sigmas cannot clear the {}-sigma price gate",
                self.pump_sigmas, self.sigma_multiplier
            )));
        }
        if self.kind.volume_spike() && !(self.volume_multiplier > 1.0) {
            return Err(Error::Scenario(format!(
                "volume multiplier {} cannot clear the volume gate",
                self.volume_multiplier
            )));
        }
        let slope = profile_slope(&price_profile(self.kind, self.pump_days))?;
        match self.kind {
            ScenarioKind::Pnd if slope > self.slope_threshold => Err(Error::Scenario(format!(
                "gentle profile slope {slope} exceeds threshold {}",
                self.slope_threshold
            ))),
            ScenarioKind::SteepNews if slope <= self.slope_threshold => Err(Error::Scenario(format!(
                "steep profile slope {slope} does not exceed threshold {}",
                self.slope_threshold
            ))),
            _ => Ok(()),
        }
    }
}

/// Event-day price shape on `[0, 1]` (0 = baseline floor, 1 = peak).
///
/// The P&D shape opens near the peak, dips to the floor, and closes the
/// rising region at the peak, which gives a near-flat fitted slope. Other
/// spikes ramp linearly. Days after the peak fall back to the floor.
fn price_profile(kind: ScenarioKind, days: usize) -> Vec<f64> {
    let mut y = vec![0.0; MAX_EVENT_DAYS];
    match kind {
        ScenarioKind::Normal | ScenarioKind::VolumeOnlySpike => {}
        ScenarioKind::Pnd => {
            y[0] = 0.95;
            y[days - 1] = 1.0;
        }
        ScenarioKind::PriceOnlySpike | ScenarioKind::SteepNews => {
            for (i, v) in y.iter_mut().take(days).enumerate() {
                *v = if days == 1 { 1.0 } else { i as f64 / (days - 1) as f64 };
            }
        }
    }
    y
}

fn profile_slope(profile: &[f64]) -> Result<f64> {
    rising_slope(profile)
}

/// Bars for consecutive weekdays starting at `start` (or the next weekday).
fn weekdays_from(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut d = start;
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d = d.succ_opt().expect("date in range");
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(d);
        d = next_business_day(d);
    }
    out
}

fn prev_business_day(date: NaiveDate) -> NaiveDate {
    let mut d = date.pred_opt().expect("date in range");
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d = d.pred_opt().expect("date in range");
    }
    d
}

fn flat_bar<T: Scalar>(date: NaiveDate, price: f64, volume: u64) -> OhlcvBar<T> {
    let p = T::of(price);
    OhlcvBar {
        date,
        open: p,
        high: p,
        low: p,
        close: p,
        volume,
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWindow<T> {
    pub window: EventWindow<T>,
    pub kind: ScenarioKind,
    pub label: Label,
    pub expected: GateOutcome,
}

/// Builds a five-day baseline and a four-day event window for `spec`.
pub fn generate_window<T: Scalar>(spec: &ScenarioSpec) -> Result<SyntheticWindow<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noise = || spec.jitter * rng.gen_range(-1.0..=1.0);

    let mut prices = Vec::with_capacity(BASELINE_DAYS);
    let mut volumes = Vec::with_capacity(BASELINE_DAYS);
    for _ in 0..BASELINE_DAYS {
        prices.push(spec.base_price * (1.0 + noise()));
        volumes.push(((spec.base_volume as f64) * (1.0 + noise())).round().max(1.0) as u64);
    }
    let (bap, sigma) = mean_std(&prices);
    let vols_f: Vec<f64> = volumes.iter().map(|&v| v as f64).collect();
    let (bav, sigma_v) = mean_std(&vols_f);

    // Both floors are at or below the baseline mean, so they never exceed it.
    let floor_price = prices.iter().copied().fold(f64::INFINITY, f64::min);
    let floor_volume = *volumes.iter().min().expect("baseline is non-empty");
    let sigma_eff = sigma.max(0.01 * bap);
    let peak = bap + spec.pump_sigmas * sigma_eff;
    let spike_volume = (bav * spec.volume_multiplier).ceil() as u64;
    if spec.kind.volume_spike() && !(spike_volume as f64 > bav + spec.sigma_multiplier * sigma_v) {
        return Err(Error::Scenario(format!(
            "volume {spike_volume} does not clear the gate {}",
            bav + spec.sigma_multiplier * sigma_v
        )));
    }

    let profile = price_profile(spec.kind, spec.pump_days);
    let dates = weekdays_from(spec.start, BASELINE_DAYS + MAX_EVENT_DAYS);
    let baseline: Vec<OhlcvBar<T>> = dates[..BASELINE_DAYS]
        .iter()
        .zip(prices.iter().zip(&volumes))
        .map(|(&d, (&p, &v))| flat_bar(d, p, v))
        .collect();
    let event: Vec<OhlcvBar<T>> = dates[BASELINE_DAYS..]
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let price = if spec.kind.price_spike() {
                floor_price + profile[i] * (peak - floor_price)
            } else {
                floor_price
            };
            let in_pump = spec.kind != ScenarioKind::Normal && i < spec.pump_days;
            let volume = if spec.kind.volume_spike() && in_pump {
                spike_volume
            } else {
                floor_volume
            };
            flat_bar(d, price, volume)
        })
        .collect();

    Ok(SyntheticWindow {
        window: EventWindow {
            symbol: spec.symbol.clone(),
            post_ref: format!("{}-{}", spec.kind.as_str(), spec.seed),
            baseline,
            event,
        },
        kind: spec.kind,
        label: spec.kind.label(),
        expected: spec.kind.expected_gates(),
    })
}

/// Draws a scenario of `kind` with randomized but gate-clearing parameters.
pub fn random_spec<R: Rng>(kind: ScenarioKind, rng: &mut R) -> ScenarioSpec {
    let (lo, hi) = kind.duration_range();
    ScenarioSpec {
        kind,
        base_price: rng.gen_range(0.2..4.8),
        base_volume: rng.gen_range(20_000..3_000_000),
        jitter: rng.gen_range(0.0..0.08),
        pump_sigmas: rng.gen_range(2.5..9.0),
        pump_days: rng.gen_range(lo..=hi),
        volume_multiplier: rng.gen_range(3.0..15.0),
        seed: rng.gen(),
        ..ScenarioSpec::new(kind)
    }
}

/// Words with no lexicon match, used as filler text.
pub const NEUTRAL_WORDS: &[&str] = &[
    "company", "product", "trial", "patent", "chart", "volume", "share", "float", "report", "quarter",
    "revenue", "drug", "study", "phase", "contract", "partner", "ceo", "board", "merger", "deal", "news",
    "week", "morning", "friday", "data", "update", "note", "price", "order", "dividend", "analyst",
    "approval", "license", "office", "factory", "supply", "demand", "customer", "market", "debt", "invoice",
    "balance", "sheet", "memo", "audit", "plan", "team", "launch", "device", "sample",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_posts: usize,
    pub pnd_fraction: f64,
    pub seed: u64,
    /// Earliest event date; events spread over `span_days` weekdays.
    pub start: NaiveDate,
    pub span_days: usize,
    pub max_comments_per_post: usize,
    pub no_symbol_fraction: f64,
    pub multi_symbol_fraction: f64,
    pub insufficient_fraction: f64,
    /// Share of posts made on the weekend before a Monday event.
    pub weekend_fraction: f64,
    /// Share of tickers left out of the sector map.
    pub unmapped_fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_posts: 5000,
            pnd_fraction: 0.09,
            seed: 2021,
            start: NaiveDate::from_ymd_opt(2020, 3, 2).expect("valid date"),
            span_days: 250,
            max_comments_per_post: 3,
            no_symbol_fraction: 0.02,
            multi_symbol_fraction: 0.01,
            insufficient_fraction: 0.01,
            weekend_fraction: 0.05,
            unmapped_fraction: 0.05,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pnd_fraction > 0.0 && self.pnd_fraction < 1.0) {
            return Err(Error::invalid("corpus config", "pnd fraction must lie strictly between 0 and 1"));
        }
        let fracs = [
            self.no_symbol_fraction,
            self.multi_symbol_fraction,
            self.insufficient_fraction,
            self.weekend_fraction,
            self.unmapped_fraction,
        ];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid("corpus config", "fractions must lie in [0, 1]"));
        }
        if self.pnd_fraction + self.no_symbol_fraction + self.multi_symbol_fraction + self.insufficient_fraction > 1.0 {
            return Err(Error::invalid("corpus config", "post category fractions exceed 1"));
        }
        if self.span_days == 0 {
            return Err(Error::invalid("corpus config", "span must be at least one day"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostCategory {
    Scenario(ScenarioKind),
    Skipped(SkipReason),
}

/// What the pipeline should recover from a generated corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub post_labels: BTreeMap<String, Label>,
    pub comment_labels: BTreeMap<String, Label>,
    pub post_categories: BTreeMap<String, PostCategory>,
    pub ingest: IngestStats,
    pub distribution: ClassDistribution,
    /// Single-symbol posts per sector of their ticker.
    pub sector_posts: BTreeMap<String, usize>,
    pub daily_posts: BTreeMap<NaiveDate, usize>,
    pub daily_comments: BTreeMap<NaiveDate, usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SyntheticCorpus {
    pub posts: Vec<Post>,
    pub comments: Vec<Comment>,
    pub bars: BTreeMap<String, Vec<OhlcvBar<f64>>>,
    pub sectors: SectorMap,
    pub listings: BTreeSet<String>,
    pub truth: GroundTruth,
}

pub const POSTS_FILE: &str = "posts.jsonl";
pub const COMMENTS_FILE: &str = "comments.jsonl";
pub const OHLCV_DIR: &str = "ohlcv";
pub const SECTORS_FILE: &str = "sectors.csv";
pub const LISTINGS_FILE: &str = "listings.txt";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

impl SyntheticCorpus {
    /// Writes the corpus in the ingestion formats. Returns the paths written.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir.join(OHLCV_DIR))?;
        let mut written = Vec::new();
        let mut create = |name: &Path| -> Result<BufWriter<fs::File>> {
            let path = dir.join(name);
            let f = fs::File::create(&path)?;
            written.push(path);
            Ok(BufWriter::new(f))
        };

        let mut w = create(Path::new(POSTS_FILE))?;
        write_posts(&mut w, &self.posts)?;
        w.flush()?;
        let mut w = create(Path::new(COMMENTS_FILE))?;
        write_comments(&mut w, &self.comments)?;
        w.flush()?;
        for (symbol, bars) in &self.bars {
            let mut w = create(&Path::new(OHLCV_DIR).join(format!("{symbol}.csv")))?;
            write_ohlcv(&mut w, bars)?;
            w.flush()?;
        }
        let mut w = create(Path::new(SECTORS_FILE))?;
        write_sector_map(&mut w, &self.sectors)?;
        w.flush()?;
        let mut w = create(Path::new(LISTINGS_FILE))?;
        writeln!(w, "# listed tickers")?;
        for s in &self.listings {
            writeln!(w, "{s}")?;
        }
        w.flush()?;
        let mut w = create(Path::new(GROUND_TRUTH_FILE))?;
        serde_json::to_writer_pretty(&mut w, &self.truth)?;
        writeln!(w)?;
        w.flush()?;
        Ok(written)
    }
}

const SECTORS: &[(&str, u32)] = &[
    ("Healthcare", 34),
    ("Technology", 18),
    ("Financial Services", 10),
    ("Energy", 10),
    ("Consumer Cyclical", 9),
    ("Industrials", 8),
    ("Basic Materials", 7),
    ("Communication Services", 4),
];

/// Word pools checked against the pipeline so generated text survives
/// preprocessing unchanged.
struct Vocab {
    neutral: Vec<String>,
    custom_only: Vec<String>,
    empath_only: Vec<String>,
    banned: HashSet<String>,
}

fn is_stable(pipeline: &TextPipeline, w: &str) -> bool {
    pipeline.tokens(w) == [w]
}

impl Vocab {
    fn new(lexicon: &AgreementLexicon, pipeline: &TextPipeline) -> Result<Self> {
        let closure = |terms: &BTreeSet<String>| -> HashSet<String> {
            terms
                .iter()
                .flat_map(|t| [t.clone(), pipeline.lemma(t).to_string()])
                .collect()
        };
        let empath = closure(lexicon.empath_terms());
        let custom = closure(lexicon.custom_terms());
        let custom_only: Vec<String> = lexicon
            .custom_terms()
            .iter()
            .filter(|t| is_stable(pipeline, t) && !empath.contains(*t))
            .cloned()
            .collect();
        let empath_only: Vec<String> = lexicon
            .empath_terms()
            .iter()
            .filter(|t| is_stable(pipeline, t) && !custom.contains(*t))
            .cloned()
            .collect();
        let neutral: Vec<String> = NEUTRAL_WORDS
            .iter()
            .filter(|w| is_stable(pipeline, w) && !lexicon.matches(w))
            .map(|w| w.to_string())
            .collect();
        if custom_only.len() < 2 || neutral.is_empty() {
            return Err(Error::invalid(
                "corpus vocabulary",
                "lexicon leaves fewer than two touting-only terms or no filler words",
            ));
        }
        let banned = empath
            .iter()
            .chain(&custom)
            .cloned()
            .chain(neutral.iter().cloned())
            .collect();
        Ok(Vocab {
            neutral,
            custom_only,
            empath_only,
            banned,
        })
    }
}

struct Generator<'a> {
    rng: ChaCha8Rng,
    vocab: Vocab,
    pipeline: &'a TextPipeline,
    used_tickers: HashSet<String>,
    sector_index: WeightedIndex<u32>,
    cfg: &'a CorpusConfig,
    corpus: SyntheticCorpus,
    authors: usize,
}

impl Generator<'_> {
    fn ticker(&mut self) -> String {
        loop {
            let t: String = (0..4).map(|_| self.rng.gen_range(b'A'..=b'Z') as char).collect();
            let lower = t.to_lowercase();
            if self.used_tickers.contains(&t) || self.vocab.banned.contains(&lower) || !is_stable(self.pipeline, &lower) {
                continue;
            }
            self.used_tickers.insert(t.clone());
            self.corpus.listings.insert(t.clone());
            if !self.rng.gen_bool(self.cfg.unmapped_fraction) {
                let sector = SECTORS[self.sector_index.sample(&mut self.rng)].0;
                self.corpus.sectors.insert(&t, sector);
            }
            return t;
        }
    }

    fn author(&mut self) -> String {
        format!("user{:05}", self.rng.gen_range(0..self.authors))
    }

    fn other_author(&mut self, not: &str) -> String {
        loop {
            let a = self.author();
            if a != not {
                return a;
            }
        }
    }

    fn pick<'v>(&mut self, pool: &'v [String], n: usize) -> Vec<&'v str> {
        pool.choose_multiple(&mut self.rng, n.min(pool.len()))
            .map(String::as_str)
            .collect()
    }

    fn text(&mut self, mut words: Vec<String>, fillers: std::ops::RangeInclusive<usize>) -> String {
        let n = self.rng.gen_range(fillers);
        for _ in 0..n {
            let w = self.vocab.neutral.choose(&mut self.rng).expect("non-empty").clone();
            words.push(w);
        }
        words.shuffle(&mut self.rng);
        let mut s = words.join(" ");
        if self.rng.gen_bool(0.3) {
            s.push('!');
        }
        s
    }

    fn mention(&mut self, ticker: &str) -> String {
        if self.rng.gen_bool(0.5) {
            format!("${ticker}")
        } else {
            ticker.to_string()
        }
    }

    fn event_date(&mut self) -> NaiveDate {
        let offset = self.rng.gen_range(0..self.cfg.span_days);
        weekdays_from(self.cfg.start, offset + 1)[offset]
    }

    fn timestamp(&mut self, date: NaiveDate) -> i64 {
        let midnight = date.and_hms_opt(0, 0, 0).expect("valid time").and_utc().timestamp();
        midnight + self.rng.gen_range(9 * 3600..20 * 3600)
    }

    /// Extra history before the baseline, so windows sit inside longer series.
    fn with_history(&mut self, window: &EventWindow<f64>) -> Vec<OhlcvBar<f64>> {
        let extra = self.rng.gen_range(0..=3);
        let first = &window.baseline[0];
        let mut history = Vec::with_capacity(extra);
        let mut d = first.date;
        for _ in 0..extra {
            d = prev_business_day(d);
            history.push(OhlcvBar { date: d, ..first.clone() });
        }
        history.reverse();
        history.extend(window.baseline.iter().cloned());
        history.extend(window.event.iter().cloned());
        history
    }

    fn post(&mut self, i: usize, category: PostCategory) -> Result<()> {
        let id = format!("p{i:06}");
        let author = self.author();
        let event = self.event_date();
        let mut post_date = event;
        let pnd = category == PostCategory::Scenario(ScenarioKind::Pnd);

        let mut title_words = Vec::new();
        let mut single_ticker = None;
        match category {
            PostCategory::Scenario(kind) => {
                let ticker = self.ticker();
                let mut spec = random_spec(kind, &mut self.rng);
                spec.symbol = ticker.clone();
                let mut start = event;
                for _ in 0..BASELINE_DAYS {
                    start = prev_business_day(start);
                }
                spec.start = start;
                let w = generate_window::<f64>(&spec)?;
                debug_assert_eq!(w.window.event[0].date, event);
                let series = self.with_history(&w.window);
                self.corpus.bars.insert(ticker.clone(), series);
                if event.weekday() == Weekday::Mon && self.rng.gen_bool(self.cfg.weekend_fraction) {
                    post_date = event - Duration::days(self.rng.gen_range(1..=2));
                }
                title_words.push(self.mention(&ticker));
                single_ticker = Some(ticker);
            }
            PostCategory::Skipped(SkipReason::InsufficientData) => {
                let ticker = self.ticker();
                let dates = weekdays_from(event, MAX_EVENT_DAYS);
                let mut d = event;
                let mut bars = Vec::new();
                for _ in 0..BASELINE_DAYS - 2 {
                    d = prev_business_day(d);
                    bars.push(flat_bar(d, 1.0, 10_000));
                }
                bars.reverse();
                bars.extend(dates.iter().map(|&d| flat_bar(d, 1.0, 10_000)));
                self.corpus.bars.insert(ticker.clone(), bars);
                title_words.push(self.mention(&ticker));
                single_ticker = Some(ticker);
            }
            PostCategory::Skipped(SkipReason::MultiSymbol) => {
                for _ in 0..2 {
                    let t = self.ticker();
                    title_words.push(self.mention(&t));
                }
            }
            PostCategory::Skipped(SkipReason::NoSymbol) => {}
        }

        let mut body_words: Vec<String> = Vec::new();
        if pnd {
            let n = self.rng.gen_range(2..=3);
            let pool = std::mem::take(&mut self.vocab.custom_only);
            body_words.extend(self.pick(&pool, n).into_iter().map(String::from));
            self.vocab.custom_only = pool;
        } else if self.rng.gen_bool(0.3) {
            let pool = std::mem::take(&mut self.vocab.empath_only);
            body_words.extend(self.pick(&pool, 1).into_iter().map(String::from));
            self.vocab.empath_only = pool;
        }
        let title = self.text(title_words, 1..=3);
        let body = self.text(body_words, 3..=8);
        let created = self.timestamp(post_date);
        let label = Label::from_bool(pnd);

        let truth = &mut self.corpus.truth;
        truth.post_labels.insert(id.clone(), label);
        truth.post_categories.insert(id.clone(), category);
        match category {
            PostCategory::Scenario(_) => truth.ingest.windowed += 1,
            PostCategory::Skipped(SkipReason::NoSymbol) => truth.ingest.skipped_no_symbol += 1,
            PostCategory::Skipped(SkipReason::MultiSymbol) => truth.ingest.skipped_multi_symbol += 1,
            PostCategory::Skipped(SkipReason::InsufficientData) => truth.ingest.skipped_insufficient_data += 1,
        }
        truth.ingest.posts += 1;
        if let Some(t) = &single_ticker {
            *truth.sector_posts.entry(self.corpus.sectors.sector(t).to_string()).or_default() += 1;
        }
        *truth.daily_posts.entry(post_date).or_default() += 1;
        if pnd {
            truth.distribution.posts_pnd += 1;
        } else {
            truth.distribution.posts_not += 1;
        }

        self.comments(&id, &author, created, pnd)?;
        self.corpus.posts.push(Post {
            id,
            author,
            created,
            title,
            body,
            symbol: None,
        });
        Ok(())
    }

    fn comments(&mut self, post_id: &str, post_author: &str, post_created: i64, pnd: bool) -> Result<()> {
        let n = self.rng.gen_range(0..=self.cfg.max_comments_per_post);
        let custom = std::mem::take(&mut self.vocab.custom_only);
        let empath = std::mem::take(&mut self.vocab.empath_only);
        for _ in 0..n {
            let (author, words, label): (String, Vec<&str>, Label) = if pnd {
                match self.rng.gen_range(0..10) {
                    // agreement: two distinct lexicon terms, at least one touting term
                    0..=4 => {
                        let mut w = self.pick(&custom, 1);
                        if empath.is_empty() || self.rng.gen_bool(0.5) {
                            w = self.pick(&custom, 2);
                        } else {
                            w.extend(self.pick(&empath, 1));
                        }
                        (self.other_author(post_author), w, Label::PnD)
                    }
                    // the original poster, one touting term
                    5..=6 => (post_author.to_string(), self.pick(&custom, 1), Label::PnD),
                    // dissent: at most one lexicon term
                    _ => {
                        let k = usize::from(self.rng.gen_bool(0.5));
                        (self.other_author(post_author), self.pick(&empath, k), Label::NotPnD)
                    }
                }
            } else {
                let k = self.rng.gen_range(0..=2);
                (self.author(), self.pick(&empath, k), Label::NotPnD)
            };
            let words = words.into_iter().map(String::from).collect();
            let body = self.text(words, 2..=6);
            let id = format!("c{:07}", self.corpus.comments.len());
            let created = post_created + self.rng.gen_range(60..2 * 86_400);
            let date = DateTime::from_timestamp(created, 0).expect("valid timestamp").date_naive();

            let truth = &mut self.corpus.truth;
            truth.comment_labels.insert(id.clone(), label);
            *truth.daily_comments.entry(date).or_default() += 1;
            truth.ingest.comments += 1;
            if label.is_pnd() {
                truth.distribution.comments_pnd += 1;
            } else {
                truth.distribution.comments_not += 1;
            }
            self.corpus.comments.push(Comment {
                id,
                post_id: post_id.to_string(),
                author,
                created,
                body,
            });
        }
        self.vocab.custom_only = custom;
        self.vocab.empath_only = empath;
        Ok(())
    }
}

/// Generates a forum corpus whose posts, comments and market series are
/// labeled by construction.
///
/// P&D documents always contain a touting-only lexicon term and no other
/// document does, so the corpus is linearly separable in bag-of-words
/// space.
pub fn generate_corpus(
    cfg: &CorpusConfig,
    lexicon: &AgreementLexicon,
    pipeline: &TextPipeline,
) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let n = cfg.n_posts;
    let count = |f: f64| ((n as f64) * f).round() as usize;
    let n_pnd = count(cfg.pnd_fraction).min(n);
    let mut rest = n - n_pnd;
    let mut take = |f: f64| {
        let k = count(f).min(rest);
        rest -= k;
        k
    };
    let n_none = take(cfg.no_symbol_fraction);
    let n_multi = take(cfg.multi_symbol_fraction);
    let n_short = take(cfg.insufficient_fraction);
    let n_other = rest;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let others = [
        (ScenarioKind::Normal, 60),
        (ScenarioKind::PriceOnlySpike, 13),
        (ScenarioKind::VolumeOnlySpike, 13),
        (ScenarioKind::SteepNews, 14),
    ];
    let other_index = WeightedIndex::new(others.iter().map(|o| o.1)).expect("positive weights");
    let mut categories: Vec<PostCategory> = Vec::with_capacity(n);
    categories.extend(std::iter::repeat(PostCategory::Scenario(ScenarioKind::Pnd)).take(n_pnd));
    categories.extend(std::iter::repeat(PostCategory::Skipped(SkipReason::NoSymbol)).take(n_none));
    categories.extend(std::iter::repeat(PostCategory::Skipped(SkipReason::MultiSymbol)).take(n_multi));
    categories.extend(std::iter::repeat(PostCategory::Skipped(SkipReason::InsufficientData)).take(n_short));
    for _ in 0..n_other {
        categories.push(PostCategory::Scenario(others[other_index.sample(&mut rng)].0));
    }
    categories.shuffle(&mut rng);

    let mut g = Generator {
        rng,
        vocab: Vocab::new(lexicon, pipeline)?,
        pipeline,
        used_tickers: HashSet::new(),
        sector_index: WeightedIndex::new(SECTORS.iter().map(|s| s.1)).expect("positive weights"),
        cfg,
        corpus: SyntheticCorpus::default(),
        authors: (n / 3).max(10),
    };
    for (i, c) in categories.into_iter().enumerate() {
        g.post(i, c)?;
    }
    debug_assert!(g.corpus.truth.ingest.is_conserved());
    Ok(g.corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_events::{classify_window, AnomalyParams};

    fn check(spec: &ScenarioSpec) {
        let w = generate_window::<f64>(spec).unwrap();
        let v = classify_window(&w.window, &AnomalyParams::default());
        assert_eq!(v.price_anomaly, w.expected.price_anomaly, "{spec:?}");
        assert_eq!(v.volume_anomaly, w.expected.volume_anomaly, "{spec:?}");
        assert_eq!(v.slope.map(|s| s <= 0.18), w.expected.gentle_slope, "{spec:?}");
        assert_eq!(v.is_pnd_shape, w.label.is_pnd());
    }

    #[test]
    fn normal_zero_jitter_is_flat() {
        let w = generate_window::<f64>(&ScenarioSpec::new(ScenarioKind::Normal)).unwrap();
        let all: Vec<_> = w.window.baseline.iter().chain(&w.window.event).collect();
        assert!(all.iter().all(|b| b.close == 1.5 && b.volume == 200_000));
        check(&ScenarioSpec::new(ScenarioKind::Normal));
    }

    #[test]
    fn pnd_five_sigma_three_days() {
        let spec = ScenarioSpec {
            pump_sigmas: 5.0,
            pump_days: 3,
            volume_multiplier: 10.0,
            jitter: 0.03,
            ..ScenarioSpec::new(ScenarioKind::Pnd)
        };
        check(&spec);
    }

    #[test]
    fn steep_two_day_jump_is_vertical() {
        let spec = ScenarioSpec { pump_days: 2, ..ScenarioSpec::new(ScenarioKind::SteepNews) };
        let w = generate_window::<f64>(&spec).unwrap();
        let v = classify_window(&w.window, &AnomalyParams::default());
        assert!((v.slope.unwrap() - 1.0).abs() < 1e-9);
        assert!(!v.is_pnd_shape);
    }

    #[test]
    fn every_kind_hits_its_gates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in ScenarioKind::ALL {
            for _ in 0..50 {
                check(&random_spec(kind, &mut rng));
            }
        }
    }

    #[test]
    fn impossible_specs_rejected() {
        let weak = ScenarioSpec { pump_sigmas: 1.5, ..ScenarioSpec::new(ScenarioKind::Pnd) };
        assert!(matches!(generate_window::<f64>(&weak), Err(Error::Scenario(_))));
        let short = ScenarioSpec { pump_days: 2, ..ScenarioSpec::new(ScenarioKind::Pnd) };
        assert!(matches!(generate_window::<f64>(&short), Err(Error::Scenario(_))));
        let tight = ScenarioSpec { slope_threshold: 0.01, ..ScenarioSpec::new(ScenarioKind::Pnd) };
        assert!(matches!(generate_window::<f64>(&tight), Err(Error::Scenario(_))));
        let flat_volume = ScenarioSpec { volume_multiplier: 1.0, ..ScenarioSpec::new(ScenarioKind::SteepNews) };
        assert!(matches!(generate_window::<f64>(&flat_volume), Err(Error::Scenario(_))));
        let noisy_volume = ScenarioSpec {
            volume_multiplier: 1.05,
            jitter: 0.5,
            seed: 3,
            ..ScenarioSpec::new(ScenarioKind::VolumeOnlySpike)
        };
        assert!(matches!(generate_window::<f64>(&noisy_volume), Err(Error::Scenario(_))));
    }

    #[test]
    fn windows_are_deterministic() {
        let spec = ScenarioSpec { jitter: 0.05, seed: 77, ..Default::default() };
        assert_eq!(generate_window::<f64>(&spec).unwrap(), generate_window::<f64>(&spec).unwrap());
    }

    #[test]
    fn neutral_words_survive_preprocessing() {
        let p = TextPipeline::bundled();
        let lex = AgreementLexicon::bundled(&p);
        for w in NEUTRAL_WORDS {
            assert!(!p.is_stopword(w), "{w}");
            assert_eq!(p.lemma(w), *w, "{w}");
            assert!(!lex.matches(w), "{w}");
        }
    }

    #[test]
    fn empty_corpus() {
        let p = TextPipeline::bundled();
        let lex = AgreementLexicon::bundled(&p);
        let cfg = CorpusConfig { n_posts: 0, ..Default::default() };
        let c = generate_corpus(&cfg, &lex, &p).unwrap();
        assert!(c.posts.is_empty() && c.comments.is_empty() && c.bars.is_empty());
        let dir = tempfile::tempdir().unwrap();
        c.write_to(dir.path()).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join(POSTS_FILE)).unwrap(), "");
    }

    #[test]
    fn corpus_counts_match_config() {
        let p = TextPipeline::bundled();
        let lex = AgreementLexicon::bundled(&p);
        let cfg = CorpusConfig { n_posts: 1000, ..Default::default() };
        let c = generate_corpus(&cfg, &lex, &p).unwrap();
        assert_eq!(c.posts.len(), 1000);
        assert_eq!(c.truth.distribution.posts_pnd, 90);
        assert_eq!(c.truth.ingest.skipped_no_symbol, 20);
        assert_eq!(c.truth.ingest.skipped_multi_symbol, 10);
        assert_eq!(c.truth.ingest.skipped_insufficient_data, 10);
        assert!(c.truth.ingest.is_conserved());
        assert_eq!(c.truth.comment_labels.len(), c.comments.len());
        assert_eq!(c, generate_corpus(&cfg, &lex, &p).unwrap());
    }
}
