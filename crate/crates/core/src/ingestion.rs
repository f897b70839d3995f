//! Forum and market-data ingestion.
//!
//! Posts and comments arrive as JSON lines, daily bars as a CSV table with
//! the header `date,open,high,low,close,volume`. Each post with a single
//! resolved ticker is paired with an [`EventWindow`]: the five business-day
//! bars strictly before the post's UTC date (the baseline) and up to four
//! bars from that date onward (the event).

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use chrono::{DateTime, Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::text::{extract_symbols, SectorMap};

pub const BASELINE_DAYS: usize = 5;
pub const MAX_EVENT_DAYS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub author: String,
    pub created: i64,
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol: Option<String>,
}

impl Post {
    /// Calendar date of `created` in UTC.
    pub fn date(&self) -> NaiveDate {
        utc_date(self.created)
    }

    pub fn text(&self) -> String {
        match (self.title.is_empty(), self.body.is_empty()) {
            (false, false) => format!("{}\n{}", self.title, self.body),
            (false, true) => self.title.clone(),
            _ => self.body.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub post_id: String,
    pub author: String,
    pub created: i64,
    pub body: String,
}

impl Comment {
    pub fn date(&self) -> NaiveDate {
        utc_date(self.created)
    }
}

pub fn utc_date(created: i64) -> NaiveDate {
    DateTime::from_timestamp(created, 0)
        .map(|t| t.date_naive())
        .unwrap_or(NaiveDate::MIN)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcvBar<T> {
    pub date: NaiveDate,
    pub open: T,
    pub high: T,
    pub low: T,
    pub close: T,
    pub volume: u64,
}

impl<T: Scalar> OhlcvBar<T> {
    pub fn new(date: NaiveDate, open: T, high: T, low: T, close: T, volume: u64) -> Result<Self> {
        let bar = OhlcvBar {
            date,
            open,
            high,
            low,
            close,
            volume,
        };
        bar.validate()?;
        Ok(bar)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !v.is_finite() || v <= T::zero() {
                return Err(Error::invalid("bar", format!("{name} must be a positive price, got {v}")));
            }
        }
        if self.low > self.high {
            return Err(Error::invalid("bar", format!("low {} above high {}", self.low, self.high)));
        }
        if self.low > self.open.min(self.close) || self.high < self.open.max(self.close) {
            return Err(Error::invalid(
                "bar",
                "open/close must lie within [low, high]".to_string(),
            ));
        }
        Ok(())
    }
}

/// Baseline and event bars around one post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventWindow<T> {
    pub symbol: String,
    pub post_ref: String,
    pub baseline: Vec<OhlcvBar<T>>,
    pub event: Vec<OhlcvBar<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    NoSymbol,
    MultiSymbol,
    InsufficientData,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::NoSymbol => "skipped-no-symbol",
            SkipReason::MultiSymbol => "skipped-multi-symbol",
            SkipReason::InsufficientData => "skipped-insufficient-data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum PostWindow<T> {
    Windowed { window: EventWindow<T> },
    Skipped { reason: SkipReason },
}

impl<T> PostWindow<T> {
    pub fn window(&self) -> Option<&EventWindow<T>> {
        match self {
            PostWindow::Windowed { window } => Some(window),
            PostWindow::Skipped { .. } => None,
        }
    }
}

/// Per-reason post counts; every post lands in exactly one bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub posts: usize,
    pub comments: usize,
    pub windowed: usize,
    pub skipped_no_symbol: usize,
    pub skipped_multi_symbol: usize,
    pub skipped_insufficient_data: usize,
}

impl IngestStats {
    pub fn record<T>(&mut self, outcome: &PostWindow<T>) {
        self.posts += 1;
        match outcome {
            PostWindow::Windowed { .. } => self.windowed += 1,
            PostWindow::Skipped { reason } => match reason {
                SkipReason::NoSymbol => self.skipped_no_symbol += 1,
                SkipReason::MultiSymbol => self.skipped_multi_symbol += 1,
                SkipReason::InsufficientData => self.skipped_insufficient_data += 1,
            },
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.windowed + self.skipped_no_symbol + self.skipped_multi_symbol + self.skipped_insufficient_data
            == self.posts
    }
}

fn parse_json_lines<R, V>(reader: R, what: &'static str) -> Result<Vec<V>>
where
    R: BufRead,
    V: serde::de::DeserializeOwned,
{
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: i + 1,
            message: format!("malformed {what}: {e}"),
        })?;
        out.push(record);
    }
    Ok(out)
}

fn record_error(line: usize, message: impl Into<String>) -> Error {
    Error::Record {
        line,
        message: message.into(),
    }
}

/// Parses JSON-lines posts with fields `id, author, created, title, body`.
pub fn parse_posts<R: BufRead>(reader: R) -> Result<Vec<Post>> {
    let posts: Vec<Post> = parse_json_lines(reader, "post")?;
    let mut seen = HashSet::new();
    for (i, p) in posts.iter().enumerate() {
        let line = i + 1;
        if p.id.is_empty() {
            return Err(record_error(line, "post id is empty"));
        }
        if p.created <= 0 {
            return Err(record_error(line, format!("post `{}` has non-positive timestamp", p.id)));
        }
        if p.title.trim().is_empty() && p.body.trim().is_empty() {
            return Err(record_error(line, format!("post `{}` has neither title nor body", p.id)));
        }
        if !seen.insert(p.id.as_str()) {
            return Err(Error::DuplicateId(p.id.clone()));
        }
    }
    Ok(posts)
}

/// Parses JSON-lines comments with fields `id, post_id, author, created, body`.
///
/// References to posts are checked later, when the dataset is assembled.
pub fn parse_comments<R: BufRead>(reader: R) -> Result<Vec<Comment>> {
    let comments: Vec<Comment> = parse_json_lines(reader, "comment")?;
    let mut seen = HashSet::new();
    for (i, c) in comments.iter().enumerate() {
        let line = i + 1;
        if c.id.is_empty() || c.post_id.is_empty() {
            return Err(record_error(line, "comment id and post_id must be non-empty"));
        }
        if c.created <= 0 {
            return Err(record_error(line, format!("comment `{}` has non-positive timestamp", c.id)));
        }
        if c.body.trim().is_empty() {
            return Err(record_error(line, format!("comment `{}` has an empty body", c.id)));
        }
        if !seen.insert(c.id.as_str()) {
            return Err(Error::DuplicateId(c.id.clone()));
        }
    }
    Ok(comments)
}

pub fn write_posts<W: Write>(mut writer: W, posts: &[Post]) -> Result<()> {
    for p in posts {
        serde_json::to_writer(&mut writer, p)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_comments<W: Write>(mut writer: W, comments: &[Comment]) -> Result<()> {
    for c in comments {
        serde_json::to_writer(&mut writer, c)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

const OHLCV_HEADER: [&str; 6] = ["date", "open", "high", "low", "close", "volume"];

/// Parses a `date,open,high,low,close,volume` table and returns bars in
/// ascending date order.
pub fn parse_ohlcv<T: Scalar, R: std::io::Read>(reader: R) -> Result<Vec<OhlcvBar<T>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names != OHLCV_HEADER {
        return Err(record_error(
            1,
            format!("expected header `{}`, got `{}`", OHLCV_HEADER.join(","), names.join(",")),
        ));
    }

    let mut bars = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = row?;
        if row.len() != 6 {
            return Err(record_error(line, format!("expected 6 fields, got {}", row.len())));
        }
        let date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d")
            .map_err(|e| record_error(line, format!("bad date `{}`: {e}", &row[0])))?;
        let price = |j: usize| -> Result<T> {
            row[j]
                .parse::<T>()
                .map_err(|_| record_error(line, format!("non-numeric {} `{}`", OHLCV_HEADER[j], &row[j])))
        };
        let (open, high, low, close) = (price(1)?, price(2)?, price(3)?, price(4)?);
        let volume: i64 = row[5]
            .parse()
            .map_err(|_| record_error(line, format!("non-integer volume `{}`", &row[5])))?;
        if volume < 0 {
            return Err(record_error(line, format!("negative volume {volume}")));
        }
        let bar = OhlcvBar::new(date, open, high, low, close, volume as u64)
            .map_err(|e| record_error(line, e.to_string()))?;
        bars.push(bar);
    }

    bars.sort_by_key(|b| b.date);
    if let Some(pair) = bars.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(Error::invalid("ohlcv", format!("duplicate date {}", pair[0].date)));
    }
    Ok(bars)
}

pub fn write_ohlcv<T: Scalar, W: Write>(writer: W, bars: &[OhlcvBar<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(OHLCV_HEADER)?;
    for b in bars {
        w.write_record([
            b.date.format("%Y-%m-%d").to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
            b.volume.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses the two-column `symbol,sector` table.
pub fn parse_sector_map<R: std::io::Read>(reader: R) -> Result<SectorMap> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut map = SectorMap::default();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        if row.len() != 2 || row[0].is_empty() || row[1].is_empty() {
            return Err(record_error(i + 2, "expected `symbol,sector`"));
        }
        map.insert(&row[0], &row[1]);
    }
    Ok(map)
}

pub fn write_sector_map<W: Write>(writer: W, map: &SectorMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["symbol", "sector"])?;
    for (symbol, sector) in map.iter() {
        w.write_record([symbol, sector])?;
    }
    w.flush()?;
    Ok(())
}

/// The weekday following `date`, skipping Saturday and Sunday.
pub fn next_business_day(date: NaiveDate) -> NaiveDate {
    let mut d = date.succ_opt().expect("date in range");
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d = d.succ_opt().expect("date in range");
    }
    d
}

fn consecutive_business_days<T>(bars: &[&OhlcvBar<T>]) -> bool {
    bars.windows(2).all(|w| next_business_day(w[0].date) == w[1].date)
}

/// Assembles the baseline/event window for a post dated `post_date`.
///
/// Returns `None` when fewer than five baseline bars or no event bars exist,
/// or when a business day is missing anywhere in the span (halts and
/// holidays are not interpolated). A post on a non-trading day starts its
/// event at the next available bar.
pub fn build_event_window<T: Scalar>(
    post_id: &str,
    symbol: &str,
    post_date: NaiveDate,
    bars: &[OhlcvBar<T>],
) -> Option<EventWindow<T>> {
    let split = bars.partition_point(|b| b.date < post_date);
    if split < BASELINE_DAYS {
        return None;
    }
    let baseline = &bars[split - BASELINE_DAYS..split];
    let event = &bars[split..bars.len().min(split + MAX_EVENT_DAYS)];
    if event.is_empty() {
        return None;
    }
    let span: Vec<&OhlcvBar<T>> = baseline.iter().chain(event).collect();
    if !consecutive_business_days(&span) {
        return None;
    }
    Some(EventWindow {
        symbol: symbol.to_string(),
        post_ref: post_id.to_string(),
        baseline: baseline.to_vec(),
        event: event.to_vec(),
    })
}

/// Resolves each post's ticker against `listings` and pairs it with market
/// data. Posts are returned in input order with `symbol` filled in when
/// exactly one listed ticker is mentioned.
pub fn window_posts<T: Scalar>(
    posts: &mut [Post],
    listings: &HashSet<String>,
    bars: &BTreeMap<String, Vec<OhlcvBar<T>>>,
) -> (Vec<PostWindow<T>>, IngestStats) {
    let mut stats = IngestStats::default();
    let outcomes = posts
        .iter_mut()
        .map(|post| {
            let symbols = extract_symbols(&post.text(), listings);
            let outcome = match symbols.len() {
                0 => PostWindow::Skipped {
                    reason: SkipReason::NoSymbol,
                },
                1 => {
                    let symbol = symbols.into_iter().next().expect("one symbol");
                    post.symbol = Some(symbol.clone());
                    bars.get(&symbol)
                        .and_then(|series| build_event_window(&post.id, &symbol, post.date(), series))
                        .map(|window| PostWindow::Windowed { window })
                        .unwrap_or(PostWindow::Skipped {
                            reason: SkipReason::InsufficientData,
                        })
                }
                _ => PostWindow::Skipped {
                    reason: SkipReason::MultiSymbol,
                },
            };
            stats.record(&outcome);
            outcome
        })
        .collect();
    (outcomes, stats)
}

/// Sector map and listings default: every ticker in the map is listed.
pub fn listings_from(map: &SectorMap) -> HashSet<String> {
    map.iter().map(|(s, _)| s.to_string()).collect()
}

/// Reads a one-ticker-per-line listings file (`#` comments allowed).
pub fn parse_listings<R: BufRead>(reader: R) -> Result<HashSet<String>> {
    Ok(crate::text::parse_word_list(reader)?
        .into_iter()
        .map(|s| s.to_ascii_uppercase())
        .collect())
}
