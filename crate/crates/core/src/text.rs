//! Text normalization, ticker extraction and sector substitution.
//!
//! [`TextPipeline::preprocess`] lowercases, then runs: URL removal,
//! contraction expansion, HTML-tag removal, punctuation removal, whitespace
//! collapse, number removal, lemmatization and stopword removal, in that
//! order. Word lists ship under `data/` and can be swapped at runtime.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords.txt");
pub const BUNDLED_CONTRACTIONS: &str = include_str!("../data/contractions.txt");
pub const BUNDLED_LEMMAS: &str = include_str!("../data/lemmas.txt");

pub const UNKNOWN_SECTOR: &str = "Unknown";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocKind {
    Post,
    Comment,
}

impl DocKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DocKind::Post => "post",
            DocKind::Comment => "comment",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub source_id: String,
    pub kind: DocKind,
    pub tokens: Vec<String>,
}

/// One term per line; blank lines and `#` comments ignored.
pub fn parse_word_list<R: BufRead>(reader: R) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let term = line.trim();
        if term.is_empty() || term.starts_with('#') {
            continue;
        }
        out.push(term.to_string());
    }
    Ok(out)
}

/// `key<TAB>value` per line, same comment rules as [`parse_word_list`].
pub fn parse_pairs<R: BufRead>(reader: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (k, v) = trimmed.split_once('\t').ok_or_else(|| Error::Record {
            line: i + 1,
            message: format!("expected `key<TAB>value`, got `{trimmed}`"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:https?://|www\.)\S*").expect("valid regex"))
}

fn html_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^<>]*>").expect("valid regex"))
}

fn contraction_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+'\w+").expect("valid regex"))
}

#[derive(Debug, Clone)]
pub struct TextPipeline {
    stopwords: HashSet<String>,
    contractions: HashMap<String, String>,
    lemmas: HashMap<String, String>,
}

impl TextPipeline {
    /// Pipeline over the word lists compiled into the crate.
    pub fn bundled() -> Self {
        Self::from_lists(
            parse_word_list(BUNDLED_STOPWORDS.as_bytes()).expect("bundled stopwords"),
            parse_pairs(BUNDLED_CONTRACTIONS.as_bytes()).expect("bundled contractions"),
            parse_pairs(BUNDLED_LEMMAS.as_bytes()).expect("bundled lemmas"),
        )
        .expect("bundled lemma table is idempotent")
    }

    /// Fails if the lemma table maps any lemma onward, which would make
    /// preprocessing non-idempotent.
    pub fn from_lists(
        stopwords: Vec<String>,
        contractions: Vec<(String, String)>,
        lemmas: Vec<(String, String)>,
    ) -> Result<Self> {
        let lemmas: HashMap<String, String> = lemmas
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v.to_lowercase()))
            .collect();
        if let Some((form, lemma)) = lemmas.iter().find(|(_, l)| lemmas.contains_key(*l)) {
            return Err(Error::invalid(
                "lemma table",
                format!("`{form}` -> `{lemma}` but `{lemma}` is itself mapped"),
            ));
        }
        Ok(TextPipeline {
            stopwords: stopwords.into_iter().map(|s| s.to_lowercase()).collect(),
            contractions: contractions
                .into_iter()
                .map(|(k, v)| (k.to_lowercase().replace('\u{2019}', "'"), v.to_lowercase()))
                .collect(),
            lemmas,
        })
    }

    /// Loads any overridden lists from disk, falling back to the bundled ones.
    pub fn load(stopwords: Option<&Path>, contractions: Option<&Path>, lemmas: Option<&Path>) -> Result<Self> {
        fn open(p: &Path) -> Result<std::io::BufReader<std::fs::File>> {
            Ok(std::io::BufReader::new(std::fs::File::open(p)?))
        }
        let sw = match stopwords {
            Some(p) => parse_word_list(open(p)?)?,
            None => parse_word_list(BUNDLED_STOPWORDS.as_bytes())?,
        };
        let ct = match contractions {
            Some(p) => parse_pairs(open(p)?)?,
            None => parse_pairs(BUNDLED_CONTRACTIONS.as_bytes())?,
        };
        let lm = match lemmas {
            Some(p) => parse_pairs(open(p)?)?,
            None => parse_pairs(BUNDLED_LEMMAS.as_bytes())?,
        };
        Self::from_lists(sw, ct, lm)
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    pub fn lemma<'a>(&'a self, token: &'a str) -> &'a str {
        self.lemmas.get(token).map(String::as_str).unwrap_or(token)
    }

    pub fn stopwords(&self) -> impl Iterator<Item = &str> {
        self.stopwords.iter().map(String::as_str)
    }

    /// Normalized token list for `raw`.
    pub fn tokens(&self, raw: &str) -> Vec<String> {
        let lowered = raw.to_lowercase();
        let no_urls = url_re().replace_all(&lowered, " ");
        let apostrophes = no_urls.replace('\u{2019}', "'");
        let expanded = contraction_re().replace_all(&apostrophes, |caps: &regex::Captures| {
            let word = &caps[0];
            self.contractions
                .get(word)
                .cloned()
                .unwrap_or_else(|| word.to_string())
        });
        let no_tags = html_re().replace_all(&expanded, " ");
        let no_punct: String = no_tags
            .chars()
            .filter(|c| c.is_alphanumeric() || c.is_whitespace())
            .collect();
        no_punct
            .split_whitespace()
            .map(|w| w.chars().filter(|c| !c.is_numeric()).collect::<String>())
            .filter(|w| !w.is_empty())
            .map(|w| self.lemma(&w).to_string())
            .filter(|w| !self.is_stopword(w))
            .collect()
    }

    pub fn preprocess(&self, raw: &str, source_id: &str, kind: DocKind) -> TokenSeq {
        TokenSeq {
            source_id: source_id.to_string(),
            kind,
            tokens: self.tokens(raw),
        }
    }
}

impl Default for TextPipeline {
    fn default() -> Self {
        Self::bundled()
    }
}

fn dollar_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$([A-Za-z]{1,5})\b").expect("valid regex"))
}

fn caps_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b[A-Z]{1,5}\b").expect("valid regex"))
}

/// Distinct listed tickers mentioned in `raw`, either `$`-prefixed or as
/// 1-5 letter all-caps words.
pub fn extract_symbols(raw: &str, listings: &HashSet<String>) -> std::collections::BTreeSet<String> {
    let dollar = dollar_re().captures_iter(raw).map(|c| c[1].to_ascii_uppercase());
    let caps = caps_re().find_iter(raw).map(|m| m.as_str().to_string());
    dollar.chain(caps).filter(|s| listings.contains(s)).collect()
}

/// Ticker to sector lookup, case-insensitive on the ticker.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorMap {
    entries: BTreeMap<String, String>,
}

impl SectorMap {
    pub fn insert(&mut self, symbol: &str, sector: &str) {
        self.entries.insert(symbol.to_ascii_uppercase(), sector.to_string());
    }

    pub fn sector(&self, symbol: &str) -> &str {
        self.entries
            .get(&symbol.to_ascii_uppercase())
            .map(String::as_str)
            .unwrap_or(UNKNOWN_SECTOR)
    }

    /// Dummy token for the symbol's sector, e.g. `sectorhealthcare`.
    /// Non-alphanumeric characters are dropped so the token stays one word.
    pub fn dummy_token(&self, symbol: &str) -> String {
        let name: String = self
            .sector(symbol)
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        format!("sector{name}")
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<(S, S)> for SectorMap {
    fn from_iter<I: IntoIterator<Item = (S, S)>>(iter: I) -> Self {
        let mut map = SectorMap::default();
        for (k, v) in iter {
            map.insert(k.as_ref(), v.as_ref());
        }
        map
    }
}

/// Replaces every occurrence of `symbol` with its sector dummy token.
pub fn sector_substitute(mut seq: TokenSeq, symbol: &str, map: &SectorMap) -> TokenSeq {
    let needle = symbol.to_lowercase();
    let dummy = map.dummy_token(symbol);
    for t in seq.tokens.iter_mut() {
        if *t == needle {
            *t = dummy.clone();
        }
    }
    seq
}
