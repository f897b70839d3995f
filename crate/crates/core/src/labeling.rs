//! P&D labels for posts (from market verdicts) and comments (agreement model).
//!
//! A comment under a P&D post is itself P&D when it was written by the
//! post's author, or when its lemmatized tokens contain at least two
//! distinct agreement-lexicon terms. Comments under other posts inherit the
//! negative label. Negation is not modelled.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{Comment, Post};
use crate::market_events::AnomalyVerdict;
use crate::text::{parse_word_list, sector_substitute, DocKind, SectorMap, TextPipeline, TokenSeq};

pub const BUNDLED_EMPATH_TERMS: &str = include_str!("../data/lexicon_empath.txt");
pub const BUNDLED_CUSTOM_TERMS: &str = include_str!("../data/lexicon_custom.txt");

/// Distinct lexicon hits needed before a comment counts as agreeing.
pub const AGREEMENT_MIN_TERMS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "pnd")]
    PnD,
    #[serde(rename = "not-pnd")]
    NotPnD,
}

impl Label {
    pub fn is_pnd(self) -> bool {
        self == Label::PnD
    }

    pub fn from_bool(pnd: bool) -> Self {
        if pnd {
            Label::PnD
        } else {
            Label::NotPnD
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    MarketShape,
    AuthorRule,
    LexiconRule,
    InheritedNegative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub id: String,
    pub kind: DocKind,
    pub label: Label,
    pub label_source: LabelSource,
    /// Set for posts whose market window was skipped.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_window: bool,
    pub tokens: Vec<String>,
}

/// Agreement terms from the generated list and the hand-picked list.
#[derive(Debug, Clone)]
pub struct AgreementLexicon {
    empath_terms: BTreeSet<String>,
    custom_terms: BTreeSet<String>,
    matching: HashSet<String>,
}

impl AgreementLexicon {
    /// Builds the lexicon; each term also matches through its lemma, since
    /// comments are matched after lemmatization.
    pub fn new<I, J>(empath: I, custom: J, pipeline: &TextPipeline) -> Result<Self>
    where
        I: IntoIterator<Item = String>,
        J: IntoIterator<Item = String>,
    {
        let normalize = |terms: Vec<String>| -> Result<BTreeSet<String>> {
            terms
                .into_iter()
                .map(|t| {
                    let t = t.trim().to_lowercase();
                    if t.is_empty() || t.split_whitespace().count() != 1 {
                        Err(Error::invalid("lexicon term", format!("`{t}` is not a single word")))
                    } else {
                        Ok(t)
                    }
                })
                .collect()
        };
        let empath_terms = normalize(empath.into_iter().collect())?;
        let custom_terms = normalize(custom.into_iter().collect())?;
        let matching = empath_terms
            .iter()
            .chain(&custom_terms)
            .flat_map(|t| [t.clone(), pipeline.lemma(t).to_string()])
            .collect();
        Ok(AgreementLexicon {
            empath_terms,
            custom_terms,
            matching,
        })
    }

    pub fn bundled(pipeline: &TextPipeline) -> Self {
        Self::new(
            parse_word_list(BUNDLED_EMPATH_TERMS.as_bytes()).expect("bundled list"),
            parse_word_list(BUNDLED_CUSTOM_TERMS.as_bytes()).expect("bundled list"),
            pipeline,
        )
        .expect("bundled lexicon is well-formed")
    }

    pub fn from_readers<R1: BufRead, R2: BufRead>(empath: R1, custom: R2, pipeline: &TextPipeline) -> Result<Self> {
        Self::new(parse_word_list(empath)?, parse_word_list(custom)?, pipeline)
    }

    pub fn empath_terms(&self) -> &BTreeSet<String> {
        &self.empath_terms
    }

    pub fn custom_terms(&self) -> &BTreeSet<String> {
        &self.custom_terms
    }

    pub fn matches(&self, token: &str) -> bool {
        self.matching.contains(token)
    }

    /// Number of distinct lexicon terms among `tokens`.
    pub fn distinct_hits<S: AsRef<str>>(&self, tokens: &[S]) -> usize {
        tokens
            .iter()
            .map(AsRef::as_ref)
            .filter(|t| self.matches(t))
            .collect::<HashSet<_>>()
            .len()
    }
}

pub fn label_post<T>(post: &Post, verdict: Option<&AnomalyVerdict<T>>, tokens: TokenSeq) -> LabeledDocument {
    let pnd = verdict.is_some_and(|v| v.is_pnd_shape);
    LabeledDocument {
        id: post.id.clone(),
        kind: DocKind::Post,
        label: Label::from_bool(pnd),
        label_source: LabelSource::MarketShape,
        no_window: verdict.is_none(),
        tokens: tokens.tokens,
    }
}

pub fn label_comment(
    comment: &Comment,
    parent: &LabeledDocument,
    parent_author: &str,
    tokens: TokenSeq,
    lexicon: &AgreementLexicon,
) -> LabeledDocument {
    let (label, label_source) = if !parent.label.is_pnd() {
        (Label::NotPnD, LabelSource::InheritedNegative)
    } else if comment.author == parent_author {
        (Label::PnD, LabelSource::AuthorRule)
    } else if lexicon.distinct_hits(&tokens.tokens) >= AGREEMENT_MIN_TERMS {
        (Label::PnD, LabelSource::LexiconRule)
    } else {
        (Label::NotPnD, LabelSource::LexiconRule)
    };
    LabeledDocument {
        id: comment.id.clone(),
        kind: DocKind::Comment,
        label,
        label_source,
        no_window: false,
        tokens: tokens.tokens,
    }
}

/// Class counts in the layout of a per-record-type distribution table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub posts_pnd: usize,
    pub posts_not: usize,
    pub comments_pnd: usize,
    pub comments_not: usize,
}

impl ClassDistribution {
    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a LabeledDocument>) -> Self {
        let mut d = ClassDistribution::default();
        for doc in docs {
            match (doc.kind, doc.label) {
                (DocKind::Post, Label::PnD) => d.posts_pnd += 1,
                (DocKind::Post, Label::NotPnD) => d.posts_not += 1,
                (DocKind::Comment, Label::PnD) => d.comments_pnd += 1,
                (DocKind::Comment, Label::NotPnD) => d.comments_not += 1,
            }
        }
        d
    }

    pub fn total_pnd(&self) -> usize {
        self.posts_pnd + self.comments_pnd
    }

    pub fn total_not(&self) -> usize {
        self.posts_not + self.comments_not
    }

    pub fn total(&self) -> usize {
        self.total_pnd() + self.total_not()
    }
}

impl fmt::Display for ClassDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("Posts", self.posts_pnd, self.posts_not),
            ("Comment", self.comments_pnd, self.comments_not),
            ("Total", self.total_pnd(), self.total_not()),
        ];
        writeln!(f, "| {:<12} | {:>10} | {:>10} | {:>10} |", "Record Type", "P&D", "Not P&D", "Total")?;
        writeln!(f, "|{:-<14}|{:->12}|{:->12}|{:->12}|", "", "", "", "")?;
        for (name, pnd, not) in rows {
            writeln!(
                f,
                "| {:<12} | {:>10} | {:>10} | {:>10} |",
                name,
                group_thousands(pnd),
                group_thousands(not),
                group_thousands(pnd + not)
            )?;
        }
        Ok(())
    }
}

fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Labels every post and comment exactly once, posts first in input order
/// followed by comments in input order.
///
/// `verdicts` maps post id to its market verdict; posts without one were
/// not windowed. Comments whose `post_id` is unknown are an error.
pub fn assemble_dataset<T>(
    posts: &[Post],
    comments: &[Comment],
    verdicts: &HashMap<String, AnomalyVerdict<T>>,
    lexicon: &AgreementLexicon,
    pipeline: &TextPipeline,
    sectors: &SectorMap,
) -> Result<(Vec<LabeledDocument>, ClassDistribution)> {
    let by_id: HashMap<&str, usize> = posts.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    let dangling: Vec<String> = comments
        .iter()
        .filter(|c| !by_id.contains_key(c.post_id.as_str()))
        .map(|c| c.id.clone())
        .collect();
    if !dangling.is_empty() {
        return Err(Error::DanglingComments(dangling));
    }

    let substitute = |seq: TokenSeq, symbol: Option<&str>| match symbol {
        Some(s) => sector_substitute(seq, s, sectors),
        None => seq,
    };

    let post_docs: Vec<LabeledDocument> = posts
        .iter()
        .map(|p| {
            let seq = substitute(pipeline.preprocess(&p.text(), &p.id, DocKind::Post), p.symbol.as_deref());
            label_post(p, verdicts.get(&p.id), seq)
        })
        .collect();

    let comment_docs: Vec<LabeledDocument> = comments
        .iter()
        .map(|c| {
            let idx = by_id[c.post_id.as_str()];
            let parent = &posts[idx];
            let seq = substitute(
                pipeline.preprocess(&c.body, &c.id, DocKind::Comment),
                parent.symbol.as_deref(),
            );
            label_comment(c, &post_docs[idx], &parent.author, seq, lexicon)
        })
        .collect();

    let mut docs = post_docs;
    docs.extend(comment_docs);
    let dist = ClassDistribution::from_documents(&docs);
    Ok((docs, dist))
}

pub fn write_labeled<W: Write>(mut writer: W, docs: &[LabeledDocument]) -> Result<()> {
    for d in docs {
        serde_json::to_writer(&mut writer, d)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_labeled<R: BufRead>(reader: R) -> Result<Vec<LabeledDocument>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Record {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon() -> (TextPipeline, AgreementLexicon) {
        let p = TextPipeline::bundled();
        let l = AgreementLexicon::bundled(&p);
        (p, l)
    }

    fn post(author: &str) -> Post {
        Post {
            id: "p1".into(),
            author: author.into(),
            created: 1_588_000_000,
            title: "AYTU perfect time to buy".into(),
            body: String::new(),
            symbol: Some("AYTU".into()),
        }
    }

    fn comment(author: &str, body: &str) -> Comment {
        Comment {
            id: "c1".into(),
            post_id: "p1".into(),
            author: author.into(),
            created: 1_588_000_100,
            body: body.into(),
        }
    }

    fn verdict(pnd: bool) -> AnomalyVerdict<f64> {
        AnomalyVerdict {
            price_anomaly: pnd,
            volume_anomaly: pnd,
            slope: pnd.then_some(0.1),
            is_pnd_shape: pnd,
        }
    }

    fn labeled_parent(pnd: bool) -> LabeledDocument {
        let (p, _) = lexicon();
        let post = post("op");
        label_post(&post, Some(&verdict(pnd)), p.preprocess(&post.title, "p1", DocKind::Post))
    }

    fn label(parent_pnd: bool, author: &str, body: &str) -> LabeledDocument {
        let (p, l) = lexicon();
        let c = comment(author, body);
        label_comment(&c, &labeled_parent(parent_pnd), "op", p.preprocess(&c.body, "c1", DocKind::Comment), &l)
    }

    #[test]
    fn post_label_follows_verdict() {
        assert_eq!(labeled_parent(true).label, Label::PnD);
        assert_eq!(labeled_parent(false).label, Label::NotPnD);
        let (p, _) = lexicon();
        let doc = label_post::<f64>(&post("op"), None, p.preprocess("x", "p1", DocKind::Post));
        assert_eq!(doc.label, Label::NotPnD);
        assert!(doc.no_window);
        assert_eq!(doc.label_source, LabelSource::MarketShape);
    }

    #[test]
    fn original_poster_comment_is_pnd() {
        let d = label(true, "op", "see you guys later");
        assert_eq!((d.label, d.label_source), (Label::PnD, LabelSource::AuthorRule));
    }

    #[test]
    fn two_agreement_terms_make_pnd() {
        let d = label(true, "someone", "i agree buy now");
        assert_eq!((d.label, d.label_source), (Label::PnD, LabelSource::LexiconRule));
    }

    #[test]
    fn single_hit_is_not_pnd() {
        let d = label(true, "someone", "clearly a pump and dump scheme");
        assert_eq!(d.label, Label::NotPnD);
        let (_, l) = lexicon();
        assert_eq!(l.distinct_hits(&d.tokens), 1);
    }

    #[test]
    fn repeated_term_counts_once() {
        assert_eq!(label(true, "someone", "buy buy buy").label, Label::NotPnD);
    }

    #[test]
    fn negative_parent_is_inherited() {
        let d = label(false, "op", "i agree buy now to the moon");
        assert_eq!((d.label, d.label_source), (Label::NotPnD, LabelSource::InheritedNegative));
    }

    #[test]
    fn inflected_forms_match_via_lemma() {
        let (p, l) = lexicon();
        // "bought" and "buying" both lemmatize to "buy": one distinct term.
        assert_eq!(l.distinct_hits(&p.tokens("bought it, still buying")), 1);
        assert_eq!(l.distinct_hits(&p.tokens("knowing it will soar")), 2);
    }

    #[test]
    fn lexicon_table_sizes() {
        let (_, l) = lexicon();
        // 62 listed plus 3 seed words, and the 49 hand-picked words.
        assert_eq!(l.empath_terms().len(), 65);
        assert_eq!(l.custom_terms().len(), 49);
        assert!(l.matches("buy") && l.matches("moon") && !l.matches("scheme"));
    }

    #[test]
    fn no_lexicon_term_is_a_stopword() {
        let (p, l) = lexicon();
        for t in l.empath_terms().iter().chain(l.custom_terms()) {
            assert!(!p.is_stopword(t), "{t}");
            assert!(!p.is_stopword(p.lemma(t)), "{t}");
        }
    }

    #[test]
    fn dangling_comment_rejected() {
        let (p, l) = lexicon();
        let mut c = comment("x", "hello");
        c.post_id = "missing".into();
        let err = assemble_dataset::<f64>(&[post("op")], &[c], &HashMap::new(), &l, &p, &SectorMap::default());
        assert!(matches!(err, Err(Error::DanglingComments(ids)) if ids == vec!["c1".to_string()]));
    }

    #[test]
    fn empty_corpus_assembles_to_nothing() {
        let (p, l) = lexicon();
        let (docs, dist) =
            assemble_dataset::<f64>(&[], &[], &HashMap::new(), &l, &p, &SectorMap::default()).unwrap();
        assert!(docs.is_empty());
        assert_eq!(dist.total(), 0);
    }

    #[test]
    fn assemble_substitutes_sector_and_counts() {
        let (p, l) = lexicon();
        let sectors: SectorMap = [("AYTU", "Healthcare")].into_iter().collect();
        let verdicts = HashMap::from([("p1".to_string(), verdict(true))]);
        let comments = vec![comment("op", "AYTU going up"), {
            let mut c = comment("other", "no idea");
            c.id = "c2".into();
            c
        }];
        let (docs, dist) = assemble_dataset(&[post("op")], &comments, &verdicts, &l, &p, &sectors).unwrap();
        assert_eq!(docs[0].tokens, vec!["sectorhealthcare", "perfect", "time", "buy"]);
        assert_eq!(docs[1].tokens[0], "sectorhealthcare");
        assert_eq!(
            dist,
            ClassDistribution { posts_pnd: 1, posts_not: 0, comments_pnd: 1, comments_not: 1 }
        );
    }

    #[test]
    fn table_layout_uses_thousands_grouping() {
        let dist = ClassDistribution { posts_pnd: 3006, posts_not: 15549, comments_pnd: 26727, comments_not: 285851 };
        let text = dist.to_string();
        assert!(text.contains("| Posts        |      3,006 |     15,549 |     18,555 |"), "{text}");
        assert!(text.contains("| Total        |     29,733 |    301,400 |    331,133 |"), "{text}");
    }

    #[test]
    fn labeled_records_round_trip() {
        let docs = vec![labeled_parent(true)];
        let mut buf = Vec::new();
        write_labeled(&mut buf, &docs).unwrap();
        assert_eq!(read_labeled(buf.as_slice()).unwrap(), docs);
    }
}
