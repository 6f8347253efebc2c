//! Semantic chunk extraction over annotated text.
//!
//! Three rules run over every token in surface order:
//!
//! * a non-stopword `NOUN`/`PROPN` yields an object chunk;
//! * an `ADJ` whose head is a `NOUN`/`PROPN` yields an attribute chunk;
//! * a token with dependency `prep`/`agent`, or any `VERB`, with at least two
//!   nominal children yields a relation chunk over its first two such
//!   children.
//!
//! Duplicates and short chunks are then dropped, the survivors sorted by start
//! index, and each chunk receives its word count, the per-sample chunk count
//! and its relative position.

pub mod annotation;
pub mod strategy;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use annotation::{AnnotatedDocument, AnnotatedToken, TokenSpec, UPos};
pub use strategy::{ChunkStrategy, Segment};

use crate::error::Result;

/// Minimum length, in characters, of a chunk's head word.
pub const MIN_HEAD_WORD_CHARS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ChunkType {
    Object,
    Attribute,
    Relation,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "UPPERCASE")]
pub enum ChunkPayload {
    Object {
        noun: String,
    },
    Attribute {
        adjective: String,
        noun: String,
    },
    Relation {
        subject: String,
        connector: String,
        object: String,
    },
}

impl ChunkPayload {
    pub fn chunk_type(&self) -> ChunkType {
        match self {
            ChunkPayload::Object { .. } => ChunkType::Object,
            ChunkPayload::Attribute { .. } => ChunkType::Attribute,
            ChunkPayload::Relation { .. } => ChunkType::Relation,
        }
    }

    /// Word the short-chunk filter inspects: the noun for objects and
    /// attributes, the connector for relations.
    pub fn head_word(&self) -> &str {
        match self {
            ChunkPayload::Object { noun } | ChunkPayload::Attribute { noun, .. } => noun,
            ChunkPayload::Relation { connector, .. } => connector,
        }
    }

    /// Object lemmas the claim depends on.
    pub fn objects(&self) -> Vec<&str> {
        match self {
            ChunkPayload::Object { noun } | ChunkPayload::Attribute { noun, .. } => vec![noun],
            ChunkPayload::Relation { subject, object, .. } => vec![subject, object],
        }
    }
}

impl fmt::Display for ChunkPayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChunkPayload::Object { noun } => write!(f, "OBJECT({noun})"),
            ChunkPayload::Attribute { adjective, noun } => write!(f, "ATTRIBUTE({adjective}, {noun})"),
            ChunkPayload::Relation {
                subject,
                connector,
                object,
            } => write!(f, "RELATION({subject}, {connector}, {object})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticChunk {
    pub payload: ChunkPayload,
    /// Inclusive token range.
    pub span: (usize, usize),
    /// Chunk word count: tokens covered by the span.
    pub cwc: usize,
    /// Chunks per image: total chunks of the sample.
    pub cpi: usize,
    /// Chunk relative position `i / k`, `i` 1-indexed.
    pub crp: f64,
}

impl SemanticChunk {
    fn raw(payload: ChunkPayload, start: usize, end: usize) -> Self {
        Self {
            payload,
            span: (start, end),
            cwc: end - start + 1,
            cpi: 0,
            crp: 0.0,
        }
    }

    pub fn chunk_type(&self) -> ChunkType {
        self.payload.chunk_type()
    }
}

/// Stopword list used by the object rule, with a digest for reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWords {
    words: BTreeSet<String>,
}

impl StopWords {
    /// One word per line; `#` starts a comment line.
    pub fn parse(src: &str) -> Self {
        let words = src
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Self { words }
    }

    pub fn empty() -> Self {
        Self {
            words: BTreeSet::new(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Hex SHA-256 over the sorted, newline-joined list.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone)]
pub struct Chunker {
    stopwords: StopWords,
}

impl Chunker {
    pub fn new(stopwords: StopWords) -> Self {
        Self { stopwords }
    }

    pub fn stopwords(&self) -> &StopWords {
        &self.stopwords
    }

    pub fn is_stopword(&self, token: &AnnotatedToken) -> bool {
        token.is_stop || self.stopwords.contains(&token.lemma) || self.stopwords.contains(&token.text)
    }

    /// Full extraction: rules, dedupe/filter, sort, contextual features.
    pub fn extract_chunks(&self, doc: &AnnotatedDocument) -> Result<Vec<SemanticChunk>> {
        doc.validate()?;
        let raw = self.raw_chunks(doc);
        let mut chunks = dedupe_and_filter(raw);
        assign_context(&mut chunks);
        Ok(chunks)
    }

    /// Chunks emitted by the three rules before dedupe and filtering.
    pub fn raw_chunks(&self, doc: &AnnotatedDocument) -> Vec<SemanticChunk> {
        let mut out = Vec::new();
        for t in &doc.tokens {
            if t.pos.is_nominal() && !self.is_stopword(t) {
                out.push(SemanticChunk::raw(
                    ChunkPayload::Object { noun: t.norm_lemma() },
                    t.index,
                    t.index,
                ));
            }
            if t.pos == UPos::Adj {
                if let Some(head) = doc.head_of(t).filter(|h| h.pos.is_nominal()) {
                    out.push(SemanticChunk::raw(
                        ChunkPayload::Attribute {
                            adjective: t.norm_lemma(),
                            noun: head.norm_lemma(),
                        },
                        t.index.min(head.index),
                        t.index.max(head.index),
                    ));
                }
            }
            if is_connector_candidate(t) {
                let nouns: Vec<&AnnotatedToken> = doc.children(t.index).filter(|c| c.pos.is_nominal()).collect();
                if nouns.len() >= 2 {
                    let (first, second) = (nouns[0], nouns[1]);
                    let start = first.index.min(t.index).min(second.index);
                    let end = first.index.max(t.index).max(second.index);
                    out.push(SemanticChunk::raw(
                        ChunkPayload::Relation {
                            subject: first.norm_lemma(),
                            connector: connector_lemma(doc, t, second),
                            object: second.norm_lemma(),
                        },
                        start,
                        end,
                    ));
                }
            }
        }
        out
    }
}

fn is_connector_candidate(t: &AnnotatedToken) -> bool {
    t.pos == UPos::Verb || t.dep == "prep" || t.dep == "agent"
}

fn is_particle(t: &AnnotatedToken) -> bool {
    matches!(t.pos, UPos::Adp | UPos::Adv | UPos::Part)
}

/// Lemma naming the link between two nouns.
///
/// A verb connector absorbs the particles, adverbs and adpositions that sit
/// between it and the second noun and attach to the verb, to that noun, or to
/// one another ("parked next to" becomes `park-next-to`). A prepositional
/// connector is merged with its governing verb when there is one.
pub fn connector_lemma(doc: &AnnotatedDocument, connector: &AnnotatedToken, second: &AnnotatedToken) -> String {
    let mut parts = Vec::new();
    if connector.pos == UPos::Verb {
        parts.push(connector.norm_lemma());
        let (lo, hi) = if connector.index < second.index {
            (connector.index + 1, second.index)
        } else {
            (second.index + 1, connector.index)
        };
        let between = &doc.tokens[lo.min(hi)..hi];
        let mut attached: HashSet<usize> = [connector.index, second.index].into();
        // Particles may chain (ADV <- ADP), so grow the attached set until stable.
        loop {
            let before = attached.len();
            for t in between {
                if is_particle(t) && t.head.is_some_and(|h| attached.contains(&h)) {
                    attached.insert(t.index);
                }
            }
            if attached.len() == before {
                break;
            }
        }
        parts.extend(
            between
                .iter()
                .filter(|t| is_particle(t) && attached.contains(&t.index))
                .map(AnnotatedToken::norm_lemma),
        );
    } else {
        if let Some(head) = doc.head_of(connector).filter(|h| h.pos == UPos::Verb) {
            parts.push(head.norm_lemma());
        }
        parts.extend(
            doc.children(connector.index)
                .filter(|c| c.pos == UPos::Adv && c.index < connector.index)
                .map(AnnotatedToken::norm_lemma),
        );
        parts.push(connector.norm_lemma());
    }
    parts.join("-")
}

/// Drops repeated payloads (keeping the earliest span) and chunks whose head
/// word is shorter than [`MIN_HEAD_WORD_CHARS`], then sorts by span start with
/// ties broken object < attribute < relation.
pub fn dedupe_and_filter(mut chunks: Vec<SemanticChunk>) -> Vec<SemanticChunk> {
    chunks.sort_by(|a, b| {
        (a.span.0, a.chunk_type(), a.span.1).cmp(&(b.span.0, b.chunk_type(), b.span.1))
    });
    let mut seen = HashSet::new();
    chunks.retain(|c| {
        c.payload.head_word().chars().count() >= MIN_HEAD_WORD_CHARS && seen.insert(c.payload.clone())
    });
    chunks
}

/// Fills `cpi` and `crp` from the final ordering.
pub fn assign_context(chunks: &mut [SemanticChunk]) {
    let k = chunks.len();
    for (i, c) in chunks.iter_mut().enumerate() {
        c.cpi = k;
        c.crp = (i + 1) as f64 / k as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use UPos::*;

    fn tok(text: &str, lemma: &str, pos: UPos, head: Option<usize>, dep: &str, stop: bool) -> TokenSpec {
        TokenSpec::new(text, lemma, pos, head, dep, stop)
    }

    fn red_car_parked() -> AnnotatedDocument {
        AnnotatedDocument::from_sentences(
            None,
            vec![vec![
                tok("a", "a", Det, Some(2), "det", true),
                tok("red", "red", Adj, Some(2), "amod", false),
                tok("car", "car", Noun, Some(3), "nsubj", false),
                tok("parked", "park", Verb, None, "ROOT", false),
                tok("next", "next", Adv, Some(3), "advmod", false),
                tok("to", "to", Adp, Some(4), "prep", true),
                tok("a", "a", Det, Some(8), "det", true),
                tok("tall", "tall", Adj, Some(8), "amod", false),
                tok("building", "building", Noun, Some(3), "obl", false),
            ]],
        )
        .unwrap()
    }

    fn chunker() -> Chunker {
        Chunker::new(StopWords::parse("a\nthe\n"))
    }

    #[test]
    fn red_car_fixture() {
        let chunks = chunker().extract_chunks(&red_car_parked()).unwrap();
        let payloads: Vec<String> = chunks.iter().map(|c| c.payload.to_string()).collect();
        assert_eq!(
            payloads,
            vec![
                "ATTRIBUTE(red, car)",
                "OBJECT(car)",
                "RELATION(car, park-next-to, building)",
                "ATTRIBUTE(tall, building)",
                "OBJECT(building)",
            ]
        );
        let rel = &chunks[2];
        assert_eq!(rel.span, (2, 8));
        assert_eq!(rel.cwc, 7);
        assert!(chunks.iter().all(|c| c.cpi == 5));
    }

    #[test]
    fn prep_connector_merges_with_verb() {
        // "dog sits under table" with the prep token governing both nouns.
        let doc = AnnotatedDocument::from_sentences(
            None,
            vec![vec![
                tok("dog", "dog", Noun, Some(2), "pobj", false),
                tok("sits", "sit", Verb, None, "ROOT", false),
                tok("under", "under", Adp, Some(1), "prep", false),
                tok("table", "table", Noun, Some(2), "pobj", false),
            ]],
        )
        .unwrap();
        let chunks = chunker().extract_chunks(&doc).unwrap();
        assert!(chunks.iter().any(|c| c.payload
            == ChunkPayload::Relation {
                subject: "dog".into(),
                connector: "sit-under".into(),
                object: "table".into()
            }));
    }

    #[test]
    fn no_rule_fires() {
        let doc = AnnotatedDocument::from_sentences(
            None,
            vec![vec![
                tok("it", "it", Pron, Some(1), "nsubj", true),
                tok("runs", "run", Verb, None, "ROOT", false),
                tok("the", "the", Det, Some(3), "det", true),
                tok("thing", "thing", Noun, Some(1), "obj", true),
            ]],
        )
        .unwrap();
        assert!(chunker().extract_chunks(&doc).unwrap().is_empty());
    }

    #[test]
    fn dedupe_keeps_earliest() {
        let car = |i| SemanticChunk::raw(ChunkPayload::Object { noun: "car".into() }, i, i);
        let out = dedupe_and_filter(vec![car(9), car(2)]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].span, (2, 2));
    }

    #[test]
    fn short_head_word_removed() {
        let a = SemanticChunk::raw(ChunkPayload::Object { noun: "a".into() }, 0, 0);
        assert!(dedupe_and_filter(vec![a]).is_empty());
    }

    #[test]
    fn output_sorted_with_type_ties() {
        let rel = SemanticChunk::raw(
            ChunkPayload::Relation {
                subject: "car".into(),
                connector: "park".into(),
                object: "road".into(),
            },
            1,
            4,
        );
        let obj = SemanticChunk::raw(ChunkPayload::Object { noun: "car".into() }, 1, 1);
        let late = SemanticChunk::raw(ChunkPayload::Object { noun: "road".into() }, 4, 4);
        let out = dedupe_and_filter(vec![late, rel, obj]);
        let starts: Vec<_> = out.iter().map(|c| (c.span.0, c.chunk_type())).collect();
        assert_eq!(
            starts,
            vec![(1, ChunkType::Object), (1, ChunkType::Relation), (4, ChunkType::Object)]
        );
    }

    #[test]
    fn twelve_chunks_positions() {
        let mut chunks: Vec<SemanticChunk> = (0..12)
            .map(|i| SemanticChunk::raw(ChunkPayload::Object { noun: format!("obj{i}") }, i, i))
            .collect();
        assign_context(&mut chunks);
        assert_eq!(chunks[2].crp, 0.25);
        assert!(chunks.iter().all(|c| c.cpi == 12));
    }

    #[test]
    fn stopword_digest_is_order_independent() {
        assert_eq!(StopWords::parse("a\nthe").digest(), StopWords::parse("the\n# c\na").digest());
        assert_ne!(StopWords::parse("a").digest(), StopWords::parse("b").digest());
    }
}
