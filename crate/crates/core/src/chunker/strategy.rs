//! Alternative segmentations used by the chunking ablation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnnotatedDocument, ChunkType, Chunker, SemanticChunk};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChunkStrategy {
    /// The whole description is one unit.
    NoChunking,
    /// One unit per sentence.
    SentenceLevel,
    ObjectOnly,
    ObjectAttribute,
    /// Objects, attributes and relations.
    CompleteSemantic,
}

impl ChunkStrategy {
    pub const ALL: [ChunkStrategy; 5] = [
        ChunkStrategy::NoChunking,
        ChunkStrategy::SentenceLevel,
        ChunkStrategy::ObjectOnly,
        ChunkStrategy::ObjectAttribute,
        ChunkStrategy::CompleteSemantic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChunkStrategy::NoChunking => "no-chunking",
            ChunkStrategy::SentenceLevel => "sentence-level",
            ChunkStrategy::ObjectOnly => "object-only",
            ChunkStrategy::ObjectAttribute => "object-attribute",
            ChunkStrategy::CompleteSemantic => "complete-semantic",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ChunkStrategy::NoChunking => "No Chunking",
            ChunkStrategy::SentenceLevel => "Sentence-level",
            ChunkStrategy::ObjectOnly => "Object-only",
            ChunkStrategy::ObjectAttribute => "Object + Attribute",
            ChunkStrategy::CompleteSemantic => "Complete Semantic",
        }
    }

    fn keeps(self, t: ChunkType) -> bool {
        match self {
            ChunkStrategy::ObjectOnly => t == ChunkType::Object,
            ChunkStrategy::ObjectAttribute => t != ChunkType::Relation,
            _ => true,
        }
    }
}

impl fmt::Display for ChunkStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChunkStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown chunking strategy {s:?}")))
    }
}

/// Unit of text that receives one feature row and one label. For the
/// semantic strategies it wraps exactly one chunk; for the coarse strategies
/// it carries every semantic chunk that starts inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub span: (usize, usize),
    pub cwc: usize,
    pub cpi: usize,
    pub crp: f64,
    pub chunks: Vec<SemanticChunk>,
}

impl Segment {
    fn from_chunk(chunk: SemanticChunk) -> Self {
        Self {
            span: chunk.span,
            cwc: chunk.cwc,
            cpi: chunk.cpi,
            crp: chunk.crp,
            chunks: vec![chunk],
        }
    }
}

impl Chunker {
    pub fn segment(&self, doc: &AnnotatedDocument, strategy: ChunkStrategy) -> Result<Vec<Segment>> {
        let chunks = self.extract_chunks(doc)?;
        if doc.is_empty() {
            return Ok(Vec::new());
        }
        let segments = match strategy {
            ChunkStrategy::NoChunking => vec![Segment {
                span: (0, doc.len() - 1),
                cwc: doc.len(),
                cpi: 1,
                crp: 1.0,
                chunks,
            }],
            ChunkStrategy::SentenceLevel => {
                let k = doc.sentences.len();
                doc.sentences
                    .iter()
                    .enumerate()
                    .map(|(i, r)| Segment {
                        span: (r.start, r.end - 1),
                        cwc: r.len(),
                        cpi: k,
                        crp: (i + 1) as f64 / k as f64,
                        chunks: chunks.iter().filter(|c| r.contains(&c.span.0)).cloned().collect(),
                    })
                    .collect()
            }
            _ => {
                let mut kept: Vec<SemanticChunk> =
                    chunks.into_iter().filter(|c| strategy.keeps(c.chunk_type())).collect();
                super::assign_context(&mut kept);
                kept.into_iter().map(Segment::from_chunk).collect()
            }
        };
        Ok(segments)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunker::{StopWords, TokenSpec, UPos::*};

    fn two_sentences() -> AnnotatedDocument {
        let t = TokenSpec::new;
        AnnotatedDocument::from_sentences(
            None,
            vec![
                vec![
                    t("a", "a", Det, Some(2), "det", true),
                    t("red", "red", Adj, Some(2), "amod", false),
                    t("car", "car", Noun, None, "ROOT", false),
                ],
                vec![
                    t("a", "a", Det, Some(1), "det", true),
                    t("dog", "dog", Noun, Some(2), "nsubj", false),
                    t("chases", "chase", Verb, None, "ROOT", false),
                    t("a", "a", Det, Some(4), "det", true),
                    t("cat", "cat", Noun, Some(2), "obj", false),
                ],
            ],
        )
        .unwrap()
    }

    #[test]
    fn strategies_partition_as_expected() {
        let c = Chunker::new(StopWords::empty());
        let doc = two_sentences();
        let count = |s| c.segment(&doc, s).unwrap().len();
        assert_eq!(count(ChunkStrategy::NoChunking), 1);
        assert_eq!(count(ChunkStrategy::SentenceLevel), 2);
        assert_eq!(count(ChunkStrategy::ObjectOnly), 3);
        assert_eq!(count(ChunkStrategy::ObjectAttribute), 4);
        assert_eq!(count(ChunkStrategy::CompleteSemantic), 5);

        let whole = &c.segment(&doc, ChunkStrategy::NoChunking).unwrap()[0];
        assert_eq!((whole.cwc, whole.cpi, whole.crp), (8, 1, 1.0));
        assert_eq!(whole.chunks.len(), 5);

        let objects = c.segment(&doc, ChunkStrategy::ObjectOnly).unwrap();
        let crps: Vec<f64> = objects.iter().map(|s| s.crp).collect();
        assert_eq!(crps, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in ChunkStrategy::ALL {
            assert_eq!(s.as_str().parse::<ChunkStrategy>().unwrap(), s);
        }
    }
}
