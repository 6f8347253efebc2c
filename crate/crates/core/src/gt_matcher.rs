//! Ground-truth extraction from reference captions and hierarchical chunk
//! classification.
//!
//! Precedence is category > attribute > relation: a claim about an object that
//! is not in the image is a category hallucination no matter what it says
//! about that object, and attribute or relation checks only run once every
//! object the claim mentions exists.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chunker::{AnnotatedDocument, ChunkPayload, Chunker, Segment, SemanticChunk};
use crate::error::{Error, Result};
use crate::label::HallucinationLabel;

#[derive(Debug, Deserialize)]
struct LexiconFile {
    objects: Vec<String>,
    #[serde(default)]
    relations: Vec<String>,
    #[serde(default)]
    symmetric_relations: Vec<String>,
    #[serde(default)]
    attributes: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    synonyms: Vec<Vec<String>>,
}

/// Object vocabulary, attribute categories, relation vocabulary and the
/// synonym map used by matching.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicons {
    pub objects: BTreeSet<String>,
    pub attribute_categories: BTreeMap<String, BTreeSet<String>>,
    pub relations: BTreeSet<String>,
    pub symmetric_relations: BTreeSet<String>,
    synonyms: BTreeMap<String, BTreeSet<String>>,
}

impl Lexicons {
    pub fn parse_toml(src: &str) -> Result<Self> {
        let file: LexiconFile = toml::from_str(src).map_err(|e| Error::Lexicon(e.to_string()))?;
        let lower = |v: Vec<String>| v.into_iter().map(|s| s.trim().to_lowercase()).collect::<BTreeSet<_>>();

        let mut attribute_categories = BTreeMap::new();
        let mut owner: BTreeMap<String, String> = BTreeMap::new();
        for (category, words) in file.attributes {
            let words = lower(words);
            for w in &words {
                if let Some(prev) = owner.insert(w.clone(), category.clone()) {
                    return Err(Error::Lexicon(format!(
                        "attribute {w:?} appears in both {prev:?} and {category:?}"
                    )));
                }
            }
            attribute_categories.insert(category.to_lowercase(), words);
        }

        let mut lex = Lexicons {
            objects: lower(file.objects),
            attribute_categories,
            relations: lower(file.relations),
            symmetric_relations: lower(file.symmetric_relations),
            synonyms: BTreeMap::new(),
        };
        for group in file.synonyms {
            lex.add_synonym_group(group.iter().map(String::as_str));
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_toml(&src)
    }

    /// Registers every member of `group` as equivalent to every other member.
    pub fn add_synonym_group<'a>(&mut self, group: impl IntoIterator<Item = &'a str>) {
        let members: Vec<String> = group.into_iter().map(|s| s.trim().to_lowercase()).collect();
        for a in &members {
            for b in &members {
                if a != b {
                    self.synonyms.entry(a.clone()).or_default().insert(b.clone());
                }
            }
        }
    }

    pub fn synonyms_of(&self, lemma: &str) -> impl Iterator<Item = &str> {
        self.synonyms.get(lemma).into_iter().flatten().map(String::as_str)
    }

    pub fn are_synonyms(&self, a: &str, b: &str) -> bool {
        self.synonyms.get(a).is_some_and(|s| s.contains(b))
    }

    pub fn attribute_category(&self, lemma: &str) -> Option<&str> {
        self.attribute_categories
            .iter()
            .find(|(_, words)| words.contains(lemma))
            .map(|(c, _)| c.as_str())
    }

    /// Vocabulary form of `lemma`: itself when it is in the object vocabulary
    /// or has no in-vocabulary synonym, else the smallest such synonym.
    pub fn canonical_object(&self, lemma: &str) -> String {
        if self.objects.contains(lemma) {
            return lemma.to_string();
        }
        self.synonyms_of(lemma)
            .filter(|s| self.objects.contains(*s))
            .min()
            .unwrap_or(lemma)
            .to_string()
    }

    /// Whether the connector names a symmetric spatial relation, alone or as
    /// the suffix of a verb connector (`park-next-to`).
    pub fn is_symmetric(&self, connector: &str) -> bool {
        self.symmetric_relations.iter().any(|s| {
            connector == s
                || connector
                    .strip_suffix(s.as_str())
                    .is_some_and(|prefix| prefix.ends_with('-'))
        })
    }

    fn term_eq(&self, term: &str, target: &str) -> bool {
        term == target || self.are_synonyms(term, target)
    }
}

/// True iff `term` (a lemma, lowercased here) is in `targets` directly or via
/// the synonym map.
pub fn match_term(term: &str, targets: &BTreeSet<String>, lex: &Lexicons) -> bool {
    let term = term.to_lowercase();
    targets.contains(&term) || lex.synonyms_of(&term).any(|s| targets.contains(s))
}

/// Objects, (object, attribute) pairs and (object, relation, object) triplets
/// mentioned by the reference captions of one image.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthSet {
    pub objects: BTreeSet<String>,
    pub attributes: BTreeSet<(String, String)>,
    pub relations: BTreeSet<(String, String, String)>,
    pub source_captions: Vec<String>,
}

pub fn extract_ground_truth(
    captions: &[AnnotatedDocument],
    chunker: &Chunker,
    lex: &Lexicons,
) -> Result<GroundTruthSet> {
    if captions.is_empty() {
        return Err(Error::Empty("ground-truth caption set"));
    }
    let mut gt = GroundTruthSet::default();
    for caption in captions {
        caption.validate()?;
        gt.source_captions.push(caption.text());
        for chunk in chunker.raw_chunks(caption) {
            match chunk.payload {
                ChunkPayload::Object { noun } => {
                    gt.objects.insert(lex.canonical_object(&noun));
                }
                ChunkPayload::Attribute { adjective, noun } => {
                    let noun = lex.canonical_object(&noun);
                    gt.objects.insert(noun.clone());
                    gt.attributes.insert((noun, adjective));
                }
                ChunkPayload::Relation {
                    subject,
                    connector,
                    object,
                } => {
                    let subject = lex.canonical_object(&subject);
                    let object = lex.canonical_object(&object);
                    gt.objects.insert(subject.clone());
                    gt.objects.insert(object.clone());
                    gt.relations.insert((subject, connector, object));
                }
            }
        }
    }
    Ok(gt)
}

pub fn classify_payload(payload: &ChunkPayload, gt: &GroundTruthSet, lex: &Lexicons) -> HallucinationLabel {
    if payload.objects().iter().any(|o| !match_term(o, &gt.objects, lex)) {
        return HallucinationLabel::Category;
    }
    match payload {
        ChunkPayload::Object { .. } => HallucinationLabel::Correct,
        ChunkPayload::Attribute { adjective, noun } => {
            let found = gt
                .attributes
                .iter()
                .any(|(o, a)| lex.term_eq(noun, o) && lex.term_eq(adjective, a));
            if found {
                HallucinationLabel::Correct
            } else {
                HallucinationLabel::Attribute
            }
        }
        ChunkPayload::Relation {
            subject,
            connector,
            object,
        } => {
            let symmetric = lex.is_symmetric(connector);
            let found = gt.relations.iter().any(|(s, r, o)| {
                lex.term_eq(connector, r)
                    && ((lex.term_eq(subject, s) && lex.term_eq(object, o))
                        || (symmetric && lex.term_eq(subject, o) && lex.term_eq(object, s)))
            });
            if found {
                HallucinationLabel::Correct
            } else {
                HallucinationLabel::Relation
            }
        }
    }
}

pub fn classify_chunk(chunk: &SemanticChunk, gt: &GroundTruthSet, lex: &Lexicons) -> HallucinationLabel {
    classify_payload(&chunk.payload, gt, lex)
}

/// Most severe label among the segment's chunks; `Correct` if it has none.
pub fn label_segment(segment: &Segment, gt: &GroundTruthSet, lex: &Lexicons) -> HallucinationLabel {
    HallucinationLabel::dominant(segment.chunks.iter().map(|c| classify_chunk(c, gt, lex)))
}
