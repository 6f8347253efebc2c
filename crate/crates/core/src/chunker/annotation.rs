//! Token annotations (POS, dependency head/label, lemma, stopword flag).
//!
//! Text format, one token per line, tab separated:
//!
//! ```text
//! index  text  lemma  upos  head  dep  is_stop
//! ```
//!
//! `head` is the index of the governing token or `-1` for the sentence root.
//! Blank lines separate sentences; indices run densely over the whole
//! document. A line `#doc <id>` starts a new document, so one file can hold
//! several captions. Other lines starting with `#` are comments.

use std::fmt;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UPos {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

impl UPos {
    const ALL: [(UPos, &'static str); 17] = [
        (UPos::Adj, "ADJ"),
        (UPos::Adp, "ADP"),
        (UPos::Adv, "ADV"),
        (UPos::Aux, "AUX"),
        (UPos::Cconj, "CCONJ"),
        (UPos::Det, "DET"),
        (UPos::Intj, "INTJ"),
        (UPos::Noun, "NOUN"),
        (UPos::Num, "NUM"),
        (UPos::Part, "PART"),
        (UPos::Pron, "PRON"),
        (UPos::Propn, "PROPN"),
        (UPos::Punct, "PUNCT"),
        (UPos::Sconj, "SCONJ"),
        (UPos::Sym, "SYM"),
        (UPos::Verb, "VERB"),
        (UPos::X, "X"),
    ];

    pub fn as_str(self) -> &'static str {
        Self::ALL.iter().find(|(p, _)| *p == self).unwrap().1
    }

    pub fn is_nominal(self) -> bool {
        matches!(self, UPos::Noun | UPos::Propn)
    }
}

impl fmt::Display for UPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UPos {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .iter()
            .find(|(_, name)| name.eq_ignore_ascii_case(s))
            .map(|(p, _)| *p)
            .ok_or_else(|| format!("unknown universal POS tag {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedToken {
    pub index: usize,
    pub text: String,
    pub lemma: String,
    pub pos: UPos,
    /// Governing token, `None` for the sentence root.
    pub head: Option<usize>,
    pub dep: String,
    pub is_stop: bool,
}

impl AnnotatedToken {
    /// Lowercased lemma, the form used for every payload and lookup.
    pub fn norm_lemma(&self) -> String {
        self.lemma.to_lowercase()
    }
}

/// One annotated text (a generated description or a single caption).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub id: Option<String>,
    pub tokens: Vec<AnnotatedToken>,
    /// Token ranges of the sentences, contiguous and in order.
    pub sentences: Vec<Range<usize>>,
}

impl AnnotatedDocument {
    /// Builds a document from sentences of `(text, lemma, pos, head, dep, is_stop)`
    /// rows, with heads given relative to the start of each sentence.
    pub fn from_sentences(id: Option<String>, sentences: Vec<Vec<TokenSpec>>) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut ranges = Vec::new();
        for sentence in sentences {
            let start = tokens.len();
            for spec in sentence {
                let index = tokens.len();
                tokens.push(AnnotatedToken {
                    index,
                    text: spec.text,
                    lemma: spec.lemma,
                    pos: spec.pos,
                    head: spec.head.map(|h| h + start),
                    dep: spec.dep,
                    is_stop: spec.is_stop,
                });
            }
            ranges.push(start..tokens.len());
        }
        let doc = AnnotatedDocument {
            id,
            tokens,
            sentences: ranges,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn children(&self, index: usize) -> impl Iterator<Item = &AnnotatedToken> {
        self.tokens.iter().filter(move |t| t.head == Some(index))
    }

    pub fn head_of(&self, token: &AnnotatedToken) -> Option<&AnnotatedToken> {
        token.head.map(|h| &self.tokens[h])
    }

    pub fn sentence_of(&self, index: usize) -> Option<usize> {
        self.sentences.iter().position(|r| r.contains(&index))
    }

    /// Checks dense indices, sentence tiling, head ranges, one root per
    /// sentence and acyclic head chains.
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i {
                return Err(Error::MalformedAnnotation(format!(
                    "token {i} carries index {}; indices must be dense and ordered",
                    t.index
                )));
            }
        }
        let mut expected_start = 0;
        for r in &self.sentences {
            if r.start != expected_start || r.end <= r.start {
                return Err(Error::MalformedAnnotation(format!(
                    "sentence range {r:?} does not tile the token sequence"
                )));
            }
            expected_start = r.end;
        }
        if expected_start != n {
            return Err(Error::MalformedAnnotation(format!(
                "sentences cover {expected_start} of {n} tokens"
            )));
        }
        for r in &self.sentences {
            let mut roots = 0;
            for t in &self.tokens[r.clone()] {
                match t.head {
                    None => roots += 1,
                    Some(h) if h >= n => {
                        return Err(Error::MalformedAnnotation(format!(
                            "token {} has dangling head {h} (document has {n} tokens)",
                            t.index
                        )))
                    }
                    Some(h) if !r.contains(&h) => {
                        return Err(Error::MalformedAnnotation(format!(
                            "token {} has head {h} outside its sentence {r:?}",
                            t.index
                        )))
                    }
                    Some(h) if h == t.index => {
                        return Err(Error::MalformedAnnotation(format!(
                            "token {} is its own head",
                            t.index
                        )))
                    }
                    Some(_) => {}
                }
            }
            if roots != 1 {
                return Err(Error::MalformedAnnotation(format!(
                    "sentence {r:?} has {roots} roots, expected exactly one"
                )));
            }
            for t in &self.tokens[r.clone()] {
                let mut cur = t.head;
                let mut steps = 0;
                while let Some(h) = cur {
                    steps += 1;
                    if steps > r.len() {
                        return Err(Error::MalformedAnnotation(format!(
                            "head chain from token {} contains a cycle",
                            t.index
                        )));
                    }
                    cur = self.tokens[h].head;
                }
            }
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        if let Some(id) = &self.id {
            let _ = writeln!(out, "#doc {id}");
        }
        for (si, r) in self.sentences.iter().enumerate() {
            if si > 0 {
                out.push('\n');
            }
            for t in &self.tokens[r.clone()] {
                let head = t.head.map(|h| h as i64).unwrap_or(-1);
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    t.index, t.text, t.lemma, t.pos, head, t.dep, t.is_stop
                );
            }
        }
        out
    }
}

/// Row used by [`AnnotatedDocument::from_sentences`]; `head` is sentence-relative.
#[derive(Debug, Clone)]
pub struct TokenSpec {
    pub text: String,
    pub lemma: String,
    pub pos: UPos,
    pub head: Option<usize>,
    pub dep: String,
    pub is_stop: bool,
}

impl TokenSpec {
    pub fn new(text: &str, lemma: &str, pos: UPos, head: Option<usize>, dep: &str, is_stop: bool) -> Self {
        Self {
            text: text.to_string(),
            lemma: lemma.to_string(),
            pos,
            head,
            dep: dep.to_string(),
            is_stop,
        }
    }
}

pub fn write_documents(docs: &[AnnotatedDocument]) -> String {
    docs.iter().map(AnnotatedDocument::to_tsv).collect::<Vec<_>>().join("\n")
}

/// Parses every document in an annotation file body.
pub fn parse_documents(src: &str) -> Result<Vec<AnnotatedDocument>> {
    let mut docs = Vec::new();
    let mut current: Option<AnnotatedDocument> = None;
    let mut sentence_start = 0usize;

    fn close_sentence(doc: &mut AnnotatedDocument, start: &mut usize) {
        if doc.tokens.len() > *start {
            doc.sentences.push(*start..doc.tokens.len());
            *start = doc.tokens.len();
        }
    }

    for (lineno, raw) in src.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if let Some(rest) = line.strip_prefix("#doc") {
            if let Some(mut doc) = current.take() {
                close_sentence(&mut doc, &mut sentence_start);
                docs.push(doc);
            }
            let id = rest.trim();
            current = Some(AnnotatedDocument {
                id: (!id.is_empty()).then(|| id.to_string()),
                ..Default::default()
            });
            sentence_start = 0;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if line.trim().is_empty() {
            if let Some(doc) = current.as_mut() {
                close_sentence(doc, &mut sentence_start);
            }
            continue;
        }
        let doc = current.get_or_insert_with(AnnotatedDocument::default);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(Error::Annotation {
                line: line_no,
                message: format!("expected 7 tab-separated fields, found {}", fields.len()),
            });
        }
        let bad = |message: String| Error::Annotation {
            line: line_no,
            message,
        };
        let index: usize = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad index {:?}", fields[0])))?;
        let pos: UPos = fields[3].parse().map_err(bad)?;
        let head: i64 = fields[4]
            .parse()
            .map_err(|_| bad(format!("bad head {:?}", fields[4])))?;
        let head = match head {
            -1 => None,
            h if h >= 0 => Some(h as usize),
            h => return Err(bad(format!("head {h} must be -1 or a token index"))),
        };
        let is_stop = match fields[6].to_ascii_lowercase().as_str() {
            "true" | "1" => true,
            "false" | "0" => false,
            other => return Err(bad(format!("bad is_stop flag {other:?}"))),
        };
        doc.tokens.push(AnnotatedToken {
            index,
            text: fields[1].to_string(),
            lemma: fields[2].to_string(),
            pos,
            head,
            dep: fields[5].to_string(),
            is_stop,
        });
    }
    if let Some(mut doc) = current.take() {
        close_sentence(&mut doc, &mut sentence_start);
        docs.push(doc);
    }
    for doc in &docs {
        doc.validate()?;
    }
    Ok(docs)
}

pub fn read_documents(path: &Path) -> Result<Vec<AnnotatedDocument>> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_documents(&src)
}

/// Reads a file that must hold exactly one document (a generated description).
pub fn read_document(path: &Path) -> Result<AnnotatedDocument> {
    let mut docs = read_documents(path)?;
    match docs.len() {
        1 => Ok(docs.pop().unwrap()),
        n => Err(Error::MalformedAnnotation(format!(
            "{} holds {n} documents, expected one",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RED_CAR: &str = "\
#doc s1
0\ta\ta\tDET\t2\tdet\ttrue
1\tred\tred\tADJ\t2\tamod\tfalse
2\tcar\tcar\tNOUN\t-1\tROOT\tfalse

3\tIt\tit\tPRON\t4\tnsubj\ttrue
4\tmoves\tmove\tVERB\t-1\tROOT\tfalse
";

    #[test]
    fn parses_sentences_and_heads() {
        let docs = parse_documents(RED_CAR).unwrap();
        assert_eq!(docs.len(), 1);
        let d = &docs[0];
        assert_eq!(d.id.as_deref(), Some("s1"));
        assert_eq!(d.sentences, vec![0..3, 3..5]);
        assert_eq!(d.tokens[1].head, Some(2));
        assert_eq!(d.head_of(&d.tokens[1]).unwrap().text, "car");
        assert!(d.tokens[0].is_stop);
    }

    #[test]
    fn round_trips_through_tsv() {
        let docs = parse_documents(RED_CAR).unwrap();
        let again = parse_documents(&write_documents(&docs)).unwrap();
        assert_eq!(docs, again);
    }

    #[test]
    fn dangling_head_is_rejected() {
        let src = "0\ta\ta\tDET\t9\tdet\ttrue\n1\tcar\tcar\tNOUN\t-1\tROOT\tfalse\n";
        let err = parse_documents(src).unwrap_err();
        assert!(err.to_string().contains("dangling"), "{err}");
    }

    #[test]
    fn two_roots_rejected() {
        let src = "0\tcar\tcar\tNOUN\t-1\tROOT\tfalse\n1\tbus\tbus\tNOUN\t-1\tROOT\tfalse\n";
        assert!(parse_documents(src).is_err());
    }

    #[test]
    fn cycle_rejected() {
        let src = "0\ta\ta\tDET\t1\tdet\ttrue\n1\tb\tb\tNOUN\t0\tdep\tfalse\n2\tc\tc\tVERB\t-1\tROOT\tfalse\n";
        let err = parse_documents(src).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn wrong_field_count_names_line() {
        let err = parse_documents("0\ta\ta\tDET\n").unwrap_err();
        assert!(matches!(err, Error::Annotation { line: 1, .. }));
    }

    #[test]
    fn multiple_documents() {
        let src = "#doc a\n0\tcar\tcar\tNOUN\t-1\tROOT\tfalse\n#doc b\n0\tbus\tbus\tNOUN\t-1\tROOT\tfalse\n";
        let docs = parse_documents(src).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[1].tokens[0].lemma, "bus");
    }
}
