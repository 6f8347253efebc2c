use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Four-way hallucination taxonomy. Discriminants are the class indices used
/// by the membership network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HallucinationLabel {
    Correct = 0,
    #[serde(rename = "CATEGORY_HALLUC")]
    Category = 1,
    #[serde(rename = "ATTRIBUTE_HALLUC")]
    Attribute = 2,
    #[serde(rename = "RELATION_HALLUC")]
    Relation = 3,
}

pub const NUM_CLASSES: usize = 4;

impl HallucinationLabel {
    pub const ALL: [HallucinationLabel; NUM_CLASSES] = [
        HallucinationLabel::Correct,
        HallucinationLabel::Category,
        HallucinationLabel::Attribute,
        HallucinationLabel::Relation,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn is_hallucination(self) -> bool {
        self != HallucinationLabel::Correct
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HallucinationLabel::Correct => "CORRECT",
            HallucinationLabel::Category => "CATEGORY_HALLUC",
            HallucinationLabel::Attribute => "ATTRIBUTE_HALLUC",
            HallucinationLabel::Relation => "RELATION_HALLUC",
        }
    }

    /// Severity rank used when several chunk labels collapse into one
    /// (category dominates attribute, attribute dominates relation).
    pub fn severity(self) -> u8 {
        match self {
            HallucinationLabel::Correct => 0,
            HallucinationLabel::Relation => 1,
            HallucinationLabel::Attribute => 2,
            HallucinationLabel::Category => 3,
        }
    }

    /// Most severe label of a collection; `Correct` when empty.
    pub fn dominant<I: IntoIterator<Item = HallucinationLabel>>(labels: I) -> HallucinationLabel {
        labels
            .into_iter()
            .max_by_key(|l| l.severity())
            .unwrap_or(HallucinationLabel::Correct)
    }
}

impl fmt::Display for HallucinationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HallucinationLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Dataset(format!("unknown label {s:?}")))
    }
}
