//! Names and indices of the 77 model inputs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::baseline::{ATTENTION_METRICS, HIDDEN_METRICS, PROBABILITY_STATS};
use super::stats::SUMMARY_NAMES;

pub const NUM_MAIN_FEATURES: usize = 74;
pub const NUM_CHUNK_FEATURES: usize = 3;
pub const NUM_FEATURES: usize = NUM_MAIN_FEATURES + NUM_CHUNK_FEATURES;

pub const MULTIMODAL_NAMES: [&str; 12] = [
    "lcf.consistency",
    "lcf.inconsistency",
    "acf.mean_abs_gini",
    "acf.std_abs_gini",
    "conf.mean_perplexity",
    "conf.std_perplexity",
    "conf.trend",
    "conf.mean_probability",
    "conf.low_confidence_fraction",
    "tok.unique_repetition_ratio",
    "tok.bigram_repetition_ratio",
    "tok.normalized_unique_tokens",
];

pub const CHUNK_NAMES: [&str; 3] = ["chunk.word_count", "chunk.per_image", "chunk.relative_position"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureBlock {
    Hidden,
    Attention,
    Probability,
    LayerConsistency,
    AttentionConcentration,
    Confidence,
    TokenPattern,
    Chunk,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    /// 1-based position in the input vector.
    pub index: usize,
    pub name: String,
    pub block: FeatureBlock,
}

pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(NUM_FEATURES);
    for m in HIDDEN_METRICS {
        names.extend(SUMMARY_NAMES.iter().map(|s| format!("hidden.{m}.{s}")));
    }
    for m in ATTENTION_METRICS {
        names.extend(SUMMARY_NAMES.iter().map(|s| format!("attn.{m}.{s}")));
    }
    names.extend(PROBABILITY_STATS.iter().map(|s| format!("prob.{s}")));
    names.extend(MULTIMODAL_NAMES.iter().map(|s| s.to_string()));
    names.extend(CHUNK_NAMES.iter().map(|s| s.to_string()));
    names
}

fn block_of(index0: usize) -> FeatureBlock {
    match index0 {
        0..=29 => FeatureBlock::Hidden,
        30..=49 => FeatureBlock::Attention,
        50..=61 => FeatureBlock::Probability,
        62..=63 => FeatureBlock::LayerConsistency,
        64..=65 => FeatureBlock::AttentionConcentration,
        66..=70 => FeatureBlock::Confidence,
        71..=73 => FeatureBlock::TokenPattern,
        _ => FeatureBlock::Chunk,
    }
}

pub fn schema() -> Vec<FeatureDescriptor> {
    feature_names()
        .into_iter()
        .enumerate()
        .map(|(i, name)| FeatureDescriptor {
            index: i + 1,
            name,
            block: block_of(i),
        })
        .collect()
}

/// 0-based position of a feature by name.
pub fn feature_index(name: &str) -> Option<usize> {
    feature_names().iter().position(|n| n == name)
}

/// Hex SHA-256 of the newline-joined feature names.
pub fn schema_hash() -> String {
    let mut h = Sha256::new();
    for n in feature_names() {
        h.update(n.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
