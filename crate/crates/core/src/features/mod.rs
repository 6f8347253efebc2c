//! Feature extraction: the 74 model-internal features and the 3 chunk
//! features that form one membership-network input.

pub mod baseline;
pub mod multimodal;
pub mod schema;
pub mod stats;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::chunker::Segment;
use crate::error::{Error, Result};
use crate::scalar::{widen, Scalar};
use crate::trace::GenerationTrace;

pub use baseline::BASELINE_LEN;
pub use multimodal::MULTIMODAL_LEN;
pub use schema::{
    feature_index, feature_names, schema, schema_hash, FeatureBlock, FeatureDescriptor, NUM_CHUNK_FEATURES,
    NUM_FEATURES, NUM_MAIN_FEATURES,
};

/// A contiguous run of generated tokens within a trace. Hidden states are
/// the span's rows; attention is every head's query rows for the span
/// against all keys.
#[derive(Debug, Clone)]
pub struct TraceSpan<'a> {
    pub trace: &'a GenerationTrace,
    pub tokens: Range<usize>,
}

impl<'a> TraceSpan<'a> {
    pub fn full(trace: &'a GenerationTrace) -> Self {
        Self {
            trace,
            tokens: 0..trace.num_tokens(),
        }
    }

    /// Span over the inclusive token range `(start, end)`.
    pub fn new(trace: &'a GenerationTrace, (start, end): (usize, usize)) -> Result<Self> {
        if start > end || end >= trace.num_tokens() {
            return Err(Error::Shape(format!(
                "span ({start}, {end}) outside a trace of {} tokens",
                trace.num_tokens()
            )));
        }
        Ok(Self {
            trace,
            tokens: start..end + 1,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.trace.hidden.values().next().map_or(0, |t| t.shape[1])
    }

    pub fn hidden<T: Scalar>(&self, layer: usize) -> Result<Vec<T>> {
        let t = self.trace.hidden_layer(layer)?;
        let d = t.shape[1];
        if t.shape[0] != self.trace.num_tokens() {
            return Err(Error::Shape(format!(
                "hidden layer {layer} has {} rows for {} tokens",
                t.shape[0],
                self.trace.num_tokens()
            )));
        }
        Ok(widen(&t.data[self.tokens.start * d..self.tokens.end * d]))
    }

    /// Flattened attention slice. Tensors whose second-to-last axis does not
    /// run over tokens (e.g. a single pooled row) are used whole.
    pub fn attention<T: Scalar>(&self, layer: usize) -> Result<Vec<T>> {
        let t = self.trace.attention.get(&layer).ok_or(Error::MissingLayer(layer))?;
        let n = self.trace.num_tokens();
        if t.shape.len() < 2 || t.shape[t.shape.len() - 2] != n {
            return Ok(widen(&t.data));
        }
        let keys = t.shape[t.shape.len() - 1];
        let heads: usize = t.shape[..t.shape.len() - 2].iter().product();
        let mut out = Vec::with_capacity(heads * self.tokens.len() * keys);
        for h in 0..heads {
            let base = h * n * keys;
            out.extend(widen::<T>(
                &t.data[base + self.tokens.start * keys..base + self.tokens.end * keys],
            ));
        }
        Ok(out)
    }

    pub fn p_max<T: Scalar>(&self) -> Vec<T> {
        widen(&self.trace.p_max[self.tokens.clone()])
    }

    pub fn tokens(&self) -> &'a [String] {
        &self.trace.token_strings[self.tokens.clone()]
    }
}

/// Which tokens the 74 model-internal features are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureScope {
    /// Only the segment's own tokens.
    #[default]
    Span,
    /// The whole generated text, shared by every segment of a sample.
    Sample,
}

impl std::str::FromStr for FeatureScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "span" => Ok(Self::Span),
            "sample" => Ok(Self::Sample),
            _ => Err(Error::Config(format!("unknown feature scope {s:?}"))),
        }
    }
}

/// Disabled blocks are emitted as zeros so the row layout never changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureToggles {
    pub baseline: bool,
    pub multimodal: bool,
}

impl Default for FeatureToggles {
    fn default() -> Self {
        Self {
            baseline: true,
            multimodal: true,
        }
    }
}

pub fn main_features<T: Scalar>(span: &TraceSpan<'_>, toggles: FeatureToggles) -> Result<Vec<T>> {
    let mut out = if toggles.baseline {
        baseline::baseline_bank(span)?
    } else {
        vec![T::zero(); BASELINE_LEN]
    };
    if toggles.multimodal {
        out.extend(multimodal::multimodal_features::<T>(span)?);
    } else {
        out.extend(std::iter::repeat(T::zero()).take(MULTIMODAL_LEN));
    }
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(out)
}

/// `[74 | cwc, cpi, crp]` for one segment.
pub fn segment_row<T: Scalar>(
    trace: &GenerationTrace,
    segment: &Segment,
    scope: FeatureScope,
    toggles: FeatureToggles,
) -> Result<Vec<T>> {
    let span = match scope {
        FeatureScope::Span => TraceSpan::new(trace, segment.span)?,
        FeatureScope::Sample => TraceSpan::full(trace),
    };
    let mut row = main_features(&span, toggles)?;
    row.extend([T::of_usize(segment.cwc), T::of_usize(segment.cpi), T::of(segment.crp)]);
    Ok(row)
}

/// Rows for every segment of a sample. Under [`FeatureScope::Sample`] the
/// main block is computed once and shared.
pub fn sample_rows<T: Scalar>(
    trace: &GenerationTrace,
    segments: &[Segment],
    scope: FeatureScope,
    toggles: FeatureToggles,
) -> Result<Vec<Vec<T>>> {
    let shared = match scope {
        FeatureScope::Sample if !segments.is_empty() => Some(main_features::<T>(&TraceSpan::full(trace), toggles)?),
        _ => None,
    };
    segments
        .iter()
        .map(|s| match &shared {
            Some(main) => {
                let mut row = main.clone();
                row.extend([T::of_usize(s.cwc), T::of_usize(s.cpi), T::of(s.crp)]);
                Ok(row)
            }
            None => segment_row(trace, s, scope, toggles),
        })
        .collect()
}
