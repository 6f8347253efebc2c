//! Recorded generation internals and their on-disk container.

pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::container::{Container, NamedTensor, TensorData};
use crate::error::{Error, Result};

pub use synth::{synthesize_sample, synthesize_trace, FailureProfile, SyntheticSample};

pub const TRACE_MAGIC: [u8; 4] = *b"HSTR";

/// Layer stride of the persisted hidden states.
pub const HIDDEN_LAYER_STRIDE: usize = 2;
/// Number of trailing layers whose attention is persisted.
pub const ATTENTION_LAYERS: usize = 3;
pub const MIN_LAYERS: usize = 4;

/// Row-major `f32` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        let width = self.shape.last().copied().unwrap_or(1).max(1);
        self.data.chunks(width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationTrace {
    pub sample_id: String,
    pub generated_text: String,
    pub token_strings: Vec<String>,
    /// Vocabulary ids of the generated tokens; empty when not recorded.
    pub token_ids: Vec<i64>,
    /// Index of the first text-decoder layer (0 for text-only models).
    pub text_start: usize,
    pub num_layers: usize,
    /// Selected layers, each `(T_gen x d)`.
    pub hidden: BTreeMap<usize, Tensor>,
    /// Flattened attention weights of the last three layers.
    pub attention: BTreeMap<usize, Tensor>,
    /// Probability of the chosen token at each step.
    pub p_max: Vec<f32>,
    pub meta: BTreeMap<String, String>,
}

/// "Early" decoder layer compared against the late one for layer
/// consistency: `min(text_start + 5, num_layers - 10)`, floored at 0.
pub fn early_layer(text_start: usize, num_layers: usize) -> usize {
    (text_start + 5).min(num_layers.saturating_sub(10))
}

/// Second-to-last layer.
pub fn late_layer(num_layers: usize) -> usize {
    num_layers.saturating_sub(2)
}

/// Layers whose hidden states a capture must persist: every second layer
/// from `text_start`, plus the early and late consistency layers.
pub fn persisted_hidden_layers(text_start: usize, num_layers: usize) -> BTreeSet<usize> {
    let mut layers: BTreeSet<usize> = (text_start..num_layers).step_by(HIDDEN_LAYER_STRIDE).collect();
    layers.insert(early_layer(text_start, num_layers));
    layers.insert(late_layer(num_layers));
    layers
}

pub fn attention_layer_indices(num_layers: usize) -> BTreeSet<usize> {
    (num_layers.saturating_sub(ATTENTION_LAYERS)..num_layers).collect()
}

impl GenerationTrace {
    pub fn num_tokens(&self) -> usize {
        self.token_strings.len()
    }

    pub fn hidden_layer(&self, layer: usize) -> Result<&Tensor> {
        self.hidden.get(&layer).ok_or(Error::MissingLayer(layer))
    }

    /// Reports the first violated invariant.
    pub fn validate(&self) -> Result<()> {
        let inv = |m: String| Err(Error::TraceInvariant(m));
        if self.num_layers < MIN_LAYERS {
            return inv(format!("num_layers {} < {MIN_LAYERS}", self.num_layers));
        }
        if self.text_start >= self.num_layers {
            return inv(format!(
                "text_start {} must be below num_layers {}",
                self.text_start, self.num_layers
            ));
        }
        if self.p_max.len() != self.token_strings.len() {
            return inv(format!(
                "p_max has {} entries for {} tokens",
                self.p_max.len(),
                self.token_strings.len()
            ));
        }
        if !self.token_ids.is_empty() && self.token_ids.len() != self.token_strings.len() {
            return inv(format!(
                "token_ids has {} entries for {} tokens",
                self.token_ids.len(),
                self.token_strings.len()
            ));
        }
        if let Some((t, p)) = self
            .p_max
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p > 0.0 && p <= 1.0))
        {
            return Err(Error::Range(format!("p_max[{t}] = {p} is outside (0, 1]")));
        }

        let mut shape: Option<&Vec<usize>> = None;
        for (&layer, t) in &self.hidden {
            if layer >= self.num_layers {
                return inv(format!("hidden layer {layer} >= num_layers {}", self.num_layers));
            }
            check_tensor(t, "hidden", layer)?;
            if t.shape.len() != 2 {
                return inv(format!("hidden layer {layer} has rank {}, expected 2", t.shape.len()));
            }
            match shape {
                None => shape = Some(&t.shape),
                Some(s) if s != &t.shape => {
                    return inv(format!(
                        "hidden layer {layer} has shape {:?}, others {:?}",
                        t.shape, s
                    ))
                }
                Some(_) => {}
            }
            if let Some(v) = t.data.iter().find(|v| !v.is_finite()) {
                return inv(format!("hidden layer {layer} holds non-finite value {v}"));
            }
        }

        let expected = attention_layer_indices(self.num_layers);
        let present: BTreeSet<usize> = self.attention.keys().copied().collect();
        if present != expected {
            return inv(format!(
                "attention layers {present:?}, expected exactly the last three {expected:?}"
            ));
        }
        for (&layer, t) in &self.attention {
            check_tensor(t, "attention", layer)?;
            if t.is_empty() {
                return inv(format!("attention layer {layer} is empty"));
            }
            if let Some(v) = t.data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return inv(format!("attention layer {layer} holds invalid weight {v}"));
            }
        }
        Ok(())
    }

    pub fn to_container(&self) -> Result<Container> {
        let attributes = serde_json::to_value(TraceAttributes {
            sample_id: self.sample_id.clone(),
            generated_text: self.generated_text.clone(),
            token_strings: self.token_strings.clone(),
            token_ids: self.token_ids.clone(),
            text_start: self.text_start,
            num_layers: self.num_layers,
            meta: self.meta.clone(),
        })?;
        let mut c = Container::new(TRACE_MAGIC, attributes);
        for (layer, t) in &self.hidden {
            c.push(NamedTensor::f32(format!("hidden.{layer}"), t.shape.clone(), t.data.clone()));
        }
        for (layer, t) in &self.attention {
            c.push(NamedTensor::f32(format!("attention.{layer}"), t.shape.clone(), t.data.clone()));
        }
        c.push(NamedTensor::f32("p_max", vec![self.p_max.len()], self.p_max.clone()));
        Ok(c)
    }

    pub fn from_container(c: Container) -> Result<Self> {
        let attrs: TraceAttributes =
            serde_json::from_value(c.attributes).map_err(|e| Error::Header(e.to_string()))?;
        let mut trace = GenerationTrace {
            sample_id: attrs.sample_id,
            generated_text: attrs.generated_text,
            token_strings: attrs.token_strings,
            token_ids: attrs.token_ids,
            text_start: attrs.text_start,
            num_layers: attrs.num_layers,
            hidden: BTreeMap::new(),
            attention: BTreeMap::new(),
            p_max: Vec::new(),
            meta: attrs.meta,
        };
        let mut saw_p_max = false;
        for t in c.tensors {
            let TensorData::F32(data) = t.data else {
                return Err(Error::Layout(format!("trace tensor {} must be f32", t.name)));
            };
            let parse_layer = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::Layout(format!("bad layer index in tensor name {:?}", t.name)))
            };
            if let Some(l) = t.name.strip_prefix("hidden.") {
                trace.hidden.insert(parse_layer(l)?, Tensor::new(t.shape, data)?);
            } else if let Some(l) = t.name.strip_prefix("attention.") {
                trace.attention.insert(parse_layer(l)?, Tensor::new(t.shape, data)?);
            } else if t.name == "p_max" {
                trace.p_max = data;
                saw_p_max = true;
            } else {
                return Err(Error::Layout(format!("unexpected tensor {:?} in trace", t.name)));
            }
        }
        if !saw_p_max {
            return Err(Error::Layout("trace has no p_max tensor".into()));
        }
        trace.validate()?;
        Ok(trace)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        self.to_container()?.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_container(Container::from_bytes(bytes, TRACE_MAGIC)?)
    }
}

fn check_tensor(t: &Tensor, kind: &str, layer: usize) -> Result<()> {
    let numel: usize = t.shape.iter().product();
    if numel != t.data.len() {
        return Err(Error::TraceInvariant(format!(
            "{kind} layer {layer}: shape {:?} holds {} elements",
            t.shape,
            t.data.len()
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TraceAttributes {
    sample_id: String,
    generated_text: String,
    token_strings: Vec<String>,
    #[serde(default)]
    token_ids: Vec<i64>,
    text_start: usize,
    num_layers: usize,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

/// Validates then writes; nothing touches the file if validation fails.
pub fn write_trace(trace: &GenerationTrace, path: &Path) -> Result<()> {
    let bytes = trace.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<GenerationTrace> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    GenerationTrace::from_bytes(&bytes)
}

/// Header attributes of a trace file, for inspection without decoding tensors.
pub fn trace_attributes(path: &Path) -> Result<Value> {
    Ok(Container::read(path, TRACE_MAGIC)?.attributes)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_trace() -> GenerationTrace {
        let hidden = [0usize, 2]
            .into_iter()
            .map(|l| (l, Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, l as f32 + 1.0]).unwrap()))
            .collect();
        let attention = [1usize, 2, 3]
            .into_iter()
            .map(|l| (l, Tensor::new(vec![1, 2, 2], vec![0.5, 0.5, 0.9, 0.1]).unwrap()))
            .collect();
        GenerationTrace {
            sample_id: "s0".into(),
            generated_text: "a car".into(),
            token_strings: vec!["a".into(), "car".into()],
            token_ids: vec![64, 1130],
            text_start: 0,
            num_layers: 4,
            hidden,
            attention,
            p_max: vec![0.9, 0.6],
            meta: [("model".to_string(), "unit".to_string())].into(),
        }
    }

    #[test]
    fn round_trip_identity() {
        let t = tiny_trace();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.hstr");
        write_trace(&t, &path).unwrap();
        let back = read_trace(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.num_layers, 4);
        assert_eq!(back.num_tokens(), 2);
    }

    #[test]
    fn writes_are_deterministic() {
        let t = tiny_trace();
        assert_eq!(t.to_bytes().unwrap(), t.to_bytes().unwrap());
    }

    #[test]
    fn p_max_out_of_range_rejected_before_write() {
        let mut t = tiny_trace();
        t.p_max = vec![1.2];
        t.token_strings = vec!["a".into()];
        t.token_ids.clear();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.hstr");
        let err = write_trace(&t, &path).unwrap_err();
        assert!(matches!(err, Error::Range(_)), "{err}");
        assert!(!path.exists());
    }

    #[test]
    fn zero_probability_rejected() {
        let mut t = tiny_trace();
        t.p_max[1] = 0.0;
        assert!(matches!(t.validate(), Err(Error::Range(_))));
    }

    #[test]
    fn attention_layers_must_be_last_three() {
        let mut t = tiny_trace();
        let a = t.attention.remove(&3).unwrap();
        t.attention.insert(0, a);
        assert!(matches!(t.validate(), Err(Error::TraceInvariant(_))));
    }

    #[test]
    fn hidden_shapes_must_agree() {
        let mut t = tiny_trace();
        t.hidden.insert(1, Tensor::new(vec![3, 2], vec![0.0; 6]).unwrap());
        assert!(matches!(t.validate(), Err(Error::TraceInvariant(_))));
    }

    #[test]
    fn negative_attention_rejected() {
        let mut t = tiny_trace();
        t.attention.get_mut(&2).unwrap().data[0] = -0.1;
        assert!(t.validate().is_err());
    }

    #[test]
    fn text_start_must_precede_num_layers() {
        let mut t = tiny_trace();
        t.text_start = 4;
        assert!(t.validate().is_err());
    }

    #[test]
    fn bad_magic_file() {
        let mut bytes = tiny_trace().to_bytes().unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(GenerationTrace::from_bytes(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn layer_indices() {
        assert_eq!(early_layer(4, 24), 9);
        assert_eq!(late_layer(24), 22);
        assert_eq!(early_layer(0, 32), 5);
        assert_eq!(early_layer(0, 12), 2);
        assert_eq!(early_layer(0, 4), 0);
        let layers = persisted_hidden_layers(4, 24);
        assert!(layers.contains(&9) && layers.contains(&22) && layers.contains(&4));
        assert!(!layers.contains(&5));
        assert_eq!(attention_layer_indices(24).into_iter().collect::<Vec<_>>(), vec![21, 22, 23]);
    }
}
