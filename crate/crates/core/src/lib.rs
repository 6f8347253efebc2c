//! Hallucination detection from recorded model internals: trace containers,
//! feature extraction, semantic chunking, ground-truth labeling, a 4-class
//! membership network and its evaluation.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the pipeline and the command line.

pub mod assets;
pub mod chunker;
pub mod container;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod gt_matcher;
pub mod label;
pub mod membership;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod trace;

pub use error::{Error, Result};
pub use label::HallucinationLabel;
pub use scalar::Scalar;

/// Working precision of the pipeline.
pub type Real = f64;

pub type MembershipModel = membership::MembershipModel<Real>;
pub type LabeledExample = membership::LabeledExample<Real>;
