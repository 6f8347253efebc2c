//! Per-sample orchestration of chunking, feature extraction and labeling.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assets::Assets;
use crate::chunker::ChunkStrategy;
use crate::dataset::{ChunkRow, Manifest, Sample};
use crate::error::{Error, Result};
use crate::features::{sample_rows, FeatureScope, FeatureToggles};
use crate::gt_matcher::{extract_ground_truth, label_segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub strategy: ChunkStrategy,
    pub scope: FeatureScope,
    pub toggles: FeatureToggles,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            strategy: ChunkStrategy::CompleteSemantic,
            scope: FeatureScope::Span,
            toggles: FeatureToggles::default(),
        }
    }
}

/// Which per-row fields to compute beyond the segmentation itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub features: bool,
    pub labels: bool,
}

impl Stages {
    pub const CHUNK: Stages = Stages {
        features: false,
        labels: false,
    };
    pub const EXTRACT: Stages = Stages {
        features: true,
        labels: false,
    };
    pub const LABEL: Stages = Stages {
        features: false,
        labels: true,
    };
    pub const ALL: Stages = Stages {
        features: true,
        labels: true,
    };
}

pub fn process_sample(sample: &Sample, assets: &Assets, cfg: &PipelineConfig, stages: Stages) -> Result<Vec<ChunkRow>> {
    sample.trace.validate()?;
    if sample.annotation.len() != sample.trace.token_strings.len() {
        return Err(Error::Dataset(format!(
            "sample {}: annotation has {} tokens, trace has {}",
            sample.sample_id,
            sample.annotation.len(),
            sample.trace.token_strings.len()
        )));
    }
    let chunker = assets.chunker();
    let segments = chunker.segment(&sample.annotation, cfg.strategy)?;
    let features = if stages.features {
        sample_rows::<f64>(&sample.trace, &segments, cfg.scope, cfg.toggles)?
    } else {
        vec![Vec::new(); segments.len()]
    };
    let gt = if stages.labels {
        Some(extract_ground_truth(&sample.captions, &chunker, &assets.lexicons)?)
    } else {
        None
    };
    Ok(segments
        .into_iter()
        .zip(features)
        .enumerate()
        .map(|(i, (seg, features))| ChunkRow {
            sample_id: sample.sample_id.clone(),
            segment: i,
            strategy: cfg.strategy,
            span: seg.span,
            label: gt.as_ref().map(|g| label_segment(&seg, g, &assets.lexicons)),
            chunks: seg.chunks.into_iter().map(|c| c.payload).collect(),
            profile: sample.profile.clone(),
            features,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub sample_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineOutput {
    /// Rows in input order, regardless of completion order.
    pub rows: Vec<ChunkRow>,
    pub failures: Vec<SampleFailure>,
    pub samples: usize,
}

fn collect(results: Vec<(String, Result<Vec<ChunkRow>>)>) -> PipelineOutput {
    let mut out = PipelineOutput {
        samples: results.len(),
        ..Default::default()
    };
    for (id, r) in results {
        match r {
            Ok(rows) => out.rows.extend(rows),
            Err(e) => {
                warn!("skipping sample {id}: {e}");
                out.failures.push(SampleFailure {
                    sample_id: id,
                    error: e.to_string(),
                });
            }
        }
    }
    out
}

pub fn process_samples(samples: &[Sample], assets: &Assets, cfg: &PipelineConfig, stages: Stages) -> PipelineOutput {
    collect(
        samples
            .par_iter()
            .map(|s| (s.sample_id.clone(), process_sample(s, assets, cfg, stages)))
            .collect(),
    )
}

pub fn process_manifest(manifest: &Manifest, assets: &Assets, cfg: &PipelineConfig, stages: Stages) -> PipelineOutput {
    collect(
        manifest
            .entries
            .par_iter()
            .map(|e| {
                let r = manifest.load(e).and_then(|s| process_sample(&s, assets, cfg, stages));
                (e.sample_id.clone(), r)
            })
            .collect(),
    )
}

/// Copies features from `with_features` onto `labeled`, matching rows by
/// sample id and segment index and checking that the spans agree.
pub fn join_features(labeled: &mut [ChunkRow], with_features: &[ChunkRow]) -> Result<()> {
    let index: std::collections::HashMap<(&str, usize), &ChunkRow> = with_features
        .iter()
        .map(|r| ((r.sample_id.as_str(), r.segment), r))
        .collect();
    for row in labeled.iter_mut() {
        let src = index.get(&(row.sample_id.as_str(), row.segment)).ok_or_else(|| {
            Error::Dataset(format!("no feature row for {}#{}", row.sample_id, row.segment))
        })?;
        if src.span != row.span || src.strategy != row.strategy {
            return Err(Error::Dataset(format!(
                "feature row {}#{} was extracted with a different segmentation",
                row.sample_id, row.segment
            )));
        }
        row.features = src.features.clone();
    }
    Ok(())
}
