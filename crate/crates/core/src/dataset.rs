//! On-disk dataset formats: the sample manifest, per-segment rows and
//! prediction dumps, all line-delimited JSON.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::chunker::annotation::{read_document, read_documents, write_documents};
use crate::chunker::{AnnotatedDocument, ChunkPayload, ChunkStrategy};
use crate::error::{Error, Result};
use crate::label::{HallucinationLabel, NUM_CLASSES};
use crate::seed::{derive_seed, rng};
use crate::trace::{read_trace, synthesize_sample, write_trace, FailureProfile, GenerationTrace};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// One sample: paths are relative to the manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub trace: PathBuf,
    pub annotation: PathBuf,
    pub ground_truth: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let entries: Vec<ManifestEntry> = read_jsonl(path)?;
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.sample_id.as_str()) {
                return Err(Error::Dataset(format!("duplicate sample id {:?} in manifest", e.sample_id)));
            }
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.entries)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn load(&self, entry: &ManifestEntry) -> Result<Sample> {
        let trace = read_trace(&self.resolve(&entry.trace))?;
        if trace.sample_id != entry.sample_id {
            return Err(Error::Dataset(format!(
                "manifest names sample {:?} but its trace holds {:?}",
                entry.sample_id, trace.sample_id
            )));
        }
        Ok(Sample {
            sample_id: entry.sample_id.clone(),
            trace,
            annotation: read_document(&self.resolve(&entry.annotation))?,
            captions: read_documents(&self.resolve(&entry.ground_truth))?,
            profile: entry.profile.clone(),
        })
    }
}

/// Everything the pipeline needs for one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: String,
    pub trace: GenerationTrace,
    pub annotation: AnnotatedDocument,
    /// Annotated reference captions.
    pub captions: Vec<AnnotatedDocument>,
    pub profile: Option<String>,
}

impl Sample {
    pub fn synthetic(seed: u64, profile: FailureProfile) -> Self {
        let s = synthesize_sample(seed, profile);
        Self {
            sample_id: s.trace.sample_id.clone(),
            trace: s.trace,
            annotation: s.annotation,
            captions: s.ground_truth,
            profile: Some(profile.as_str().to_string()),
        }
    }
}

/// Seed of the `i`-th synthetic scene; every profile renders the same scene.
pub fn synthetic_seed(master: u64, i: usize) -> u64 {
    derive_seed(master, &format!("synth/sample/{i}"))
}

/// `n_per_profile` scenes under each of the five profiles, scene-major.
pub fn synthetic_corpus(master: u64, n_per_profile: usize) -> Vec<Sample> {
    (0..n_per_profile)
        .flat_map(|i| FailureProfile::ALL.map(|p| (synthetic_seed(master, i), p)))
        .map(|(seed, p)| Sample::synthetic(seed, p))
        .collect()
}

/// Writes traces, annotations, captions and `manifest.jsonl` under `out`.
pub fn write_corpus(out: &Path, samples: &[Sample]) -> Result<Manifest> {
    for sub in ["traces", "annotations", "ground_truth"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let entry = ManifestEntry {
            sample_id: s.sample_id.clone(),
            trace: PathBuf::from(format!("traces/{}.hstr", s.sample_id)),
            annotation: PathBuf::from(format!("annotations/{}.tsv", s.sample_id)),
            ground_truth: PathBuf::from(format!("ground_truth/{}.tsv", s.sample_id)),
            profile: s.profile.clone(),
        };
        write_trace(&s.trace, &out.join(&entry.trace))?;
        write_text(&out.join(&entry.annotation), &write_documents(std::slice::from_ref(&s.annotation)))?;
        write_text(&out.join(&entry.ground_truth), &write_documents(&s.captions))?;
        entries.push(entry);
    }
    let manifest = Manifest {
        root: out.to_path_buf(),
        entries,
    };
    manifest.write(&out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One segment of one sample. `features` and `label` are filled by the
/// extract and label stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRow {
    pub sample_id: String,
    pub segment: usize,
    pub strategy: ChunkStrategy,
    /// Inclusive token range.
    pub span: (usize, usize),
    pub chunks: Vec<ChunkPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<HallucinationLabel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<f64>,
}

impl ChunkRow {
    pub fn require_label(&self) -> Result<HallucinationLabel> {
        self.label.ok_or_else(|| {
            Error::Dataset(format!("row {}#{} has no label", self.sample_id, self.segment))
        })
    }
}

/// Model output for one row, enough to rebuild every report metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub segment: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    pub truth: HallucinationLabel,
    pub probs: [f64; NUM_CLASSES],
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::Dataset(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Sample ids held out for testing: `round(fraction * n)` of the distinct
/// ids, drawn with a seeded shuffle of their sorted order.
pub fn holdout_ids<'a, I>(ids: I, fraction: f64, seed: u64) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut ids: Vec<&str> = ids.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    ids.shuffle(&mut rng(derive_seed(seed, "dataset/holdout")));
    let n = (fraction * ids.len() as f64).round() as usize;
    ids.into_iter().take(n).map(str::to_string).collect()
}

/// Splits rows into (train, test) by sample id.
pub fn split_rows(rows: Vec<ChunkRow>, fraction: f64, seed: u64) -> (Vec<ChunkRow>, Vec<ChunkRow>) {
    let test = holdout_ids(rows.iter().map(|r| r.sample_id.as_str()), fraction, seed);
    rows.into_iter().partition(|r| !test.contains(&r.sample_id))
}
