#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use hspp_core::assets::Assets;
use hspp_core::chunker::annotation::read_documents;
use hspp_core::chunker::ChunkStrategy;
use hspp_core::gt_matcher::{classify_chunk, extract_ground_truth, label_segment};
use hspp_core::membership::{Architecture, Network};
use hspp_core::seed::rng;
use rand::Rng;
use serde::Deserialize;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[derive(Deserialize)]
struct Goldens {
    ground_truth: GoldenTruth,
    descriptions: BTreeMap<String, GoldenDescription>,
}

#[derive(Deserialize)]
struct GoldenTruth {
    objects: BTreeSet<String>,
    attributes: BTreeSet<(String, String)>,
    relations: BTreeSet<(String, String, String)>,
}

#[derive(Deserialize)]
struct GoldenDescription {
    sample: String,
    chunks: Vec<(String, (usize, usize), String)>,
}

pub struct GoldenOutcome {
    pub descriptions: usize,
    pub chunks: usize,
    pub mismatches: Vec<String>,
}

/// Runs chunk extraction and classification over the fixture descriptions
/// and compares every chunk, span and label with the hand-derived goldens.
pub fn check_goldens() -> GoldenOutcome {
    let goldens: Goldens =
        serde_json::from_str(&std::fs::read_to_string(fixture("goldens.json")).unwrap()).unwrap();
    let assets = Assets::embedded();
    let chunker = assets.chunker();
    let captions = read_documents(&fixture("captions.tsv")).unwrap();
    let docs = read_documents(&fixture("descriptions.tsv")).unwrap();
    let gt = extract_ground_truth(&captions, &chunker, &assets.lexicons).unwrap();

    let mut mismatches = Vec::new();
    if gt.objects != goldens.ground_truth.objects
        || gt.attributes != goldens.ground_truth.attributes
        || gt.relations != goldens.ground_truth.relations
    {
        mismatches.push(format!("ground truth differs: {gt:?}"));
    }
    let mut chunks = 0;
    for doc in &docs {
        let id = doc.id.clone().unwrap();
        let Some(golden) = goldens.descriptions.get(&id) else {
            mismatches.push(format!("{id}: no golden"));
            continue;
        };
        let got: Vec<(String, (usize, usize), String)> = chunker
            .extract_chunks(doc)
            .unwrap()
            .iter()
            .map(|c| (c.payload.to_string(), c.span, classify_chunk(c, &gt, &assets.lexicons).to_string()))
            .collect();
        chunks += got.len();
        if got != golden.chunks {
            mismatches.push(format!("{id}: expected {:?}, got {got:?}", golden.chunks));
        }
        let whole = chunker.segment(doc, ChunkStrategy::NoChunking).unwrap();
        let sample = label_segment(&whole[0], &gt, &assets.lexicons).to_string();
        if sample != golden.sample {
            mismatches.push(format!("{id}: sample label {sample}, expected {}", golden.sample));
        }
    }
    if docs.len() != goldens.descriptions.len() {
        mismatches.push(format!("{} descriptions for {} goldens", docs.len(), goldens.descriptions.len()));
    }
    GoldenOutcome {
        descriptions: docs.len(),
        chunks,
        mismatches,
    }
}

/// Literal double sum of the concentration formula over ascending weights.
pub fn gini_oracle(weights: &[f64]) -> f64 {
    let mut s = weights.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    let mut double = 0.0;
    for i in 1..=n {
        for j in 1..=i {
            double += s[j - 1];
        }
    }
    2.0 * double / (n as f64 * s.iter().sum::<f64>()) - 1.0
}

/// Slope of the centered least-squares line through `(t, p_t)`.
pub fn slope_oracle(p: &[f64]) -> f64 {
    let n = p.len() as f64;
    let x_bar = (n - 1.0) / 2.0;
    let y_bar = p.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, &y) in p.iter().enumerate() {
        let dx = t as f64 - x_bar;
        num += dx * (y - y_bar);
        den += dx * dx;
    }
    num / den
}

/// `[URR, BRR, NUT]` by pairwise comparison, without hashing.
pub fn token_oracle(tokens: &[String]) -> [f64; 3] {
    let n = tokens.len();
    let unique = (0..n).filter(|&i| (0..i).all(|j| tokens[j] != tokens[i])).count();
    let bigrams: Vec<(&String, &String)> = tokens.windows(2).map(|w| (&w[0], &w[1])).collect();
    let unique_bigrams = (0..bigrams.len())
        .filter(|&i| (0..i).all(|j| bigrams[j] != bigrams[i]))
        .count();
    let nut = unique as f64 / n as f64;
    let brr = if bigrams.is_empty() {
        0.0
    } else {
        1.0 - unique_bigrams as f64 / bigrams.len() as f64
    };
    [1.0 - nut, brr, nut]
}

pub struct GradientCheck {
    pub params: usize,
    /// `|g - g_fd| / max(|g|, |g_fd|)` over coordinates with a gradient
    /// above the finite-difference noise floor.
    pub max_relative: f64,
    /// `||g - g_fd|| / ||g_fd||` over all coordinates.
    pub global_relative: f64,
}

/// Central differences of the weighted loss on a 10-example batch against
/// the analytic gradient, for every parameter of a network whose gate is
/// already away from its initialization.
pub fn gradient_check(seed: u64) -> GradientCheck {
    let arch = Architecture::default();
    let mut r = rng(seed);
    let mut net: Network<f64> = Network::init(arch, &mut r);
    for p in &mut net.params[net.layout.gate_output()] {
        *p = r.gen_range(-0.5..0.5);
    }
    let xs: Vec<Vec<f64>> = (0..10).map(|_| (0..arch.input()).map(|_| r.gen_range(-2.0..2.0)).collect()).collect();
    let labels: Vec<usize> = (0..10).map(|i| i % 4).collect();
    let weights: Vec<f64> = (0..10).map(|_| r.gen_range(0.5..2.0)).collect();
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let (_, grad) = net.loss_and_gradient(&refs, &labels, &weights);

    let h = 1e-5;
    let mut max_relative: f64 = 0.0;
    let (mut diff2, mut norm2) = (0.0, 0.0);
    for i in 0..net.params.len() {
        let orig = net.params[i];
        net.params[i] = orig + h;
        let up = net.loss(&refs, &labels, &weights);
        net.params[i] = orig - h;
        let down = net.loss(&refs, &labels, &weights);
        net.params[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let g = grad[i];
        diff2 += (g - fd) * (g - fd);
        norm2 += fd * fd;
        let scale = g.abs().max(fd.abs());
        if scale > 1e-6 {
            max_relative = max_relative.max((g - fd).abs() / scale);
        }
    }
    GradientCheck {
        params: net.params.len(),
        max_relative,
        global_relative: diff2.sqrt() / norm2.sqrt(),
    }
}
