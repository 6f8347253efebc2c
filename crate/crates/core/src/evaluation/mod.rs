//! Test-set metrics, permutation importance and chunking ablation.

pub mod metrics;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chunker::ChunkStrategy;
use crate::dataset::{split_rows, ChunkRow, Prediction};
use crate::error::{Error, Result};
use crate::features::{feature_names, NUM_FEATURES};
use crate::label::{HallucinationLabel, NUM_CLASSES};
use crate::membership::{train, LabeledExample, MembershipModel, TrainConfig};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng};
use crate::trace::FailureProfile;

pub use metrics::{argmax, auc_roc, averages, binary_auc, hallucination_score, macro_auc, Averages, ClassScores, ConfusionMatrix};

/// Rows with labels and 77 features, as training examples.
pub fn to_examples<T: Scalar>(rows: &[ChunkRow]) -> Result<Vec<LabeledExample<T>>> {
    rows.iter()
        .map(|r| {
            if r.features.len() != NUM_FEATURES {
                return Err(Error::Dataset(format!(
                    "row {}#{} has {} features, expected {NUM_FEATURES}",
                    r.sample_id,
                    r.segment,
                    r.features.len()
                )));
            }
            Ok(LabeledExample {
                sample_id: r.sample_id.clone(),
                features: r.features.iter().map(|&v| T::of(v)).collect(),
                label: r.require_label()?,
            })
        })
        .collect()
}

pub fn predict_rows<T: Scalar>(model: &MembershipModel<T>, rows: &[ChunkRow]) -> Result<Vec<Prediction>> {
    rows.par_iter()
        .map(|r| {
            let x: Vec<T> = r.features.iter().map(|&v| T::of(v)).collect();
            let p = model.predict_proba(&x)?;
            Ok(Prediction {
                sample_id: r.sample_id.clone(),
                segment: r.segment,
                profile: r.profile.clone(),
                truth: r.require_label()?,
                probs: p.map(|v| v.as_f64()),
            })
        })
        .collect()
}

/// Per-sample hallucination scores: the largest segment score of each
/// sample, with the sample counted as hallucinated when its profile is not
/// `GROUNDED` or, without a profile, when any of its segments is.
pub fn sample_scores(preds: &[Prediction]) -> (Vec<f64>, Vec<bool>) {
    let mut by_sample: BTreeMap<&str, (f64, bool)> = BTreeMap::new();
    for p in preds {
        let truth = match &p.profile {
            Some(name) => name != FailureProfile::Grounded.as_str(),
            None => p.truth.is_hallucination(),
        };
        let e = by_sample.entry(&p.sample_id).or_insert((f64::NEG_INFINITY, false));
        e.0 = e.0.max(hallucination_score(&p.probs));
        e.1 |= truth;
    }
    by_sample.values().copied().unzip()
}

pub fn sample_auc(preds: &[Prediction]) -> Result<f64> {
    let (s, l) = sample_scores(preds);
    auc_roc(&s, &l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// 1-based schema index.
    pub index: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImportanceMetric {
    BinaryAuc,
    MacroAuc,
}

impl std::str::FromStr for ImportanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary-auc" => Ok(Self::BinaryAuc),
            "macro-auc" => Ok(Self::MacroAuc),
            _ => Err(Error::Config(format!("unknown importance metric {s:?}"))),
        }
    }
}

impl ImportanceMetric {
    fn score<T: Scalar>(self, probs: &[[T; NUM_CLASSES]], truth: &[HallucinationLabel]) -> Result<f64> {
        match self {
            ImportanceMetric::BinaryAuc => binary_auc(probs, truth),
            ImportanceMetric::MacroAuc => macro_auc(probs, truth),
        }
    }
}

/// `Δ_f = metric(original) - mean_r metric(column f shuffled)` over
/// `repeats` shuffles, ranked by decreasing `Δ`.
pub fn permutation_importance<T: Scalar>(
    model: &MembershipModel<T>,
    rows: &[Vec<T>],
    truth: &[HallucinationLabel],
    metric: ImportanceMetric,
    repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance>> {
    let base_probs = model.predict_batch(rows)?;
    let base = metric.score(&base_probs, truth)?;
    let names = feature_names();
    let mut out: Vec<FeatureImportance> = (0..NUM_FEATURES)
        .into_par_iter()
        .map(|f| {
            let mut r = rng(derive_seed(seed, &format!("importance/{f}")));
            let mut column: Vec<T> = rows.iter().map(|x| x[f]).collect();
            let mut x = vec![T::zero(); NUM_FEATURES];
            let mut total = 0.0;
            for _ in 0..repeats {
                column.shuffle(&mut r);
                let probs = rows
                    .iter()
                    .zip(&column)
                    .map(|(row, &v)| {
                        x.copy_from_slice(row);
                        x[f] = v;
                        model.predict_proba(&x)
                    })
                    .collect::<Result<Vec<_>>>()?;
                total += metric.score(&probs, truth)?;
            }
            Ok(FeatureImportance {
                feature: names[f].clone(),
                index: f + 1,
                delta: base - total / repeats.max(1) as f64,
            })
        })
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| b.delta.total_cmp(&a.delta).then(a.index.cmp(&b.index)));
    Ok(out)
}

/// Provenance recorded with a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ReportContext {
    pub schema_hash: String,
    pub stopwords_hash: String,
    pub config: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// CORRECT against any hallucination, per segment; the headline number.
    pub binary_auc: Option<f64>,
    /// Mean one-vs-rest AUC over the classes present.
    pub macro_auc: Option<f64>,
    /// Binary AUC per sample, scored by the most suspicious segment.
    pub sample_auc: Option<f64>,
    pub binary: ClassScores,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub per_class: BTreeMap<HallucinationLabel, ClassScores>,
    pub confusion: ConfusionMatrix,
    pub rows: usize,
    pub samples: usize,
    pub importance: Vec<FeatureImportance>,
    pub context: ReportContext,
}

/// Builds the report from predictions alone, so it can be regenerated
/// from a prediction dump.
pub fn evaluate(preds: &[Prediction], importance: Vec<FeatureImportance>, context: ReportContext) -> EvalReport {
    let probs: Vec<[f64; NUM_CLASSES]> = preds.iter().map(|p| p.probs).collect();
    let truth: Vec<HallucinationLabel> = preds.iter().map(|p| p.truth).collect();
    let predicted: Vec<HallucinationLabel> = probs.iter().map(argmax).collect();
    let confusion = ConfusionMatrix::from_pairs(&truth, &predicted);
    let (macro_avg, weighted_avg) = averages(&confusion);
    let samples: BTreeSet<&str> = preds.iter().map(|p| p.sample_id.as_str()).collect();
    EvalReport {
        binary_auc: binary_auc(&probs, &truth).ok(),
        macro_auc: macro_auc(&probs, &truth).ok(),
        sample_auc: sample_auc(preds).ok(),
        binary: confusion.binary_scores(),
        macro_avg,
        weighted_avg,
        per_class: HallucinationLabel::ALL.iter().map(|&c| (c, confusion.class_scores(c))).collect(),
        confusion,
        rows: preds.len(),
        samples: samples.len(),
        importance,
        context,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |x| format!("{x:.4}"))
}

/// Human-readable tables for a report.
pub fn render_report(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "rows {}  samples {}", r.rows, r.samples);
    let _ = writeln!(s, "binary AUC (segment)  {}", opt(r.binary_auc));
    let _ = writeln!(s, "binary AUC (sample)   {}", opt(r.sample_auc));
    let _ = writeln!(s, "macro OvR AUC         {}", opt(r.macro_auc));
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<22}{:>10}{:>10}{:>10}{:>10}", "class", "precision", "recall", "f1", "support");
    for (c, sc) in &r.per_class {
        let _ = writeln!(
            s,
            "{:<22}{:>10.4}{:>10.4}{:>10.4}{:>10}",
            c.as_str(),
            sc.precision,
            sc.recall,
            sc.f1,
            sc.support
        );
    }
    let b = &r.binary;
    let _ = writeln!(s, "{:<22}{:>10.4}{:>10.4}{:>10.4}{:>10}", "any hallucination", b.precision, b.recall, b.f1, b.support);
    for (name, a) in [("macro avg", &r.macro_avg), ("weighted avg", &r.weighted_avg)] {
        let _ = writeln!(s, "{:<22}{:>10.4}{:>10.4}{:>10.4}", name, a.precision, a.recall, a.f1);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "confusion (rows: truth, columns: predicted)");
    let _ = write!(s, "{:<22}", "");
    for c in HallucinationLabel::ALL {
        let _ = write!(s, "{:>18}", c.as_str());
    }
    let _ = writeln!(s);
    for c in HallucinationLabel::ALL {
        let _ = write!(s, "{:<22}", c.as_str());
        for v in r.confusion.matrix[c.index()] {
            let _ = write!(s, "{v:>18}");
        }
        let _ = writeln!(s);
    }
    if !r.importance.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "permutation importance (top 10)");
        for (rank, f) in r.importance.iter().take(10).enumerate() {
            let _ = writeln!(s, "{:>3}. {:<36}{:>+10.4}", rank + 1, f.feature, f.delta);
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub strategy: ChunkStrategy,
    pub samples: usize,
    pub avg_chunks: f64,
    /// Segment-level binary AUC on the held-out samples.
    pub auc: Option<f64>,
    pub sample_auc: Option<f64>,
}

/// Trains one model per strategy with the same configuration and the same
/// held-out samples, and scores each on its own segmentation.
pub fn chunking_ablation(
    datasets: &[(ChunkStrategy, Vec<ChunkRow>)],
    cfg: &TrainConfig,
    test_fraction: f64,
) -> Result<Vec<AblationRow>> {
    let ids = |rows: &[ChunkRow]| rows.iter().map(|r| r.sample_id.clone()).collect::<BTreeSet<_>>();
    if let Some((first, rest)) = datasets.split_first() {
        let reference = ids(&first.1);
        for (strategy, rows) in rest {
            let other = ids(rows);
            if other != reference {
                let diff: Vec<&String> = reference.symmetric_difference(&other).take(3).collect();
                return Err(Error::MismatchedSamples(format!(
                    "{strategy} differs from {} on {diff:?}",
                    first.0
                )));
            }
        }
    }
    datasets
        .par_iter()
        .map(|(strategy, rows)| {
            let samples = ids(rows).len();
            let (train_rows, test_rows) = split_rows(rows.clone(), test_fraction, cfg.seed);
            let (model, _) = train::<f64>(&to_examples(&train_rows)?, cfg)?;
            let preds = predict_rows(&model, &test_rows)?;
            let probs: Vec<[f64; NUM_CLASSES]> = preds.iter().map(|p| p.probs).collect();
            let truth: Vec<HallucinationLabel> = preds.iter().map(|p| p.truth).collect();
            Ok(AblationRow {
                strategy: *strategy,
                samples,
                avg_chunks: rows.len() as f64 / samples.max(1) as f64,
                auc: binary_auc(&probs, &truth).ok(),
                sample_auc: sample_auc(&preds).ok(),
            })
        })
        .collect()
}

pub fn render_ablation(rows: &[AblationRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<22}{:>10}{:>14}{:>12}{:>14}", "strategy", "samples", "chunks/sample", "AUC", "sample AUC");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<22}{:>10}{:>14.2}{:>12}{:>14}",
            r.strategy.title(),
            r.samples,
            r.avg_chunks,
            opt(r.auc),
            opt(r.sample_auc)
        );
    }
    s
}
