//! Ranking and classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{HallucinationLabel, NUM_CLASSES};
use crate::scalar::Scalar;

/// Area under the ROC curve as the Mann-Whitney statistic with midranks
/// (ties count one half).
///
/// Ranks are kept doubled so the statistic is an exact integer; the final
/// division is arranged so that `auc(s) + auc(-s) == 1` holds exactly.
pub fn auc_roc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    let n_pos = labels.iter().filter(|&&l| l).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(format!(
            "AUC needs both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(i));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("no NaN scores"));

    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based positions i+1..=j+1 share the doubled midrank i+j+2.
        let doubled = (i + j + 2) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        rank_sum2 += doubled * pos_in_group;
        i = j + 1;
    }
    let u2 = rank_sum2 - n_pos * (n_pos + 1);
    let d2 = 2 * n_pos * n_neg;
    Ok(if 2 * u2 <= d2 {
        u2 as f64 / d2 as f64
    } else {
        1.0 - (d2 - u2) as f64 / d2 as f64
    })
}

/// Binary AUC of "any hallucination" scored by `1 - P(CORRECT)`.
pub fn binary_auc<T: Scalar>(probs: &[[T; NUM_CLASSES]], truth: &[HallucinationLabel]) -> Result<f64> {
    let scores: Vec<T> = probs.iter().map(hallucination_score).collect();
    let labels: Vec<bool> = truth.iter().map(|l| l.is_hallucination()).collect();
    auc_roc(&scores, &labels)
}

pub fn hallucination_score<T: Scalar>(p: &[T; NUM_CLASSES]) -> T {
    T::one() - p[HallucinationLabel::Correct.index()]
}

/// Mean one-vs-rest AUC over the classes present in `truth` (at least two).
pub fn macro_auc<T: Scalar>(probs: &[[T; NUM_CLASSES]], truth: &[HallucinationLabel]) -> Result<f64> {
    let mut aucs = Vec::new();
    for c in HallucinationLabel::ALL {
        let labels: Vec<bool> = truth.iter().map(|&l| l == c).collect();
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            let scores: Vec<T> = probs.iter().map(|p| p[c.index()]).collect();
            aucs.push(auc_roc(&scores, &labels)?);
        }
    }
    if aucs.is_empty() {
        return Err(Error::SingleClass("macro AUC needs at least two classes".into()));
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

pub fn argmax<T: Scalar>(p: &[T; NUM_CLASSES]) -> HallucinationLabel {
    let mut best = 0;
    for i in 1..NUM_CLASSES {
        if p[i] > p[best] {
            best = i;
        }
    }
    HallucinationLabel::from_index(best).expect("class index in range")
}

/// `matrix[true][predicted]` counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub matrix: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(truth: &[HallucinationLabel], predicted: &[HallucinationLabel]) -> Self {
        let mut m = Self::default();
        for (t, p) in truth.iter().zip(predicted) {
            m.matrix[t.index()][p.index()] += 1;
        }
        m
    }

    pub fn support(&self, c: HallucinationLabel) -> u64 {
        self.matrix[c.index()].iter().sum()
    }

    pub fn predicted(&self, c: HallucinationLabel) -> u64 {
        self.matrix.iter().map(|row| row[c.index()]).sum()
    }

    pub fn total(&self) -> u64 {
        self.matrix.iter().flatten().sum()
    }

    pub fn class_scores(&self, c: HallucinationLabel) -> ClassScores {
        let tp = self.matrix[c.index()][c.index()];
        prf(tp, self.predicted(c), self.support(c))
    }

    /// Hallucination (any class but CORRECT) as the positive class.
    pub fn binary_scores(&self) -> ClassScores {
        let ok = HallucinationLabel::Correct.index();
        let predicted_pos = self.total() - self.predicted(HallucinationLabel::Correct);
        let actual_pos = self.total() - self.support(HallucinationLabel::Correct);
        let tp: u64 = (0..NUM_CLASSES)
            .filter(|&t| t != ok)
            .flat_map(|t| (0..NUM_CLASSES).filter(|&p| p != ok).map(move |p| (t, p)))
            .map(|(t, p)| self.matrix[t][p])
            .sum();
        prf(tp, predicted_pos, actual_pos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Precision, recall and F1 with 0 for empty denominators.
fn prf(tp: u64, predicted: u64, actual: u64) -> ClassScores {
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, predicted);
    let recall = ratio(tp, actual);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassScores {
        precision,
        recall,
        f1,
        support: actual,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Unweighted mean over classes with support, and support-weighted mean.
pub fn averages(cm: &ConfusionMatrix) -> (Averages, Averages) {
    let present: Vec<ClassScores> = HallucinationLabel::ALL
        .iter()
        .map(|&c| cm.class_scores(c))
        .filter(|s| s.support > 0)
        .collect();
    let k = present.len().max(1) as f64;
    let total: u64 = present.iter().map(|s| s.support).sum();
    let w = |s: &ClassScores| if total == 0 { 0.0 } else { s.support as f64 / total as f64 };
    let macro_avg = Averages {
        precision: present.iter().map(|s| s.precision).sum::<f64>() / k,
        recall: present.iter().map(|s| s.recall).sum::<f64>() / k,
        f1: present.iter().map(|s| s.f1).sum::<f64>() / k,
    };
    let weighted = Averages {
        precision: present.iter().map(|s| w(s) * s.precision).sum(),
        recall: present.iter().map(|s| w(s) * s.recall).sum(),
        f1: present.iter().map(|s| w(s) * s.f1).sum(),
    };
    (macro_avg, weighted)
}
