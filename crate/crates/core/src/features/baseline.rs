//! The 62-slot baseline bank: layer-to-layer distribution shift of hidden
//! states (30) and attention (20), plus token probability statistics (12).
//!
//! Every block is computed over the same [`TraceSpan`]; hidden and attention
//! tensors are flattened row-major before comparison.

use super::stats::{self, summarize};
use super::TraceSpan;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const HIDDEN_METRICS: [&str; 6] = [
    "cosine_distance",
    "mean_shift",
    "wasserstein",
    "js_divergence",
    "variance_ratio",
    "sign_flip_rate",
];
pub const ATTENTION_METRICS: [&str; 4] = ["entropy_delta", "js_divergence", "max_weight_delta", "cosine_distance"];
pub const PROBABILITY_STATS: [&str; 12] = [
    "mean",
    "std",
    "min",
    "max",
    "median",
    "first",
    "last",
    "mean_log",
    "std_log",
    "frac_below_0.25",
    "frac_below_0.75",
    "geometric_mean",
];

pub const HIDDEN_BLOCK: usize = 30;
pub const ATTENTION_BLOCK: usize = 20;
pub const PROBABILITY_BLOCK: usize = 12;
pub const BASELINE_LEN: usize = HIDDEN_BLOCK + ATTENTION_BLOCK + PROBABILITY_BLOCK;

const VARIANCE_RATIO_MIN: f64 = 1e-6;
const VARIANCE_RATIO_MAX: f64 = 1e6;

/// Six shift metrics between two equally shaped `(rows x d)` activations.
pub fn hidden_pair_metrics<T: Scalar>(a: &[T], b: &[T], d: usize) -> [T; 6] {
    let row_mean = |x: &[T]| -> Vec<T> {
        let rows = x.len() / d;
        (0..d)
            .map(|j| (0..rows).map(|r| x[r * d + j]).sum::<T>() / T::of_usize(rows))
            .collect()
    };
    let (ma, mb) = (row_mean(a), row_mean(b));
    let shift: Vec<T> = mb.iter().zip(&ma).map(|(&y, &x)| y - x).collect();

    let (va, vb) = (stats::variance_pop(a), stats::variance_pop(b));
    let ratio = if va == T::zero() && vb == T::zero() {
        T::one()
    } else if va == T::zero() {
        T::of(VARIANCE_RATIO_MAX)
    } else {
        (vb / va).max(T::of(VARIANCE_RATIO_MIN)).min(T::of(VARIANCE_RATIO_MAX))
    };
    let flips = a.iter().zip(b).filter(|(&x, &y)| x * y < T::zero()).count();

    [
        stats::cosine_distance(a, b),
        stats::norm(&shift),
        stats::wasserstein1(a, b),
        stats::js_divergence(&stats::softmax(a), &stats::softmax(b)),
        ratio,
        T::of_usize(flips) / T::of_usize(a.len()),
    ]
}

/// Four shift metrics between two flattened attention slices.
pub fn attention_pair_metrics<T: Scalar>(a: &[T], b: &[T]) -> Option<[T; 4]> {
    let pa = stats::normalize(a)?;
    let pb = stats::normalize(b)?;
    Some([
        stats::entropy(&pb) - stats::entropy(&pa),
        stats::js_divergence(&pa, &pb),
        stats::max(&pb) - stats::max(&pa),
        stats::cosine_distance(a, b),
    ])
}

fn summarize_series<T: Scalar, const M: usize>(pairs: &[[T; M]]) -> Vec<T> {
    (0..M)
        .flat_map(|m| summarize(&pairs.iter().map(|p| p[m]).collect::<Vec<_>>()))
        .collect()
}

pub fn hidden_shift_block<T: Scalar>(span: &TraceSpan<'_>) -> Result<Vec<T>> {
    let layers: Vec<usize> = span.trace.hidden.keys().copied().collect();
    if layers.len() < 2 {
        return Err(Error::Shape(format!(
            "hidden shift needs at least 2 layers, trace has {}",
            layers.len()
        )));
    }
    let d = span.hidden_dim();
    let pairs: Vec<[T; 6]> = layers
        .windows(2)
        .map(|w| Ok(hidden_pair_metrics(&span.hidden::<T>(w[0])?, &span.hidden::<T>(w[1])?, d)))
        .collect::<Result<_>>()?;
    Ok(summarize_series(&pairs))
}

pub fn attention_shift_block<T: Scalar>(span: &TraceSpan<'_>) -> Result<Vec<T>> {
    let layers: Vec<usize> = span.trace.attention.keys().copied().collect();
    if layers.len() < 2 {
        return Err(Error::Shape(format!(
            "attention shift needs at least 2 layers, trace has {}",
            layers.len()
        )));
    }
    let pairs: Vec<[T; 4]> = layers
        .windows(2)
        .map(|w| {
            let a = span.attention::<T>(w[0])?;
            let b = span.attention::<T>(w[1])?;
            attention_pair_metrics(&a, &b).ok_or(Error::ZeroAttention(if stats::normalize(&a).is_none() {
                w[0]
            } else {
                w[1]
            }))
        })
        .collect::<Result<_>>()?;
    Ok(summarize_series(&pairs))
}

pub fn probability_block<T: Scalar>(p: &[T]) -> Result<Vec<T>> {
    if p.is_empty() {
        return Err(Error::Empty("p_max"));
    }
    if let Some(bad) = p.iter().find(|&&x| !(x > T::zero() && x <= T::one())) {
        return Err(Error::Range(format!("p_max value {bad} is outside (0, 1]")));
    }
    let n = T::of_usize(p.len());
    let logs: Vec<T> = p.iter().map(|x| x.ln()).collect();
    let frac = |t: f64| T::of_usize(p.iter().filter(|&&x| x < T::of(t)).count()) / n;
    let mean_log = stats::mean(&logs);
    Ok(vec![
        stats::mean(p),
        stats::std_pop(p),
        stats::min(p),
        stats::max(p),
        stats::median(p),
        p[0],
        p[p.len() - 1],
        mean_log,
        stats::std_pop(&logs),
        frac(0.25),
        frac(0.75),
        mean_log.exp(),
    ])
}

pub fn baseline_bank<T: Scalar>(span: &TraceSpan<'_>) -> Result<Vec<T>> {
    let mut out = hidden_shift_block::<T>(span)?;
    out.extend(attention_shift_block::<T>(span)?);
    out.extend(probability_block(&span.p_max::<T>())?);
    debug_assert_eq!(out.len(), BASELINE_LEN);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_layers_have_no_shift() {
        let a = [0.3f64, -1.2, 0.7, 2.0, -0.1, 0.4];
        let m = hidden_pair_metrics(&a, &a, 3);
        assert!(m[0].abs() < 1e-12);
        assert_eq!(&m[1..4], &[0.0, 0.0, 0.0]);
        assert_eq!(m[4], 1.0);
        assert_eq!(m[5], 0.0);
    }

    #[test]
    fn doubled_layer_quadruples_variance() {
        let a = [0.3, -1.2, 0.7, 2.0];
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        let m = hidden_pair_metrics(&a, &b, 2);
        assert!((m[4] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn one_hot_to_uniform_entropy_delta() {
        let m = attention_pair_metrics(&[0.0, 0.0, 0.0, 1.0], &[0.25; 4]).unwrap();
        assert!((m[0] - 4f64.ln()).abs() < 1e-12);
        assert_eq!(m[2], -0.75);
        assert!(attention_pair_metrics(&[0.0, 0.0], &[0.5, 0.5]).is_none());
    }

    #[test]
    fn probability_examples() {
        let b = probability_block(&[0.5f64, 0.5]).unwrap();
        assert_eq!((b[0], b[1], b[9]), (0.5, 0.0, 0.0));
        assert!((b[11] - 0.5).abs() < 1e-15);
        let b = probability_block(&[0.1, 0.9]).unwrap();
        assert_eq!((b[2], b[3], b[9]), (0.1, 0.9, 0.5));
        let b = probability_block(&[1.0]).unwrap();
        assert_eq!((b[5], b[6], b[7]), (1.0, 1.0, 0.0));
        assert!(probability_block::<f64>(&[]).is_err());
        assert!(probability_block(&[0.0]).is_err());
    }
}
