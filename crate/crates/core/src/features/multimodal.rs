//! Layer consistency, attention concentration, confidence and token-pattern
//! features (schema slots 63-74).

use std::collections::HashSet;

use super::stats;
use super::TraceSpan;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::{attention_layer_indices, early_layer, late_layer};

pub const MULTIMODAL_LEN: usize = 12;
pub const LOW_CONFIDENCE: f64 = 0.5;

/// `[c, 1 - c]` with `c = (cos(early, late) + 1) / 2`.
pub fn layer_consistency_of<T: Scalar>(early: &[T], late: &[T]) -> Option<[T; 2]> {
    let c = (stats::cosine(early, late)? + T::one()) / T::of(2.0);
    Some([c, T::one() - c])
}

pub fn layer_consistency<T: Scalar>(span: &TraceSpan<'_>) -> Result<[T; 2]> {
    let (e, l) = (
        early_layer(span.trace.text_start, span.trace.num_layers),
        late_layer(span.trace.num_layers),
    );
    let early = span.hidden::<T>(e)?;
    let late = span.hidden::<T>(l)?;
    if early.len() != late.len() {
        return Err(Error::Shape(format!(
            "early layer {e} has {} values, late layer {l} has {}",
            early.len(),
            late.len()
        )));
    }
    layer_consistency_of(&early, &late).ok_or_else(|| {
        Error::ZeroNorm(if stats::norm(&early) == T::zero() { e } else { l })
    })
}

/// `G = 2 * sum_{i=1..n} sum_{j=1..i} s_j / (n * sum s) - 1` over the weights
/// sorted ascending. The inner double sum is accumulated through prefix sums.
///
/// This expression equals `1/n` minus the conventional Gini coefficient, so
/// `|G|` is close to 1 for concentrated weights and close to 0 for flat ones.
pub fn gini<T: Scalar>(weights: &[T]) -> Option<T> {
    let n = weights.len();
    let mut s = weights.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
    let largest = *s.last()?;
    if largest <= T::zero() {
        return None;
    }
    // G is scale free; dividing by the largest weight turns constant inputs
    // into ones, whose sums below are exact integers.
    s.iter_mut().for_each(|x| *x /= largest);
    let total: T = s.iter().copied().sum();
    let mut prefix = T::zero();
    let mut nested = T::zero();
    for &x in &s {
        prefix += x;
        nested += prefix;
    }
    let nt = T::of_usize(n) * total;
    Some((T::of(2.0) * nested - nt) / nt)
}

/// `[mean |G_l|, std |G_l|]` over the last three attention layers.
pub fn attention_concentration<T: Scalar>(span: &TraceSpan<'_>) -> Result<[T; 2]> {
    let abs_g: Vec<T> = attention_layer_indices(span.trace.num_layers)
        .into_iter()
        .map(|l| {
            gini(&span.attention::<T>(l)?)
                .map(T::abs)
                .ok_or(Error::ZeroAttention(l))
        })
        .collect::<Result<_>>()?;
    Ok([stats::mean(&abs_g), stats::std_pop(&abs_g)])
}

/// Least-squares slope of `p` against `x = 0, 1, ..., T-1`; 0 when `T = 1`.
pub fn confidence_trend<T: Scalar>(p: &[T]) -> T {
    let n = p.len();
    if n < 2 {
        return T::zero();
    }
    let nt = T::of_usize(n);
    let (mut sx, mut sy, mut sxy, mut sxx) = (T::zero(), T::zero(), T::zero(), T::zero());
    for (t, &y) in p.iter().enumerate() {
        let x = T::of_usize(t);
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
    }
    (nt * sxy - sx * sy) / (nt * sxx - sx * sx)
}

/// `[f1, f2, f3, f4, f5]`: mean and sample std of `1/p`, trend slope, mean
/// `p`, fraction of `p` below 0.5.
pub fn confidence_features<T: Scalar>(p: &[T]) -> Result<[T; 5]> {
    if p.is_empty() {
        return Err(Error::Empty("p_max"));
    }
    if let Some(bad) = p.iter().find(|&&x| !(x > T::zero() && x <= T::one())) {
        return Err(Error::Range(format!("p_max value {bad} is outside (0, 1]")));
    }
    let ppl: Vec<T> = p.iter().map(|&x| T::one() / x).collect();
    let low = p.iter().filter(|&&x| x < T::of(LOW_CONFIDENCE)).count();
    Ok([
        stats::mean(&ppl),
        stats::std_sample(&ppl),
        confidence_trend(p),
        stats::mean(p),
        T::of_usize(low) / T::of_usize(p.len()),
    ])
}

/// `[URR, BRR, NUT]` over case-sensitive token strings.
pub fn token_patterns<T: Scalar, S: AsRef<str>>(tokens: &[S]) -> Result<[T; 3]> {
    if tokens.is_empty() {
        return Err(Error::Empty("token_strings"));
    }
    let unique: HashSet<&str> = tokens.iter().map(AsRef::as_ref).collect();
    let nut = T::of_usize(unique.len()) / T::of_usize(tokens.len());
    let bigrams = tokens.len() - 1;
    let brr = if bigrams == 0 {
        T::zero()
    } else {
        let unique_bigrams: HashSet<(&str, &str)> =
            tokens.windows(2).map(|w| (w[0].as_ref(), w[1].as_ref())).collect();
        T::one() - T::of_usize(unique_bigrams.len()) / T::of_usize(bigrams)
    };
    Ok([T::one() - nut, brr, nut])
}

pub fn multimodal_features<T: Scalar>(span: &TraceSpan<'_>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(MULTIMODAL_LEN);
    out.extend(layer_consistency::<T>(span)?);
    out.extend(attention_concentration::<T>(span)?);
    out.extend(confidence_features(&span.p_max::<T>())?);
    out.extend(token_patterns::<T, _>(span.tokens())?);
    Ok(out)
}
