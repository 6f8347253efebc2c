//! Small numeric kernels shared by the feature blocks.

use crate::scalar::Scalar;

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    xs.iter().copied().sum::<T>() / T::of_usize(xs.len())
}

/// Population standard deviation (divisor `n`).
pub fn std_pop<T: Scalar>(xs: &[T]) -> T {
    if xs.len() < 2 {
        return T::zero();
    }
    let m = mean(xs);
    (xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::of_usize(xs.len())).sqrt()
}

/// Sample standard deviation (divisor `n - 1`); 0 below two values.
pub fn std_sample<T: Scalar>(xs: &[T]) -> T {
    if xs.len() < 2 {
        return T::zero();
    }
    let m = mean(xs);
    (xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::of_usize(xs.len() - 1)).sqrt()
}

pub fn variance_pop<T: Scalar>(xs: &[T]) -> T {
    let s = std_pop(xs);
    s * s
}

pub fn min<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().fold(T::infinity(), T::min)
}

pub fn max<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().fold(T::neg_infinity(), T::max)
}

pub fn median<T: Scalar>(xs: &[T]) -> T {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::of(2.0)
    }
}

/// `{mean, std, min, max, last}` of a non-empty series.
pub fn summarize<T: Scalar>(xs: &[T]) -> [T; 5] {
    [mean(xs), std_pop(xs), min(xs), max(xs), *xs.last().expect("non-empty series")]
}

pub const SUMMARY_NAMES: [&str; 5] = ["mean", "std", "min", "max", "last"];

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Cosine similarity, or `None` when either vector has zero norm.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    let (na, nb) = (norm(a), norm(b));
    if na == T::zero() || nb == T::zero() {
        return None;
    }
    Some((dot(a, b) / (na * nb)).max(-T::one()).min(T::one()))
}

/// `1 - cos(a, b)`; two zero vectors are at distance 0, one zero vector at 1.
pub fn cosine_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    match cosine(a, b) {
        Some(c) => T::one() - c,
        None if norm(a) == norm(b) => T::zero(),
        None => T::one(),
    }
}

pub fn softmax<T: Scalar>(xs: &[T]) -> Vec<T> {
    let m = max(xs);
    let e: Vec<T> = xs.iter().map(|&x| (x - m).exp()).collect();
    let z: T = e.iter().copied().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Divides by the total; `None` if it is not positive.
pub fn normalize<T: Scalar>(xs: &[T]) -> Option<Vec<T>> {
    let z: T = xs.iter().copied().sum();
    (z > T::zero()).then(|| xs.iter().map(|&x| x / z).collect())
}

/// Shannon entropy in nats; `0 ln 0 = 0`.
pub fn entropy<T: Scalar>(p: &[T]) -> T {
    -p.iter().filter(|&&x| x > T::zero()).map(|&x| x * x.ln()).sum::<T>()
}

/// Jensen-Shannon divergence in nats, bounded by `ln 2`.
pub fn js_divergence<T: Scalar>(p: &[T], q: &[T]) -> T {
    let half = T::of(0.5);
    let kl_to_mid = |a: &[T], b: &[T]| -> T {
        a.iter()
            .zip(b)
            .filter(|(&x, _)| x > T::zero())
            .map(|(&x, &y)| x * (x / (half * (x + y))).ln())
            .sum()
    };
    let js = half * kl_to_mid(p, q) + half * kl_to_mid(q, p);
    js.max(T::zero()).min(T::of(std::f64::consts::LN_2))
}

/// One-dimensional Wasserstein-1 distance between two equally sized samples:
/// mean absolute difference of the sorted values.
pub fn wasserstein1<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "wasserstein1 needs equal sample sizes");
    let sorted = |xs: &[T]| {
        let mut v = xs.to_vec();
        v.sort_by(|x, y| x.partial_cmp(y).expect("finite values"));
        v
    };
    let (sa, sb) = (sorted(a), sorted(b));
    mean(&sa.iter().zip(&sb).map(|(&x, &y)| (x - y).abs()).collect::<Vec<_>>())
}
