//! Minority oversampling and inverse-frequency class weights.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::LabeledExample;
use crate::error::{Error, Result};
use crate::label::HallucinationLabel;
use crate::scalar::Scalar;
use crate::seed::rng;

/// Sample id given to interpolated examples.
pub const SYNTHETIC_ID: &str = "<smote>";

pub fn class_counts<'a, I>(labels: I) -> BTreeMap<HallucinationLabel, usize>
where
    I: IntoIterator<Item = &'a HallucinationLabel>,
{
    let mut counts = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    counts
}

/// `w_c = N / (K * n_c)` over the `K` classes present.
pub fn class_weights<'a, I>(labels: I) -> BTreeMap<HallucinationLabel, f64>
where
    I: IntoIterator<Item = &'a HallucinationLabel>,
{
    let counts = class_counts(labels);
    let n: usize = counts.values().sum();
    let k = counts.len() as f64;
    counts
        .into_iter()
        .map(|(c, nc)| (c, n as f64 / (k * nc as f64)))
        .collect()
}

fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest other members of `points` for each member.
fn nearest_neighbors<T: Scalar>(points: &[&[T]], k: usize) -> Vec<Vec<usize>> {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(T, usize)> = (0..points.len())
                .filter(|&j| j != i)
                .map(|j| (squared_distance(points[i], points[j]), j))
                .collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features").then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Appends interpolated examples until every class matches the largest one:
/// `x_new = x + u (x_nn - x)` with `u ~ U[0, 1]` and `x_nn` one of the `k`
/// nearest same-class neighbours of `x`. The input examples are returned
/// unchanged at the front.
pub fn smote_oversample<T: Scalar>(
    examples: &[LabeledExample<T>],
    k: usize,
    seed: u64,
) -> Result<Vec<LabeledExample<T>>> {
    if k == 0 {
        return Err(Error::Config("SMOTE needs k >= 1".into()));
    }
    let counts = class_counts(examples.iter().map(|e| &e.label));
    let target = counts.values().copied().max().unwrap_or(0);
    let mut out = examples.to_vec();
    let mut r = rng(seed);

    for (&class, &n) in &counts {
        if n == target {
            continue;
        }
        if n < 2 {
            return Err(Error::ClassTooSmall(class));
        }
        let members: Vec<&[T]> = examples
            .iter()
            .filter(|e| e.label == class)
            .map(|e| e.features.as_slice())
            .collect();
        let neighbors = nearest_neighbors(&members, k.min(n - 1));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        for i in 0..target - n {
            let base = order[i % n];
            let nn = *neighbors[base].choose(&mut r).expect("at least one neighbour");
            let u = T::of(r.gen_range(0.0..=1.0));
            let features = members[base]
                .iter()
                .zip(members[nn])
                .map(|(&x, &y)| x + u * (y - x))
                .collect();
            out.push(LabeledExample {
                sample_id: SYNTHETIC_ID.to_string(),
                features,
                label: class,
            });
        }
    }
    Ok(out)
}
