//! Gated feed-forward network with hand-written backpropagation.
//!
//! ```text
//! chunk = x[74..77]
//! g     = sigmoid(Wg2 · silu(Wg1 · chunk + bg1) + bg2)        (74 values)
//! z     = [g ⊙ x[0..74], chunk]
//! p     = softmax(W3 · silu(W2 · silu(W1 · z + b1) + b2) + b3)
//! ```
//!
//! All parameters live in one flat vector; [`Layout`] records where each
//! matrix and bias starts. Matrices are row-major `(out x in)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{NUM_CHUNK_FEATURES, NUM_MAIN_FEATURES};
use crate::label::NUM_CLASSES;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub main: usize,
    pub chunk: usize,
    pub gate_hidden: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub classes: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            main: NUM_MAIN_FEATURES,
            chunk: NUM_CHUNK_FEATURES,
            gate_hidden: 16,
            hidden1: 128,
            hidden2: 64,
            classes: NUM_CLASSES,
        }
    }
}

impl Architecture {
    pub fn input(&self) -> usize {
        self.main + self.chunk
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    w: usize,
    b: usize,
    rows: usize,
    cols: usize,
}

impl Dense {
    fn end(&self) -> usize {
        self.b + self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    gate1: Dense,
    gate2: Dense,
    fc1: Dense,
    fc2: Dense,
    fc3: Dense,
    pub len: usize,
}

impl Layout {
    pub fn new(a: &Architecture) -> Self {
        let mut at = 0;
        let mut dense = |rows: usize, cols: usize| {
            let d = Dense {
                w: at,
                b: at + rows * cols,
                rows,
                cols,
            };
            at = d.end();
            d
        };
        let gate1 = dense(a.gate_hidden, a.chunk);
        let gate2 = dense(a.main, a.gate_hidden);
        let fc1 = dense(a.hidden1, a.input());
        let fc2 = dense(a.hidden2, a.hidden1);
        let fc3 = dense(a.classes, a.hidden2);
        Self {
            gate1,
            gate2,
            fc1,
            fc2,
            fc3,
            len: at,
        }
    }

    /// Offsets of the first trunk layer's weights that read input `feature`.
    pub fn input_weights(&self, feature: usize) -> Vec<usize> {
        (0..self.fc1.rows).map(|r| self.fc1.w + r * self.fc1.cols + feature).collect()
    }

    /// Offsets of the gate's output layer, which starts at zero so the gate
    /// begins at exactly 0.5.
    pub fn gate_output(&self) -> std::ops::Range<usize> {
        self.gate2.w..self.gate2.end()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn silu<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

fn silu_grad<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

fn affine<T: Scalar>(p: &[T], d: Dense, x: &[T], out: &mut Vec<T>) {
    out.clear();
    for r in 0..d.rows {
        let row = &p[d.w + r * d.cols..d.w + (r + 1) * d.cols];
        let mut acc = p[d.b + r];
        for (w, v) in row.iter().zip(x) {
            acc += *w * *v;
        }
        out.push(acc);
    }
}

/// Accumulates `dW += delta ⊗ x`, `db += delta` and writes `Wᵀ delta` to
/// `back` when requested.
fn affine_backward<T: Scalar>(p: &[T], g: &mut [T], d: Dense, x: &[T], delta: &[T], back: Option<&mut Vec<T>>) {
    for r in 0..d.rows {
        let dr = delta[r];
        g[d.b + r] += dr;
        let grow = &mut g[d.w + r * d.cols..d.w + (r + 1) * d.cols];
        for (gw, v) in grow.iter_mut().zip(x) {
            *gw += dr * *v;
        }
    }
    if let Some(back) = back {
        back.clear();
        back.resize(d.cols, T::zero());
        for r in 0..d.rows {
            let dr = delta[r];
            let row = &p[d.w + r * d.cols..d.w + (r + 1) * d.cols];
            for (b, w) in back.iter_mut().zip(row) {
                *b += dr * *w;
            }
        }
    }
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Default, Clone)]
struct Activations<T> {
    a_g1: Vec<T>,
    u_g1: Vec<T>,
    gate: Vec<T>,
    z: Vec<T>,
    a1: Vec<T>,
    h1: Vec<T>,
    a2: Vec<T>,
    h2: Vec<T>,
    logits: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub arch: Architecture,
    pub layout: Layout,
    pub params: Vec<T>,
}

impl<T: Scalar> Network<T> {
    /// Uniform `±1/sqrt(fan_in)` weights and biases; the gate's output
    /// layer starts at zero.
    pub fn init(arch: Architecture, rng: &mut ChaCha8Rng) -> Self {
        let layout = Layout::new(&arch);
        let mut params = vec![T::zero(); layout.len];
        for d in [layout.gate1, layout.fc1, layout.fc2, layout.fc3] {
            let bound = 1.0 / (d.cols as f64).sqrt();
            for p in &mut params[d.w..d.end()] {
                *p = T::of(rng.gen_range(-bound..bound));
            }
        }
        Self { arch, layout, params }
    }

    pub fn from_params(arch: Architecture, params: Vec<T>) -> Result<Self> {
        let layout = Layout::new(&arch);
        if params.len() != layout.len {
            return Err(Error::Shape(format!(
                "architecture needs {} parameters, got {}",
                layout.len,
                params.len()
            )));
        }
        Ok(Self { arch, layout, params })
    }

    fn forward_into(&self, x: &[T], act: &mut Activations<T>) {
        let p = &self.params;
        let l = &self.layout;
        let main = self.arch.main;
        let chunk = &x[main..];

        affine(p, l.gate1, chunk, &mut act.a_g1);
        act.u_g1.clear();
        act.u_g1.extend(act.a_g1.iter().map(|&v| silu(v)));
        let mut a_g2 = Vec::new();
        affine(p, l.gate2, &act.u_g1, &mut a_g2);
        act.gate.clear();
        act.gate.extend(a_g2.iter().map(|&v| sigmoid(v)));

        act.z.clear();
        act.z.extend(act.gate.iter().zip(&x[..main]).map(|(&g, &v)| g * v));
        act.z.extend_from_slice(chunk);

        affine(p, l.fc1, &act.z, &mut act.a1);
        act.h1.clear();
        act.h1.extend(act.a1.iter().map(|&v| silu(v)));
        affine(p, l.fc2, &act.h1, &mut act.a2);
        act.h2.clear();
        act.h2.extend(act.a2.iter().map(|&v| silu(v)));
        affine(p, l.fc3, &act.h2, &mut act.logits);
    }

    /// Per-feature gate values for one (standardized) input.
    pub fn gate(&self, x: &[T]) -> Vec<T> {
        let mut act = Activations::default();
        self.forward_into(x, &mut act);
        act.gate
    }

    /// Class probabilities for one standardized input of length 77.
    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut act = Activations::default();
        self.forward_into(x, &mut act);
        softmax(&act.logits)
    }

    /// Weighted cross-entropy `sum w_i CE_i / sum w_i` over a batch and its
    /// gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, xs: &[&[T]], labels: &[usize], weights: &[T]) -> (T, Vec<T>) {
        let mut grad = vec![T::zero(); self.params.len()];
        let total_w: T = weights.iter().copied().sum();
        let mut loss = T::zero();
        let mut act = Activations::default();
        let (mut d_h2, mut d_h1, mut d_z, mut d_ug1) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let p = &self.params;
        let l = &self.layout;
        let main = self.arch.main;

        for ((x, &y), &w) in xs.iter().zip(labels).zip(weights) {
            self.forward_into(x, &mut act);
            let probs = softmax(&act.logits);
            let scale = w / total_w;
            loss += -scale * probs[y].max(T::min_positive_value()).ln();

            let d_logits: Vec<T> = probs
                .iter()
                .enumerate()
                .map(|(k, &pk)| scale * (pk - if k == y { T::one() } else { T::zero() }))
                .collect();
            affine_backward(p, &mut grad, l.fc3, &act.h2, &d_logits, Some(&mut d_h2));
            let d_a2: Vec<T> = d_h2.iter().zip(&act.a2).map(|(&d, &a)| d * silu_grad(a)).collect();
            affine_backward(p, &mut grad, l.fc2, &act.h1, &d_a2, Some(&mut d_h1));
            let d_a1: Vec<T> = d_h1.iter().zip(&act.a1).map(|(&d, &a)| d * silu_grad(a)).collect();
            affine_backward(p, &mut grad, l.fc1, &act.z, &d_a1, Some(&mut d_z));

            let d_a_g2: Vec<T> = (0..main)
                .map(|i| {
                    let g = act.gate[i];
                    d_z[i] * x[i] * g * (T::one() - g)
                })
                .collect();
            affine_backward(p, &mut grad, l.gate2, &act.u_g1, &d_a_g2, Some(&mut d_ug1));
            let d_a_g1: Vec<T> = d_ug1.iter().zip(&act.a_g1).map(|(&d, &a)| d * silu_grad(a)).collect();
            affine_backward(p, &mut grad, l.gate1, &x[main..], &d_a_g1, None);
        }
        (loss, grad)
    }

    pub fn loss(&self, xs: &[&[T]], labels: &[usize], weights: &[T]) -> T {
        let total_w: T = weights.iter().copied().sum();
        xs.iter()
            .zip(labels)
            .zip(weights)
            .map(|((x, &y), &w)| -(w / total_w) * self.forward(x)[y].max(T::min_positive_value()).ln())
            .sum()
    }
}
