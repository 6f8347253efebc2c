//! AdamW with decoupled weight decay and a per-epoch cosine schedule.

use super::TrainConfig;
use crate::scalar::Scalar;

/// `base * (1 + cos(pi * epoch / epochs)) / 2`.
pub fn cosine_lr(base: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 {
        return base;
    }
    base * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs as f64).cos())
}

#[derive(Debug, Clone)]
pub struct AdamW<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(len: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            weight_decay: cfg.weight_decay,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.t));
        let c2 = T::of(1.0 - self.beta2.powi(self.t));
        let (lr_t, eps) = (T::of(lr), T::of(self.eps));
        let decay = T::of(1.0 - lr * self.weight_decay);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] = params[i] * decay - lr_t * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(1e-3, 0, 10), 1e-3);
        assert!((cosine_lr(1e-3, 5, 10) - 5e-4).abs() < 1e-15);
        assert_eq!(cosine_lr(2.0, 0, 1), 2.0);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut opt = AdamW::<f64>::new(2, &cfg);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[0.5, -2.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }
}
