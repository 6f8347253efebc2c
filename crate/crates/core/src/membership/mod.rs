//! Four-class membership function over 77-dimensional chunk features and its
//! training loop.

pub mod network;
pub mod optim;
pub mod smote;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::{Container, NamedTensor, TensorData};
use crate::error::{Error, Result};
use crate::evaluation::metrics::{binary_auc, macro_auc};
use crate::features::{schema_hash, NUM_FEATURES};
use crate::label::{HallucinationLabel, NUM_CLASSES};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng};

pub use network::{Architecture, Network};
pub use optim::{cosine_lr, AdamW};
pub use smote::{class_counts, class_weights, smote_oversample};

pub const MODEL_MAGIC: [u8; 4] = *b"HSMM";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample<T> {
    /// Examples sharing a sample id stay on the same side of the
    /// train/validation split.
    pub sample_id: String,
    pub features: Vec<T>,
    pub label: HallucinationLabel,
}

/// Per-feature standardization fitted on the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    /// Population statistics; constant columns get unit scale.
    pub fn fit(rows: &[&[T]]) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let n = T::of_usize(rows.len().max(1));
        let mut mean = vec![T::zero(); dim];
        for r in rows {
            for (m, &v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); dim];
        for r in rows {
            for ((s, &v), &m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > T::of(1e-12) {
                    sd
                } else {
                    T::one()
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &[T]) -> Vec<T> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub class_weighting: bool,
    pub smote: bool,
    pub smote_k: usize,
    pub validation_fraction: f64,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            class_weighting: true,
            smote: true,
            smote_k: 5,
            validation_fraction: 0.2,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.patience < 1 {
            return bad("patience must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1");
        }
        if self.max_epochs < 1 {
            return bad("max_epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation fraction must lie in (0, 1)");
        }
        if self.smote && self.smote_k < 1 {
            return bad("smote_k must be at least 1");
        }
        if self.architecture.input() != NUM_FEATURES {
            return bad("architecture input must be 77 features");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_metric: f64,
    /// `binary_auc`, `macro_auc` or `neg_val_loss`.
    pub metric: String,
    pub train_examples: usize,
    pub val_examples: usize,
    pub smote_added: usize,
    pub class_weights: BTreeMap<HallucinationLabel, f64>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipModel<T> {
    pub network: Network<T>,
    pub standardizer: Standardizer<T>,
    pub config: TrainConfig,
    pub schema_hash: String,
}

impl<T: Scalar> MembershipModel<T> {
    fn check(&self, x: &[T]) -> Result<()> {
        if x.len() != NUM_FEATURES {
            return Err(Error::Shape(format!("expected {NUM_FEATURES} features, got {}", x.len())));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }

    /// Class probabilities for one raw (unstandardized) feature row.
    pub fn predict_proba(&self, x: &[T]) -> Result<[T; NUM_CLASSES]> {
        self.check(x)?;
        let p = self.network.forward(&self.standardizer.apply(x));
        Ok(p.try_into().expect("four classes"))
    }

    pub fn predict_batch(&self, rows: &[Vec<T>]) -> Result<Vec<[T; NUM_CLASSES]>> {
        rows.par_iter().map(|r| self.predict_proba(r)).collect()
    }

    pub fn to_container(&self) -> Container {
        let attributes = json!({
            "kind": "membership",
            "dtype": T::DTYPE,
            "architecture": self.network.arch,
            "config": self.config,
            "schema_hash": self.schema_hash,
        });
        let mut c = Container::new(MODEL_MAGIC, attributes);
        let tensor = |name: &str, v: &[T]| NamedTensor {
            name: name.to_string(),
            shape: vec![v.len()],
            data: to_tensor_data(v),
        };
        c.push(tensor("params", &self.network.params));
        c.push(tensor("norm.mean", &self.standardizer.mean));
        c.push(tensor("norm.std", &self.standardizer.std));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let attr = |k: &str| {
            c.attributes
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Header(format!("model attribute {k:?} missing")))
        };
        let arch: Architecture = serde_json::from_value(attr("architecture")?)?;
        let config: TrainConfig = serde_json::from_value(attr("config")?)?;
        let hash: String = serde_json::from_value(attr("schema_hash")?)?;
        if hash != schema_hash() {
            return Err(Error::Header(format!(
                "model was trained on feature schema {hash}, this build uses {}",
                schema_hash()
            )));
        }
        let get = |name: &str| -> Result<Vec<T>> {
            let t = c
                .tensor(name)
                .ok_or_else(|| Error::Layout(format!("model tensor {name:?} missing")))?;
            Ok(from_tensor_data(&t.data))
        };
        let mean = get("norm.mean")?;
        let std = get("norm.std")?;
        if mean.len() != NUM_FEATURES || std.len() != NUM_FEATURES {
            return Err(Error::Shape("normalization statistics must have 77 entries".into()));
        }
        Ok(Self {
            network: Network::from_params(arch, get("params")?)?,
            standardizer: Standardizer { mean, std },
            config,
            schema_hash: hash,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.to_container().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_container(&Container::from_bytes(bytes, MODEL_MAGIC)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path, MODEL_MAGIC)?)
    }
}

fn to_tensor_data<T: Scalar>(v: &[T]) -> TensorData {
    match T::DTYPE {
        crate::container::DType::F32 => TensorData::F32(v.iter().map(|x| x.as_f64() as f32).collect()),
        crate::container::DType::F64 => TensorData::F64(v.iter().map(|x| x.as_f64()).collect()),
    }
}

fn from_tensor_data<T: Scalar>(d: &TensorData) -> Vec<T> {
    match d {
        TensorData::F32(v) => v.iter().map(|&x| T::of_f32(x)).collect(),
        TensorData::F64(v) => v.iter().map(|&x| T::of(x)).collect(),
    }
}

/// Splits example indices into (train, validation) by sample id.
pub fn group_split<T>(examples: &[LabeledExample<T>], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let groups: BTreeSet<&str> = examples.iter().map(|e| e.sample_id.as_str()).collect();
    let mut r = rng(derive_seed(seed, "membership/split"));
    if groups.len() < 2 {
        let mut idx: Vec<usize> = (0..examples.len()).collect();
        idx.shuffle(&mut r);
        let n_val = ((fraction * idx.len() as f64).round() as usize).clamp(1, idx.len().saturating_sub(1).max(1));
        let val = idx.split_off(idx.len() - n_val);
        return (sorted(idx), sorted(val));
    }
    let mut groups: Vec<&str> = groups.into_iter().collect();
    groups.shuffle(&mut r);
    let n_val = ((fraction * groups.len() as f64).round() as usize).clamp(1, groups.len() - 1);
    let val_groups: BTreeSet<&str> = groups[..n_val].iter().copied().collect();
    let (val, train): (Vec<usize>, Vec<usize>) =
        (0..examples.len()).partition(|&i| val_groups.contains(examples[i].sample_id.as_str()));
    (train, val)
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Validation score used for early stopping and its name.
fn validation_metric<T: Scalar>(probs: &[[T; NUM_CLASSES]], truth: &[HallucinationLabel], loss: f64) -> (f64, &'static str) {
    if let Ok(a) = binary_auc(probs, truth) {
        return (a, "binary_auc");
    }
    if let Ok(a) = macro_auc(probs, truth) {
        return (a, "macro_auc");
    }
    (-loss, "neg_val_loss")
}

pub fn train<T: Scalar>(examples: &[LabeledExample<T>], cfg: &TrainConfig) -> Result<(MembershipModel<T>, TrainReport)> {
    cfg.validate()?;
    if let Some(e) = examples.iter().find(|e| e.features.len() != NUM_FEATURES) {
        return Err(Error::Shape(format!(
            "example from {} has {} features, expected {NUM_FEATURES}",
            e.sample_id,
            e.features.len()
        )));
    }
    let counts = class_counts(examples.iter().map(|e| &e.label));
    if counts.len() < 2 {
        let only = counts.keys().next().map_or("none".to_string(), |l| l.to_string());
        return Err(Error::SingleClass(only));
    }

    let (train_idx, val_idx) = group_split(examples, cfg.validation_fraction, cfg.seed);
    let train_rows: Vec<&[T]> = train_idx.iter().map(|&i| examples[i].features.as_slice()).collect();
    let standardizer = Standardizer::fit(&train_rows);
    let standardize = |idx: &[usize]| -> Vec<LabeledExample<T>> {
        idx.iter()
            .map(|&i| LabeledExample {
                sample_id: examples[i].sample_id.clone(),
                features: standardizer.apply(&examples[i].features),
                label: examples[i].label,
            })
            .collect()
    };
    let train_set = standardize(&train_idx);
    let val_set = standardize(&val_idx);

    let weights_by_class = if cfg.class_weighting {
        class_weights(train_set.iter().map(|e| &e.label))
    } else {
        HallucinationLabel::ALL.iter().map(|&c| (c, 1.0)).collect()
    };
    let train_set = if cfg.smote {
        smote_oversample(&train_set, cfg.smote_k, derive_seed(cfg.seed, "membership/smote"))?
    } else {
        train_set
    };
    let smote_added = train_set.len() - train_idx.len();
    info!(
        "training on {} examples ({} interpolated), validating on {}",
        train_set.len(),
        smote_added,
        val_set.len()
    );

    let xs: Vec<&[T]> = train_set.iter().map(|e| e.features.as_slice()).collect();
    let ys: Vec<usize> = train_set.iter().map(|e| e.label.index()).collect();
    let ws: Vec<T> = train_set
        .iter()
        .map(|e| T::of(*weights_by_class.get(&e.label).unwrap_or(&1.0)))
        .collect();
    let val_xs: Vec<&[T]> = val_set.iter().map(|e| e.features.as_slice()).collect();
    let val_ys: Vec<usize> = val_set.iter().map(|e| e.label.index()).collect();
    let val_truth: Vec<HallucinationLabel> = val_set.iter().map(|e| e.label).collect();
    let val_ws: Vec<T> = val_set
        .iter()
        .map(|e| T::of(*weights_by_class.get(&e.label).unwrap_or(&1.0)))
        .collect();

    let mut net = Network::<T>::init(cfg.architecture, &mut rng(derive_seed(cfg.seed, "membership/init")));
    let mut opt = AdamW::new(net.params.len(), cfg);
    let mut shuffle = rng(derive_seed(cfg.seed, "membership/shuffle"));
    let mut order: Vec<usize> = (0..xs.len()).collect();

    let mut records = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0usize, net.params.clone());
    let mut metric_name = "binary_auc";
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        let lr = cosine_lr(cfg.learning_rate, epoch, cfg.max_epochs);
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let bx: Vec<&[T]> = batch.iter().map(|&i| xs[i]).collect();
            let by: Vec<usize> = batch.iter().map(|&i| ys[i]).collect();
            let bw: Vec<T> = batch.iter().map(|&i| ws[i]).collect();
            let (loss, grad) = net.loss_and_gradient(&bx, &by, &bw);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NanLoss { epoch: epoch + 1, batch: b + 1 });
            }
            loss_sum += loss.as_f64() * batch.len() as f64;
            opt.step(&mut net.params, &grad, lr);
        }
        let train_loss = loss_sum / xs.len() as f64;

        let val_probs: Vec<[T; NUM_CLASSES]> = val_xs
            .par_iter()
            .map(|x| net.forward(x).try_into().expect("four classes"))
            .collect();
        let val_loss = if val_xs.is_empty() { 0.0 } else { net.loss(&val_xs, &val_ys, &val_ws).as_f64() };
        let (metric, name) = validation_metric(&val_probs, &val_truth, val_loss);
        metric_name = name;
        debug!("epoch {} lr {lr:.3e} train {train_loss:.5} val {val_loss:.5} {name} {metric:.5}", epoch + 1);
        records.push(EpochRecord {
            epoch: epoch + 1,
            learning_rate: lr,
            train_loss,
            val_loss,
            val_metric: metric,
        });

        if metric > best.0 {
            best = (metric, epoch + 1, net.params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (best_metric, best_epoch, params) = best;
    net.params = params;
    let model = MembershipModel {
        network: net,
        standardizer,
        config: cfg.clone(),
        schema_hash: schema_hash(),
    };
    let report = TrainReport {
        epochs: records,
        best_epoch,
        best_metric,
        metric: metric_name.to_string(),
        train_examples: train_idx.len(),
        val_examples: val_idx.len(),
        smote_added,
        class_weights: weights_by_class,
        stopped_early,
    };
    Ok((model, report))
}
