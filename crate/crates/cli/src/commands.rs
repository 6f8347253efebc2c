use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hspp_core::assets::Assets;
use hspp_core::chunker::ChunkStrategy;
use hspp_core::dataset::{
    read_jsonl, split_rows, synthetic_corpus, write_corpus, write_jsonl, ChunkRow, Manifest, Prediction,
};
use hspp_core::evaluation::{
    chunking_ablation, evaluate, permutation_importance, predict_rows, render_ablation, render_report,
    to_examples, FeatureImportance, ReportContext,
};
use hspp_core::features::schema::{feature_names, schema_hash};
use hspp_core::membership::train as fit;
use hspp_core::pipeline::{join_features, process_manifest, PipelineConfig, PipelineOutput, Stages};
use hspp_core::{HallucinationLabel, MembershipModel};
use log::{info, warn};
use serde::Serialize;

use crate::config::RunConfig;

/// Exit status when some, but not all, samples were skipped.
pub const SAMPLE_FAILURE_EXIT: u8 = 3;

pub const MODEL_FILE: &str = "model.hsmm";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const TEST_ROWS_FILE: &str = "test.jsonl";
pub const ROWS_FILE: &str = "rows.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const IMPORTANCE_FILE: &str = "importance.json";
pub const CONTEXT_FILE: &str = "context.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    SamplesFailed(usize),
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn assets(cfg: &RunConfig) -> Result<Assets> {
    Ok(Assets::resolve(cfg.assets.as_deref())?)
}

fn status(out: &PipelineOutput) -> Result<Status> {
    if out.samples > 0 && out.failures.len() == out.samples {
        bail!("all {} samples failed; first error: {}", out.samples, out.failures[0].error);
    }
    Ok(if out.failures.is_empty() {
        Status::Complete
    } else {
        Status::SamplesFailed(out.failures.len())
    })
}

pub fn synth(cfg: &RunConfig, n_per_profile: usize) -> Result<Status> {
    let out = cfg.out()?;
    if n_per_profile == 0 {
        warn!("--n-per-profile 0: writing an empty manifest");
    }
    let manifest = write_corpus(out, &synthetic_corpus(cfg.seed(), n_per_profile))?;
    info!("wrote {} samples to {}", manifest.entries.len(), out.display());
    Ok(Status::Complete)
}

fn load_manifest(cfg: &RunConfig) -> Result<Manifest> {
    let path = cfg.manifest()?;
    let manifest = Manifest::read(path).with_context(|| format!("reading manifest {}", path.display()))?;
    if manifest.entries.is_empty() {
        warn!("manifest {} lists no samples", path.display());
    }
    Ok(manifest)
}

/// Shared body of `chunk`, `extract` and `label`.
pub fn rows(cfg: &RunConfig, stages: Stages, features: Option<&Path>) -> Result<Status> {
    let manifest = load_manifest(cfg)?;
    let out_path = cfg.out()?;
    let mut out = process_manifest(&manifest, &assets(cfg)?, &cfg.pipeline, stages);
    let status = status(&out)?;
    if let Some(path) = features {
        let with_features: Vec<ChunkRow> = read_jsonl(path)?;
        join_features(&mut out.rows, &with_features)?;
    }
    write_jsonl(out_path, &out.rows)?;
    info!(
        "{} rows from {} samples written to {}",
        out.rows.len(),
        out.samples - out.failures.len(),
        out_path.display()
    );
    Ok(status)
}

pub fn train(cfg: &RunConfig, rows_path: &Path, holdout: Option<f64>) -> Result<Status> {
    let dir = cfg.out()?;
    let rows: Vec<ChunkRow> = read_jsonl(rows_path)?;
    let train_rows = match holdout {
        Some(f) if f > 0.0 => {
            if !(0.0..1.0).contains(&f) {
                bail!("--holdout must be in [0, 1), got {f}");
            }
            let (train_rows, test_rows) = split_rows(rows, f, cfg.seed());
            create_dir(dir)?;
            write_jsonl(&dir.join(TEST_ROWS_FILE), &test_rows)?;
            info!("held out {} rows to {}", test_rows.len(), dir.join(TEST_ROWS_FILE).display());
            train_rows
        }
        _ => rows,
    };
    train_to(cfg, &train_rows, dir)?;
    Ok(Status::Complete)
}

fn train_to(cfg: &RunConfig, rows: &[ChunkRow], dir: &Path) -> Result<MembershipModel> {
    let (model, report) = fit::<f64>(&to_examples(rows)?, &cfg.train)?;
    create_dir(dir)?;
    model.save(&dir.join(MODEL_FILE))?;
    write_json(&dir.join(TRAIN_REPORT_FILE), &report)?;
    info!(
        "trained on {} examples ({} synthetic); best epoch {} with {} {:.4}",
        report.train_examples, report.smote_added, report.best_epoch, report.metric, report.best_metric
    );
    Ok(model)
}

pub fn eval(cfg: &RunConfig, model_path: &Path, rows_path: &Path) -> Result<Status> {
    if !model_path.exists() {
        bail!("no trained model at {}; run `train` first", model_path.display());
    }
    let model = MembershipModel::load(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let rows: Vec<ChunkRow> = read_jsonl(rows_path)?;
    evaluate_to(cfg, &model, &rows, cfg.out()?)?;
    Ok(Status::Complete)
}

fn evaluate_to(cfg: &RunConfig, model: &MembershipModel, rows: &[ChunkRow], dir: &Path) -> Result<()> {
    let preds = predict_rows(model, rows)?;
    let importance = if cfg.eval.importance_repeats > 0 {
        let features: Vec<Vec<f64>> = rows.iter().map(|r| r.features.clone()).collect();
        let truth = rows.iter().map(ChunkRow::require_label).collect::<hspp_core::error::Result<Vec<HallucinationLabel>>>()?;
        permutation_importance(
            model,
            &features,
            &truth,
            cfg.eval.importance_metric,
            cfg.eval.importance_repeats,
            cfg.seed(),
        )?
    } else {
        Vec::new()
    };
    let context = ReportContext {
        schema_hash: model.schema_hash.clone(),
        stopwords_hash: assets(cfg)?.stopwords.digest(),
        config: serde_json::json!({ "model": model.config, "eval": cfg.eval }),
    };
    create_dir(dir)?;
    write_jsonl(&dir.join(PREDICTIONS_FILE), &preds)?;
    write_json(&dir.join(IMPORTANCE_FILE), &importance)?;
    write_json(&dir.join(CONTEXT_FILE), &context)?;
    report(dir, dir)?;
    Ok(())
}

/// Rebuilds the report from the files `eval` dumped, so the output is
/// identical to the one `eval` wrote.
pub fn report(eval_dir: &Path, out: &Path) -> Result<Status> {
    let preds: Vec<Prediction> = read_jsonl(&eval_dir.join(PREDICTIONS_FILE))?;
    let importance: Vec<FeatureImportance> = read_json(&eval_dir.join(IMPORTANCE_FILE))?;
    let context: ReportContext = read_json(&eval_dir.join(CONTEXT_FILE))?;
    let report = evaluate(&preds, importance, context);
    let text = render_report(&report);
    create_dir(out)?;
    write_json(&out.join(REPORT_JSON), &report)?;
    std::fs::write(out.join(REPORT_TEXT), &text).with_context(|| format!("writing {}", out.display()))?;
    print!("{text}");
    Ok(Status::Complete)
}

pub fn ablate(cfg: &RunConfig, strategies: &[ChunkStrategy]) -> Result<Status> {
    let manifest = load_manifest(cfg)?;
    let dir = cfg.out()?;
    let assets = assets(cfg)?;
    let strategies = if strategies.is_empty() {
        ChunkStrategy::ALL.to_vec()
    } else {
        strategies.to_vec()
    };
    let mut outputs = Vec::new();
    let mut failed = BTreeSet::new();
    for &strategy in &strategies {
        let pipeline = PipelineConfig { strategy, ..cfg.pipeline };
        let out = process_manifest(&manifest, &assets, &pipeline, Stages::ALL);
        status(&out)?;
        failed.extend(out.failures.iter().map(|f| f.sample_id.clone()));
        outputs.push((strategy, out.rows));
    }
    let datasets: Vec<(ChunkStrategy, Vec<ChunkRow>)> = outputs
        .into_iter()
        .map(|(s, rows)| (s, rows.into_iter().filter(|r| !failed.contains(&r.sample_id)).collect()))
        .collect();
    let table = chunking_ablation(&datasets, &cfg.train, cfg.eval.test_fraction)?;
    create_dir(dir)?;
    write_json(&dir.join("ablation.json"), &table)?;
    let text = render_ablation(&table);
    std::fs::write(dir.join("ablation.txt"), &text).with_context(|| format!("writing {}", dir.display()))?;
    print!("{text}");
    Ok(if failed.is_empty() {
        Status::Complete
    } else {
        Status::SamplesFailed(failed.len())
    })
}

pub fn run(cfg: &RunConfig) -> Result<Status> {
    let manifest = load_manifest(cfg)?;
    let dir = cfg.out()?;
    let out = process_manifest(&manifest, &assets(cfg)?, &cfg.pipeline, Stages::ALL);
    let status = status(&out)?;
    create_dir(dir)?;
    write_jsonl(&dir.join(ROWS_FILE), &out.rows)?;
    let (train_rows, test_rows) = split_rows(out.rows, cfg.eval.test_fraction, cfg.seed());
    write_jsonl(&dir.join(TEST_ROWS_FILE), &test_rows)?;
    let model = train_to(cfg, &train_rows, dir)?;
    if test_rows.is_empty() {
        warn!("no held-out rows; skipping evaluation");
    } else {
        evaluate_to(cfg, &model, &test_rows, dir)?;
    }
    Ok(status)
}

pub fn schema() -> Result<Status> {
    for (i, name) in feature_names().iter().enumerate() {
        println!("{:>2}  {name}", i + 1);
    }
    println!("schema {}", schema_hash());
    Ok(Status::Complete)
}
