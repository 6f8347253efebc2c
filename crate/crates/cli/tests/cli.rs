use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hspp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hspp"))
        .args(args)
        .env_remove("HSPP_ASSETS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = hspp(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, n: usize, seed: u64) -> PathBuf {
    ok(&["synth", "--seed", &seed.to_string(), "--n-per-profile", &n.to_string(), "--out", s(dir)]);
    dir.join("manifest.jsonl")
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn synth_writes_one_trace_per_profile_and_sample() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), 2, 1);
    let traces = std::fs::read_dir(dir.path().join("traces")).unwrap().count();
    assert_eq!(traces, 10);
    assert_eq!(String::from_utf8(read(&manifest)).unwrap().lines().count(), 10);
}

#[test]
fn synth_is_idempotent() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth(a.path(), 2, 5);
    synth(b.path(), 2, 5);
    for entry in std::fs::read_dir(a.path().join("traces")).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(read(&a.path().join("traces").join(&name)), read(&b.path().join("traces").join(&name)));
    }
    assert_eq!(read(&a.path().join("manifest.jsonl")), read(&b.path().join("manifest.jsonl")));
}

#[test]
fn synth_with_zero_samples_writes_an_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = hspp(&["synth", "--n-per-profile", "0", "--out", s(dir.path())]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty manifest"));
    assert!(read(&dir.path().join("manifest.jsonl")).is_empty());
}

#[test]
fn staged_pipeline_is_reproducible_and_reports_regenerate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let manifest = synth(&d.join("corpus"), 6, 3);
    let (features, labeled) = (d.join("features.jsonl"), d.join("labeled.jsonl"));
    ok(&["extract", "--manifest", s(&manifest), "--out", s(&features)]);
    ok(&["label", "--manifest", s(&manifest), "--features", s(&features), "--out", s(&labeled)]);

    let labeled_text = String::from_utf8(read(&labeled)).unwrap();
    for line in labeled_text.lines() {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(row["features"].as_array().unwrap().len(), 77);
        assert!(row["label"].is_string());
    }

    let train = |out: &Path| {
        ok(&[
            "--seed", "11", "train", "--rows", s(&labeled), "--holdout", "0.3", "--max-epochs", "4", "--out", s(out),
        ]);
    };
    train(&d.join("m1"));
    train(&d.join("m2"));
    assert_eq!(read(&d.join("m1/model.hsmm")), read(&d.join("m2/model.hsmm")));
    assert_eq!(read(&d.join("m1/test.jsonl")), read(&d.join("m2/test.jsonl")));

    let eval_dir = d.join("eval");
    ok(&[
        "eval",
        "--model",
        s(&d.join("m1/model.hsmm")),
        "--rows",
        s(&d.join("m1/test.jsonl")),
        "--importance-repeats",
        "1",
        "--out",
        s(&eval_dir),
    ]);
    let importance: serde_json::Value = serde_json::from_slice(&read(&eval_dir.join("importance.json"))).unwrap();
    assert_eq!(importance.as_array().unwrap().len(), 77);

    let regen = d.join("regen");
    ok(&["report", "--eval-dir", s(&eval_dir), "--out", s(&regen)]);
    assert_eq!(read(&eval_dir.join("report.json")), read(&regen.join("report.json")));
    assert_eq!(read(&eval_dir.join("report.txt")), read(&regen.join("report.txt")));
}

#[test]
fn eval_without_a_model_is_an_explicit_error() {
    let dir = tempfile::tempdir().unwrap();
    let rows = dir.path().join("rows.jsonl");
    std::fs::write(&rows, "").unwrap();
    let out = hspp(&["eval", "--model", s(&dir.path().join("nope.hsmm")), "--rows", s(&rows), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(15));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no trained model"));
}

#[test]
fn corrupt_samples_are_skipped_with_a_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), 1, 2);
    let traces: Vec<PathBuf> = std::fs::read_dir(dir.path().join("traces")).unwrap().map(|e| e.unwrap().path()).collect();
    let rows = dir.path().join("rows.jsonl");

    std::fs::write(&traces[0], b"garbage").unwrap();
    let out = hspp(&["extract", "--manifest", s(&manifest), "--out", s(&rows)]);
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8(read(&rows)).unwrap();
    let ids: std::collections::BTreeSet<String> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["sample_id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(ids.len(), 4);

    for t in &traces {
        std::fs::write(t, b"garbage").unwrap();
    }
    assert_eq!(hspp(&["extract", "--manifest", s(&manifest), "--out", s(&rows)]).status.code(), Some(12));
}

#[test]
fn missing_annotation_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), 1, 2);
    let victim = std::fs::read_dir(dir.path().join("annotations")).unwrap().next().unwrap().unwrap().path();
    std::fs::remove_file(&victim).unwrap();
    let out = hspp(&["chunk", "--manifest", s(&manifest), "--out", s(&dir.path().join("rows.jsonl"))]);
    assert_eq!(out.status.code(), Some(3));
    let name = victim.file_name().unwrap().to_str().unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains(name));
}

#[test]
fn asset_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("corpus"), 1, 4);
    let (plain, custom) = (dir.path().join("plain.jsonl"), dir.path().join("custom.jsonl"));
    ok(&["chunk", "--manifest", s(&manifest), "--out", s(&plain)]);

    let assets = dir.path().join("assets");
    std::fs::create_dir(&assets).unwrap();
    let words: std::collections::BTreeSet<String> = String::from_utf8(read(&plain))
        .unwrap()
        .lines()
        .flat_map(|l| {
            let row: serde_json::Value = serde_json::from_str(l).unwrap();
            row["chunks"].to_string().split(|c: char| !c.is_ascii_alphabetic()).map(str::to_string).collect::<Vec<_>>()
        })
        .filter(|w| w.len() > 2)
        .collect();
    std::fs::write(assets.join("stopwords.txt"), words.into_iter().collect::<Vec<_>>().join("\n")).unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_hspp"))
        .args(["chunk", "--manifest", s(&manifest), "--out", s(&custom)])
        .env("HSPP_ASSETS", &assets)
        .output()
        .unwrap();
    assert!(out.status.success() || out.status.code() == Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_ne!(read(&plain), read(&custom));

    let missing = Command::new(env!("CARGO_BIN_EXE_hspp"))
        .args(["chunk", "--manifest", s(&manifest), "--out", s(&custom)])
        .env("HSPP_ASSETS", dir.path().join("absent"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(11));
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("corpus"), 1, 6);
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!("manifest = {:?}\n[pipeline]\nstrategy = \"no-chunking\"\n", s(&manifest)),
    )
    .unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    ok(&["--config", s(&config), "chunk", "--out", s(&a)]);
    ok(&["--config", s(&config), "chunk", "--strategy", "sentence-level", "--out", s(&b)]);
    let count = |p: &Path| String::from_utf8(read(p)).unwrap().lines().count();
    assert_eq!(count(&a), 5);
    assert!(count(&b) > 5);
}
