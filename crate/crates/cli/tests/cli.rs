use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajvqa")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn synth(dir: &Path, name: &str, images: bool) -> PathBuf {
    let spec = fixtures().join(format!("{name}.spec.json"));
    let mut args = vec!["synth", "--spec", s(&spec), "--seed", "7", "--out", s(dir)];
    if !images {
        args.push("--no-images");
    }
    ok(&args);
    dir.join(format!("{name}.json"))
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn synth_then_generate_covers_every_category() {
    let dir = tempfile::tempdir().unwrap();
    let eps = dir.path().join("eps");
    synth(&eps, "pickplace", true);
    let out = dir.path().join("out");
    ok(&["generate", "-i", s(&eps), "-o", s(&out), "--seed", "7"]);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("run_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["trajectories_processed"], 1);
    let per_cat = summary["items_per_category"].as_object().unwrap();
    for (cat, n) in per_cat {
        assert!(n.as_u64().unwrap() >= 1, "no items for {cat}");
    }
    assert_eq!(per_cat.len(), 13);
    let lines = std::fs::read_to_string(out.join("items.jsonl")).unwrap();
    let items: Vec<Value> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(items.len() as u64, summary["items_total"].as_u64().unwrap());
    for it in &items {
        for img in it["images"].as_array().unwrap() {
            assert!(out.join(img.as_str().unwrap()).is_file());
        }
    }
}

#[test]
fn output_is_identical_for_one_and_many_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let eps = dir.path().join("eps");
    synth(&eps, "pickplace", true);
    synth(&eps, "twocycle", true);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["generate", "-i", s(&eps), "-o", s(&a), "--jobs", "1"]);
    ok(&["generate", "-i", s(&eps), "-o", s(&b), "--jobs", "4"]);
    assert!(tree(&a) == tree(&b), "outputs differ");
}

#[test]
fn stats_curate_and_dry_run_eval() {
    let dir = tempfile::tempdir().unwrap();
    let eps = dir.path().join("eps");
    synth(&eps, "pickplace", false);
    synth(&eps, "twocycle", false);
    let out = dir.path().join("out");
    ok(&["generate", "-i", s(&eps), "-o", s(&out), "--no-media"]);
    let items = out.join("items.jsonl");
    let n = std::fs::read_to_string(&items).unwrap().lines().count() as u64;

    let st = json_stdout(&ok(&["stats", s(&items)]));
    assert_eq!(st["samples"], n);
    let pct: f64 =
        st["answer_distribution"].as_object().unwrap().values().map(|v| v["percent"].as_f64().unwrap()).sum();
    assert!((pct - 100.0).abs() < 1e-9);

    let targets = dir.path().join("targets.json");
    std::fs::write(&targets, r#"{"fields":["category"],"weights":{"RS":1,"AU":1}}"#).unwrap();
    let curated = dir.path().join("curated.jsonl");
    let rep = json_stdout(&ok(&["curate", s(&items), "--targets", s(&targets), "--out", s(&curated), "--seed", "3"]));
    let kept: Vec<Value> =
        std::fs::read_to_string(&curated).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rep["output"], kept.len() as u64);
    let cats: BTreeSet<&str> = kept.iter().map(|v| v["category"].as_str().unwrap()).collect();
    assert_eq!(cats, ["AU", "RS"].into_iter().collect());

    let oracle = json_stdout(&ok(&["eval", s(&items), "--dry-run", "--canned", "oracle"]));
    assert_eq!(oracle["overall"]["n"], n);
    assert_eq!(oracle["overall"]["accuracy"], 1.0);

    let cache = dir.path().join("cache.jsonl");
    let r1 = json_stdout(&ok(&["eval", s(&items), "--dry-run", "--cache", s(&cache), "--seed", "5"]));
    let r2 = json_stdout(&ok(&["eval", s(&items), "--dry-run", "--cache", s(&cache), "--seed", "5"]));
    assert_eq!(r1["overall"], r2["overall"]);
    assert_eq!(std::fs::read_to_string(&cache).unwrap().lines().count() as u64, n);
}

#[test]
fn segment_prints_runs_and_keyframes() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), "twocycle", false);
    let v = json_stdout(&ok(&["segment", s(&m), "--no-media", "--frames"]));
    assert_eq!(v["id"], "twocycle");
    assert_eq!(
        v["labels"].as_array().unwrap().len() as u64,
        v["runs"].as_array().unwrap().last().unwrap()["end_index"].as_u64().unwrap() + 1
    );
    assert!(!v["keyframes"].as_array().unwrap().is_empty());
}

#[test]
fn ingest_check_reports_missing_media_with_failure_status() {
    let dir = tempfile::tempdir().unwrap();
    let good = synth(&dir.path().join("good"), "pickplace", true);
    let out = ok(&["ingest-check", s(&good)]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok\tpickplace"));

    let bad = synth(&dir.path().join("bad"), "pickplace", false);
    let out = run(&["ingest-check", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("error\t"));
}

#[test]
fn invalid_arguments_and_missing_inputs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["generate", "-i", s(&dir.path().join("nothing")), "-o", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let eps = dir.path().join("eps");
    synth(&eps, "pickplace", false);
    let out = run(&["generate", "-i", s(&eps), "-o", s(dir.path()), "--no-media", "--tau-g", "0.9", "--tau-c", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau_g"), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!run(&["synth", "--out", s(dir.path())]).status.success());
}

#[test]
fn random_synthesis_writes_loadable_episodes() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--random", "3", "--seed", "40", "--out", s(dir.path()), "--no-images"]);
    for seed in 40..43 {
        let m = dir.path().join(format!("rand{seed:06}.json"));
        let v = json_stdout(&ok(&["segment", s(&m), "--no-media"]));
        assert_eq!(v["id"], format!("rand{seed:06}"));
    }
}
