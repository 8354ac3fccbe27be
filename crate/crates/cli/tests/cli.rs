use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "[sim]\nn_records = 600\n[train]\nepochs = 2\ncollision_epochs = 2\n[train.multi]\nhidden = [4, 4]\n";

fn dqrnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dqrnn"))
        .current_dir(dir)
        .env("DQRNN_LOG", "warn")
        .args(args)
        .output()
        .expect("spawn dqrnn")
}

fn ok(dir: &Path, args: &[&str]) {
    let o = dqrnn(dir, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().to_path_buf();
    std::fs::write(p.join("small.toml"), SMALL).unwrap();
    ok(&p, &["--config", "small.toml", "--seed", "3", "simulate", "--out", "data.jsonl"]);
    (d, p)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_is_byte_reproducible_and_hashed() {
    let (_d, p) = setup();
    ok(&p, &["--config", "small.toml", "--seed", "3", "simulate", "--out", "again.jsonl"]);
    let a = std::fs::read(p.join("data.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(p.join("again.jsonl")).unwrap());
    let m = json(&p.join("data.jsonl.manifest.json"));
    assert_eq!(m["seed"], 3);
    assert_eq!(m["config"]["sim"]["n_records"], 600);
    assert_eq!(m["outputs"][0]["bytes"], a.len() as u64);
    assert!(m["outputs"][0]["hash"].as_str().unwrap().starts_with("sha256:"));
    let m2 = json(&p.join("again.jsonl.manifest.json"));
    assert_eq!(m["outputs"][0]["hash"], m2["outputs"][0]["hash"]);

    ok(&p, &["--config", "small.toml", "--seed", "4", "simulate", "--out", "other.jsonl"]);
    assert_ne!(a, std::fs::read(p.join("other.jsonl")).unwrap());

    ok(&p, &["--config", "small.toml", "--seed", "3", "simulate", "--out", "data.csv"]);
    let csv = std::fs::read_to_string(p.join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 600);
}

#[test]
fn exit_codes_distinguish_failures() {
    let (_d, p) = setup();
    let code = |args: &[&str]| dqrnn(&p, args).status.code().unwrap();
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["augment", "--in", "missing.jsonl", "--out", "x.jsonl"]), 3);
    std::fs::write(p.join("bad.toml"), "[train]\nepochs = 0\n").unwrap();
    assert_eq!(code(&["--config", "bad.toml", "simulate", "--out", "x.jsonl"]), 4);
    std::fs::write(p.join("junk.jsonl"), "not json\n").unwrap();
    assert_eq!(code(&["augment", "--in", "junk.jsonl", "--out", "x.jsonl"]), 5);
    let text = std::fs::read_to_string(p.join("data.jsonl")).unwrap();
    let (head, rest) = text.split_once('\n').unwrap();
    let mut h: Value = serde_json::from_str(head).unwrap();
    h["version"] = Value::from(99);
    std::fs::write(p.join("future.jsonl"), format!("{h}\n{rest}")).unwrap();
    assert_eq!(code(&["augment", "--in", "future.jsonl", "--out", "x.jsonl"]), 6);
    assert_eq!(code(&["plot", "--out", "x.svg"]), 2);
}

#[test]
fn augment_adds_eight_copies_per_collision() {
    let (_d, p) = setup();
    ok(&p, &["augment", "--in", "data.jsonl", "--out", "aug.jsonl"]);
    let rows = |f: &str| -> Vec<Value> {
        std::fs::read_to_string(p.join(f)).unwrap().lines().skip(1).map(|l| serde_json::from_str(l).unwrap()).collect()
    };
    let orig = rows("data.jsonl");
    let aug = rows("aug.jsonl");
    let walls = orig.iter().filter(|r| r["collision_label"] != "none").count();
    assert!(walls > 0);
    assert_eq!(aug.len(), orig.len() + 8 * walls);
    assert_eq!(dqrnn(&p, &["augment", "--in", "aug.jsonl", "--out", "twice.jsonl"]).status.code(), Some(4));
}

#[test]
fn oracle_eval_has_a_diagonal_confusion_matrix() {
    let (_d, p) = setup();
    ok(&p, &["--config", "small.toml", "eval", "--in", "data.jsonl", "--out", "ev", "--attention", "oracle", "--collision", "oracle"]);
    let r = json(&p.join("ev/report.json"));
    assert_eq!(r["attention"]["accuracy"], 1.0);
    let counts = r["attention"]["confusion"]["counts"].as_array().unwrap();
    for (i, row) in counts.iter().enumerate() {
        for (j, c) in row.as_array().unwrap().iter().enumerate() {
            if i != j {
                assert_eq!(c, 0);
            }
        }
    }
    let s = &r["sequence"];
    assert!(s["first_attention_error"].is_null());
    assert!(s["final_position_error"].as_f64().unwrap() < 1e-9);
    assert!(s["well_formed"].as_bool().unwrap());
    let csv = std::fs::read_to_string(p.join("ev/confusion.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
    assert!(json(&p.join("ev/manifest.json"))["outputs"].as_array().unwrap().len() >= 3);
}

#[test]
fn train_predict_eval_and_plot() {
    let (_d, p) = setup();
    let cfg = ["--config", "small.toml"];
    let run = |rest: &[&str]| ok(&p, &[&cfg[..], rest].concat());
    run(&["train", "--in", "data.jsonl", "--out", "multi"]);
    run(&["train", "--in", "data.jsonl", "--out", "binary", "--variant", "binary"]);
    run(&["train", "--in", "data.jsonl", "--out", "col", "--stage", "collision"]);
    for dir in ["multi", "binary", "col"] {
        let log = std::fs::read_to_string(p.join(dir).join("train_log.csv")).unwrap();
        assert_eq!(log.lines().count(), 1 + 3, "{dir}");
        assert!(p.join(dir).join("manifest.json").exists());
    }

    // a collision checkpoint is not an attention model
    let o = dqrnn(&p, &[&cfg[..], &["eval", "--in", "data.jsonl", "--out", "e", "--attention", "col/model.json"]].concat());
    assert_eq!(o.status.code(), Some(4));

    run(&["eval", "--in", "data.jsonl", "--out", "ev", "--attention", "binary/model.json", "--collision", "col/model.json"]);
    let r = json(&p.join("ev/report.json"));
    assert_eq!(r["attention_variant"], "binary");
    assert_eq!(r["collision"]["path_losses"].as_array().unwrap().len(), 3);
    let s = &r["sequence"];
    assert!(s["free_prefix_max_error"].as_f64().unwrap() < 1e-6);

    run(&["predict", "--in", "data.jsonl", "--out", "trace.jsonl", "--attention", "multi/model.json", "--collision", "col/model.json", "--steps", "12"]);
    let lines = std::fs::read_to_string(p.join("trace.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 1 + 13);

    ok(&p, &["plot", "--in", "trace.jsonl", "--truth", "data.jsonl", "--out", "trace.svg"]);
    let svg = std::fs::read_to_string(p.join("trace.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("</svg>"));
    ok(&p, &["plot", "--figure", "poses", "--out", "poses.svg"]);
    assert!(std::fs::read_to_string(p.join("poses.svg")).unwrap().contains("<polyline"));
}
