//! End-to-end CLI checks: every subcommand runs against real files, exit
//! codes follow the contract, and machine-readable output parses.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rxdet"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("failed to spawn rxdet")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed (status {:?}):\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Workspace { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn str(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

/// One tiny trained model shared by the commands that need weights.
fn prepare(ws: &Workspace) {
    let out = run(&[
        "gen-data",
        "--out",
        &ws.str("train.jsonl"),
        "--count",
        "24",
        "--seed",
        "5",
    ]);
    assert_ok(&out, "gen-data train");
    let out = run(&[
        "gen-data",
        "--out",
        &ws.str("test.jsonl"),
        "--count",
        "8",
        "--seed",
        "6",
    ]);
    assert_ok(&out, "gen-data test");

    let out = run(&[
        "train",
        "--train",
        &ws.str("train.jsonl"),
        "--test",
        &ws.str("test.jsonl"),
        "--out-weights",
        &ws.str("model.rxd"),
        "--metrics",
        &ws.str("metrics.csv"),
        "--max-batches",
        "4",
        "--mini-batch",
        "4",
        "--eval-interval",
        "4",
        "--seed",
        "1",
        "--anchors",
        "table",
    ]);
    assert_ok(&out, "train");
    assert!(ws.path("model.rxd").exists());
    let metrics = std::fs::read_to_string(ws.path("metrics.csv")).unwrap();
    assert!(metrics.starts_with("batch,lr,L1,L2,L3,L_total,mAP50,mAP75"));
    assert_eq!(metrics.lines().count(), 5, "header + 4 batch rows");
}

#[test]
fn full_pipeline() {
    let ws = Workspace::new();
    prepare(&ws);

    // compute-anchors prints nine widths and can store them
    let out = run(&[
        "compute-anchors",
        "--data",
        &ws.str("train.jsonl"),
        "--out",
        &ws.str("anchors.json"),
    ]);
    assert_ok(&out, "compute-anchors");
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("anchors:"), "{text}");
    assert!(ws.path("anchors.json").exists());

    // detect: JSON parses, rows carry the full schema
    let out = run(&[
        "detect",
        "--weights",
        &ws.str("model.rxd"),
        "--input",
        &ws.str("test.jsonl"),
        "--conf",
        "0.2",
        "--format",
        "json",
    ]);
    assert_ok(&out, "detect json");
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).expect("detect output is JSON");
    if let Some(first) = rows.as_array().unwrap().first() {
        for key in ["sample_index", "class", "confidence", "center", "width", "start", "end"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
    }

    // detect CSV: header + parseable rows
    let out = run(&[
        "detect",
        "--weights",
        &ws.str("model.rxd"),
        "--input",
        &ws.str("test.jsonl"),
        "--conf",
        "0.2",
        "--format",
        "csv",
    ]);
    assert_ok(&out, "detect csv");
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.starts_with("sample_index,class,confidence,center,width,start,end"));
    for line in text.lines().skip(1) {
        assert_eq!(line.split(',').count(), 7, "bad CSV row {line:?}");
    }

    // eval prints the table and writes a JSON report
    let out = run(&[
        "eval",
        "--weights",
        &ws.str("model.rxd"),
        "--data",
        &ws.str("test.jsonl"),
        "--report",
        &ws.str("report.json"),
    ]);
    assert_ok(&out, "eval");
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("overall"), "{text}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("report.json")).unwrap()).unwrap();
    assert_eq!(report["classes"].as_array().unwrap().len(), 5);

    // soft-NMS path
    let out = run(&[
        "eval",
        "--weights",
        &ws.str("model.rxd"),
        "--data",
        &ws.str("test.jsonl"),
        "--soft-nms-sigma",
        "0.5",
        "--iou",
        "0.5",
    ]);
    assert_ok(&out, "eval soft-nms");

    // bench reports throughput and the parameter budget
    let out = run(&[
        "bench",
        "--weights",
        &ws.str("model.rxd"),
        "--data",
        &ws.str("test.jsonl"),
        "--threads",
        "1",
        "--min-seconds",
        "0.2",
    ]);
    assert_ok(&out, "bench");
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("samples_per_second:"), "{text}");
    assert!(text.contains("parameters: 70308"), "{text}");

    // plot writes one SVG per sample
    let out = run(&[
        "plot",
        "--weights",
        &ws.str("model.rxd"),
        "--input",
        &ws.str("test.jsonl"),
        "--out-dir",
        &ws.str("plots"),
    ]);
    assert_ok(&out, "plot");
    let entries: Vec<_> = std::fs::read_dir(ws.path("plots")).unwrap().collect();
    assert_eq!(entries.len(), 8);
    let svg = std::fs::read_to_string(ws.path("plots").join("sample_00000.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn detect_on_clean_sample_is_empty_and_ok() {
    let ws = Workspace::new();
    // hand-written dataset: one flat series, no impairments
    let flat: Vec<String> = (0..1800).map(|_| "40.0".to_string()).collect();
    std::fs::write(
        ws.path("clean.jsonl"),
        format!("{{\"values\":[{}],\"labels\":[]}}\n", flat.join(",")),
    )
    .unwrap();
    let out = run(&[
        "gen-data",
        "--out",
        &ws.str("gen.jsonl"),
        "--count",
        "8",
        "--seed",
        "2",
    ]);
    assert_ok(&out, "gen");
    // a short real training run through a config file, enough to push
    // background confidence below the threshold
    std::fs::write(
        ws.path("train.cfg"),
        "learning_rate=0.004\nburn_in=50\nmax_batches=400\nmini_batch=4\naugment=false\neval_interval=400\npatience=100\n",
    )
    .unwrap();
    let out = run(&[
        "train",
        "--train",
        &ws.str("gen.jsonl"),
        "--test",
        &ws.str("gen.jsonl"),
        "--config",
        &ws.str("train.cfg"),
        "--out-weights",
        &ws.str("m.rxd"),
        "--anchors",
        "table",
    ]);
    assert_ok(&out, "short config-driven train");

    let out = run(&[
        "detect",
        "--weights",
        &ws.str("m.rxd"),
        "--input",
        &ws.str("clean.jsonl"),
        "--format",
        "json",
    ]);
    assert_ok(&out, "detect clean");
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 0, "flat series should yield no detections");
}

#[test]
fn exit_codes_follow_contract() {
    let ws = Workspace::new();

    // input error: missing dataset
    let out = run(&["compute-anchors", "--data", &ws.str("missing.jsonl")]);
    assert_eq!(out.status.code(), Some(1), "missing file is an input error");

    // input error: malformed dataset line carries the line number
    std::fs::write(ws.path("bad.jsonl"), "not json\n").unwrap();
    let out = run(&["compute-anchors", "--data", &ws.str("bad.jsonl")]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains(":1:"), "{err}");

    // config error: bad mix weight
    let out = run(&[
        "gen-data",
        "--out",
        &ws.str("x.jsonl"),
        "--count",
        "1",
        "--mix",
        "ghost=1",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // config error: unknown config key
    std::fs::write(ws.path("bad.cfg"), "nope=1\n").unwrap();
    std::fs::write(ws.path("d.jsonl"), "{\"values\":[40.0,41.0],\"labels\":[]}\n").unwrap();
    let out = run(&[
        "train",
        "--train",
        &ws.str("d.jsonl"),
        "--test",
        &ws.str("d.jsonl"),
        "--config",
        &ws.str("bad.cfg"),
        "--out-weights",
        &ws.str("w.rxd"),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // input error: corrupt weights magic
    std::fs::write(ws.path("fake.rxd"), b"XXXX-not-weights").unwrap();
    let out = run(&[
        "detect",
        "--weights",
        &ws.str("fake.rxd"),
        "--input",
        &ws.str("d.jsonl"),
    ]);
    assert_eq!(out.status.code(), Some(1));

    // usage errors exit 2 (clap default)
    let out = run(&["detect"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_data_is_seed_deterministic() {
    let ws = Workspace::new();
    let a = ws.str("a.jsonl");
    let b = ws.str("b.jsonl");
    assert_ok(&run(&["gen-data", "--out", &a, "--count", "12", "--seed", "33"]), "gen a");
    assert_ok(&run(&["gen-data", "--out", &b, "--count", "12", "--seed", "33"]), "gen b");
    let ca = std::fs::read(Path::new(&a)).unwrap();
    let cb = std::fs::read(Path::new(&b)).unwrap();
    assert_eq!(ca, cb);
}
