//! Drives the `dagh` binary end to end on a tiny synthetic problem.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dagh::checkpoint::Checkpoint;
use dagh::config::ExperimentConfig;
use dagh::datasets::{LabelSet, Split};
use dagh::hashnet::BinaryCode;
use dagh::metrics::EvalReport;
use dagh::retrieval::{pack, PackedCodes, MAGIC};
use dagh::trainer::{encode_dataset, LOSS_CSV, STAGE2_DIR};

const TINY: &str = r#"
output_dir = "unused"

[dataset]
kind = "synthetic"
classes = 2
train_per_class = 6
query_per_class = 2
gallery_per_class = 6
height = 8
width = 8
channels = 3
seed = 3

[model]
code_length = 16
attention_channels = [4]
hash_channels = [4]
hidden = 8

[train]
epochs_stage1 = 2
epochs_stage2 = 2
batch_size = 4
lr = 0.001
seed = 7
"#;

fn dagh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dagh")).args(args).output().expect("spawn dagh")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(&o));
    o
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("tiny.toml");
    fs::write(&path, text).unwrap();
    path
}

fn train(dir: &Path) -> PathBuf {
    let cfg = write_config(dir, TINY);
    let run = dir.join("run");
    ok(dagh(&["train", "--config", s(&cfg), "--output", s(&run)]));
    run
}

fn encode(run: &Path, split: Split, out: &Path) {
    let snapshot = run.join("config.toml");
    ok(dagh(&[
        "encode",
        "--checkpoint",
        s(&run.join(STAGE2_DIR)),
        "--config",
        s(&snapshot),
        "--split",
        &split.to_string(),
        "--out",
        s(out),
    ]));
}

#[test]
fn missing_config_exits_2_and_names_path() {
    let o = dagh(&["train", "--config", "/no/such/experiment.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/experiment.toml"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(dagh(&["train"]).status.code(), Some(2));
    assert_eq!(dagh(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("seed = 7", "seed = 7\nsede = 1"));
    let o = dagh(&["train", "--config", s(&cfg), "--output", s(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn train_writes_run_directory_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = train(dir.path());
    for f in ["run.json", "config.toml", LOSS_CSV, "loss.json", "targets.dagh", "stage1/manifest.json", "stage2/manifest.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["train_images"], 12);
    let csv = fs::read_to_string(run.join(LOSS_CSV)).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "epoch,sem,att,penalty,guide,total");
    assert_eq!(csv.lines().count(), 5);

    let again = dir.path().join("again");
    let cfg = dir.path().join("tiny.toml");
    ok(dagh(&["train", "--config", s(&cfg), "--output", s(&again)]));
    assert_eq!(fs::read(run.join(LOSS_CSV)).unwrap(), fs::read(again.join(LOSS_CSV)).unwrap());
}

#[test]
fn output_dir_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_dagh"))
        .args(["train", "--config", s(&cfg)])
        .env("DAGH_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(target.join("run.json").exists());
}

#[test]
fn divergent_training_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("lr = 0.001", "lr = 1e300"));
    let o = dagh(&["train", "--config", s(&cfg), "--output", s(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn encode_evaluate_retrieve_plot() {
    let dir = tempfile::tempdir().unwrap();
    let run = train(dir.path());
    let q = dir.path().join("query.dagh");
    let g = dir.path().join("gallery.dagh");
    encode(&run, Split::Query, &q);
    encode(&run, Split::Gallery, &g);

    // Codes on disk equal in-memory encoding of the loaded checkpoint.
    let bytes = fs::read(&q).unwrap();
    assert_eq!(&bytes[..4], MAGIC);
    let config = ExperimentConfig::load(&run.join("config.toml")).unwrap();
    let splits = config.dataset.load().unwrap();
    let ckpt = Checkpoint::load(&run.join(STAGE2_DIR)).unwrap();
    let codes = encode_dataset(&splits.query, ckpt.encoder()).unwrap();
    assert_eq!(PackedCodes::read(&q).unwrap(), pack(&codes).unwrap());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("query.dagh.meta.json")).unwrap()).unwrap();
    assert!(meta["encode_us_per_image"].as_f64().unwrap() > 0.0);

    let eval = dir.path().join("eval");
    ok(dagh(&["evaluate", "--queries", s(&q), "--gallery", s(&g), "--out", s(&eval)]));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    for key in ["map", "p_at_h2", "pr_curve", "p_at_n", "bit_correlation"] {
        assert!(!report[key].is_null(), "{key} missing");
    }
    assert!(report["encode_us_per_image"].as_f64().unwrap() > 0.0);

    let ranks = dir.path().join("ranks.csv");
    ok(dagh(&["retrieve", "--queries", s(&q), "--gallery", s(&g), "--out", s(&ranks), "--top", "3"]));
    let csv = fs::read_to_string(&ranks).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "query,rank,gallery_id,distance");
    assert_eq!(csv.lines().count(), 1 + 4 * 3);

    let charts = dir.path().join("charts");
    ok(dagh(&["plot", "--report", s(&eval), "--out", s(&charts)]));
    let names = ["pr_curve.png", "p_at_n.png", "p_at_h2_vs_bits.png"];
    let first: Vec<Vec<u8>> = names.iter().map(|n| fs::read(charts.join(n)).unwrap()).collect();
    ok(dagh(&["plot", "--report", s(&eval), "--out", s(&charts)]));
    let second: Vec<Vec<u8>> = names.iter().map(|n| fs::read(charts.join(n)).unwrap()).collect();
    assert_eq!(first, second);

    let maps = dir.path().join("maps");
    ok(dagh(&[
        "plot-attention",
        "--checkpoint",
        s(&run.join(STAGE2_DIR)),
        "--dataset",
        s(&run.join("data").join("query")),
        "--count",
        "2",
        "--out",
        s(&maps),
    ]));
    assert_eq!(fs::read_dir(&maps).unwrap().count(), 2);
}

#[test]
fn plot_without_inputs_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = dagh(&["plot", "--report", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

fn fixture_codes(k: usize, bits: &[&[i8]]) -> Vec<BinaryCode> {
    bits.iter()
        .map(|b| BinaryCode::new((0..k).map(|i| b[i % b.len()]).collect()).unwrap())
        .collect()
}

#[test]
fn evaluate_rejects_mismatched_code_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.dagh");
    let g = dir.path().join("g.dagh");
    pack(&fixture_codes(16, &[&[1]])).unwrap().write(&q).unwrap();
    pack(&fixture_codes(32, &[&[1]])).unwrap().write(&g).unwrap();
    let labels = dir.path().join("labels.json");
    fs::write(&labels, "[[0]]").unwrap();
    let o = dagh(&[
        "evaluate",
        "--queries",
        s(&q),
        "--gallery",
        s(&g),
        "--query-labels",
        s(&labels),
        "--gallery-labels",
        s(&labels),
        "--out",
        s(&dir.path().join("e")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("16") && err.contains("32"), "{err}");
}

#[test]
fn perfectly_separated_codes_score_map_one() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.dagh");
    let g = dir.path().join("g.dagh");
    let a: &[i8] = &[1, 1, 1, 1];
    let b: &[i8] = &[-1, -1, -1, -1];
    pack(&fixture_codes(16, &[a, b])).unwrap().write(&q).unwrap();
    pack(&fixture_codes(16, &[a, a, a, b, b, b])).unwrap().write(&g).unwrap();
    let ql = dir.path().join("ql.json");
    let gl = dir.path().join("gl.json");
    fs::write(&ql, serde_json::to_string(&[LabelSet::single(0), LabelSet::single(1)]).unwrap()).unwrap();
    let gallery_labels: Vec<LabelSet> = [0, 0, 0, 1, 1, 1].into_iter().map(LabelSet::single).collect();
    fs::write(&gl, serde_json::to_string(&gallery_labels).unwrap()).unwrap();
    let out = dir.path().join("e");
    ok(dagh(&[
        "evaluate",
        "--queries",
        s(&q),
        "--gallery",
        s(&g),
        "--query-labels",
        s(&ql),
        "--gallery-labels",
        s(&gl),
        "--out",
        s(&out),
    ]));
    let report = EvalReport::read(&out.join("report.json")).unwrap();
    assert_eq!(report.map, 1.0);
    assert_eq!(report.p_at_h2, 1.0);
    assert!(report.encode_us_per_image.is_none());
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("sweep");
    ok(dagh(&["sweep", "--config", s(&cfg), "--param", "model.code_length", "--values", "12,24", "--output", s(&out)]));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("model.code_length=12").is_dir());
    assert!(out.join("model.code_length=24").is_dir());
    assert!(out.join("sweep.md").exists());
}
