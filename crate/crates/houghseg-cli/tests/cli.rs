//! End-to-end checks of the command-line surface: wiring, file outputs,
//! determinism and exit codes. Uses tiny volumes and networks; quality
//! targets live in the library's acceptance suite.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_houghseg")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn houghseg")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

const SPEC: &str = "
dims = 24 24 24
seed = 7
background = 0.15
noise_sigma = 0.02
speckle = 0.04
texture_scale = 4
texture_amp = 0.05
region = 1  12 12 12  4.5 4 4.5  2.0  1.0
";

fn write_spec(dir: &Path) -> PathBuf {
    let p = dir.join("spec.txt");
    std::fs::write(&p, SPEC).unwrap();
    p
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Generate a cohort + train a tiny net; reused by the later stages.
fn make_training_setup(dir: &Path) -> (PathBuf, PathBuf) {
    let spec = write_spec(dir);
    let data = dir.join("cohort");
    let out = run(&[
        "phantom", "--spec", &s(&spec), "--out", &s(&data), "-n", "2", "--jitter", "0.5",
    ]);
    assert_success(&out);
    let weights = dir.join("net.hcnw");
    let out = run(&[
        "train",
        "--data",
        &s(&data),
        "--arch",
        "i9 c3x4 f8",
        "--mode",
        "2d",
        "--patches-per-class",
        "60",
        "--epochs",
        "4",
        "--batch",
        "16",
        "--seed",
        "3",
        "--out",
        &s(&weights),
    ]);
    assert_success(&out);
    (data, weights)
}

#[test]
fn phantom_writes_cohort_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let out_dir = dir.path().join("cohort");
    let out = run(&["phantom", "--spec", &s(&spec), "--out", &s(&out_dir), "-n", "1"]);
    assert_success(&out);
    for f in ["p000_image.mhd", "p000_image.raw", "p000_labels.mhd", "p000_labels.raw"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let manifest = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"command\": \"phantom\""));
}

#[test]
fn phantom_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out =
            run(&["phantom", "--spec", &s(&spec), "--out", &s(out_dir), "-n", "2"]);
        assert_success(&out);
    }
    for f in ["p000_image.raw", "p001_image.raw", "p000_labels.raw"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs between identical runs"
        );
    }
}

#[test]
fn phantom_bad_spec_leaves_no_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.txt");
    // region pokes out of the volume
    std::fs::write(&spec, "dims = 16 16 16\nregion = 1 2 8 8 4 4 4 2 1\n").unwrap();
    let out_dir = dir.path().join("cohort");
    let out = run(&["phantom", "--spec", &s(&spec), "--out", &s(&out_dir), "-n", "3"]);
    assert_eq!(exit_code(&out), 1);
    assert!(!out_dir.exists() || std::fs::read_dir(&out_dir).unwrap().next().is_none());
}

#[test]
fn train_is_deterministic_and_writes_log() {
    let dir = tempfile::tempdir().unwrap();
    let (_data, weights) = make_training_setup(dir.path());
    assert!(weights.exists());
    let log = weights.with_extension("log.csv");
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.starts_with("epoch,mean_loss,train_accuracy,val_accuracy"));
    assert_eq!(text.lines().count(), 1 + 4);

    // identical seed, identical bytes
    let dir2 = tempfile::tempdir().unwrap();
    let (_d2, weights2) = make_training_setup(dir2.path());
    assert_eq!(std::fs::read(&weights).unwrap(), std::fs::read(&weights2).unwrap());
}

#[test]
fn train_unknown_arch_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let data = dir.path().join("cohort");
    assert_success(&run(&["phantom", "--spec", &s(&spec), "--out", &s(&data), "-n", "1"]));
    let out = run(&[
        "train", "--data", &s(&data), "--arch", "not-a-net", "--mode", "2d", "--out",
        &s(&dir.path().join("w.hcnw")),
    ]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn build_db_counts_scale_with_stride() {
    let dir = tempfile::tempdir().unwrap();
    let (data, weights) = make_training_setup(dir.path());
    let db1 = dir.path().join("r1_s1.hcdb");
    let db2 = dir.path().join("r1_s2.hcdb");
    for (path, stride) in [(&db1, "1"), (&db2, "2")] {
        let out = run(&[
            "build-db", "--data", &s(&data), "--weights", &s(&weights), "--region", "1",
            "--mode", "2d", "--stride", stride, "--inline-masks", "--out", &s(path),
        ]);
        assert_success(&out);
    }
    let a = houghseg::houghdb::load_db(&db1).unwrap();
    let b = houghseg::houghdb::load_db(&db2).unwrap();
    let ratio = a.len() as f64 / b.len() as f64;
    assert!((ratio - 8.0).abs() < 1.0, "stride 1 vs 2 record ratio {ratio}");
}

#[test]
fn build_db_missing_weights_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let data = dir.path().join("cohort");
    assert_success(&run(&["phantom", "--spec", &s(&spec), "--out", &s(&data), "-n", "1"]));
    let out = run(&[
        "build-db", "--data", &s(&data), "--weights", &s(&dir.path().join("absent.hcnw")),
        "--region", "1", "--mode", "2d", "--out", &s(&dir.path().join("db.hcdb")),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn segment_and_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (data, weights) = make_training_setup(dir.path());
    let db = dir.path().join("r1.hcdb");
    assert_success(&run(&[
        "build-db", "--data", &s(&data), "--weights", &s(&weights), "--region", "1",
        "--mode", "2d", "--stride", "2", "--out", &s(&db),
    ]));

    let pred = dir.path().join("pred.mhd");
    let report = dir.path().join("report.csv");
    let target = data.join("p000_image.mhd");
    let out = run(&[
        "segment", "--input", &s(&target), "--weights", &s(&weights), "--db", &s(&db),
        "--mode", "2d", "--out-labels", &s(&pred), "--out-report", &s(&report),
    ]);
    assert_success(&out);
    assert!(pred.exists());
    let report_text = std::fs::read_to_string(&report).unwrap();
    assert!(report_text.starts_with("region,success,cx,cy,cz,survivors,mask_voxels"));
    assert_eq!(report_text.lines().count(), 2);

    // ground truth scored against itself: all regions at Dice 1.0
    let gt = data.join("p000_labels.mhd");
    let metrics = dir.path().join("metrics.csv");
    let hist = dir.path().join("hist.csv");
    let out = run(&[
        "eval", "--pred", &s(&gt), "--gt", &s(&gt), "--out", &s(&metrics), "--hist", &s(&hist),
    ]);
    assert_success(&out);
    let text = std::fs::read_to_string(&metrics).unwrap();
    let row = text.lines().nth(1).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(cols[0], "1");
    assert_eq!(cols[1].parse::<f64>().unwrap(), 1.0);
    assert_eq!(cols[3], "0");
    let hist_text = std::fs::read_to_string(&hist).unwrap();
    assert_eq!(hist_text.lines().count(), 21);
    assert!(hist_text.lines().last().unwrap().starts_with("0.95,1.00,1"));

    // evaluating the prediction runs end to end
    let out = run(&[
        "eval", "--pred", &s(&pred), "--gt", &s(&gt), "--out",
        &s(&dir.path().join("m2.csv")),
    ]);
    assert_success(&out);
}

#[test]
fn segment_semantic_baseline_switch() {
    let dir = tempfile::tempdir().unwrap();
    let (data, weights) = make_training_setup(dir.path());
    let pred = dir.path().join("sem.mhd");
    let out = run(&[
        "segment", "--input", &s(&data.join("p000_image.mhd")), "--weights", &s(&weights),
        "--mode", "2d", "--semantic", "--out-labels", &s(&pred), "--out-report",
        &s(&dir.path().join("sem.csv")),
    ]);
    assert_success(&out);
    assert!(pred.exists());
}

#[test]
fn segment_missing_db_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let (data, weights) = make_training_setup(dir.path());
    let out = run(&[
        "segment", "--input", &s(&data.join("p000_image.mhd")), "--weights", &s(&weights),
        "--db", &s(&dir.path().join("absent.hcdb")), "--mode", "2d", "--out-labels",
        &s(&dir.path().join("p.mhd")), "--out-report", &s(&dir.path().join("r.csv")),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["segment", "--no-such-flag"]);
    assert_eq!(exit_code(&out), 1);
    let out = run(&["frobnicate"]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn config_file_fills_in_flags() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let data = dir.path().join("cohort");
    assert_success(&run(&["phantom", "--spec", &s(&spec), "--out", &s(&data), "-n", "1"]));
    let cfg = dir.path().join("train.cfg");
    std::fs::write(
        &cfg,
        "arch = i9 c3x4 f8\nmode = 2d\nepochs = 2\npatches_per_class = 30\nbatch = 16\n",
    )
    .unwrap();
    let weights = dir.path().join("w.hcnw");
    // flag --epochs 1 overrides the config's 2
    let out = run(&[
        "train", "--config", &s(&cfg), "--data", &s(&data), "--epochs", "1", "--out",
        &s(&weights),
    ]);
    assert_success(&out);
    let log = std::fs::read_to_string(weights.with_extension("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 1, "flag must override config epochs");
}
