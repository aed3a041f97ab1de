//! The binary end to end on a tiny environment: exit codes, artifact
//! layout, provenance and byte-for-byte reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "\
sim.trajectories = 5
sim.steps = 60
sim.test_trajectories = 2
sim.regions = 4
sim.antennas = 4
sim.subcarriers = 8
model.encoder_widths = 16,8
model.hidden = 6
model.head_hidden = 6
train.batch = 16
train.horizon = 10
train.epochs = 2
pretrain.mode = adp
pretrain.fraction = 1.0
pretrain.batch = 30
pretrain.epochs = 3
eval.horizons = 5,10
";

fn workdir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("tiny.conf"), TINY).unwrap();
    dir
}

fn chartjepa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chartjepa"))
        .current_dir(dir)
        .args(["--config", "tiny.conf", "--quiet"])
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = chartjepa(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// Data lines of a CSV, provenance comments dropped.
fn csv_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(String::from)
        .collect()
}

fn simulated(name: &str) -> PathBuf {
    let dir = workdir(name);
    ok(&dir, &["simulate", "--dataset", "tiny.ds"]);
    dir
}

#[test]
fn simulate_writes_dataset_manifest_and_summary() {
    let dir = workdir("simulate");
    let out = Command::new(env!("CARGO_BIN_EXE_chartjepa"))
        .current_dir(&dir)
        .args(["--config", "tiny.conf", "simulate", "--dataset", "tiny.ds"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("300 samples"), "{stdout}");
    assert!(stdout.contains("region histogram"));
    let head = fs::read(dir.join("tiny.ds")).unwrap();
    assert!(head.starts_with(b"CHARTJEPA-DS v1\n"));
    let manifest = fs::read_to_string(dir.join("tiny.ds.manifest")).unwrap();
    assert!(manifest.starts_with("CHARTJEPA-MANIFEST v1\n"));
    assert!(manifest.contains("extra.config_hash = "));
    assert!(manifest.contains("extra.tool = chartjepa "));
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let dir = workdir("usage");
    let out = chartjepa(&dir, &["simulate", "--sim.steps", "0", "--dataset", "none.ds"]);
    assert_eq!(code(&out), 1);
    assert!(!dir.join("none.ds").exists());

    assert_eq!(code(&chartjepa(&dir, &["simulate", "--sim.stepz", "3"])), 1);
    assert_eq!(code(&chartjepa(&dir, &["simulate", "--train.lr=abc"])), 1);
    assert_eq!(code(&chartjepa(&dir, &["frobnicate"])), 1);
    assert_eq!(code(&chartjepa(&dir, &["train", "--dataset", "missing.ds"])), 1);
    assert_eq!(code(&chartjepa(&dir, &["train", "--train.lr"])), 1);
    let help = Command::new(env!("CARGO_BIN_EXE_chartjepa")).arg("--help").output().unwrap();
    assert!(help.status.success());
}

#[test]
fn disconnected_geodesic_graph_is_a_runtime_failure() {
    let dir = simulated("disconnected");
    let out = chartjepa(
        &dir,
        &[
            "pretrain",
            "--dataset",
            "tiny.ds",
            "--mode",
            "geodesic",
            "--geodesic.k",
            "1",
            "--geodesic.time_window",
            "0",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("component sizes"));
}

#[test]
fn train_log_has_one_row_per_step() {
    let dir = simulated("trainlog");
    ok(&dir, &["train", "--dataset", "tiny.ds", "--checkpoint", "m.ckpt", "--out", "run"]);
    let rows = csv_rows(&dir.join("run/train_log.csv"));
    assert_eq!(rows[0], "step,epoch,loss,lr,grad_norm");
    // Train split: 3 trajectories of 60 slots, 50 windows each at H = 10.
    let per_epoch = (3 * 50usize).div_ceil(16);
    assert_eq!(rows.len() - 1, per_epoch * 2);
    assert!(dir.join("run/pretrain_stress.csv").exists());
    assert!(dir.join("run/train.conf").exists());
}

#[test]
fn zero_epochs_from_a_checkpoint_keeps_its_parameters() {
    let dir = simulated("zero_epochs");
    ok(&dir, &["pretrain", "--dataset", "tiny.ds", "--checkpoint", "stage1.ckpt", "--out", "p"]);
    ok(
        &dir,
        &[
            "train",
            "--dataset",
            "tiny.ds",
            "--init",
            "stage1.ckpt",
            "--checkpoint",
            "same.ckpt",
            "--train.epochs",
            "0",
            "--out",
            "t",
        ],
    );
    let a = chartjepa::models::Checkpoint::<f64>::load(dir.join("stage1.ckpt")).unwrap();
    let b = chartjepa::models::Checkpoint::<f64>::load(dir.join("same.ckpt")).unwrap();
    assert_eq!(a.online, b.online);
    assert_eq!(a.target, b.target);
    assert_eq!(a.predictor, b.predictor);
    assert_eq!(csv_rows(&dir.join("t/train_log.csv")).len(), 1);
}

#[test]
fn pretraining_modes_give_distinct_checkpoints() {
    let dir = simulated("modes");
    // Few antennas make d_ADP coarse; a wider neighbourhood keeps the graph connected.
    let geo = ["--geodesic.k", "40"];
    ok(&dir, &["pretrain", "--dataset", "tiny.ds", "--mode", "adp", "--checkpoint", "adp.ckpt", "--out", "a"]);
    let mut args = vec!["pretrain", "--dataset", "tiny.ds", "--mode", "geodesic", "--checkpoint", "geo.ckpt", "--out", "g"];
    args.extend(geo);
    ok(&dir, &args);
    assert_ne!(fs::read(dir.join("adp.ckpt")).unwrap(), fs::read(dir.join("geo.ckpt")).unwrap());
    let metrics = csv_rows(&dir.join("g/pretrain_metrics.csv"));
    assert_eq!(metrics[0], "metric,value,k,n");
    assert!(dir.join("g/dissimilarity_geodesic.dm").exists());
}

#[test]
fn evaluating_a_random_checkpoint_gives_valid_reports() {
    let dir = simulated("evaluate");
    ok(
        &dir,
        &["train", "--dataset", "tiny.ds", "--from-scratch", "--train.epochs", "0", "--checkpoint", "r.ckpt"],
    );
    ok(
        &dir,
        &["evaluate", "--dataset", "tiny.ds", "--checkpoint", "r.ckpt", "--horizons", "25,50", "--out", "e"],
    );
    let metrics = csv_rows(&dir.join("e/metrics.csv"));
    for row in &metrics[1..] {
        let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&v), "{row}");
    }
    let rows = csv_rows(&dir.join("e/downstream.csv"));
    assert_eq!(rows[0], "method,horizon,bias,accuracy");
    for m in ["rollout", "greedy", "oracle"] {
        for h in ["25", "50"] {
            // One row per bias in the default grid of four.
            let n = rows.iter().filter(|r| r.starts_with(&format!("{m},{h},"))).count();
            assert_eq!(n, 4, "{m} {h}");
        }
        assert_eq!(rows.iter().filter(|r| r.starts_with(&format!("{m},"))).count(), 8);
    }
    let emb = csv_rows(&dir.join("e/embedding.csv"));
    assert_eq!(emb[0], "x,y,region,trajectory_id");
    assert_eq!(emb.len(), 1 + 2 * 60);
}

#[test]
fn architecture_mismatch_is_diagnosed() {
    let dir = simulated("mismatch");
    ok(&dir, &["train", "--dataset", "tiny.ds", "--from-scratch", "--train.epochs", "0", "--checkpoint", "r.ckpt"]);
    ok(&dir, &["simulate", "--sim.antennas", "6", "--dataset", "wide.ds"]);
    let out = chartjepa(&dir, &["evaluate", "--dataset", "wide.ds", "--checkpoint", "r.ckpt"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dimension mismatch") && err.contains("128") && err.contains("192"), "{err}");
}

#[test]
fn predict_writes_a_chart_trajectory() {
    let dir = simulated("predict");
    ok(&dir, &["train", "--dataset", "tiny.ds", "--from-scratch", "--train.epochs", "0", "--checkpoint", "r.ckpt"]);
    ok(&dir, &["predict", "--dataset", "tiny.ds", "--checkpoint", "r.ckpt", "--start", "185", "--horizon", "7", "--out", "p"]);
    let rows = csv_rows(&dir.join("p/prediction.csv"));
    assert_eq!(rows[0], "step,x,y");
    assert_eq!(rows.len(), 1 + 8);
    // Slot 55 of a 60-slot trajectory cannot look 7 steps ahead.
    let out = chartjepa(&dir, &["predict", "--dataset", "tiny.ds", "--checkpoint", "r.ckpt", "--start", "55", "--horizon", "7"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn every_command_reproduces_its_artifacts_byte_for_byte() {
    let run = |name: &str| -> PathBuf {
        let dir = simulated(name);
        ok(&dir, &["pretrain", "--dataset", "tiny.ds", "--checkpoint", "s1.ckpt", "--out", "out"]);
        ok(&dir, &["train", "--dataset", "tiny.ds", "--checkpoint", "m.ckpt", "--out", "out"]);
        ok(&dir, &["evaluate", "--dataset", "tiny.ds", "--checkpoint", "m.ckpt", "--out", "out"]);
        ok(&dir, &["predict", "--dataset", "tiny.ds", "--checkpoint", "m.ckpt", "--start", "200", "--horizon", "5", "--out", "out"]);
        dir
    };
    let (a, b) = (run("repro_a"), run("repro_b"));
    let mut files = vec![PathBuf::from("tiny.ds"), "tiny.ds.manifest".into(), "s1.ckpt".into(), "m.ckpt".into()];
    let mut outs: Vec<PathBuf> = fs::read_dir(a.join("out"))
        .unwrap()
        .map(|e| Path::new("out").join(e.unwrap().file_name()))
        .collect();
    outs.sort();
    assert!(outs.len() >= 10, "{outs:?}");
    files.extend(outs);
    for f in &files {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert!(x == y, "{} differs between reruns", f.display());
    }
    // Provenance is stamped on every CSV.
    let log = fs::read_to_string(a.join("out/train_log.csv")).unwrap();
    assert!(log.starts_with("# tool = chartjepa "));
    assert!(log.contains("# config_hash = ") && log.contains("# seed = 7"));
}
