use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isicv::experiment::{checkpoint_path, Checkpoint, ImportanceDump, RunRecord, METRICS_HEADER, SWEEP_HEADER};
use isicv::snn::Head;
use isicv::{LifConfig, Network};
use serde::Deserialize;

const SYNTHETIC: &str = "\
# small synthetic profile
benchmark = synthetic
method = none
hidden = 16
timesteps = 6
epochs = 2
batch_size = 16
importance_samples = 40
synthetic_dim = 32
synthetic_tasks = 2
";

fn isicv(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_isicv"));
    cmd.args(args).env_remove("ISICV_DATA_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("exp.cfg");
    fs::write(&path, format!("{SYNTHETIC}output_dir = {}\n{extra}", dir.join("out").display())).unwrap();
    path
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[derive(Debug, Deserialize)]
struct MetricsRow {
    method: String,
    lambda: f64,
    seed: String,
    aa: f64,
    bwt: f64,
    af: f64,
    aa_std: Option<f64>,
    bwt_std: Option<f64>,
    af_std: Option<f64>,
}

fn metrics_rows(path: &Path) -> Vec<MetricsRow> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), METRICS_HEADER);
    r.deserialize().map(|row| row.unwrap()).collect()
}

#[test]
fn single_seed_run_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seeds = 0\n");
    ok(&isicv(&["run", "--config", cfg.to_str().unwrap()], &[]));
    let out = dir.path().join("out");
    let rows = metrics_rows(&out.join("metrics.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].method.as_str(), rows[0].lambda, rows[0].seed.as_str()), ("none", 0.0, "0"));
    assert!(rows[0].aa_std.is_none());
    assert!(out.join("results_seed0.csv").exists());
    assert!(checkpoint_path(&out, 0, 1).exists());
    let rec: RunRecord = serde_json::from_slice(&fs::read(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(rec.seeds.len(), 1);
    assert_eq!(rec.seeds[0].metrics.aa, rows[0].aa);
    assert_eq!(rec.seeds[0].metrics.bwt, rows[0].bwt);
    assert_eq!(rec.seeds[0].metrics.af, rows[0].af);
}

#[test]
fn three_seeds_add_an_aggregate_row_and_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seeds = 0,1,2\nmethod = isi-cv\n");
    ok(&isicv(&["run", "-c", cfg.to_str().unwrap()], &[]));
    let out = dir.path().join("out");
    let first: Vec<Vec<u8>> = ["metrics.csv", "results_seed0.csv", "results_seed2.csv"]
        .iter()
        .map(|f| fs::read(out.join(f)).unwrap())
        .collect();
    let rows = metrics_rows(&out.join("metrics.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3].seed, "mean");
    let mean = rows[..3].iter().map(|r| r.aa).sum::<f64>() / 3.0;
    assert!((rows[3].aa - mean).abs() < 1e-12);
    assert!(rows[3].aa_std.is_some() && rows[3].bwt_std.is_some() && rows[3].af_std.is_some());
    assert_eq!(rows[0].lambda, 500.0);

    ok(&isicv(&["run", "-c", cfg.to_str().unwrap()], &[]));
    for (f, bytes) in ["metrics.csv", "results_seed0.csv", "results_seed2.csv"].iter().zip(&first) {
        assert_eq!(&fs::read(out.join(f)).unwrap(), bytes, "{f} differs");
    }
}

#[test]
fn flags_override_file_and_env_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seeds = 0\n");
    let out = isicv(
        &["run", "-c", cfg.to_str().unwrap(), "--hidden", "8", "--lambda", "7", "--method", "isi-cv"],
        &[],
    );
    ok(&out);
    let rec: RunRecord = serde_json::from_slice(&fs::read(dir.path().join("out/run.json")).unwrap()).unwrap();
    assert_eq!(rec.config.hidden, 8);
    assert_eq!(rec.lambda, 7.0);
    assert_eq!(rec.seeds[0].importances[0].len(), 8);

    // env beats the file's data_dir; a bad directory is a data error
    let mnist = write_config(dir.path(), "benchmark = split-mnist\ndata_dir = /also/missing\n");
    let out = isicv(&["run", "-c", mnist.to_str().unwrap()], &[("ISICV_DATA_DIR", "/env/missing")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/env/missing"));
    let out = isicv(
        &["run", "-c", mnist.to_str().unwrap(), "--data-dir", "/flag/missing"],
        &[("ISICV_DATA_DIR", "/env/missing")],
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("/flag/missing"));
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "benchmark = imagenet\n").unwrap();
    assert_eq!(isicv(&["run", "-c", bad.to_str().unwrap()], &[]).status.code(), Some(2));
    assert_eq!(isicv(&["run", "--epochs", "0"], &[]).status.code(), Some(2));
    assert_eq!(isicv(&["run", "--bogus-flag"], &[]).status.code(), Some(2));
    let missing = dir.path().join("nope.cfg");
    assert_eq!(isicv(&["run", "-c", missing.to_str().unwrap()], &[]).status.code(), Some(2));

    let cfg = write_config(dir.path(), "");
    let out = isicv(
        &["importance-dump", "-c", cfg.to_str().unwrap(), "--checkpoint", "/no/such.ckpt"],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sweep_writes_one_row_per_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "method = isi-cv\nseeds = 0,1\n");
    ok(&isicv(&["sweep", "-c", cfg.to_str().unwrap(), "--lambdas", "10,100,1000"], &[]));
    let mut r = csv::Reader::from_path(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), SWEEP_HEADER);
    let rows: Vec<Vec<f64>> = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![10.0, 100.0, 1000.0]);

    for lambdas in ["", "10"] {
        let out = isicv(&["sweep", "-c", cfg.to_str().unwrap(), "--lambdas", lambdas], &[]);
        assert_eq!(out.status.code(), Some(2), "lambdas '{lambdas}'");
    }
}

#[test]
fn importance_dump_matches_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "method = isi-cv\nseeds = 3\n");
    ok(&isicv(&["run", "-c", cfg.to_str().unwrap()], &[]));
    let out = dir.path().join("out");
    let rec: RunRecord = serde_json::from_slice(&fs::read(out.join("run.json")).unwrap()).unwrap();
    for task in 0..2 {
        let ck = checkpoint_path(&out, 3, task);
        let json = dir.path().join(format!("dump{task}.json"));
        ok(&isicv(
            &[
                "importance-dump",
                "-c",
                cfg.to_str().unwrap(),
                "--checkpoint",
                ck.to_str().unwrap(),
                "--output",
                json.to_str().unwrap(),
            ],
            &[],
        ));
        let dump: ImportanceDump = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
        assert_eq!(dump.task, task);
        assert_eq!(dump.neurons.len(), 16);
        let omega: Vec<f64> = dump.neurons.iter().map(|n| n.omega).collect();
        assert_eq!(omega, rec.seeds[0].importances[task]);
    }
}

#[test]
fn silent_checkpoint_dumps_sentinel_cv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let mut net = Network::zeros(32, 16, 2);
    net.push_head(Head::zeros(2, 16)).unwrap();
    let ck = dir.path().join("silent.ckpt");
    Checkpoint {
        task: 0,
        seed: 0,
        lif: LifConfig {
            timesteps: 6,
            ..LifConfig::default()
        },
        gain: 1.0,
        network: net,
    }
    .save(&ck)
    .unwrap();
    let out = isicv(
        &["importance-dump", "-c", cfg.to_str().unwrap(), "--checkpoint", ck.to_str().unwrap()],
        &[],
    );
    ok(&out);
    let dump: ImportanceDump = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(dump.neurons.len(), 16);
    assert!(dump.neurons.iter().all(|n| n.cv == 2.0 && n.spike_count == 0));
}
