//! Config-driven experiments: the `run`, `sweep` and `importance-dump` commands.
//!
//! Output layout of `run` under the configured output directory:
//!
//! * `metrics.csv`: one row per seed plus, for several seeds, a `mean` row with
//!   standard deviations.
//! * `results_seed{S}.csv`: the accuracy matrix of each seed.
//! * `run.json`: config, metrics, matrices, drift, importances, logs and timing.
//! * `checkpoints/seed{S}/task{k}.ckpt`: the network after each task.
//!
//! `sweep` writes `sweep.csv` and `sweep.json`.

mod checkpoint;
mod config;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use checkpoint::Checkpoint;
pub use config::{default_lambda, Benchmark, ExperimentConfig, Overrides, DATA_DIR_ENV};
pub use report::{
    mean_std, metrics_csv, result_matrix_csv, sweep_csv, write_atomic, write_json, Aggregate, ImportanceDump,
    NeuronDump, RunRecord, SeedRecord, SweepRow, METRICS_HEADER, SWEEP_HEADER,
};

use crate::continual::{run_sequence, run_sequence_with, MetricsReport};
use crate::data::{build_permuted, build_split, build_synthetic, load_idx_dir, EncodingSpec, TaskSequence, STANDARD_PAIRS};
use crate::error::{Error, Result};
use crate::importance::{collect_spike_record, isi_cv_report, IsiConfig};

/// Process exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Task(_) => 2,
        Error::Idx(_) | Error::Checkpoint { .. } => 3,
        _ => 4,
    }
}

/// Build the configured benchmark, capped to the configured subset sizes.
pub fn load_tasks(cfg: &ExperimentConfig) -> Result<TaskSequence> {
    let seq = match cfg.benchmark {
        Benchmark::Synthetic => build_synthetic(&cfg.synthetic)?,
        Benchmark::SplitMnist | Benchmark::SplitFashionmnist => {
            let (train, test) = load_idx_dir(&cfg.data_dir)?;
            build_split(&train, &test, &STANDARD_PAIRS)?
        }
        Benchmark::PermutedMnist => {
            let (train, test) = load_idx_dir(&cfg.data_dir)?;
            build_permuted(&train, &test, cfg.permutations, cfg.permutation_seed)?
        }
    };
    Ok(seq.capped(cfg.train_cap, cfg.test_cap))
}

pub fn checkpoint_path(out_dir: &Path, seed: u64, task: usize) -> PathBuf {
    out_dir.join("checkpoints").join(format!("seed{seed}")).join(format!("task{task}.ckpt"))
}

/// Train every configured seed, writing metrics, matrices, `run.json` and checkpoints.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let tasks = load_tasks(cfg)?;
    let ccfg = cfg.continual();
    let lambda = cfg.effective_lambda();
    let out = &cfg.output_dir;
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let outcome = run_sequence_with(&tasks, cfg.method, lambda, seed, &ccfg, |ck| {
            Checkpoint {
                task: ck.task,
                seed,
                lif: ccfg.train.lif,
                gain: ccfg.train.encoding.gain,
                network: ck.network.clone(),
            }
            .save(&checkpoint_path(out, seed, ck.task))
        })?;
        write_atomic(
            &out.join(format!("results_seed{seed}.csv")),
            &result_matrix_csv(&outcome.results)?,
        )?;
        seeds.push(SeedRecord::from_outcome(&outcome)?);
    }
    let per_seed: Vec<(u64, MetricsReport)> = seeds.iter().map(|s| (s.seed, s.metrics.clone())).collect();
    write_atomic(&out.join("metrics.csv"), &metrics_csv(cfg.method, lambda, &per_seed)?)?;
    let aggregate = Aggregate::of(&seeds.iter().map(|s| s.metrics.clone()).collect::<Vec<_>>());
    let record = RunRecord {
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        method: cfg.method,
        lambda,
        seeds,
        aggregate,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join("run.json"), &record)?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub seed: u64,
    pub metrics: MetricsReport,
    pub drift: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub engine_version: String,
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
    pub points: Vec<SweepPoint>,
    pub wall_clock_seconds: f64,
}

/// Run the configured method at each sweep strength over every seed.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepRecord> {
    cfg.validate()?;
    if cfg.lambdas.len() < 2 {
        return Err(Error::Config(format!(
            "a sweep needs at least two lambda values, got {}",
            cfg.lambdas.len()
        )));
    }
    let start = Instant::now();
    let tasks = load_tasks(cfg)?;
    let ccfg = cfg.continual();
    let mut rows = Vec::with_capacity(cfg.lambdas.len());
    let mut points = Vec::new();
    for &lambda in &cfg.lambdas {
        let mut aa = Vec::new();
        let mut af = Vec::new();
        let mut drift = Vec::new();
        for &seed in &cfg.seeds {
            let outcome = run_sequence(&tasks, cfg.method, lambda, seed, &ccfg)?;
            let m = outcome.metrics()?;
            aa.push(m.aa);
            af.push(m.af);
            drift.push(outcome.drift[1]);
            points.push(SweepPoint {
                lambda,
                seed,
                metrics: m,
                drift: outcome.drift,
            });
        }
        let (aa_mean, aa_std) = mean_std(&aa);
        let (af_mean, af_std) = mean_std(&af);
        let (drift_mean, drift_std) = mean_std(&drift);
        rows.push(SweepRow {
            lambda,
            aa_mean,
            aa_std,
            af_mean,
            af_std,
            drift_mean,
            drift_std,
        });
    }
    write_atomic(&cfg.output_dir.join("sweep.csv"), &sweep_csv(&rows)?)?;
    let record = SweepRecord {
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        rows,
        points,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&cfg.output_dir.join("sweep.json"), &record)?;
    Ok(record)
}

/// Per-neuron ISI statistics of a checkpointed network on a task's training data.
///
/// `task` defaults to the checkpoint's last trained task. The spike record uses
/// the first `importance_samples` training samples, as during a run.
pub fn cmd_importance_dump(cfg: &ExperimentConfig, checkpoint: &Path, task: Option<usize>) -> Result<ImportanceDump> {
    cfg.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    let task = task.unwrap_or(ck.task);
    let tasks = load_tasks(cfg)?;
    let data = &tasks
        .tasks
        .get(task)
        .ok_or_else(|| Error::Config(format!("task {task} is outside the benchmark ({} tasks)", tasks.len())))?
        .train;
    if data.dim() != ck.network.input() {
        return Err(Error::Config(format!(
            "checkpoint expects {} inputs but the benchmark has {}",
            ck.network.input(),
            data.dim()
        )));
    }
    let enc = EncodingSpec {
        timesteps: ck.lif.timesteps,
        gain: ck.gain,
    };
    let record = collect_spike_record(&ck.network, data, task, &ck.lif, &enc, cfg.importance_samples)?;
    let report = isi_cv_report(&record, &IsiConfig::default(), task)?;
    Ok(ImportanceDump::from_report(&report, record.samples(), record.timesteps()))
}
