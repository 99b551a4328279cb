use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continual::{MetricsReport, ResultMatrix, SequenceOutcome};
use crate::error::{Error, Result};
use crate::importance::{IsiReport, Method};
use crate::training::TrainingLog;

use super::config::ExperimentConfig;

/// Write through a sibling temp file and rename, creating parent directories.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("output path {} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    w.write_record(header).map_err(ser)?;
    for row in rows {
        w.write_record(row).map_err(ser)?;
    }
    w.into_inner().map_err(|e| Error::Serialize(e.to_string()))
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub aa_mean: f64,
    pub aa_std: f64,
    pub bwt_mean: f64,
    pub bwt_std: f64,
    pub af_mean: f64,
    pub af_std: f64,
}

impl Aggregate {
    pub fn of(metrics: &[MetricsReport]) -> Self {
        let col = |f: fn(&MetricsReport) -> f64| mean_std(&metrics.iter().map(f).collect::<Vec<_>>());
        let (aa_mean, aa_std) = col(|m| m.aa);
        let (bwt_mean, bwt_std) = col(|m| m.bwt);
        let (af_mean, af_std) = col(|m| m.af);
        Self {
            aa_mean,
            aa_std,
            bwt_mean,
            bwt_std,
            af_mean,
            af_std,
        }
    }
}

pub const METRICS_HEADER: [&str; 9] = ["method", "lambda", "seed", "aa", "bwt", "af", "aa_std", "bwt_std", "af_std"];

/// One row per seed; with two or more seeds, a final `mean` row carries the
/// standard deviations.
pub fn metrics_csv(method: Method, lambda: f64, seeds: &[(u64, MetricsReport)]) -> Result<Vec<u8>> {
    let mut rows: Vec<Vec<String>> = seeds
        .iter()
        .map(|(s, m)| {
            vec![
                method.to_string(),
                lambda.to_string(),
                s.to_string(),
                m.aa.to_string(),
                m.bwt.to_string(),
                m.af.to_string(),
                String::new(),
                String::new(),
                String::new(),
            ]
        })
        .collect();
    if seeds.len() < 2 {
        return csv_bytes(&METRICS_HEADER, &rows);
    }
    let agg = Aggregate::of(&seeds.iter().map(|(_, m)| m.clone()).collect::<Vec<_>>());
    rows.push(vec![
        method.to_string(),
        lambda.to_string(),
        "mean".into(),
        agg.aa_mean.to_string(),
        agg.bwt_mean.to_string(),
        agg.af_mean.to_string(),
        agg.aa_std.to_string(),
        agg.bwt_std.to_string(),
        agg.af_std.to_string(),
    ]);
    csv_bytes(&METRICS_HEADER, &rows)
}

/// Rows are "after task l", columns are tasks; untrained cells are empty.
pub fn result_matrix_csv(r: &ResultMatrix) -> Result<Vec<u8>> {
    let header: Vec<String> = std::iter::once("after_task".to_string())
        .chain((0..r.tasks()).map(|k| format!("task_{k}")))
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = r
        .rows()
        .iter()
        .enumerate()
        .map(|(l, row)| {
            std::iter::once(l.to_string())
                .chain(row.iter().map(|v| v.map(|a| a.to_string()).unwrap_or_default()))
                .collect()
        })
        .collect();
    csv_bytes(&header_refs, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub aa_mean: f64,
    pub aa_std: f64,
    pub af_mean: f64,
    pub af_std: f64,
    /// Trunk drift over the second task (Frobenius norm).
    pub drift_mean: f64,
    pub drift_std: f64,
}

pub const SWEEP_HEADER: [&str; 7] = ["lambda", "aa_mean", "aa_std", "af_mean", "af_std", "drift_mean", "drift_std"];

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            [r.lambda, r.aa_mean, r.aa_std, r.af_mean, r.af_std, r.drift_mean, r.drift_std]
                .iter()
                .map(f64::to_string)
                .collect()
        })
        .collect();
    csv_bytes(&SWEEP_HEADER, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub metrics: MetricsReport,
    pub results: ResultMatrix,
    pub drift: Vec<f64>,
    pub max_abs_drift: Vec<f64>,
    pub importances: Vec<Vec<f64>>,
    pub logs: Vec<TrainingLog>,
}

impl SeedRecord {
    pub fn from_outcome(out: &SequenceOutcome) -> Result<Self> {
        Ok(Self {
            seed: out.seed,
            metrics: out.metrics()?,
            results: out.results.clone(),
            drift: out.drift.clone(),
            max_abs_drift: out.max_abs_drift.clone(),
            importances: out.importances.iter().map(|i| i.omega.clone()).collect(),
            logs: out.logs.clone(),
        })
    }
}

/// Everything needed to reproduce and audit one `run` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub engine_version: String,
    pub config: ExperimentConfig,
    pub method: Method,
    pub lambda: f64,
    pub seeds: Vec<SeedRecord>,
    pub aggregate: Aggregate,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronDump {
    pub neuron: usize,
    pub spike_count: usize,
    pub isi_count: usize,
    pub cv: f64,
    pub raw: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceDump {
    pub task: usize,
    pub samples: usize,
    pub timesteps: usize,
    pub clip: f64,
    pub neurons: Vec<NeuronDump>,
}

impl ImportanceDump {
    pub fn from_report(report: &IsiReport, samples: usize, timesteps: usize) -> Self {
        let neurons = report
            .stats
            .neurons
            .iter()
            .enumerate()
            .map(|(i, n)| NeuronDump {
                neuron: i,
                spike_count: n.spike_count,
                isi_count: n.intervals.len(),
                cv: n.cv,
                raw: report.raw[i],
                omega: report.importance.omega[i],
            })
            .collect();
        Self {
            task: report.importance.task,
            samples,
            timesteps,
            clip: report.clip,
            neurons,
        }
    }
}
