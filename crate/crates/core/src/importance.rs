//! Per-neuron importance for the trunk.
//!
//! Three estimators share one output type, [`ImportanceVector`], so any of
//! them can drive the anchored penalty in [`crate::continual`]:
//!
//! * ISI-CV: spike-timing regularity from an inference-only pass. A neuron's
//!   inter-spike intervals are pooled over samples; low coefficient of
//!   variation means high importance. No gradients are involved.
//! * EWC: diagonal Fisher information from squared surrogate gradients.
//! * SI: path integral of `-g * dw` accumulated during training.
//!
//! EWC and SI produce per-parameter scores; they are summed over each
//! neuron's incoming weights and bias, then scaled by the maximum.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::data::{encode, Dataset, EncodingSpec};
use crate::error::{Error, Result};
use crate::snn::{self, LifConfig, Network, SpikeRecord};
use crate::training::{backward, GradientSet, SurrogateConfig, TrunkDelta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    None,
    Ewc,
    Si,
    IsiCv,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::None, Method::Ewc, Method::Si, Method::IsiCv];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Ewc => "ewc",
            Method::Si => "si",
            Method::IsiCv => "isi-cv",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "no-reg" | "noreg" => Ok(Method::None),
            "ewc" => Ok(Method::Ewc),
            "si" => Ok(Method::Si),
            "isi-cv" | "isicv" | "isi_cv" => Ok(Method::IsiCv),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// One score in `[0, 1]` per trunk neuron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub omega: Vec<f64>,
    pub method: Method,
    pub task: usize,
}

impl ImportanceVector {
    pub fn zeros(hidden: usize, method: Method, task: usize) -> Self {
        Self {
            omega: vec![0.0; hidden],
            method,
            task,
        }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        match self.omega.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            Some(w) => Err(Error::Shape(format!("importance {w} outside [0, 1]"))),
            None => Ok(()),
        }
    }

    /// Elementwise maximum with `other`.
    pub fn merge_max(&mut self, other: &ImportanceVector) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Shape(format!(
                "importance lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        for (a, &b) in self.omega.iter_mut().zip(&other.omega) {
            *a = a.max(b);
        }
        self.task = other.task;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsiConfig {
    pub epsilon: f64,
    pub clip_percentile: f64,
    /// CV assigned to neurons without a single interval.
    pub silent_cv: f64,
}

impl Default for IsiConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            clip_percentile: 95.0,
            silent_cv: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronIsi {
    pub spike_count: usize,
    /// Intervals within each sample, pooled over samples.
    pub intervals: Vec<u32>,
    pub mean: f64,
    /// Population standard deviation of `intervals`.
    pub std: f64,
    pub cv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsiStats {
    pub neurons: Vec<NeuronIsi>,
}

pub fn isi_stats(record: &SpikeRecord, cfg: &IsiConfig) -> IsiStats {
    let neurons = (0..record.neurons())
        .map(|i| {
            let intervals: Vec<u32> = record
                .neuron(i)
                .iter()
                .flat_map(|times| times.windows(2).map(|w| w[1] - w[0]))
                .collect();
            let spike_count = record.spike_count(i);
            if intervals.is_empty() {
                return NeuronIsi {
                    spike_count,
                    intervals,
                    mean: 0.0,
                    std: 0.0,
                    cv: cfg.silent_cv,
                };
            }
            let n = intervals.len() as f64;
            let mean = intervals.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = intervals
                .iter()
                .map(|&v| (v as f64 - mean).powi(2))
                .sum::<f64>()
                / n;
            let std = var.sqrt();
            NeuronIsi {
                spike_count,
                intervals,
                mean,
                std,
                cv: std / (mean + cfg.epsilon),
            }
        })
        .collect();
    IsiStats { neurons }
}

/// Linear-interpolation percentile (`p` in `[0, 100]`) of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    v[lo] + (v[hi] - v[lo]) * frac
}

/// Intermediate values behind an ISI-CV importance vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsiReport {
    pub stats: IsiStats,
    /// `1 / (CV + eps)` per neuron.
    pub raw: Vec<f64>,
    /// The clip level (the configured percentile of `raw`).
    pub clip: f64,
    pub importance: ImportanceVector,
}

pub fn isi_cv_report(record: &SpikeRecord, cfg: &IsiConfig, task: usize) -> Result<IsiReport> {
    if record.neurons() == 0 || record.samples() == 0 {
        return Err(Error::EmptyData("spike record has no neurons or samples".into()));
    }
    let stats = isi_stats(record, cfg);
    let raw: Vec<f64> = stats
        .neurons
        .iter()
        .map(|n| 1.0 / (n.cv + cfg.epsilon))
        .collect();
    let clip = percentile(&raw, cfg.clip_percentile);
    let omega = raw.iter().map(|&r| r.min(clip) / (clip + cfg.epsilon)).collect();
    Ok(IsiReport {
        stats,
        raw,
        clip,
        importance: ImportanceVector {
            omega,
            method: Method::IsiCv,
            task,
        },
    })
}

/// Importance from inter-spike-interval regularity.
pub fn isi_cv_importance(record: &SpikeRecord, cfg: &IsiConfig, task: usize) -> Result<ImportanceVector> {
    Ok(isi_cv_report(record, cfg, task)?.importance)
}

/// Inference-only pass over the first `max_samples` samples, recording trunk spikes.
pub fn collect_spike_record(
    net: &Network,
    data: &Dataset,
    task: usize,
    lif: &LifConfig,
    encoding: &EncodingSpec,
    max_samples: usize,
) -> Result<SpikeRecord> {
    let n = max_samples.min(data.len());
    if n == 0 {
        return Err(Error::EmptyData("spike collection subset".into()));
    }
    let mut record = SpikeRecord::new(net.hidden(), lif.timesteps);
    for i in 0..n {
        let trace = snn::simulate(net, encode(data.images.row(i), encoding), task, lif)?;
        record.push_raster(&trace.spikes)?;
    }
    Ok(record)
}

/// Sum each neuron's row and bias score, then divide by the largest sum.
///
/// An all-zero input stays all zero.
pub fn reduce_per_neuron(w: &Array2<f64>, b: &Array1<f64>) -> Vec<f64> {
    let sums: Vec<f64> = w
        .sum_axis(Axis(1))
        .iter()
        .zip(b)
        .map(|(&r, &bias)| r + bias)
        .collect();
    let max = sums.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        sums.iter().map(|&s| s / max).collect()
    } else {
        vec![0.0; sums.len()]
    }
}

/// Diagonal empirical Fisher of the trunk: mean squared per-sample gradient.
pub fn fisher_diagonal(
    net: &Network,
    data: &Dataset,
    task: usize,
    lif: &LifConfig,
    sur: &SurrogateConfig,
    encoding: &EncodingSpec,
    max_samples: usize,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let n = max_samples.min(data.len());
    if n == 0 {
        return Err(Error::EmptyData("Fisher subset".into()));
    }
    let mut fw = Array2::<f64>::zeros(net.w1.raw_dim());
    let mut fb = Array1::<f64>::zeros(net.hidden());
    for i in 0..n {
        let trace = snn::simulate(net, encode(data.images.row(i), encoding), task, lif)?;
        let (_, g) = backward(&trace, data.labels[i], net, lif, sur)?;
        Zip::from(&mut fw).and(&g.w1).for_each(|f, &v| *f += v * v);
        Zip::from(&mut fb).and(&g.b1).for_each(|f, &v| *f += v * v);
    }
    fw /= n as f64;
    fb /= n as f64;
    Ok((fw, fb))
}

#[allow(clippy::too_many_arguments)]
pub fn ewc_importance(
    net: &Network,
    data: &Dataset,
    task: usize,
    lif: &LifConfig,
    sur: &SurrogateConfig,
    encoding: &EncodingSpec,
    max_samples: usize,
) -> Result<ImportanceVector> {
    let (fw, fb) = fisher_diagonal(net, data, task, lif, sur, encoding, max_samples)?;
    Ok(ImportanceVector {
        omega: reduce_per_neuron(&fw, &fb),
        method: Method::Ewc,
        task,
    })
}

/// Running `-g * dw` per trunk parameter over one task.
#[derive(Debug, Clone, PartialEq)]
pub struct SiAccumulator {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub start_w1: Array2<f64>,
    pub start_b1: Array1<f64>,
}

impl SiAccumulator {
    /// Start accumulating from the current trunk.
    pub fn new(net: &Network) -> Self {
        Self {
            w1: Array2::zeros(net.w1.raw_dim()),
            b1: Array1::zeros(net.hidden()),
            start_w1: net.w1.clone(),
            start_b1: net.b1.clone(),
        }
    }

    /// Add `-g * dw` for one optimizer step.
    pub fn accumulate(&mut self, grads: &GradientSet, delta: &TrunkDelta) -> Result<()> {
        if grads.w1.dim() != self.w1.dim()
            || delta.w1.dim() != self.w1.dim()
            || grads.b1.len() != self.b1.len()
            || delta.b1.len() != self.b1.len()
        {
            return Err(Error::Shape("SI accumulator shape mismatch".into()));
        }
        Zip::from(&mut self.w1)
            .and(&grads.w1)
            .and(&delta.w1)
            .for_each(|a, &g, &d| *a -= g * d);
        Zip::from(&mut self.b1)
            .and(&grads.b1)
            .and(&delta.b1)
            .for_each(|a, &g, &d| *a -= g * d);
        Ok(())
    }
}

/// Per-parameter SI score `max(0, w) / ((end - start)^2 + xi)`.
pub fn si_parameter_importance(omega: f64, total_change: f64, xi: f64) -> f64 {
    omega.max(0.0) / (total_change * total_change + xi)
}

/// SI importance from a finished accumulator and the trunk at task end.
pub fn si_importance(acc: &SiAccumulator, net: &Network, xi: f64, task: usize) -> Result<ImportanceVector> {
    if net.w1.dim() != acc.w1.dim() || net.b1.len() != acc.b1.len() {
        return Err(Error::Shape("SI accumulator does not match network".into()));
    }
    let mut pw = Array2::zeros(acc.w1.raw_dim());
    Zip::from(&mut pw)
        .and(&acc.w1)
        .and(&net.w1)
        .and(&acc.start_w1)
        .for_each(|p, &o, &end, &start| *p = si_parameter_importance(o, end - start, xi));
    let mut pb = Array1::zeros(acc.b1.len());
    Zip::from(&mut pb)
        .and(&acc.b1)
        .and(&net.b1)
        .and(&acc.start_b1)
        .for_each(|p, &o, &end, &start| *p = si_parameter_importance(o, end - start, xi));
    Ok(ImportanceVector {
        omega: reduce_per_neuron(&pw, &pb),
        method: Method::Si,
        task,
    })
}
