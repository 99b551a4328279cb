//! Sequential multi-task training with an importance-weighted anchor penalty,
//! and the usual forgetting metrics over the accuracy matrix.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TaskSequence;
use crate::error::{Error, Result};
use crate::importance::{
    collect_spike_record, ewc_importance, isi_cv_importance, si_importance, ImportanceVector,
    IsiConfig, Method, SiAccumulator,
};
use crate::snn::Network;
use crate::training::{evaluate, train_task, GradientSet, Regularizer, TrainConfig, TrainHooks, TrainingLog};

/// Trunk snapshot plus the per-neuron importance protecting it.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub omega: ImportanceVector,
    pub lambda: f64,
}

impl Anchor {
    pub fn new(net: &Network, omega: ImportanceVector, lambda: f64) -> Result<Self> {
        if omega.len() != net.hidden() {
            return Err(Error::Shape(format!(
                "importance has {} entries for {} neurons",
                omega.len(),
                net.hidden()
            )));
        }
        omega.validate()?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self {
            w1: net.w1.clone(),
            b1: net.b1.clone(),
            omega,
            lambda,
        })
    }
}

/// `(lambda/2) * sum_i omega_i * (|W1_i - W1*_i|^2 + (b1_i - b1*_i)^2)`. Heads are excluded.
pub fn penalty(net: &Network, anchor: &Anchor) -> f64 {
    let mut total = 0.0;
    for (i, &om) in anchor.omega.omega.iter().enumerate() {
        if om == 0.0 {
            continue;
        }
        let row: f64 = net
            .w1
            .row(i)
            .iter()
            .zip(anchor.w1.row(i))
            .map(|(w, a)| (w - a).powi(2))
            .sum();
        let db = net.b1[i] - anchor.b1[i];
        total += om * (row + db * db);
    }
    0.5 * anchor.lambda * total
}

/// Gradient of [`penalty`]; the head part is zero.
pub fn penalty_gradient(net: &Network, anchor: &Anchor, task: usize) -> GradientSet {
    let mut g = GradientSet::zeros(net, task);
    let (gw, gb) = trunk_penalty_gradient(net, anchor);
    g.w1 = gw;
    g.b1 = gb;
    g
}

fn trunk_penalty_gradient(net: &Network, anchor: &Anchor) -> (Array2<f64>, Array1<f64>) {
    let mut gw = &net.w1 - &anchor.w1;
    for (mut row, &om) in gw.outer_iter_mut().zip(&anchor.omega.omega) {
        row *= anchor.lambda * om;
    }
    let mut gb = &net.b1 - &anchor.b1;
    for (g, &om) in gb.iter_mut().zip(&anchor.omega.omega) {
        *g *= anchor.lambda * om;
    }
    (gw, gb)
}

impl Regularizer for Anchor {
    fn penalty(&self, net: &Network) -> f64 {
        penalty(net, self)
    }

    fn trunk_gradient(&self, net: &Network) -> (Array2<f64>, Array1<f64>) {
        trunk_penalty_gradient(net, self)
    }
}

/// `R[l][k]`: accuracy on task `k` after training task `l` (0-based, `l >= k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMatrix {
    entries: Vec<Vec<Option<f64>>>,
}

impl ResultMatrix {
    pub fn new(tasks: usize) -> Self {
        Self {
            entries: vec![vec![None; tasks]; tasks],
        }
    }

    /// Build from lower-triangular rows: row `l` holds `l + 1` accuracies.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::new(rows.len());
        for (l, row) in rows.iter().enumerate() {
            if row.len() != l + 1 {
                return Err(Error::Shape(format!("row {l} has {} entries, expected {}", row.len(), l + 1)));
            }
            for (k, &v) in row.iter().enumerate() {
                m.set(l, k, v)?;
            }
        }
        Ok(m)
    }

    pub fn tasks(&self) -> usize {
        self.entries.len()
    }

    pub fn set(&mut self, after: usize, task: usize, acc: f64) -> Result<()> {
        let k = self.tasks();
        if after >= k || task > after {
            return Err(Error::Shape(format!("R[{after}][{task}] outside lower triangle of {k}x{k}")));
        }
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::Shape(format!("accuracy {acc} outside [0, 1]")));
        }
        self.entries[after][task] = Some(acc);
        Ok(())
    }

    pub fn get(&self, after: usize, task: usize) -> Option<f64> {
        self.entries.get(after)?.get(task).copied().flatten()
    }

    pub fn is_complete(&self) -> bool {
        (0..self.tasks()).all(|l| (0..=l).all(|k| self.get(l, k).is_some()))
    }

    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.entries
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Average accuracy after the last task.
    pub aa: f64,
    /// Backward transfer; negative means forgetting.
    pub bwt: f64,
    /// Average forgetting: best earlier accuracy minus final, clipped at zero.
    pub af: f64,
    /// Per-task forgetting for every task but the last.
    pub forgetting: Vec<f64>,
}

pub fn compute_metrics(r: &ResultMatrix) -> Result<MetricsReport> {
    let k = r.tasks();
    if k < 2 {
        return Err(Error::Shape("metrics need at least two tasks".into()));
    }
    if !r.is_complete() {
        return Err(Error::Shape("result matrix is incomplete".into()));
    }
    let at = |l: usize, t: usize| r.get(l, t).expect("complete");
    let last = k - 1;
    let aa = (0..k).map(|t| at(last, t)).sum::<f64>() / k as f64;
    let bwt = (0..last).map(|t| at(last, t) - at(t, t)).sum::<f64>() / last as f64;
    let forgetting: Vec<f64> = (0..last)
        .map(|t| {
            let best = (t..last).map(|l| at(l, t)).fold(f64::NEG_INFINITY, f64::max);
            (best - at(last, t)).max(0.0)
        })
        .collect();
    let af = forgetting.iter().sum::<f64>() / last as f64;
    Ok(MetricsReport {
        aa,
        bwt,
        af,
        forgetting,
    })
}

/// Everything needed to run one task sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinualConfig {
    pub hidden: usize,
    pub train: TrainConfig,
    pub isi: IsiConfig,
    /// Samples used for spike collection and Fisher estimation.
    pub importance_samples: usize,
    /// SI damping.
    pub si_xi: f64,
}

impl Default for ContinualConfig {
    fn default() -> Self {
        Self {
            hidden: 512,
            train: TrainConfig::default(),
            isi: IsiConfig::default(),
            importance_samples: 1024,
            si_xi: 0.1,
        }
    }
}

/// State handed to the per-task callback of [`run_sequence_with`].
pub struct TaskCheckpoint<'a> {
    pub task: usize,
    pub network: &'a Network,
    pub importance: &'a ImportanceVector,
    pub results: &'a ResultMatrix,
}

#[derive(Debug, Clone)]
pub struct SequenceOutcome {
    pub method: Method,
    pub lambda: f64,
    pub seed: u64,
    pub results: ResultMatrix,
    pub logs: Vec<TrainingLog>,
    /// Importance computed after each task.
    pub importances: Vec<ImportanceVector>,
    /// Frobenius norm of `W1` minus the previous task's snapshot, after each task (task 0 is 0).
    pub drift: Vec<f64>,
    /// Largest absolute `W1` change against the previous snapshot, after each task.
    pub max_abs_drift: Vec<f64>,
    pub network: Network,
}

impl SequenceOutcome {
    pub fn metrics(&self) -> Result<MetricsReport> {
        compute_metrics(&self.results)
    }
}

pub fn run_sequence(
    tasks: &TaskSequence,
    method: Method,
    lambda: f64,
    seed: u64,
    cfg: &ContinualConfig,
) -> Result<SequenceOutcome> {
    run_sequence_with(tasks, method, lambda, seed, cfg, |_| Ok(()))
}

fn task_seed(seed: u64, task: usize) -> u64 {
    // splitmix64 of (seed, task)
    let mut z = seed ^ (task as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Train on each task in order, evaluating every earlier task after each one.
///
/// After task `k` the method's importance is computed on task `k`'s training
/// data and the anchor moves to the current trunk; its importance is the
/// elementwise maximum over all tasks so far. The first task is never
/// regularized, and `Method::None` never is.
pub fn run_sequence_with<F>(
    tasks: &TaskSequence,
    method: Method,
    lambda: f64,
    seed: u64,
    cfg: &ContinualConfig,
    mut on_task: F,
) -> Result<SequenceOutcome>
where
    F: FnMut(&TaskCheckpoint<'_>) -> Result<()>,
{
    let k = tasks.len();
    if k < 2 {
        return Err(Error::Task(format!("a sequence needs at least two tasks, got {k}")));
    }
    cfg.train.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let classes = tasks.classes_per_task();
    if tasks.tasks.iter().any(|t| t.num_classes() != classes) {
        return Err(Error::Task("tasks differ in class count".into()));
    }

    let mut init = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::new(tasks.input_dim(), cfg.hidden, classes, &mut init);
    let mut results = ResultMatrix::new(k);
    let mut logs = Vec::with_capacity(k);
    let mut importances = Vec::with_capacity(k);
    let mut drift = Vec::with_capacity(k);
    let mut max_abs_drift = Vec::with_capacity(k);
    let mut anchor: Option<Anchor> = None;
    let lif = cfg.train.lif;
    let enc = cfg.train.encoding;

    for (t, task) in tasks.tasks.iter().enumerate() {
        let head = net.add_head(&mut init);
        debug_assert_eq!(head, t);
        let before = (net.w1.clone(), net.b1.clone());
        let mut si = (method == Method::Si).then(|| SiAccumulator::new(&net));
        let regularizer = match (&anchor, method) {
            (Some(a), m) if m != Method::None => Some(a as &dyn Regularizer),
            _ => None,
        };
        let hooks = TrainHooks {
            regularizer,
            si: si.as_mut(),
        };
        let log = train_task(&mut net, &task.train, t, hooks, &cfg.train, task_seed(seed, t))?;
        logs.push(log);

        let diff = &net.w1 - &before.0;
        drift.push(if t == 0 { 0.0 } else { diff.mapv(|v| v * v).sum().sqrt() });
        max_abs_drift.push(if t == 0 { 0.0 } else { diff.fold(0.0f64, |m, v| m.max(v.abs())) });

        for (j, prev) in tasks.tasks.iter().enumerate().take(t + 1) {
            results.set(t, j, evaluate(&net, &prev.test, j, &lif, &enc)?)?;
        }

        let omega = match method {
            Method::None => ImportanceVector::zeros(net.hidden(), Method::None, t),
            Method::IsiCv => {
                let rec = collect_spike_record(&net, &task.train, t, &lif, &enc, cfg.importance_samples)?;
                isi_cv_importance(&rec, &cfg.isi, t)?
            }
            Method::Ewc => ewc_importance(
                &net,
                &task.train,
                t,
                &lif,
                &cfg.train.surrogate,
                &enc,
                cfg.importance_samples,
            )?,
            Method::Si => si_importance(si.as_ref().expect("SI accumulator"), &net, cfg.si_xi, t)?,
        };
        let merged = match anchor.take() {
            Some(prev) => {
                let mut m = prev.omega;
                m.merge_max(&omega)?;
                m
            }
            None => omega.clone(),
        };
        anchor = Some(Anchor::new(&net, merged, lambda)?);
        on_task(&TaskCheckpoint {
            task: t,
            network: &net,
            importance: &omega,
            results: &results,
        })?;
        importances.push(omega);
    }

    Ok(SequenceOutcome {
        method,
        lambda,
        seed,
        results,
        logs,
        importances,
        drift,
        max_abs_drift,
        network: net,
    })
}
