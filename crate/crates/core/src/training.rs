//! Surrogate-gradient BPTT, cross-entropy and Adam for the multi-head network.

use std::f64::consts::PI;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array, Array1, Array2, ArrayView1, Axis, Dimension, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{encode, Dataset, EncodingSpec};
use crate::error::{Error, Result};
use crate::importance::SiAccumulator;
use crate::snn::{self, ForwardTrace, LifConfig, Network, Stimulus};

/// ATan pseudo-derivative used in place of the threshold's derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub alpha: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { alpha: 2.0 }
    }
}

/// `alpha / (2 (1 + (pi/2 * alpha * x)^2))` with `x = u - theta`.
#[inline]
pub fn surrogate_derivative(u_minus_theta: f64, cfg: &SurrogateConfig) -> f64 {
    let z = 0.5 * PI * cfg.alpha * u_minus_theta;
    cfg.alpha / (2.0 * (1.0 + z * z))
}

/// Gradients for the trunk and the head of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub task: usize,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

impl GradientSet {
    pub fn zeros(net: &Network, task: usize) -> Self {
        Self {
            task,
            w1: Array2::zeros(net.w1.raw_dim()),
            b1: Array1::zeros(net.hidden()),
            head_w: Array2::zeros((net.classes(), net.hidden())),
            head_b: Array1::zeros(net.classes()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.head_w)
            .chain(&self.head_b)
            .all(|v| v.is_finite())
    }

    fn scale(&mut self, k: f64) {
        self.w1 *= k;
        self.b1 *= k;
        self.head_w *= k;
        self.head_b *= k;
    }
}

/// Numerically stable `(loss, softmax)` for cross-entropy against `target`.
pub fn cross_entropy(logits: ArrayView1<f64>, target: usize) -> (f64, Array1<f64>) {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    let loss = sum.ln() + max - logits[target];
    (loss, exp / sum)
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

struct SampleAdjoint {
    loss: f64,
    correct: bool,
    /// dL/du per step, `T x H`.
    du: Array2<f64>,
    head_w: Array2<f64>,
    head_b: Array1<f64>,
}

fn check_trace(trace: &ForwardTrace, target: usize, net: &Network, lif: &LifConfig) -> Result<()> {
    net.head(trace.task)?;
    let h = net.hidden();
    if trace.membrane.dim() != (lif.timesteps, h)
        || trace.spikes.dim() != (lif.timesteps, h)
        || trace.rate.len() != h
        || trace.logits.len() != net.classes()
        || trace.input.dim() != net.input()
    {
        return Err(Error::Shape("trace does not match network/config".into()));
    }
    if target >= net.classes() {
        return Err(Error::Shape(format!(
            "target {target} out of range for {} classes",
            net.classes()
        )));
    }
    Ok(())
}

fn sample_adjoint(
    trace: &ForwardTrace,
    target: usize,
    net: &Network,
    lif: &LifConfig,
    sur: &SurrogateConfig,
) -> Result<SampleAdjoint> {
    check_trace(trace, target, net, lif)?;
    let head = net.head(trace.task)?;
    let steps = lif.timesteps;
    let (loss, mut g) = cross_entropy(trace.logits.view(), target);
    let correct = argmax(trace.logits.view()) == target;
    g[target] -= 1.0;

    let head_w = g
        .view()
        .insert_axis(Axis(1))
        .dot(&trace.rate.view().insert_axis(Axis(0)));
    // Every step's spikes reach the logits with weight 1/T.
    let direct = head.w.t().dot(&g) / steps as f64;

    let decay = lif.decay();
    let theta = lif.theta;
    let hidden = net.hidden();
    let mut du = Array2::zeros((steps, hidden));
    let mut next = Array1::<f64>::zeros(hidden);
    for t in (0..steps).rev() {
        let u = trace.membrane.row(t);
        let mut cur = du.row_mut(t);
        for i in 0..hidden {
            // s[t] feeds the logits directly and u[t+1] through the reset term.
            let ds = direct[i] - theta * next[i];
            cur[i] = ds * surrogate_derivative(u[i] - theta, sur) + decay * next[i];
        }
        next.assign(&cur);
    }
    Ok(SampleAdjoint {
        loss,
        correct,
        du,
        head_w,
        head_b: g,
    })
}

/// Cross-entropy loss and gradients for a single trace.
pub fn backward(
    trace: &ForwardTrace,
    target: usize,
    net: &Network,
    lif: &LifConfig,
    sur: &SurrogateConfig,
) -> Result<(f64, GradientSet)> {
    let adj = sample_adjoint(trace, target, net, lif, sur)?;
    let mut grads = GradientSet::zeros(net, trace.task);
    accumulate_trunk(&mut grads.w1, &adj.du, &trace.input);
    grads.b1 = adj.du.sum_axis(Axis(0));
    grads.head_w = adj.head_w;
    grads.head_b = adj.head_b;
    Ok((adj.loss, grads))
}

fn accumulate_trunk(w1: &mut Array2<f64>, du: &Array2<f64>, input: &Stimulus) {
    match input {
        Stimulus::Constant { x, .. } => {
            let total = du.sum_axis(Axis(0));
            for (mut row, &d) in w1.outer_iter_mut().zip(&total) {
                row.scaled_add(d, x);
            }
        }
        Stimulus::Frames(frames) => {
            general_mat_mul(1.0, &du.t(), frames, 1.0, w1);
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchGradient {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    pub correct: usize,
    /// Gradient of the mean loss.
    pub grads: GradientSet,
}

/// Mean-loss gradient over a batch of traces from the same task.
pub fn backward_batch(
    traces: &[ForwardTrace],
    targets: &[usize],
    net: &Network,
    lif: &LifConfig,
    sur: &SurrogateConfig,
) -> Result<BatchGradient> {
    if traces.is_empty() || traces.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} traces, {} targets",
            traces.len(),
            targets.len()
        )));
    }
    let task = traces[0].task;
    let mut grads = GradientSet::zeros(net, task);
    let mut loss = 0.0;
    let mut correct = 0;
    // Constant stimuli are folded into one GEMM: dW1 += D^T X.
    let mut const_du: Vec<Array1<f64>> = Vec::new();
    let mut const_x: Vec<ArrayView1<f64>> = Vec::new();
    for (trace, &target) in traces.iter().zip(targets) {
        if trace.task != task {
            return Err(Error::Shape("batch mixes tasks".into()));
        }
        let adj = sample_adjoint(trace, target, net, lif, sur)?;
        loss += adj.loss;
        correct += adj.correct as usize;
        let total = adj.du.sum_axis(Axis(0));
        grads.b1 += &total;
        grads.head_w += &adj.head_w;
        grads.head_b += &adj.head_b;
        match &trace.input {
            Stimulus::Constant { x, .. } => {
                const_du.push(total);
                const_x.push(x.view());
            }
            frames @ Stimulus::Frames(_) => accumulate_trunk(&mut grads.w1, &adj.du, frames),
        }
    }
    if !const_du.is_empty() {
        let views: Vec<_> = const_du.iter().map(|d| d.view()).collect();
        let d = ndarray::stack(Axis(0), &views).expect("equal lengths");
        let x = ndarray::stack(Axis(0), &const_x).expect("equal lengths");
        general_mat_mul(1.0, &d.t(), &x, 1.0, &mut grads.w1);
    }
    let n = traces.len() as f64;
    grads.scale(1.0 / n);
    Ok(BatchGradient {
        loss: loss / n,
        correct,
        grads,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments<D: Dimension> {
    m: Array<f64, D>,
    v: Array<f64, D>,
}

impl<D: Dimension> Moments<D> {
    fn like(a: &Array<f64, D>) -> Self {
        Self {
            m: Array::zeros(a.raw_dim()),
            v: Array::zeros(a.raw_dim()),
        }
    }
}

/// Adam moments for the trunk and each head.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub cfg: AdamConfig,
    step: u64,
    w1: Moments<ndarray::Ix2>,
    b1: Moments<ndarray::Ix1>,
    heads: Vec<Option<(Moments<ndarray::Ix2>, Moments<ndarray::Ix1>)>>,
}

impl OptimizerState {
    pub fn new(cfg: AdamConfig, net: &Network) -> Self {
        Self {
            cfg,
            step: 0,
            w1: Moments::like(&net.w1),
            b1: Moments::like(&net.b1),
            heads: vec![None; net.heads.len()],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// Actual change applied to the trunk by one optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrunkDelta {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
}

fn adam_update<D: Dimension>(
    param: &mut Array<f64, D>,
    grad: &Array<f64, D>,
    mom: &mut Moments<D>,
    cfg: &AdamConfig,
    bc1: f64,
    bc2: f64,
) -> Array<f64, D> {
    let mut delta = Array::zeros(param.raw_dim());
    Zip::from(param)
        .and(grad)
        .and(&mut mom.m)
        .and(&mut mom.v)
        .and(&mut delta)
        .for_each(|p, &g, m, v, d| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            let old = *p;
            *p = old - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            *d = *p - old;
        });
    delta
}

/// Bias-corrected Adam update of the trunk and the gradient's task head.
///
/// Other heads are not touched.
pub fn adam_step(
    net: &mut Network,
    grads: &GradientSet,
    opt: &mut OptimizerState,
) -> Result<TrunkDelta> {
    if !grads.is_finite() {
        return Err(Error::Divergence("non-finite gradient".into()));
    }
    if grads.w1.dim() != net.w1.dim()
        || grads.b1.len() != net.hidden()
        || grads.head_w.dim() != (net.classes(), net.hidden())
        || grads.head_b.len() != net.classes()
    {
        return Err(Error::Shape("gradient does not match network".into()));
    }
    net.head(grads.task)?;
    if opt.heads.len() < net.heads.len() {
        opt.heads.resize(net.heads.len(), None);
    }
    opt.step += 1;
    let t = opt.step as i32;
    let cfg = opt.cfg;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    let w1 = adam_update(&mut net.w1, &grads.w1, &mut opt.w1, &cfg, bc1, bc2);
    let b1 = adam_update(&mut net.b1, &grads.b1, &mut opt.b1, &cfg, bc1, bc2);
    let head = net.head_mut(grads.task)?;
    let (mw, mb) = opt.heads[grads.task]
        .get_or_insert_with(|| (Moments::like(&head.w), Moments::like(&head.b)));
    adam_update(&mut head.w, &grads.head_w, mw, &cfg, bc1, bc2);
    adam_update(&mut head.b, &grads.head_b, mb, &cfg, bc1, bc2);
    Ok(TrunkDelta { w1, b1 })
}

/// A smooth penalty on the trunk added to the task loss.
pub trait Regularizer {
    fn penalty(&self, net: &Network) -> f64;
    /// Gradient of [`Regularizer::penalty`] with respect to `(W1, b1)`.
    fn trunk_gradient(&self, net: &Network) -> (Array2<f64>, Array1<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lif: LifConfig,
    pub surrogate: SurrogateConfig,
    pub adam: AdamConfig,
    pub encoding: EncodingSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let lif = LifConfig::default();
        Self {
            epochs: 10,
            batch_size: 128,
            lif,
            surrogate: SurrogateConfig::default(),
            adam: AdamConfig::default(),
            encoding: EncodingSpec {
                timesteps: lif.timesteps,
                gain: 1.0,
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.lif.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.surrogate.alpha.is_nan() || self.surrogate.alpha <= 0.0 {
            return Err(Error::Config("surrogate alpha must be positive".into()));
        }
        if self.adam.lr.is_nan() || self.adam.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.encoding.timesteps != self.lif.timesteps {
            return Err(Error::Config(format!(
                "encoding spans {} steps but LIF config has {}",
                self.encoding.timesteps, self.lif.timesteps
            )));
        }
        Ok(())
    }
}

/// Optional extras wired into the training loop.
#[derive(Default)]
pub struct TrainHooks<'a> {
    pub regularizer: Option<&'a dyn Regularizer>,
    /// Receives the task-loss gradient and the applied trunk change after every step.
    pub si: Option<&'a mut SiAccumulator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean cross-entropy over batches.
    pub loss: f64,
    /// Mean regularization penalty over batches.
    pub penalty: f64,
    /// Training accuracy measured during the epoch's forward passes.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub task: usize,
    pub epochs: Vec<EpochStats>,
}

pub(crate) fn encode_rows(data: &Dataset, idx: &[usize], spec: &EncodingSpec) -> Vec<Stimulus> {
    idx.iter().map(|&i| encode(data.images.row(i), spec)).collect()
}

/// Train the trunk and the head of `task` on `data`.
///
/// Samples are reshuffled every epoch from `seed`; the last batch of an epoch
/// may be short. A fresh optimizer state is used for each call.
pub fn train_task(
    net: &mut Network,
    data: &Dataset,
    task: usize,
    hooks: TrainHooks<'_>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainingLog> {
    cfg.validate()?;
    net.head(task)?;
    if data.is_empty() {
        return Err(Error::EmptyData(format!("training data for task {task}")));
    }
    if data.dim() != net.input() {
        return Err(Error::Shape(format!(
            "data has {} features, network expects {}",
            data.dim(),
            net.input()
        )));
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= net.classes()) {
        return Err(Error::Task(format!("label {bad} outside head range")));
    }
    let TrainHooks { regularizer, mut si } = hooks;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = OptimizerState::new(cfg.adam, net);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainingLog {
        task,
        epochs: Vec::with_capacity(cfg.epochs),
    };

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss, mut penalty, mut correct, mut batches) = (0.0, 0.0, 0usize, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let stimuli = encode_rows(data, idx, &cfg.encoding);
            let targets: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let traces = stimuli
                .into_iter()
                .map(|x| snn::simulate(net, x, task, &cfg.lif))
                .collect::<Result<Vec<_>>>()?;
            let batch = backward_batch(&traces, &targets, net, &cfg.lif, &cfg.surrogate)?;
            let mut grads = batch.grads.clone();
            if let Some(reg) = regularizer {
                penalty += reg.penalty(net);
                let (gw, gb) = reg.trunk_gradient(net);
                grads.w1 += &gw;
                grads.b1 += &gb;
            }
            let delta = adam_step(net, &grads, &mut opt)?;
            if let Some(acc) = si.as_deref_mut() {
                acc.accumulate(&batch.grads, &delta)?;
            }
            loss += batch.loss;
            correct += batch.correct;
            batches += 1;
        }
        log.epochs.push(EpochStats {
            epoch,
            loss: loss / batches as f64,
            penalty: penalty / batches as f64,
            accuracy: correct as f64 / data.len() as f64,
        });
    }
    Ok(log)
}

/// Fraction of `data` classified correctly with the head of `task`.
pub fn evaluate(
    net: &Network,
    data: &Dataset,
    task: usize,
    lif: &LifConfig,
    encoding: &EncodingSpec,
) -> Result<f64> {
    net.head(task)?;
    if data.is_empty() {
        return Err(Error::EmptyData(format!("evaluation data for task {task}")));
    }
    let mut correct = 0usize;
    for (i, &label) in data.labels.iter().enumerate() {
        let trace = snn::simulate(net, encode(data.images.row(i), encoding), task, lif)?;
        correct += (argmax(trace.logits.view()) == label) as usize;
    }
    Ok(correct as f64 / data.len() as f64)
}
