//! Discrete-time multi-head LIF network.
//!
//! The shared trunk is a dense projection `W1·x + b1` feeding `H` leaky
//! integrate-and-fire neurons. Each registered task owns a linear head that
//! reads out the trunk spikes; logits are the time-average of the per-step
//! head pre-activations.
//!
//! Membrane update, per neuron and step:
//!
//! ```text
//! u[t] = (1 - 1/tau) * u[t-1] + I[t] - theta * s[t-1]
//! s[t] = 1 if u[t] >= theta else 0
//! ```
//!
//! Reset is a soft subtraction applied one step late through `s[t-1]`.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifConfig {
    /// Membrane time constant. The per-step decay factor is `1 - 1/tau`.
    pub tau: f64,
    /// Firing threshold.
    pub theta: f64,
    /// Simulation steps per sample.
    pub timesteps: usize,
}

impl Default for LifConfig {
    fn default() -> Self {
        Self {
            tau: 2.0,
            theta: 1.0,
            timesteps: 20,
        }
    }
}

impl LifConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 1.0) {
            return Err(Error::Config(format!("tau must be > 1, got {}", self.tau)));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::Config(format!("theta must be > 0, got {}", self.theta)));
        }
        if self.timesteps < 2 {
            return Err(Error::Config(format!(
                "timesteps must be >= 2, got {}",
                self.timesteps
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn decay(&self) -> f64 {
        1.0 - 1.0 / self.tau
    }
}

/// One LIF update for a layer of neurons.
///
/// Returns the new membrane potentials and spike indicators.
pub fn lif_step(
    u_prev: &[f64],
    input_current: &[f64],
    s_prev: &[f64],
    cfg: &LifConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = u_prev.len();
    if input_current.len() != n || s_prev.len() != n {
        return Err(Error::Shape(format!(
            "lif_step: u_prev {}, input {}, s_prev {}",
            n,
            input_current.len(),
            s_prev.len()
        )));
    }
    let finite = u_prev
        .iter()
        .chain(input_current)
        .chain(s_prev)
        .all(|v| v.is_finite());
    if !finite {
        return Err(Error::Divergence("non-finite value entering lif_step".into()));
    }
    let mut u = u_prev.to_vec();
    let mut s = s_prev.to_vec();
    advance(&mut u, &mut s, input_current, cfg.decay(), cfg.theta);
    Ok((u, s))
}

/// In-place form of [`lif_step`]: `u` and `s` hold the previous state on entry.
#[inline]
fn advance(u: &mut [f64], s: &mut [f64], current: &[f64], decay: f64, theta: f64) {
    for ((u, s), &i) in u.iter_mut().zip(s.iter_mut()).zip(current) {
        *u = decay * *u + i - theta * *s;
        *s = if *u >= theta { 1.0 } else { 0.0 };
    }
}

/// Per-task linear readout `C x H` plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Head {
    pub fn zeros(classes: usize, hidden: usize) -> Self {
        Self {
            w: Array2::zeros((classes, hidden)),
            b: Array1::zeros(classes),
        }
    }
}

/// Trunk weights plus one head per registered task.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// Trunk projection, `H x D`.
    pub w1: Array2<f64>,
    /// Trunk bias, `H`.
    pub b1: Array1<f64>,
    pub heads: Vec<Head>,
    classes: usize,
}

fn uniform_fill<R: Rng + ?Sized>(rng: &mut R, shape: (usize, usize), fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_simple_fn(shape, || rng.gen_range(-bound..=bound))
}

impl Network {
    /// A network with no heads and uniform `±1/sqrt(fan_in)` trunk weights.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        let w1 = uniform_fill(rng, (hidden, input), input);
        let b1 = uniform_fill(rng, (hidden, 1), input).remove_axis(Axis(1));
        Self {
            w1,
            b1,
            heads: Vec::new(),
            classes,
        }
    }

    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        Self {
            w1: Array2::zeros((hidden, input)),
            b1: Array1::zeros(hidden),
            heads: Vec::new(),
            classes,
        }
    }

    /// Assemble a network from raw parts, checking every dimension.
    pub fn from_parts(w1: Array2<f64>, b1: Array1<f64>, heads: Vec<Head>) -> Result<Self> {
        let hidden = w1.nrows();
        if b1.len() != hidden {
            return Err(Error::Shape(format!("b1 has {} entries, W1 has {} rows", b1.len(), hidden)));
        }
        let classes = heads.first().map(|h| h.w.nrows()).unwrap_or(0);
        for (k, h) in heads.iter().enumerate() {
            if h.w.dim() != (classes, hidden) || h.b.len() != classes {
                return Err(Error::Shape(format!(
                    "head {k} is {:?}/{}, expected ({classes}, {hidden})/{classes}",
                    h.w.dim(),
                    h.b.len()
                )));
            }
        }
        let net = Self {
            w1,
            b1,
            heads,
            classes,
        };
        if !net.is_finite() {
            return Err(Error::Divergence("non-finite network parameters".into()));
        }
        Ok(net)
    }

    /// Register a new head and return its task id.
    pub fn add_head<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let hidden = self.hidden();
        let w = uniform_fill(rng, (self.classes, hidden), hidden);
        let b = uniform_fill(rng, (self.classes, 1), hidden).remove_axis(Axis(1));
        self.heads.push(Head { w, b });
        self.heads.len() - 1
    }

    pub fn push_head(&mut self, head: Head) -> Result<usize> {
        if head.w.dim() != (self.classes, self.hidden()) || head.b.len() != self.classes {
            return Err(Error::Shape(format!("head shape {:?}", head.w.dim())));
        }
        self.heads.push(head);
        Ok(self.heads.len() - 1)
    }

    pub fn input(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn head(&self, task: usize) -> Result<&Head> {
        self.heads.get(task).ok_or(Error::UnknownTask(task))
    }

    pub fn head_mut(&mut self, task: usize) -> Result<&mut Head> {
        self.heads.get_mut(task).ok_or(Error::UnknownTask(task))
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(self.b1.iter()).all(|v| v.is_finite())
            && self
                .heads
                .iter()
                .all(|h| h.w.iter().chain(h.b.iter()).all(|v| v.is_finite()))
    }

    /// Trunk input current `W1·x + b1`.
    pub fn project(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.input() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input()
            )));
        }
        let x = x.as_standard_layout();
        let x = x.as_slice().expect("standard layout");
        let w1 = self.w1.as_standard_layout();
        let out = w1
            .outer_iter()
            .zip(self.b1.iter())
            .map(|(row, &b)| dot(row.as_slice().expect("standard layout"), x) + b)
            .collect();
        Ok(out)
    }
}

/// Dot product with a fixed accumulation order, so any caller gets the same bits.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Input to the trunk over the simulation window.
#[derive(Debug, Clone, PartialEq)]
pub enum Stimulus {
    /// The same feature vector at every step.
    Constant { x: Array1<f64>, timesteps: usize },
    /// One feature vector per step, `T x D`.
    Frames(Array2<f64>),
}

impl Stimulus {
    pub fn timesteps(&self) -> usize {
        match self {
            Stimulus::Constant { timesteps, .. } => *timesteps,
            Stimulus::Frames(f) => f.nrows(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Stimulus::Constant { x, .. } => x.len(),
            Stimulus::Frames(f) => f.ncols(),
        }
    }

    pub fn frame(&self, t: usize) -> ArrayView1<'_, f64> {
        match self {
            Stimulus::Constant { x, .. } => x.view(),
            Stimulus::Frames(f) => f.row(t),
        }
    }

    /// Materialize as a `T x D` array.
    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Stimulus::Constant { x, timesteps } => {
                let mut out = Array2::zeros((*timesteps, x.len()));
                out.rows_mut().into_iter().for_each(|mut r| r.assign(x));
                out
            }
            Stimulus::Frames(f) => f.clone(),
        }
    }
}

/// Everything the reverse pass needs from one forward simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub task: usize,
    pub input: Stimulus,
    /// Trunk input current. One row when the stimulus is constant, else `T` rows.
    pub drive: Array2<f64>,
    /// Membrane potential after each step's update, `T x H`.
    pub membrane: Array2<f64>,
    /// Spike indicators, `T x H`.
    pub spikes: Array2<f64>,
    /// Per-neuron spike rate (mean of `spikes` over time).
    pub rate: Array1<f64>,
    pub logits: Array1<f64>,
}

impl ForwardTrace {
    pub fn timesteps(&self) -> usize {
        self.membrane.nrows()
    }

    pub fn drive_at(&self, t: usize) -> ArrayView1<'_, f64> {
        if self.drive.nrows() == 1 {
            self.drive.row(0)
        } else {
            self.drive.row(t)
        }
    }

    /// Spike times per neuron, ascending.
    pub fn spike_times(&self) -> Vec<Vec<u32>> {
        self.spikes
            .columns()
            .into_iter()
            .map(|col| {
                col.iter()
                    .enumerate()
                    .filter(|(_, &s)| s > 0.0)
                    .map(|(t, _)| t as u32)
                    .collect()
            })
            .collect()
    }
}

/// Spike times of every trunk neuron across a set of samples.
///
/// `trains[i][n]` lists the steps at which neuron `i` fired while sample `n`
/// was presented. Sample boundaries are kept so intervals never span two
/// samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeRecord {
    timesteps: usize,
    samples: usize,
    trains: Vec<Vec<Vec<u32>>>,
}

impl SpikeRecord {
    pub fn new(neurons: usize, timesteps: usize) -> Self {
        Self {
            timesteps,
            samples: 0,
            trains: vec![Vec::new(); neurons],
        }
    }

    /// Build from explicit per-neuron, per-sample spike lists.
    pub fn from_trains(trains: Vec<Vec<Vec<u32>>>, timesteps: usize) -> Result<Self> {
        let samples = trains.first().map(Vec::len).unwrap_or(0);
        for (i, per_sample) in trains.iter().enumerate() {
            if per_sample.len() != samples {
                return Err(Error::Shape(format!(
                    "neuron {i} has {} samples, expected {samples}",
                    per_sample.len()
                )));
            }
            for times in per_sample {
                let increasing = times.windows(2).all(|w| w[0] < w[1]);
                let in_range = times.iter().all(|&t| (t as usize) < timesteps);
                if !increasing || !in_range {
                    return Err(Error::Shape(format!(
                        "neuron {i}: spike times {times:?} not strictly increasing in [0, {timesteps})"
                    )));
                }
            }
        }
        Ok(Self {
            timesteps,
            samples,
            trains,
        })
    }

    /// Append one sample's `T x H` spike raster.
    pub fn push_raster(&mut self, spikes: &Array2<f64>) -> Result<()> {
        if spikes.dim() != (self.timesteps, self.trains.len()) {
            return Err(Error::Shape(format!(
                "raster {:?}, record expects ({}, {})",
                spikes.dim(),
                self.timesteps,
                self.trains.len()
            )));
        }
        for (i, col) in spikes.columns().into_iter().enumerate() {
            let times = col
                .iter()
                .enumerate()
                .filter(|(_, &s)| s > 0.0)
                .map(|(t, _)| t as u32)
                .collect();
            self.trains[i].push(times);
        }
        self.samples += 1;
        Ok(())
    }

    pub fn neurons(&self) -> usize {
        self.trains.len()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    /// All samples' spike lists for one neuron.
    pub fn neuron(&self, i: usize) -> &[Vec<u32>] {
        &self.trains[i]
    }

    pub fn train(&self, neuron: usize, sample: usize) -> &[u32] {
        &self.trains[neuron][sample]
    }

    pub fn spike_count(&self, neuron: usize) -> usize {
        self.trains[neuron].iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Array1<f64>,
    pub trace: ForwardTrace,
    pub spikes: Option<SpikeRecord>,
}

/// Simulate one sample through the trunk and the head of `task`.
pub fn forward(
    net: &Network,
    input: &Stimulus,
    task: usize,
    cfg: &LifConfig,
    record_spikes: bool,
) -> Result<Forward> {
    let trace = simulate(net, input.clone(), task, cfg)?;
    let spikes = if record_spikes {
        let mut rec = SpikeRecord::new(net.hidden(), cfg.timesteps);
        rec.push_raster(&trace.spikes)?;
        Some(rec)
    } else {
        None
    };
    Ok(Forward {
        logits: trace.logits.clone(),
        trace,
        spikes,
    })
}

/// Simulate a batch of samples. Equivalent to calling [`forward`] per sample.
pub fn forward_batch(
    net: &Network,
    inputs: &[Stimulus],
    task: usize,
    cfg: &LifConfig,
) -> Result<Vec<ForwardTrace>> {
    inputs
        .iter()
        .map(|x| simulate(net, x.clone(), task, cfg))
        .collect()
}

pub(crate) fn simulate(net: &Network, input: Stimulus, task: usize, cfg: &LifConfig) -> Result<ForwardTrace> {
    cfg.validate()?;
    let head = net.head(task)?;
    let steps = cfg.timesteps;
    if input.timesteps() != steps {
        return Err(Error::Shape(format!(
            "stimulus spans {} steps, config expects {steps}",
            input.timesteps()
        )));
    }
    let hidden = net.hidden();
    let drive = match &input {
        Stimulus::Constant { x, .. } => net.project(x.view())?.insert_axis(Axis(0)),
        Stimulus::Frames(frames) => {
            let mut d = Array2::zeros((steps, hidden));
            for (t, frame) in frames.outer_iter().enumerate() {
                d.row_mut(t).assign(&net.project(frame)?);
            }
            d
        }
    };
    if !drive.iter().all(|v| v.is_finite()) {
        return Err(Error::Divergence("non-finite trunk input current".into()));
    }

    let mut membrane = Array2::zeros((steps, hidden));
    let mut spikes = Array2::zeros((steps, hidden));
    let mut u = vec![0.0; hidden];
    let mut s = vec![0.0; hidden];
    let decay = cfg.decay();
    for t in 0..steps {
        let row = if drive.nrows() == 1 { 0 } else { t };
        let current = drive.slice(s![row, ..]);
        advance(&mut u, &mut s, current.as_slice().expect("contiguous"), decay, cfg.theta);
        membrane.row_mut(t).assign(&ArrayView1::from(&u[..]));
        spikes.row_mut(t).assign(&ArrayView1::from(&s[..]));
    }

    let rate = spikes.mean_axis(Axis(0)).expect("timesteps >= 2");
    let logits = head.w.dot(&rate) + &head.b;
    Ok(ForwardTrace {
        task,
        input,
        drive,
        membrane,
        spikes,
        rate,
        logits,
    })
}
