//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the library's numerics: the autodiff tape, the ISI
//! statistics and the LIF replay are written straight from the definitions.

#![allow(dead_code)]

use isicv::continual::{penalty, penalty_gradient, Anchor};
use isicv::snn::{ForwardTrace, Head};
use isicv::{ImportanceVector, LifConfig, Method, Network, SpikeRecord, Stimulus};
use ndarray::{Array1, Array2};
use rand::Rng;

// ---------------------------------------------------------------- autodiff tape

#[derive(Clone, Copy)]
enum Op {
    Leaf,
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Exp(usize),
    Ln(usize),
    /// Heaviside in value, `surrogate'(x)` in gradient.
    Spike(usize, f64),
}

/// A scalar reverse-mode tape.
#[derive(Default)]
pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<f64>,
}

impl Tape {
    fn push(&mut self, op: Op, v: f64) -> usize {
        self.ops.push(op);
        self.vals.push(v);
        self.vals.len() - 1
    }

    pub fn leaf(&mut self, v: f64) -> usize {
        self.push(Op::Leaf, v)
    }

    pub fn val(&self, i: usize) -> f64 {
        self.vals[i]
    }

    pub fn add(&mut self, a: usize, b: usize) -> usize {
        let v = self.vals[a] + self.vals[b];
        self.push(Op::Add(a, b), v)
    }

    pub fn mul(&mut self, a: usize, b: usize) -> usize {
        let v = self.vals[a] * self.vals[b];
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: usize, c: f64) -> usize {
        let v = self.vals[a] * c;
        self.push(Op::Scale(a, c), v)
    }

    pub fn exp(&mut self, a: usize) -> usize {
        let v = self.vals[a].exp();
        self.push(Op::Exp(a), v)
    }

    pub fn ln(&mut self, a: usize) -> usize {
        let v = self.vals[a].ln();
        self.push(Op::Ln(a), v)
    }

    pub fn spike(&mut self, x: usize, alpha: f64) -> usize {
        let v = if self.vals[x] >= 0.0 { 1.0 } else { 0.0 };
        self.push(Op::Spike(x, alpha), v)
    }

    pub fn sum(&mut self, xs: &[usize]) -> usize {
        let mut acc = xs[0];
        for &x in &xs[1..] {
            acc = self.add(acc, x);
        }
        acc
    }

    pub fn grad(&self, out: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.vals.len()];
        g[out] = 1.0;
        for i in (0..=out).rev() {
            let gi = g[i];
            if gi == 0.0 {
                continue;
            }
            match self.ops[i] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    g[a] += gi;
                    g[b] += gi;
                }
                Op::Mul(a, b) => {
                    g[a] += gi * self.vals[b];
                    g[b] += gi * self.vals[a];
                }
                Op::Scale(a, c) => g[a] += gi * c,
                Op::Exp(a) => g[a] += gi * self.vals[i],
                Op::Ln(a) => g[a] += gi / self.vals[a],
                Op::Spike(a, alpha) => {
                    let x = self.vals[a];
                    let k = std::f64::consts::FRAC_PI_2 * alpha * x;
                    g[a] += gi * alpha / (2.0 * (1.0 + k * k));
                }
            }
        }
        g
    }
}

pub struct OracleGrad {
    pub loss: f64,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

/// Cross-entropy gradient of one sample by unrolling every scalar operation.
pub fn oracle_gradient(net: &Network, input: &Stimulus, task: usize, target: usize, lif: &LifConfig, alpha: f64) -> OracleGrad {
    let (h, d) = (net.hidden(), net.input());
    let head = &net.heads[task];
    let c = head.b.len();
    let steps = lif.timesteps;
    let mut tp = Tape::default();
    let w1: Vec<Vec<usize>> = (0..h).map(|i| (0..d).map(|j| tp.leaf(net.w1[[i, j]])).collect()).collect();
    let b1: Vec<usize> = (0..h).map(|i| tp.leaf(net.b1[i])).collect();
    let w2: Vec<Vec<usize>> = (0..c).map(|k| (0..h).map(|i| tp.leaf(head.w[[k, i]])).collect()).collect();
    let b2: Vec<usize> = (0..c).map(|k| tp.leaf(head.b[k])).collect();
    let frames = input.to_dense();
    let decay = 1.0 - 1.0 / lif.tau;

    let mut u: Vec<usize> = (0..h).map(|_| tp.leaf(0.0)).collect();
    let mut s: Vec<usize> = (0..h).map(|_| tp.leaf(0.0)).collect();
    let mut spikes: Vec<Vec<usize>> = vec![Vec::new(); h];
    for t in 0..steps {
        for i in 0..h {
            let mut terms = Vec::with_capacity(d + 1);
            for j in 0..d {
                let x = tp.leaf(frames[[t, j]]);
                terms.push(tp.mul(w1[i][j], x));
            }
            terms.push(b1[i]);
            let current = tp.sum(&terms);
            let leak = tp.scale(u[i], decay);
            let reset = tp.scale(s[i], -lif.theta);
            let a = tp.add(leak, current);
            let un = tp.add(a, reset);
            let shifted_const = tp.leaf(-lif.theta);
            let shifted = tp.add(un, shifted_const);
            let sn = tp.spike(shifted, alpha);
            u[i] = un;
            s[i] = sn;
            spikes[i].push(sn);
        }
    }
    let rate: Vec<usize> = (0..h)
        .map(|i| {
            let total = tp.sum(&spikes[i]);
            tp.scale(total, 1.0 / steps as f64)
        })
        .collect();
    let logits: Vec<usize> = (0..c)
        .map(|k| {
            let mut terms: Vec<usize> = (0..h).map(|i| tp.mul(w2[k][i], rate[i])).collect();
            terms.push(b2[k]);
            tp.sum(&terms)
        })
        .collect();
    let m = logits.iter().map(|&z| tp.val(z)).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<usize> = logits
        .iter()
        .map(|&z| {
            let shifted = tp.scale(z, 1.0);
            let neg_m = tp.leaf(-m);
            let e = tp.add(shifted, neg_m);
            tp.exp(e)
        })
        .collect();
    let total = tp.sum(&exps);
    let lse = tp.ln(total);
    let neg_target = tp.scale(logits[target], -1.0);
    let shift = tp.leaf(m);
    let partial = tp.add(lse, shift);
    let loss = tp.add(partial, neg_target);

    let g = tp.grad(loss);
    OracleGrad {
        loss: tp.val(loss),
        w1: Array2::from_shape_fn((h, d), |(i, j)| g[w1[i][j]]),
        b1: Array1::from_shape_fn(h, |i| g[b1[i]]),
        head_w: Array2::from_shape_fn((c, h), |(k, i)| g[w2[k][i]]),
        head_b: Array1::from_shape_fn(c, |k| g[b2[k]]),
    }
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over paired values.
pub fn max_rel_err<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>, floor: f64) -> f64 {
    a.into_iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------- random fixtures

/// A tiny network with weights large enough that neurons spike.
pub fn random_net<R: Rng>(rng: &mut R, input: usize, hidden: usize, classes: usize, tasks: usize) -> Network {
    let w1 = Array2::from_shape_fn((hidden, input), |_| rng.gen_range(-1.5..2.0));
    let b1 = Array1::from_shape_fn(hidden, |_| rng.gen_range(-0.5..0.8));
    let heads = (0..tasks)
        .map(|_| Head {
            w: Array2::from_shape_fn((classes, hidden), |_| rng.gen_range(-2.0..2.0)),
            b: Array1::from_shape_fn(classes, |_| rng.gen_range(-0.5..0.5)),
        })
        .collect();
    Network::from_parts(w1, b1, heads).unwrap()
}

pub fn random_stimulus<R: Rng>(rng: &mut R, dim: usize, timesteps: usize, frames: bool) -> Stimulus {
    if frames {
        Stimulus::Frames(Array2::from_shape_fn((timesteps, dim), |_| rng.gen_range(0.0..1.5)))
    } else {
        Stimulus::Constant {
            x: Array1::from_shape_fn(dim, |_| rng.gen_range(0.0..1.5)),
            timesteps,
        }
    }
}

pub fn random_record<R: Rng>(rng: &mut R, neurons: usize, samples: usize, timesteps: usize) -> SpikeRecord {
    let trains = (0..neurons)
        .map(|_| {
            let p: f64 = rng.gen_range(0.0..1.0);
            (0..samples)
                .map(|_| (0..timesteps as u32).filter(|_| rng.gen_bool(p)).collect())
                .collect()
        })
        .collect();
    SpikeRecord::from_trains(trains, timesteps).unwrap()
}

pub fn random_anchor<R: Rng>(rng: &mut R, net: &Network, lambda: f64) -> Anchor {
    let mut snap = net.clone();
    snap.w1.mapv_inplace(|w| w + rng.gen_range(-0.5..0.5));
    snap.b1.mapv_inplace(|b| b + rng.gen_range(-0.5..0.5));
    let omega = ImportanceVector {
        omega: (0..net.hidden()).map(|_| rng.gen_range(0.0..=1.0)).collect(),
        method: Method::IsiCv,
        task: 0,
    };
    Anchor::new(&snap, omega, lambda).unwrap()
}

// ---------------------------------------------------------------- ISI oracle

/// ISI-CV importance straight from the definitions.
pub fn brute_isi_importance(rec: &SpikeRecord) -> Vec<f64> {
    let eps = 1e-3;
    let raw: Vec<f64> = (0..rec.neurons())
        .map(|i| {
            let mut isis = Vec::new();
            for n in 0..rec.samples() {
                let tr = rec.train(i, n);
                for k in 1..tr.len() {
                    isis.push((tr[k] - tr[k - 1]) as f64);
                }
            }
            let cv = if isis.is_empty() {
                2.0
            } else {
                let mean = isis.iter().sum::<f64>() / isis.len() as f64;
                let var = isis.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / isis.len() as f64;
                var.sqrt() / (mean + eps)
            };
            1.0 / (cv + eps)
        })
        .collect();
    let mut sorted = raw.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = 0.95 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let p95 = sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64);
    raw.iter().map(|&r| r.min(p95) / (p95 + eps)).collect()
}

// ---------------------------------------------------------------- LIF replay

/// Recompute membrane and spikes from the recorded drive; returns whether
/// every value matches bit for bit.
pub fn replay_matches(trace: &ForwardTrace, lif: &LifConfig) -> bool {
    let h = trace.membrane.ncols();
    let decay = 1.0 - 1.0 / lif.tau;
    let mut u = vec![0.0f64; h];
    let mut s = vec![0.0f64; h];
    for t in 0..trace.timesteps() {
        let drive = trace.drive_at(t);
        for i in 0..h {
            u[i] = decay * u[i] + drive[i] - lif.theta * s[i];
            s[i] = if u[i] >= lif.theta { 1.0 } else { 0.0 };
            if u[i].to_bits() != trace.membrane[[t, i]].to_bits() || s[i].to_bits() != trace.spikes[[t, i]].to_bits() {
                return false;
            }
        }
    }
    true
}

/// Recomputes the drive `W1 x + b1` with a naive loop and compares it to the trace.
pub fn drive_close(trace: &ForwardTrace, net: &Network, tol: f64) -> bool {
    let frames = trace.input.to_dense();
    (0..trace.timesteps()).all(|t| {
        let d = trace.drive_at(t);
        (0..net.hidden()).all(|i| {
            let want: f64 = (0..net.input()).map(|j| net.w1[[i, j]] * frames[[t, j]]).sum::<f64>() + net.b1[i];
            (want - d[i]).abs() <= tol * want.abs().max(1.0)
        })
    })
}

// ---------------------------------------------------------------- penalty FD

/// Largest relative gap between the analytic penalty gradient and central differences.
pub fn penalty_fd_error(net: &Network, anchor: &Anchor, h: f64) -> f64 {
    let g = penalty_gradient(net, anchor, 0);
    let mut worst = 0.0f64;
    let mut probe = net.clone();
    let rel = |fd: f64, an: f64| (fd - an).abs() / fd.abs().max(an.abs()).max(1.0);
    for idx in 0..net.w1.len() {
        let (i, j) = (idx / net.input(), idx % net.input());
        let w = net.w1[[i, j]];
        probe.w1[[i, j]] = w + h;
        let up = penalty(&probe, anchor);
        probe.w1[[i, j]] = w - h;
        let down = penalty(&probe, anchor);
        probe.w1[[i, j]] = w;
        worst = worst.max(rel((up - down) / (2.0 * h), g.w1[[i, j]]));
    }
    for i in 0..net.hidden() {
        let b = net.b1[i];
        probe.b1[i] = b + h;
        let up = penalty(&probe, anchor);
        probe.b1[i] = b - h;
        let down = penalty(&probe, anchor);
        probe.b1[i] = b;
        worst = worst.max(rel((up - down) / (2.0 * h), g.b1[i]));
    }
    worst
}
