//! Continual learning for multi-head leaky integrate-and-fire networks.
//!
//! A shared LIF trunk is trained task by task with surrogate-gradient BPTT.
//! Between tasks, each trunk neuron gets an importance score and the next
//! task's loss pulls important neurons back toward their previous weights.
//! Importance can come from spike-timing regularity (ISI-CV, no gradients),
//! from the diagonal Fisher (EWC) or from the SI path integral.
//!
//! Module map:
//!
//! * [`snn`]: LIF dynamics, network state, forward simulation, spike records.
//! * [`training`]: surrogate gradients, BPTT, cross-entropy, Adam, task training.
//! * [`importance`]: ISI-CV, EWC and SI importance vectors.
//! * [`continual`]: anchored penalty, task-sequence runner, AA/BWT/AF.
//! * [`data`]: IDX files, encoding, split/permuted/synthetic benchmarks.
//! * [`experiment`]: config files, checkpoints, CSV/JSON reports and the
//!   `run` / `sweep` / `importance-dump` commands.

pub mod continual;
pub mod data;
pub mod error;
pub mod experiment;
pub mod importance;
pub mod snn;
pub mod training;

pub use continual::{compute_metrics, penalty, penalty_gradient, run_sequence, Anchor, MetricsReport, ResultMatrix};
pub use error::{Error, Result};
pub use importance::{ImportanceVector, Method};
pub use snn::{forward, lif_step, LifConfig, Network, SpikeRecord, Stimulus};
