//! Every method on a small synthetic task sequence. Needs no downloads.
//!
//! ```bash
//! cargo run --release -p isicv --example synthetic_continual
//! ```

use isicv::continual::{run_sequence, ContinualConfig};
use isicv::data::{build_synthetic, EncodingSpec, SyntheticSpec};
use isicv::experiment::default_lambda;
use isicv::training::TrainConfig;
use isicv::{LifConfig, Method};

fn main() -> isicv::Result<()> {
    let tasks = build_synthetic(&SyntheticSpec {
        tasks: 4,
        dim: 64,
        train_per_class: 80,
        noise: 0.25,
        ..SyntheticSpec::default()
    })?;
    let timesteps = 8;
    let cfg = ContinualConfig {
        hidden: 32,
        train: TrainConfig {
            epochs: 4,
            batch_size: 16,
            lif: LifConfig {
                timesteps,
                ..LifConfig::default()
            },
            encoding: EncodingSpec { timesteps, gain: 1.0 },
            ..TrainConfig::default()
        },
        importance_samples: 128,
        ..ContinualConfig::default()
    };

    println!("{:<8} {:>7} {:>7} {:>8} {:>7}  drift per task", "method", "lambda", "AA", "BWT", "AF");
    for method in [Method::None, Method::Ewc, Method::Si, Method::IsiCv] {
        let lambda = default_lambda(method);
        let out = run_sequence(&tasks, method, lambda, 0, &cfg)?;
        let m = out.metrics()?;
        let drift: Vec<String> = out.drift.iter().map(|d| format!("{d:.3}")).collect();
        println!(
            "{:<8} {lambda:>7} {:>7.4} {:>+8.4} {:>7.4}  {}",
            method.as_str(),
            m.aa,
            m.bwt,
            m.af,
            drift.join(" ")
        );
    }
    Ok(())
}
