//! A single LIF neuron under constant current.
//!
//! ```bash
//! cargo run --release -p isicv --example lif_dynamics
//! ```
//!
//! Prints the membrane trace and spike times for a few input currents,
//! then the firing rate as a function of current.

use isicv::snn::{forward, Head};
use isicv::{LifConfig, Network, Stimulus};
use ndarray::array;

fn main() -> isicv::Result<()> {
    let lif = LifConfig {
        timesteps: 12,
        ..LifConfig::default()
    };
    println!("tau={} theta={} decay={}", lif.tau, lif.theta, lif.decay());

    let net = Network::from_parts(array![[1.0]], array![0.0], vec![Head::zeros(2, 1)])?;
    for current in [0.4, 0.6, 1.0, 1.7] {
        let x = Stimulus::Constant {
            x: array![current],
            timesteps: lif.timesteps,
        };
        let tr = forward(&net, &x, 0, &lif, false)?.trace;
        let u: Vec<String> = tr.membrane.column(0).iter().map(|v| format!("{v:5.2}")).collect();
        println!("\nI={current}");
        println!("  u:      {}", u.join(" "));
        println!("  spikes: {:?}", tr.spike_times()[0]);
    }

    println!("\nrate vs current");
    for step in 0..=10 {
        let current = 0.3 * step as f64;
        let x = Stimulus::Constant {
            x: array![current],
            timesteps: lif.timesteps,
        };
        let rate = forward(&net, &x, 0, &lif, false)?.trace.rate[0];
        println!("  I={current:4.1} rate={rate:.3} {}", "#".repeat((rate * 40.0).round() as usize));
    }
    Ok(())
}
