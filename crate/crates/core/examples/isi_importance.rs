//! ISI-CV importance on hand-written spike trains.
//!
//! ```bash
//! cargo run --release -p isicv --example isi_importance
//! ```

use isicv::importance::{isi_cv_report, IsiConfig};
use isicv::SpikeRecord;

fn main() -> isicv::Result<()> {
    let names = ["regular", "two bursts", "jittered", "single spike", "silent"];
    // neurons x samples x spike times, T = 12
    let trains = vec![
        vec![vec![0, 2, 4, 6, 8, 10], vec![1, 3, 5, 7, 9, 11]],
        vec![vec![0, 1, 9, 10], vec![2, 3, 10, 11]],
        vec![vec![0, 3, 4, 8, 11], vec![1, 2, 6, 7, 11]],
        vec![vec![5], vec![]],
        vec![vec![], vec![]],
    ];
    let record = SpikeRecord::from_trains(trains, 12)?;
    let report = isi_cv_report(&record, &IsiConfig::default(), 0)?;

    println!("clip (P95 of raw) = {:.3}", report.clip);
    println!("{:<14} {:>6} {:>6} {:>8} {:>10} {:>7}", "neuron", "spikes", "isis", "cv", "raw", "omega");
    for (i, name) in names.iter().enumerate() {
        let n = &report.stats.neurons[i];
        println!(
            "{name:<14} {:>6} {:>6} {:>8.4} {:>10.3} {:>7.4}",
            n.spike_count,
            n.intervals.len(),
            n.cv,
            report.raw[i],
            report.importance.omega[i]
        );
    }
    Ok(())
}
