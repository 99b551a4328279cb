//! Save a checkpoint after each task, reload one and dump its importance.
//!
//! ```bash
//! cargo run --release -p isicv --example checkpoint_importance
//! ```

use isicv::data::SyntheticSpec;
use isicv::experiment::{checkpoint_path, cmd_importance_dump, cmd_run, Benchmark, Checkpoint, ExperimentConfig};
use isicv::Method;

fn main() -> isicv::Result<()> {
    let out = std::env::temp_dir().join("isicv-checkpoint-example");
    let cfg = ExperimentConfig {
        benchmark: Benchmark::Synthetic,
        method: Method::IsiCv,
        seeds: vec![0],
        hidden: 12,
        timesteps: 8,
        epochs: 2,
        batch_size: 16,
        importance_samples: 64,
        output_dir: out.clone(),
        synthetic: SyntheticSpec {
            dim: 32,
            ..SyntheticSpec::default()
        },
        ..ExperimentConfig::default()
    };
    let run = cmd_run(&cfg)?;
    println!("AA={:.4} AF={:.4}", run.aggregate.aa_mean, run.aggregate.af_mean);

    let path = checkpoint_path(&out, 0, 0);
    let ck = Checkpoint::load(&path)?;
    println!(
        "{}: task {} seed {} hidden {} heads {}",
        path.display(),
        ck.task,
        ck.seed,
        ck.network.hidden(),
        ck.network.heads.len()
    );

    let dump = cmd_importance_dump(&cfg, &path, None)?;
    println!("task {} over {} samples, clip {:.3}", dump.task, dump.samples, dump.clip);
    for n in &dump.neurons {
        println!(
            "  neuron {:>2}: spikes {:>4} isis {:>4} cv {:.3} omega {:.3}",
            n.neuron, n.spike_count, n.isi_count, n.cv, n.omega
        );
    }
    let same = dump.neurons.iter().map(|n| n.omega).eq(run.seeds[0].importances[0].iter().copied());
    println!("matches the run's task-0 importance: {same}");
    Ok(())
}
