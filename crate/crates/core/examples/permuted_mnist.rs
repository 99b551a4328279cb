//! Permuted-MNIST, No-Reg against ISI-CV.
//!
//! ```bash
//! cargo run --release -p isicv --example permuted_mnist -- 5
//! ```
//!
//! The argument is the number of permutations. Reads MNIST from
//! `$ISICV_DATA_DIR` or `data/mnist`.

use isicv::continual::run_sequence;
use isicv::experiment::{default_lambda, load_tasks, Benchmark, ExperimentConfig};
use isicv::Method;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let permutations = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let cfg = ExperimentConfig {
        benchmark: Benchmark::PermutedMnist,
        permutations,
        data_dir: std::env::var("ISICV_DATA_DIR").unwrap_or_else(|_| "data/mnist".into()).into(),
        ..ExperimentConfig::default()
    };
    let tasks = load_tasks(&cfg)?;
    println!("{} tasks, {} train / {} test each", tasks.len(), tasks.tasks[0].train.len(), tasks.tasks[0].test.len());

    for method in [Method::None, Method::IsiCv] {
        let out = run_sequence(&tasks, method, default_lambda(method), 0, &cfg.continual())?;
        let m = out.metrics()?;
        let last: Vec<String> = out.results.rows().last().unwrap().iter().map(|a| format!("{:.3}", a.unwrap())).collect();
        println!("{:<7} AA={:.4} BWT={:+.4} AF={:.4}  final row: {}", method.as_str(), m.aa, m.bwt, m.af, last.join(" "));
    }
    Ok(())
}
