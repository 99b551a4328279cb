//! Five-task Split-MNIST at desk scale, one method.
//!
//! ```bash
//! cargo run --release -p isicv --example split_mnist -- isi-cv 500 0
//! ```
//!
//! Arguments: method (`none`, `ewc`, `si`, `isi-cv`), lambda, seed.
//! MNIST IDX files are read from `$ISICV_DATA_DIR` (default `data/mnist`).

use std::time::Instant;

use isicv::continual::{run_sequence, ContinualConfig};
use isicv::data::{build_split, load_idx_dir, EncodingSpec, STANDARD_PAIRS};
use isicv::training::TrainConfig;
use isicv::{LifConfig, Method};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let method: Method = args.first().map(String::as_str).unwrap_or("isi-cv").parse()?;
    let lambda: f64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(500.0);
    let seed: u64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(0);

    let dir = std::env::var("ISICV_DATA_DIR").unwrap_or_else(|_| "data/mnist".into());
    let (train, test) = load_idx_dir(&dir)?;
    let env = |k: &str, d: usize| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let (hidden, timesteps, epochs) = (env("HIDDEN", 128), env("TIMESTEPS", 10), env("EPOCHS", 5));
    let (train_cap, test_cap) = (env("TRAIN_CAP", 2000), env("TEST_CAP", 500));
    let tasks = build_split(&train, &test, &STANDARD_PAIRS)?.capped(Some(train_cap), Some(test_cap));

    let lif = LifConfig {
        timesteps,
        ..LifConfig::default()
    };
    let cfg = ContinualConfig {
        hidden,
        train: TrainConfig {
            epochs,
            lif,
            encoding: EncodingSpec { timesteps, gain: 1.0 },
            ..TrainConfig::default()
        },
        ..ContinualConfig::default()
    };

    let start = Instant::now();
    let out = run_sequence(&tasks, method, lambda, seed, &cfg)?;
    let m = out.metrics()?;
    println!("method={method} lambda={lambda} seed={seed}");
    for (l, row) in out.results.rows().iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .map(|v| v.map(|a| format!("{a:.3}")).unwrap_or_else(|| "  -  ".into()))
            .collect();
        println!("  after task {}: {}", l + 1, cells.join(" "));
    }
    println!("  AA={:.4} BWT={:+.4} AF={:.4}", m.aa, m.bwt, m.af);
    println!("  drift after each task: {:?}", out.drift);
    if method != Method::None {
        let omega = &out.importances[0].omega;
        let high = omega.iter().filter(|&&w| w > 0.5).count();
        println!("  task-1 importance: {high}/{} neurons above 0.5", omega.len());
    }
    println!("  elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
