use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use isicv::experiment::{self, ExperimentConfig, Overrides, DATA_DIR_ENV};

#[derive(Parser)]
#[command(name = "isicv", version, about = "Continual learning for LIF spiking networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Train a task sequence for every configured seed.
    Run(Common),
    /// Repeat a run over several regularization strengths.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated strengths; overrides `lambdas` in the config.
        #[arg(long)]
        lambdas: Option<String>,
    },
    /// Print per-neuron ISI statistics of a checkpoint as JSON.
    ImportanceDump {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task whose training data drives the network (default: the checkpoint's task).
        #[arg(long)]
        task: Option<usize>,
        /// Write to this file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn resolve(common: &Common) -> isicv::Result<ExperimentConfig> {
    ExperimentConfig::resolve(
        common.config.as_deref(),
        std::env::var(DATA_DIR_ENV).ok(),
        &common.overrides,
    )
}

fn execute(cli: Cli) -> isicv::Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = resolve(&common)?;
            let rec = experiment::cmd_run(&cfg)?;
            let a = &rec.aggregate;
            println!(
                "{} lambda={} seeds={}: AA {:.4} ± {:.4}  BWT {:+.4} ± {:.4}  AF {:.4} ± {:.4}",
                rec.method,
                rec.lambda,
                rec.seeds.len(),
                a.aa_mean,
                a.aa_std,
                a.bwt_mean,
                a.bwt_std,
                a.af_mean,
                a.af_std
            );
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Sweep { common, lambdas } => {
            let mut cfg = resolve(&common)?;
            if let Some(l) = lambdas {
                cfg.set("lambdas", &l)?;
                cfg.validate()?;
            }
            let rec = experiment::cmd_sweep(&cfg)?;
            for r in &rec.rows {
                println!(
                    "lambda={:<8} AA {:.4} ± {:.4}  AF {:.4} ± {:.4}  drift {:.4}",
                    r.lambda, r.aa_mean, r.aa_std, r.af_mean, r.af_std, r.drift_mean
                );
            }
            println!("wrote {}", cfg.output_dir.join("sweep.csv").display());
        }
        Command::ImportanceDump {
            common,
            checkpoint,
            task,
            output,
        } => {
            let cfg = resolve(&common)?;
            let dump = experiment::cmd_importance_dump(&cfg, &checkpoint, task)?;
            match output {
                Some(path) => experiment::write_json(&path, &dump)?,
                None => {
                    let text = serde_json::to_string_pretty(&dump).map_err(|e| isicv::Error::Serialize(e.to_string()))?;
                    println!("{text}");
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(experiment::exit_code(&e) as u8)
        }
    }
}
