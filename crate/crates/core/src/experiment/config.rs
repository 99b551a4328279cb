use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::continual::ContinualConfig;
use crate::data::{EncodingSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::importance::{IsiConfig, Method};
use crate::snn::LifConfig;
use crate::training::{AdamConfig, SurrogateConfig, TrainConfig};

/// Environment variable that overrides the configured data directory.
pub const DATA_DIR_ENV: &str = "ISICV_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    SplitMnist,
    PermutedMnist,
    SplitFashionmnist,
    Synthetic,
}

impl Benchmark {
    pub fn as_str(&self) -> &'static str {
        match self {
            Benchmark::SplitMnist => "split-mnist",
            Benchmark::PermutedMnist => "permuted-mnist",
            Benchmark::SplitFashionmnist => "split-fashionmnist",
            Benchmark::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "split-mnist" => Ok(Benchmark::SplitMnist),
            "permuted-mnist" => Ok(Benchmark::PermutedMnist),
            "split-fashionmnist" | "split-fashion-mnist" => Ok(Benchmark::SplitFashionmnist),
            "synthetic" => Ok(Benchmark::Synthetic),
            other => Err(Error::Config(format!("unknown benchmark '{other}'"))),
        }
    }
}

/// Every knob of an experiment. Defaults are the desk-scale profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    pub method: Method,
    /// `None` selects the method's default strength.
    pub lambda: Option<f64>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub hidden: usize,
    pub timesteps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_cap: Option<usize>,
    pub test_cap: Option<usize>,
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    pub importance_samples: usize,
    pub gain: f64,
    pub tau: f64,
    pub theta: f64,
    pub alpha: f64,
    pub si_xi: f64,
    /// Task count for the permuted benchmark.
    pub permutations: usize,
    pub permutation_seed: u64,
    pub synthetic: SyntheticSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            benchmark: Benchmark::SplitMnist,
            method: Method::IsiCv,
            lambda: None,
            lambdas: Vec::new(),
            seeds: vec![0],
            hidden: 128,
            timesteps: 10,
            epochs: 5,
            batch_size: 128,
            learning_rate: 1e-3,
            train_cap: Some(2000),
            test_cap: Some(500),
            data_dir: PathBuf::from("data/mnist"),
            output_dir: PathBuf::from("runs/latest"),
            importance_samples: 1024,
            gain: 1.0,
            tau: 2.0,
            theta: 1.0,
            alpha: 2.0,
            si_xi: 0.1,
            permutations: 5,
            permutation_seed: 0,
            synthetic: SyntheticSpec::default(),
        }
    }
}

/// Default regularization strength per method on the MNIST family.
pub fn default_lambda(method: Method) -> f64 {
    match method {
        Method::None => 0.0,
        Method::IsiCv => 500.0,
        Method::Ewc | Method::Si => 1000.0,
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_cap(key: &str, value: &str) -> Result<Option<usize>> {
    match value.trim() {
        "all" | "none" | "full" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl ExperimentConfig {
    /// Set one field from its textual form. Keys match the config-file keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "benchmark" => self.benchmark = v.parse()?,
            "method" => self.method = v.parse()?,
            "lambda" => self.lambda = Some(parse(key, v)?),
            "lambdas" => self.lambdas = parse_list(key, v)?,
            "seeds" => self.seeds = parse_list(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "timesteps" => self.timesteps = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "train_cap" => self.train_cap = parse_cap(key, v)?,
            "test_cap" => self.test_cap = parse_cap(key, v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "output_dir" => self.output_dir = PathBuf::from(v),
            "importance_samples" => self.importance_samples = parse(key, v)?,
            "gain" => self.gain = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "theta" => self.theta = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "si_xi" => self.si_xi = parse(key, v)?,
            "permutations" => self.permutations = parse(key, v)?,
            "permutation_seed" => self.permutation_seed = parse(key, v)?,
            "synthetic_tasks" => self.synthetic.tasks = parse(key, v)?,
            "synthetic_classes" => self.synthetic.classes = parse(key, v)?,
            "synthetic_dim" => self.synthetic.dim = parse(key, v)?,
            "synthetic_train_per_class" => self.synthetic.train_per_class = parse(key, v)?,
            "synthetic_test_per_class" => self.synthetic.test_per_class = parse(key, v)?,
            "synthetic_noise" => self.synthetic.noise = parse(key, v)?,
            "synthetic_density" => self.synthetic.density = parse(key, v)?,
            "synthetic_orthogonal" => self.synthetic.orthogonal = parse(key, v)?,
            "synthetic_seed" => self.synthetic.seed = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Defaults, then the optional file, then the data-dir environment variable,
    /// then command-line overrides.
    pub fn resolve(file: Option<&Path>, env_data_dir: Option<String>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if let Some(dir) = env_data_dir.filter(|d| !d.is_empty()) {
            cfg.data_dir = PathBuf::from(dir);
        }
        overrides.apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn effective_lambda(&self) -> f64 {
        self.lambda.unwrap_or_else(|| default_lambda(self.method))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("importance_samples", self.importance_samples),
            ("permutations", self.permutations),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if matches!(self.train_cap, Some(0)) || matches!(self.test_cap, Some(0)) {
            return Err(Error::Config("subset caps must be positive".into()));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("gain", self.gain),
            ("alpha", self.alpha),
            ("si_xi", self.si_xi),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::Config(format!("lambda must be >= 0, got {l}")));
            }
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config("every sweep lambda must be >= 0".into()));
        }
        self.lif().validate()
    }

    pub fn lif(&self) -> LifConfig {
        LifConfig {
            tau: self.tau,
            theta: self.theta,
            timesteps: self.timesteps,
        }
    }

    pub fn continual(&self) -> ContinualConfig {
        ContinualConfig {
            hidden: self.hidden,
            train: TrainConfig {
                epochs: self.epochs,
                batch_size: self.batch_size,
                lif: self.lif(),
                surrogate: SurrogateConfig { alpha: self.alpha },
                adam: AdamConfig {
                    lr: self.learning_rate,
                    ..AdamConfig::default()
                },
                encoding: EncodingSpec {
                    timesteps: self.timesteps,
                    gain: self.gain,
                },
            },
            isi: IsiConfig::default(),
            importance_samples: self.importance_samples,
            si_xi: self.si_xi,
        }
    }
}

/// Command-line overrides; each flag mirrors a config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub benchmark: Option<String>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated list.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub timesteps: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// A count or `all`.
    #[arg(long)]
    pub train_cap: Option<String>,
    #[arg(long)]
    pub test_cap: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub importance_samples: Option<usize>,
    #[arg(long)]
    pub gain: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Extra `key=value` assignments for keys without a dedicated flag.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        let mut pairs: Vec<(&str, String)> = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k, v));
            }
        };
        push("benchmark", self.benchmark.clone());
        push("method", self.method.clone());
        push("lambda", self.lambda.map(|v| v.to_string()));
        push("seeds", self.seeds.clone());
        push("hidden", self.hidden.map(|v| v.to_string()));
        push("timesteps", self.timesteps.map(|v| v.to_string()));
        push("epochs", self.epochs.map(|v| v.to_string()));
        push("batch_size", self.batch_size.map(|v| v.to_string()));
        push("learning_rate", self.learning_rate.map(|v| v.to_string()));
        push("train_cap", self.train_cap.clone());
        push("test_cap", self.test_cap.clone());
        push("data_dir", self.data_dir.as_ref().map(|p| p.display().to_string()));
        push("output_dir", self.output_dir.as_ref().map(|p| p.display().to_string()));
        push("importance_samples", self.importance_samples.map(|v| v.to_string()));
        push("gain", self.gain.map(|v| v.to_string()));
        push("tau", self.tau.map(|v| v.to_string()));
        push("theta", self.theta.map(|v| v.to_string()));
        push("alpha", self.alpha.map(|v| v.to_string()));
        push("permutations", self.permutations.map(|v| v.to_string()));
        for (k, v) in pairs {
            cfg.set(k, &v)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k, v)?;
        }
        Ok(())
    }
}
