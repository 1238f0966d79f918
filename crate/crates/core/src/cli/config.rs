//! Plain-text `key = value` experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::corpus::CorpusConfig;
use crate::bench::BenchConfig;
use crate::error::{Error, Result};
use crate::kg::{EntityType, WorldConfig};
use crate::lm::pretrain::Schedule;
use crate::lm::ModelConfig;
use crate::pipeline::{toy_unlearn_config, KNOWN_THRESHOLD};
use crate::unlearn::{Method, UnlearnConfig};

/// Every stage's settings. Unset keys keep their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub world: WorldConfig,
    pub bench: BenchConfig,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub schedule: Schedule,
    /// Mean benchmark-probe recall that ends pretraining early.
    pub memorization_gate: f64,
    pub unlearn: UnlearnConfig,
    pub known_threshold: f64,
    pub epsilon: f64,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub lr_grid: Vec<f64>,
    pub corruption_grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out: PathBuf::from("run"),
            world: WorldConfig::default(),
            bench: BenchConfig::default(),
            corpus: CorpusConfig::default(),
            model: ModelConfig::toy(0, 0),
            schedule: Schedule { max_epochs: 40, lr: 1e-3, ..Default::default() },
            memorization_gate: 0.99,
            unlearn: toy_unlearn_config(Method::Neds, 0),
            known_threshold: KNOWN_THRESHOLD,
            epsilon: crate::eval::DEFAULT_EPSILON,
            methods: vec![Method::Neds],
            seeds: vec![0],
            lr_grid: vec![1e-4, 3e-5, 2e-5, 1e-5],
            corruption_grid: vec![0.0, 0.3, 0.5, 0.8],
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let out = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect::<Result<Vec<T>>>()?;
    if out.is_empty() {
        return Err(Error::Config(format!("`{key}` must list at least one value")));
    }
    Ok(out)
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

impl ExperimentConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let u = &mut self.unlearn;
        match key.trim() {
            "seed" => {
                let s: u64 = num(key, v)?;
                self.seed = s;
                self.world.seed = s;
                self.bench.seed = s;
                self.model.seed = s;
                self.schedule.seed = s;
                u.seed = s;
            }
            "out" => self.out = PathBuf::from(v),
            "targets" => self.bench.n_targets = num(key, v)?,
            "min_geodesic" => self.bench.filtration.min_geodesic = num(key, v)?,
            "bfs_depth" => self.bench.filtration.bfs_depth = num(key, v)?,
            "commonsense_edges" => self.world.commonsense_edges = num(key, v)?,
            "statements" => self.corpus.statements = num(key, v)?,
            "d_model" => self.model.d_model = num(key, v)?,
            "n_layers" => self.model.n_layers = num(key, v)?,
            "n_heads" => self.model.n_heads = num(key, v)?,
            "d_ff" => self.model.d_ff = num(key, v)?,
            "pretrain_epochs" => self.schedule.max_epochs = num(key, v)?,
            "pretrain_lr" => self.schedule.lr = num(key, v)?,
            "pretrain_batch" => self.schedule.batch_size = num(key, v)?,
            "memorization_gate" => self.memorization_gate = num(key, v)?,
            "method" => u.method = v.parse()?,
            "lr" => u.learning_rate = num(key, v)?,
            "beta" => u.beta = num(key, v)?,
            "lambda" => u.lambda = num(key, v)?,
            "mu" => u.mu = num(key, v)?,
            "gamma" => u.gamma = num(key, v)?,
            "k" => u.k = num(key, v)?,
            "epochs" => u.epochs = num(key, v)?,
            "batch_size" => u.batch_size = num(key, v)?,
            "corruption" => u.corruption_rate = num(key, v)?,
            "npo_retain" => u.npo_retain = boolean(key, v)?,
            "uniform_weights" => u.uniform_weights = boolean(key, v)?,
            "neighbor_radius" => u.neighbor_radius = num(key, v)?,
            "lora_rank" => u.lora_rank = num(key, v)?,
            "lora_alpha" => u.lora_alpha = num(key, v)?,
            "lora_dropout" => u.lora_dropout = num(key, v)?,
            "refusal" => u.refusal = v.to_string(),
            "ga_clip" => u.ga_clip = num(key, v)?,
            "known_threshold" => self.known_threshold = num(key, v)?,
            "epsilon" => self.epsilon = num(key, v)?,
            "methods" => self.methods = list(key, v)?,
            "seeds" => self.seeds = list(key, v)?,
            "lr_grid" => self.lr_grid = list(key, v)?,
            "corruption_grid" => self.corruption_grid = list(key, v)?,
            k if k.starts_with("count.") => {
                let ty = EntityType::parse(&k[6..]).ok_or_else(|| Error::Config(format!("unknown entity type in `{k}`")))?;
                self.world.counts.insert(ty, num(key, v)?);
            }
            k if k.starts_with("quota.") => {
                let p = k[6..].chars().next().filter(|_| k.len() == 7).ok_or_else(|| Error::Config(format!("bad pattern key `{k}`")))?;
                self.world.pattern_quotas.insert(p, num(key, v)?);
            }
            k => return Err(Error::Config(format!("unknown configuration key `{k}`"))),
        }
        Ok(())
    }

    /// Apply every non-blank, non-`#` line of a config file.
    pub fn apply_text(&mut self, text: &str, path: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse { path: path.into(), line: i + 1, msg: "expected `key = value`".into() })?;
            self.set(k, v).map_err(|e| Error::Parse { path: path.into(), line: i + 1, msg: e.to_string() })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = ExperimentConfig::default();
        c.apply_text(&text, &path.display().to_string())?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.bench.filtration.validate()?;
        self.unlearn.validate()?;
        if self.methods.is_empty() || self.seeds.is_empty() || self.lr_grid.is_empty() {
            return Err(Error::Config("methods, seeds and lr_grid must be non-empty".into()));
        }
        Ok(())
    }
}
