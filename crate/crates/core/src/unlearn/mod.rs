//! Unlearning objectives, neighbor mining and the unlearning trainer.

pub mod losses;
pub mod neighbors;
pub mod trainer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bench::{BenchmarkCase, Probe, Split};
use crate::bench::templates::TemplateBank;
use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;

pub use losses::{loss_anchor, loss_ga, loss_gd, loss_neds, loss_npo, loss_uldpo, Decomposition};
pub use neighbors::{corrupt_neighbors, mine_neighbors, Neighbor, NeighborSet};
pub use trainer::{run_unlearn, EpochLoss, UnlearnRun};

pub const DEFAULT_REFUSAL: &str = "I do not know";
pub const ICU_INSTRUCTION: &str = "You do not know the answer to this question. Respond with a refusal.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Neds,
    Npo,
    Ga,
    Gd,
    Uldpo,
    Icu,
}

pub const METHODS: [Method; 6] = [Method::Neds, Method::Npo, Method::Ga, Method::Gd, Method::Uldpo, Method::Icu];

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Neds => "NEDS",
            Method::Npo => "NPO",
            Method::Ga => "GA",
            Method::Gd => "GD",
            Method::Uldpo => "ULDPO",
            Method::Icu => "ICU",
        }
    }

    /// Methods whose loss contains a refusal string.
    pub fn trains_refusal(self) -> bool {
        matches!(self, Method::Gd | Method::Uldpo)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
        METHODS
            .iter()
            .copied()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected one of NEDS, NPO, GA, GD, ULDPO, ICU)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlearnConfig {
    pub method: Method,
    pub beta: f64,
    pub lambda: f64,
    pub mu: f64,
    pub gamma: f64,
    pub k: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub corruption_rate: f64,
    pub seed: u64,
    /// Forget items per optimizer step.
    pub batch_size: usize,
    /// Include the μ-weighted retain term in NPO.
    pub npo_retain: bool,
    /// Uniform neighbor weights instead of normalized mining scores.
    pub uniform_weights: bool,
    pub neighbor_radius: usize,
    /// LoRA rank; 0 trains the full parameter set.
    pub lora_rank: usize,
    pub lora_alpha: f64,
    pub lora_dropout: f64,
    pub refusal: String,
    /// Gradient-norm clip for GA steps.
    pub ga_clip: f64,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        UnlearnConfig {
            method: Method::Neds,
            beta: 0.1,
            lambda: 1.0,
            mu: 1.0,
            gamma: 0.0,
            k: 10,
            learning_rate: 1e-3,
            epochs: 3,
            corruption_rate: 0.0,
            seed: 0,
            batch_size: 4,
            npo_retain: true,
            uniform_weights: false,
            neighbor_radius: 2,
            lora_rank: 16,
            lora_alpha: 32.0,
            lora_dropout: 0.05,
            refusal: DEFAULT_REFUSAL.to_string(),
            ga_clip: 1.0,
        }
    }
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if self.lambda < 0.0 || self.mu < 0.0 || self.gamma < 0.0 {
            return bad("lambda, mu and gamma must be non-negative".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return bad(format!("corruption rate {} is outside [0, 1]", self.corruption_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.refusal.trim().is_empty() {
            return bad("refusal string must be non-empty".into());
        }
        Ok(())
    }
}

/// A forget-train probe with its refusal target, neighbors and retain batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgetItem {
    pub probe: Probe,
    pub refusal: String,
    pub neighbors: NeighborSet,
    /// `(question, answer)` pairs of the case's non-evaluated retain facts.
    pub retain: Vec<(String, String)>,
}

/// Build one forget item per case: mine neighbors, optionally corrupt them,
/// and render the retain batch. Neighbors never include any case's target
/// or retain facts, so no evaluated question enters training.
pub fn prepare_items(g: &KnowledgeGraph, bank: &TemplateBank, cases: &[BenchmarkCase], cfg: &UnlearnConfig) -> Result<Vec<ForgetItem>> {
    cfg.validate()?;
    let mut exclude = Vec::new();
    for case in cases {
        exclude.push(case.target.resolve(g)?);
        for r in &case.retain_facts {
            exclude.push(r.resolve(g)?);
        }
    }
    let mut out = Vec::with_capacity(cases.len());
    for (ci, case) in cases.iter().enumerate() {
        let probe = case
            .train_probe()
            .ok_or_else(|| Error::Precondition(format!("case {} has no forget-train probe", case.case_id)))?
            .clone();
        let target = case.target.resolve(g)?;
        let mut neighbors = mine_neighbors(g, bank, &target, &exclude, cfg.k, cfg.neighbor_radius)?;
        if cfg.corruption_rate > 0.0 {
            neighbors = corrupt_neighbors(g, bank, &neighbors, &target, &exclude, cfg.corruption_rate, cfg.seed.wrapping_add(ci as u64))?;
        }
        if cfg.uniform_weights {
            neighbors = neighbors.uniform();
        }
        let retain = case
            .retain_train_facts()
            .into_iter()
            .map(|r| neighbors::direct_probe(g, bank, &r.resolve(g)?))
            .collect::<Result<Vec<_>>>()?;
        out.push(ForgetItem { probe, refusal: cfg.refusal.clone(), neighbors, retain });
    }
    Ok(out)
}

/// Prepend the in-context unlearning instruction.
pub fn icu_wrap(question: &str) -> Result<String> {
    if question.starts_with(ICU_INSTRUCTION) {
        return Err(Error::Precondition("question is already wrapped with the unlearning instruction".into()));
    }
    Ok(format!("{ICU_INSTRUCTION} {} {question}", crate::lm::tokenizer::SEP))
}

/// Every probe that is not forget-train: these must never reach a gradient.
pub fn eval_probes(cases: &[BenchmarkCase]) -> Vec<&Probe> {
    cases.iter().flat_map(|c| &c.probes).filter(|p| p.split != Split::ForgetTrain).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icu_text_and_double_wrap() {
        let w = icu_wrap("What is the capital of X?").unwrap();
        assert_eq!(w, "You do not know the answer to this question. Respond with a refusal. [SEP] What is the capital of X?");
        assert!(icu_wrap(&w).is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("neds".parse::<Method>().unwrap(), Method::Neds);
        assert_eq!("UL-DPO".parse::<Method>().unwrap(), Method::Uldpo);
        assert!("sgd".parse::<Method>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(UnlearnConfig::default().validate().is_ok());
        assert!(UnlearnConfig { beta: 0.0, ..Default::default() }.validate().is_err());
        assert!(UnlearnConfig { k: 0, ..Default::default() }.validate().is_err());
        assert!(UnlearnConfig { corruption_rate: 1.5, ..Default::default() }.validate().is_err());
    }
}
