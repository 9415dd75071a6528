//! Experiment configuration: a JSON config file plus flag overrides, with
//! flags winning.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use fv_core::ctmc;
use fv_core::model::{Distribution, FiniteChainModel};
use serde::{Deserialize, Serialize};

/// Initial-distribution specification: `qsd`, `delta:x`, or an explicit
/// comma-separated weight vector over the interior states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", untagged)]
pub enum InitSpec {
    Named(String),
}

impl FromStr for InitSpec {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(InitSpec::Named(s.to_string()))
    }
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Named("qsd".to_string())
    }
}

impl InitSpec {
    /// Resolve to a distribution over the interior states.
    pub fn resolve(&self, model: &FiniteChainModel) -> Result<Distribution> {
        let InitSpec::Named(text) = self;
        let n = model.n_interior();
        if text == "qsd" {
            return Ok(ctmc::qsd(model)?.nu);
        }
        if let Some(x) = text.strip_prefix("delta:") {
            let x: usize = x.parse().context("delta:<state> needs an integer state")?;
            if x < 1 || x > n {
                bail!("delta state {x} outside the interior 1..={n}");
            }
            return Ok(Distribution::delta(x - 1, n));
        }
        let weights: Vec<f64> = text
            .split(',')
            .map(|w| w.trim().parse::<f64>().context("bad weight"))
            .collect::<Result<_>>()?;
        if weights.len() != n {
            bail!("init vector has {} entries, model has {n} interior states", weights.len());
        }
        Distribution::new(weights).map_err(|e| anyhow::anyhow!("init vector: {e}"))
    }
}

/// One experiment's parameters. Every field can come from the JSON config
/// file (`--config`) or from a flag; flags win.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ExperimentConfig {
    pub model: Option<PathBuf>,
    pub particles: Option<Vec<usize>>,
    pub horizon: Option<f64>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub init: Option<InitSpec>,
    pub out: Option<PathBuf>,
    pub burn_in: Option<f64>,
    pub node_cap: Option<usize>,
    pub oracle_trees: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Overlay `other` (flag values) on top of `self`.
    pub fn overlay(mut self, other: ExperimentConfig) -> Self {
        macro_rules! take {
            ($field:ident) => {
                if other.$field.is_some() {
                    self.$field = other.$field;
                }
            };
        }
        take!(model);
        take!(particles);
        take!(horizon);
        take!(replicates);
        take!(seed);
        take!(init);
        take!(out);
        take!(burn_in);
        take!(node_cap);
        take!(oracle_trees);
        self
    }

    pub fn model_path(&self) -> Result<&PathBuf> {
        self.model.as_ref().context("--model (or config.model) is required")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn seed_value(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn replicate_count(&self) -> usize {
        self.replicates.unwrap_or(1)
    }

    pub fn init_spec(&self) -> InitSpec {
        self.init.clone().unwrap_or_default()
    }
}
