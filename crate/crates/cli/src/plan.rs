//! Experiment plans: which scenarios, latency factors, seeds and methods a
//! sweep runs, read from a TOML file.
//!
//! Every key is optional; omitted keys take the defaults below.
//!
//! ```toml
//! scenarios = [1, 2, 3, 4, 5, 6, 7, 8, 9]  # use-case numbers
//! lcf = [0, 1, 2, 4, 6, 8, 10]             # 0 = unconstrained
//! seeds = [0]                               # one tuning run per seed
//! methods = ["ddpg", "random_search", "anneal_search"]
//! dataset_size = 1000
//! data_seed = 0
//! noise_sigma = 0.02
//! holdout_fraction = 0.2
//! budget = 5000       # baseline evaluations; defaults to agent.total_steps
//! workers = 1
//!
//! [forest]            # surrogate hyperparameters
//! n_trees = 100
//!
//! [agent]             # DDPG hyperparameters (seed is set per run)
//! total_steps = 5000
//!
//! [anneal]
//! step_scale = 0.2
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use brokertune_core::{AgentHyperparams, AnnealParams, ForestHyperparams};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ddpg,
    RandomSearch,
    AnnealSearch,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ddpg, Method::RandomSearch, Method::AnnealSearch];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ddpg => "ddpg",
            Method::RandomSearch => "random_search",
            Method::AnnealSearch => "anneal_search",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .with_context(|| format!("unknown method `{s}` (expected ddpg, random_search or anneal_search)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenarios: Vec<u32>,
    pub lcf: Vec<f64>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub dataset_size: usize,
    pub data_seed: u64,
    pub noise_sigma: f64,
    pub holdout_fraction: f64,
    pub budget: Option<usize>,
    pub workers: usize,
    pub forest: ForestHyperparams,
    pub agent: AgentHyperparams,
    pub anneal: AnnealParams,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            scenarios: (1..=9).collect(),
            lcf: vec![0.0, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            seeds: vec![0],
            methods: Method::ALL.to_vec(),
            dataset_size: 1000,
            data_seed: 0,
            noise_sigma: 0.02,
            holdout_fraction: 0.2,
            budget: None,
            workers: 1,
            forest: ForestHyperparams::default(),
            agent: AgentHyperparams::default(),
            anneal: AnnealParams::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).context("parsing experiment plan")?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading plan {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn baseline_budget(&self) -> usize {
        self.budget.unwrap_or(self.agent.total_steps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            bail!("plan lists no scenarios");
        }
        if let Some(s) = self.scenarios.iter().find(|s| !(1..=9).contains(*s)) {
            bail!("scenario {s} is not a use case (1-9)");
        }
        if self.lcf.is_empty() || self.seeds.is_empty() {
            bail!("plan needs at least one lcf value and one seed");
        }
        if let Some(l) = self.lcf.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            bail!("lcf {l} must be a non-negative number");
        }
        if self.dataset_size < 10 {
            bail!("dataset_size {} is below the 10-row training minimum", self.dataset_size);
        }
        if self.workers == 0 || self.baseline_budget() == 0 {
            bail!("workers and budget must be at least 1");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            bail!("noise_sigma {} must be >= 0", self.noise_sigma);
        }
        self.forest.validate()?;
        self.agent.validate()?;
        Ok(())
    }
}

/// Latency limit for a constraint factor: `L_default / lcf`, or `None`
/// (unconstrained) when `lcf` is zero.
pub fn lcf_to_limit(default_latency: f64, lcf: f64) -> Result<Option<f64>> {
    if !(default_latency > 0.0 && default_latency.is_finite()) {
        bail!("default latency {default_latency} must be positive");
    }
    if lcf.is_nan() || lcf < 0.0 {
        bail!("lcf {lcf} must be >= 0");
    }
    Ok((lcf > 0.0).then(|| default_latency / lcf))
}
