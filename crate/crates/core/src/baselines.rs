//! Budget-matched black-box baselines scoring candidates with the same
//! reward as the DDPG environment, statelessly (`T_prev = T0`).

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ddpg::{Env, Recommendation, RewardMode, StepOutcome};
use crate::error::{Error, Result};
use crate::forest::SurrogateModel;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub method: String,
    pub evaluations: usize,
    pub best_reward: Recommendation,
    pub best_feasible: Option<Recommendation>,
    /// Reward of every evaluated candidate, in order.
    pub trace: Vec<f64>,
    pub violations: usize,
    /// Moves accepted by a local search; `None` for independent sampling.
    pub accepted_moves: Option<usize>,
    pub seed: u64,
}

impl BaselineResult {
    pub fn recommended(&self) -> &Recommendation {
        self.best_feasible.as_ref().unwrap_or(&self.best_reward)
    }

    /// Best reward seen after each evaluation.
    pub fn incumbent_trace(&self) -> Vec<f64> {
        self.trace
            .iter()
            .scan(f64::NEG_INFINITY, |best, &r| {
                *best = best.max(r);
                Some(*best)
            })
            .collect()
    }
}

struct Tracker {
    best_reward: Option<Recommendation>,
    best_feasible: Option<Recommendation>,
    trace: Vec<f64>,
    violations: usize,
}

impl Tracker {
    fn new(budget: usize) -> Self {
        Self {
            best_reward: None,
            best_feasible: None,
            trace: Vec::with_capacity(budget),
            violations: 0,
        }
    }

    fn record(&mut self, outcome: &StepOutcome) {
        let step = self.trace.len();
        self.trace.push(outcome.reward);
        self.violations += usize::from(outcome.violation);
        if self.best_reward.as_ref().is_none_or(|b| outcome.reward > b.reward) {
            self.best_reward = Some(Recommendation::from_outcome(outcome, step));
        }
        if !outcome.violation
            && self
                .best_feasible
                .as_ref()
                .is_none_or(|b| outcome.predicted_throughput > b.predicted_throughput)
        {
            self.best_feasible = Some(Recommendation::from_outcome(outcome, step));
        }
    }

    fn finish(self, method: &str, seed: u64) -> BaselineResult {
        BaselineResult {
            method: method.to_string(),
            evaluations: self.trace.len(),
            best_reward: self.best_reward.expect("budget >= 1"),
            best_feasible: self.best_feasible,
            trace: self.trace,
            violations: self.violations,
            accepted_moves: None,
            seed,
        }
    }
}

fn check_budget(budget: usize) -> Result<()> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    Ok(())
}

/// Scores `budget` actions drawn uniformly from the unit box.
pub fn random_search(
    model: &SurrogateModel,
    latency_limit: Option<f64>,
    budget: usize,
    seed: u64,
) -> Result<BaselineResult> {
    check_budget(budget)?;
    let env = Env::new(model, latency_limit, 1, RewardMode::SignCorrected)?;
    let mut r = rng::stream(seed, 0xba5e);
    let mut tracker = Tracker::new(budget);
    for _ in 0..budget {
        let action: Vec<f64> = (0..env.action_dim()).map(|_| r.random::<f64>()).collect();
        tracker.record(&env.evaluate(&action)?);
    }
    Ok(tracker.finish("random_search", seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealParams {
    /// Standard deviation of the first Gaussian proposal.
    pub step_scale: f64,
    /// Per-evaluation multiplier applied to both step size and temperature.
    pub cooling: f64,
    /// Starting temperature; zero gives strict hill climbing.
    pub initial_temperature: f64,
}

impl Default for AnnealParams {
    fn default() -> Self {
        Self {
            step_scale: 0.2,
            cooling: 0.999,
            initial_temperature: 0.5,
        }
    }
}

/// Simulated annealing from the default configuration. The first
/// evaluation is the default itself; each further one is a clamped Gaussian
/// perturbation of the current point, accepted when it improves the reward
/// or with probability `exp(delta / T)`.
pub fn anneal_search(
    model: &SurrogateModel,
    latency_limit: Option<f64>,
    budget: usize,
    seed: u64,
    params: &AnnealParams,
) -> Result<BaselineResult> {
    check_budget(budget)?;
    if !(params.step_scale >= 0.0 && params.cooling > 0.0 && params.cooling <= 1.0 && params.initial_temperature >= 0.0) {
        return Err(Error::InvalidArgument(format!("invalid annealing parameters {params:?}")));
    }
    let env = Env::new(model, latency_limit, 1, RewardMode::SignCorrected)?;
    let mut r = rng::stream(seed, 0xa22e);
    let mut tracker = Tracker::new(budget);

    let mut current = model.space.normalize(&model.space.default_config())?;
    let first = env.evaluate(&current)?;
    let mut current_reward = first.reward;
    tracker.record(&first);

    let (mut sigma, mut temperature) = (params.step_scale, params.initial_temperature);
    let mut accepted = 0;
    for _ in 1..budget {
        sigma *= params.cooling;
        temperature *= params.cooling;
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let proposal: Vec<f64> = current
            .iter()
            .map(|&x| (x + normal.sample(&mut r)).clamp(0.0, 1.0))
            .collect();
        let outcome = env.evaluate(&proposal)?;
        tracker.record(&outcome);
        let delta = outcome.reward - current_reward;
        // Always draw so the random stream does not depend on outcomes.
        let u: f64 = r.random();
        let accept = delta > 0.0 || (temperature > 0.0 && u < (delta / temperature).exp());
        if accept {
            current = proposal;
            current_reward = outcome.reward;
            accepted += 1;
        }
    }
    let mut result = tracker.finish("anneal_search", seed);
    result.accepted_moves = Some(accepted);
    Ok(result)
}
