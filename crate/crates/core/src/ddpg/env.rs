use serde::{Deserialize, Serialize};

use super::reward::{compute_reward, RewardContext, RewardMode};
use crate::error::{Error, Result};
use crate::forest::{Prediction, SurrogateModel, LATENCY, THROUGHPUT};
use crate::space::Configuration;

/// Smallest latency limit in normalized units. A limit below the lowest
/// latency seen in training normalizes to zero or less, where the penalty
/// exponent `L / L_c` is undefined; it is raised to this value instead.
pub const MIN_NORMALIZED_LIMIT: f64 = 1e-6;

/// Result of scoring one action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub config: Configuration,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub predicted_throughput: f64,
    pub predicted_latency: f64,
    /// Predicted latency exceeds the limit.
    pub violation: bool,
    pub done: bool,
}

/// Surrogate-backed environment. The baseline is the surrogate's prediction
/// at the default configuration; every episode restarts there.
#[derive(Clone, Debug)]
pub struct Env<'m> {
    model: &'m SurrogateModel,
    latency_limit: Option<f64>,
    baseline: Prediction,
    initial_state: Vec<f64>,
    reward_mode: RewardMode,
    episode_length: usize,
    state: Vec<f64>,
    previous_throughput: f64,
    step: usize,
}

impl<'m> Env<'m> {
    /// `latency_limit` is in milliseconds; `None` means unconstrained.
    pub fn new(
        model: &'m SurrogateModel,
        latency_limit: Option<f64>,
        episode_length: usize,
        reward_mode: RewardMode,
    ) -> Result<Self> {
        if let Some(limit) = latency_limit {
            if limit.is_nan() || limit <= 0.0 {
                return Err(Error::InvalidArgument(format!("latency limit {limit} must be positive")));
            }
        }
        if episode_length == 0 {
            return Err(Error::InvalidArgument("episode length must be >= 1".into()));
        }
        let baseline = model.predict(&model.space.default_config())?;
        let initial_state = baseline.state_normalized().to_vec();
        Ok(Self {
            model,
            latency_limit: latency_limit.filter(|l| l.is_finite()),
            previous_throughput: baseline.throughput_normalized(),
            state: initial_state.clone(),
            initial_state,
            baseline,
            reward_mode,
            episode_length,
            step: 0,
        })
    }

    pub fn model(&self) -> &SurrogateModel {
        self.model
    }

    pub fn baseline(&self) -> &Prediction {
        &self.baseline
    }

    pub fn latency_limit(&self) -> Option<f64> {
        self.latency_limit
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn step_in_episode(&self) -> usize {
        self.step
    }

    pub fn action_dim(&self) -> usize {
        self.model.space.dim()
    }

    pub fn state_dim(&self) -> usize {
        self.initial_state.len()
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.state = self.initial_state.clone();
        self.previous_throughput = self.baseline.throughput_normalized();
        self.step = 0;
        self.state.clone()
    }

    fn context(&self, previous_throughput: f64) -> RewardContext {
        RewardContext {
            baseline_throughput: self.baseline.throughput_normalized(),
            previous_throughput,
            latency_limit: self
                .latency_limit
                .map(|l| self.model.normalize_target(LATENCY, l).max(MIN_NORMALIZED_LIMIT)),
            mode: self.reward_mode,
        }
    }

    fn score(&self, action: &[f64], previous_throughput: f64) -> Result<StepOutcome> {
        let (config, p) = self.model.predict_action(action)?;
        let reward = compute_reward(
            p.normalized[THROUGHPUT],
            p.normalized[LATENCY],
            &self.context(previous_throughput),
        )?;
        Ok(StepOutcome {
            config,
            action: action.to_vec(),
            next_state: p.state_normalized().to_vec(),
            reward,
            predicted_throughput: p.throughput(),
            predicted_latency: p.latency(),
            violation: self.latency_limit.is_some_and(|l| p.latency() > l),
            done: false,
        })
    }

    /// Scores an action against the baseline with `T_prev = T0`, leaving the
    /// episode untouched.
    pub fn evaluate(&self, action: &[f64]) -> Result<StepOutcome> {
        self.score(action, self.baseline.throughput_normalized())
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let mut outcome = self.score(action, self.previous_throughput)?;
        self.step += 1;
        outcome.done = self.step >= self.episode_length;
        self.previous_throughput = self.model.normalize_target(THROUGHPUT, outcome.predicted_throughput);
        self.state = outcome.next_state.clone();
        Ok(outcome)
    }
}
