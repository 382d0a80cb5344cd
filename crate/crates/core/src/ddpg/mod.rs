//! DDPG configuration tuner running against a trained surrogate.

mod agent;
pub(crate) mod env;
mod replay;
mod reward;
mod tuner;

use serde::{Deserialize, Serialize};

pub use agent::{Agent, Checkpoint, Critic, CriticUpdate, CHECKPOINT_VERSION};
pub use env::{Env, StepOutcome, MIN_NORMALIZED_LIMIT};
pub use replay::{Minibatch, ReplayBuffer, Transition, PRIORITY_FLOOR};
pub use reward::{compute_reward, RewardContext, RewardMode, MAX_PENALTY};
pub use tuner::{tune, Recommendation, TuningResult};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentHyperparams {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Priority exponent alpha.
    pub priority_exponent: f64,
    /// Importance exponent beta at the first update; annealed linearly to 1.
    pub importance_exponent: f64,
    pub noise_sigma_start: f64,
    /// Multiplicative exploration-noise decay per step.
    pub noise_decay: f64,
    pub episode_length: usize,
    pub total_steps: usize,
    pub seed: u64,
    /// Rewards stored for learning are clipped to `[-clip, clip]`; the
    /// penalty term can otherwise reach magnitudes that swamp the critic.
    /// Infinity disables clipping.
    pub reward_clip: f64,
    pub reward_mode: RewardMode,
}

impl Default for AgentHyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            tau: 0.005,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            batch_size: 64,
            buffer_capacity: 10_000,
            priority_exponent: 0.6,
            importance_exponent: 0.4,
            noise_sigma_start: 0.2,
            noise_decay: 0.995,
            episode_length: 20,
            total_steps: 5000,
            seed: 0,
            reward_clip: 10.0,
            reward_mode: RewardMode::SignCorrected,
        }
    }
}

impl AgentHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", self.tau));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.episode_length == 0 || self.total_steps == 0 {
            return bad("batch size, buffer capacity, episode length and total steps must be >= 1".into());
        }
        if self.buffer_capacity < self.batch_size {
            return bad(format!(
                "buffer capacity {} below batch size {}",
                self.buffer_capacity, self.batch_size
            ));
        }
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("priority_exponent", self.priority_exponent),
            ("importance_exponent", self.importance_exponent),
            ("noise_sigma_start", self.noise_sigma_start),
            ("noise_decay", self.noise_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if self.reward_clip.is_nan() || self.reward_clip <= 0.0 {
            return bad("reward clip must be positive".into());
        }
        Ok(())
    }
}
