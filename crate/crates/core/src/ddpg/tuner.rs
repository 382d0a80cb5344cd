use rand::Rng;
use serde::{Deserialize, Serialize};

use super::agent::{Agent, Checkpoint, CHECKPOINT_VERSION};
use super::env::{Env, StepOutcome};
use super::replay::{ReplayBuffer, Transition};
use super::AgentHyperparams;
use crate::error::Result;
use crate::forest::SurrogateModel;
use crate::rng;
use crate::space::Configuration;

/// A visited configuration with its surrogate prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub config: Configuration,
    pub action: Vec<f64>,
    pub predicted_throughput: f64,
    pub predicted_latency: f64,
    pub reward: f64,
    /// Zero-based step at which it was first visited.
    pub step: usize,
}

impl Recommendation {
    pub(crate) fn from_outcome(outcome: &StepOutcome, step: usize) -> Self {
        Self {
            config: outcome.config.clone(),
            action: outcome.action.clone(),
            predicted_throughput: outcome.predicted_throughput,
            predicted_latency: outcome.predicted_latency,
            reward: outcome.reward,
            step,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    /// Highest predicted throughput among visits whose predicted latency met
    /// the limit.
    pub best_feasible: Option<Recommendation>,
    pub best_reward: Recommendation,
    pub reward_trace: Vec<f64>,
    /// Visits whose predicted latency exceeded the limit.
    pub violations: usize,
    pub updates: usize,
    pub latency_limit: Option<f64>,
    pub seed: u64,
    pub hyperparams: AgentHyperparams,
}

impl TuningResult {
    /// The feasible best, or the best-reward visit when nothing was feasible.
    pub fn recommended(&self) -> &Recommendation {
        self.best_feasible.as_ref().unwrap_or(&self.best_reward)
    }
}

/// Tracks feasible-best and best-reward visits.
#[derive(Default)]
pub(crate) struct Incumbents {
    pub feasible: Option<Recommendation>,
    pub reward: Option<Recommendation>,
}

impl Incumbents {
    pub fn offer(&mut self, outcome: &StepOutcome, step: usize) {
        if !outcome.violation
            && self
                .feasible
                .as_ref()
                .is_none_or(|b| outcome.predicted_throughput > b.predicted_throughput)
        {
            self.feasible = Some(Recommendation::from_outcome(outcome, step));
        }
        if self.reward.as_ref().is_none_or(|b| outcome.reward > b.reward) {
            self.reward = Some(Recommendation::from_outcome(outcome, step));
        }
    }
}

/// Trains a DDPG agent against the surrogate for `hp.total_steps` steps.
///
/// Until the replay buffer holds a full minibatch, actions are drawn
/// uniformly from the unit box; afterwards they come from the actor plus
/// decaying Gaussian noise, and each step runs one critic update, one actor
/// update, soft target updates and a priority refresh.
pub fn tune(model: &SurrogateModel, latency_limit: Option<f64>, hp: &AgentHyperparams) -> Result<(TuningResult, Checkpoint)> {
    hp.validate()?;
    let mut env = Env::new(model, latency_limit, hp.episode_length, hp.reward_mode)?;
    let mut agent = Agent::new(env.state_dim(), env.action_dim(), hp.clone())?;
    let mut buffer = ReplayBuffer::new(hp.buffer_capacity, hp.priority_exponent)?;
    let mut explore = rng::stream(hp.seed, 0xe1);
    let mut sampler = rng::stream(hp.seed, 0x5a);

    let mut incumbents = Incumbents::default();
    let mut reward_trace = Vec::with_capacity(hp.total_steps);
    let mut violations = 0;
    let mut updates = 0;
    let mut sigma = hp.noise_sigma_start;
    let mut state = env.reset();

    for step in 0..hp.total_steps {
        let action = if buffer.len() < hp.batch_size {
            (0..env.action_dim()).map(|_| explore.random::<f64>()).collect()
        } else {
            agent.select_action(&state, sigma, &mut explore)?
        };
        sigma *= hp.noise_decay;

        let outcome = env.step(&action)?;
        incumbents.offer(&outcome, step);
        reward_trace.push(outcome.reward);
        violations += usize::from(outcome.violation);

        let learn_reward = outcome.reward.clamp(-hp.reward_clip, hp.reward_clip);
        buffer.push(Transition {
            state: state.clone(),
            action,
            reward: learn_reward,
            next_state: outcome.next_state.clone(),
        });

        if buffer.len() >= hp.batch_size {
            let progress = step as f64 / hp.total_steps as f64;
            let beta = hp.importance_exponent + (1.0 - hp.importance_exponent) * progress;
            let batch = buffer.sample_minibatch(hp.batch_size, beta.min(1.0), &mut sampler)?;
            let critic = agent.update_critic(&batch)?;
            agent.update_actor(&batch.states)?;
            agent.soft_update()?;
            for (&i, &td) in batch.indices.iter().zip(&critic.td_errors) {
                buffer.update_priority(i, td)?;
            }
            updates += 1;
        }

        state = if outcome.done { env.reset() } else { outcome.next_state };
    }

    let result = TuningResult {
        best_feasible: incumbents.feasible,
        best_reward: incumbents.reward.expect("at least one step"),
        reward_trace,
        violations,
        updates,
        latency_limit: env.latency_limit(),
        seed: hp.seed,
        hyperparams: hp.clone(),
    };
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        seed: hp.seed,
        steps: hp.total_steps,
        agent,
        buffer: Some(buffer),
    };
    Ok((result, checkpoint))
}
