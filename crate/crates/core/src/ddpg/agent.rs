use std::fs;
use std::path::Path;

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::replay::{Minibatch, ReplayBuffer, PRIORITY_FLOOR};
use super::AgentHyperparams;
use crate::error::{Error, Result};
use crate::nn::{Adam, GradientSet, Mode, Network, NetworkBuilder};
use crate::rng;

pub const CHECKPOINT_VERSION: u32 = 1;
const HIDDEN: usize = 64;
/// Initial range of the output layers, keeping early actions near mid-range.
const FINAL_INIT: f64 = 3e-3;

/// Q(s, a): state and action each pass through a ReLU layer, the two are
/// concatenated and fed through one more ReLU layer to a scalar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub state_branch: Network,
    pub action_branch: Network,
    pub trunk: Network,
}

pub struct CriticBackward {
    pub grads: GradientSet,
    pub action_grad: Array2<f64>,
}

impl Critic {
    pub fn new<R: Rng>(state_dim: usize, action_dim: usize, rng: &mut R) -> Self {
        Self {
            state_branch: NetworkBuilder::new(state_dim, rng).dense(HIDDEN).relu().build(),
            action_branch: NetworkBuilder::new(action_dim, rng).dense(HIDDEN).relu().build(),
            trunk: NetworkBuilder::new(2 * HIDDEN, rng)
                .dense(HIDDEN)
                .relu()
                .dense_scaled(1, FINAL_INIT)
                .build(),
        }
    }

    pub fn forward(&mut self, states: &Array2<f64>, actions: &Array2<f64>) -> Result<Array2<f64>> {
        let hs = self.state_branch.forward(states)?;
        let ha = self.action_branch.forward(actions)?;
        self.trunk.forward(&concatenate![Axis(1), hs, ha])
    }

    pub fn output(&self, states: &Array2<f64>, actions: &Array2<f64>) -> Result<Array2<f64>> {
        if states.nrows() != actions.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} states vs {} actions",
                states.nrows(),
                actions.nrows()
            )));
        }
        let hs = self.state_branch.output(states)?;
        let ha = self.action_branch.output(actions)?;
        self.trunk.output(&concatenate![Axis(1), hs, ha])
    }

    pub fn backward(&mut self, upstream: &Array2<f64>) -> Result<CriticBackward> {
        let trunk = self.trunk.backward(upstream)?;
        let width = self.state_branch.output_width();
        let state = self.state_branch.backward(&trunk.input_grad.slice(s![.., ..width]).to_owned())?;
        let action = self.action_branch.backward(&trunk.input_grad.slice(s![.., width..]).to_owned())?;
        Ok(CriticBackward {
            grads: GradientSet::concat(vec![state.grads, action.grads, trunk.grads]),
            action_grad: action.input_grad,
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut p = self.state_branch.params_mut();
        p.extend(self.action_branch.params_mut());
        p.extend(self.trunk.params_mut());
        p
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut p = self.state_branch.params();
        p.extend(self.action_branch.params());
        p.extend(self.trunk.params());
        p
    }

    pub fn soft_update_from(&mut self, online: &Critic, tau: f64) -> Result<()> {
        self.state_branch.soft_update_from(&online.state_branch, tau)?;
        self.action_branch.soft_update_from(&online.action_branch, tau)?;
        self.trunk.soft_update_from(&online.trunk, tau)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticUpdate {
    /// `|y_i - Q(s_i, a_i)|` before the step, floored for priority use.
    pub td_errors: Vec<f64>,
    pub loss: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Agent {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hyperparams: AgentHyperparams,
    pub actor: Network,
    pub actor_target: Network,
    pub critic: Critic,
    pub critic_target: Critic,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

/// Everything needed to inspect or resume an agent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub steps: usize,
    pub agent: Agent,
    pub buffer: Option<ReplayBuffer>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(&text)?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: header.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(serde_json::from_str(&text)?)
    }
}

fn row_matrix(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("one row")
}

impl Agent {
    /// Fresh online networks with exact target copies. The actor is
    /// `state -> 64 ReLU -> batch norm -> 64 ReLU -> action sigmoid`.
    pub fn new(state_dim: usize, action_dim: usize, hp: AgentHyperparams) -> Result<Self> {
        hp.validate()?;
        let mut init = rng::stream(hp.seed, 0xa9e7);
        let actor = NetworkBuilder::new(state_dim, &mut init)
            .dense(HIDDEN)
            .relu()
            .batch_norm()
            .dense(HIDDEN)
            .relu()
            .dense_scaled(action_dim, FINAL_INIT)
            .sigmoid()
            .build();
        let critic = Critic::new(state_dim, action_dim, &mut init);
        let mut actor_target = actor.clone();
        actor_target.set_mode(Mode::Eval);
        Ok(Self {
            state_dim,
            action_dim,
            actor_opt: Adam::new(hp.actor_lr),
            critic_opt: Adam::new(hp.critic_lr),
            hyperparams: hp,
            actor_target,
            critic_target: critic.clone(),
            actor,
            critic,
        })
    }

    /// Deterministic policy output for one state (batch-norm running stats).
    pub fn policy(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                actual: state.len(),
            });
        }
        let out = self.actor.output_in(&row_matrix(state), Mode::Eval)?;
        Ok(out.into_raw_vec_and_offset().0)
    }

    /// Policy output plus independent `N(0, sigma^2)` noise, clamped to [0, 1].
    pub fn select_action<R: Rng>(&self, state: &[f64], sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
        let mut action = self.policy(state)?;
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            for a in &mut action {
                *a += normal.sample(rng);
            }
        }
        for a in &mut action {
            *a = a.clamp(0.0, 1.0);
        }
        Ok(action)
    }

    /// One weighted mean-squared TD step on the online critic towards
    /// `y = r + gamma * Q'(s', mu'(s'))`.
    pub fn update_critic(&mut self, batch: &Minibatch) -> Result<CriticUpdate> {
        let n = batch.rewards.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty minibatch".into()));
        }
        if batch.weights.len() != n || batch.states.nrows() != n || batch.next_states.nrows() != n {
            return Err(Error::ShapeMismatch("minibatch columns disagree on length".into()));
        }
        let gamma = self.hyperparams.gamma;
        let next_actions = self.actor_target.output_in(&batch.next_states, Mode::Eval)?;
        let next_q = self.critic_target.output(&batch.next_states, &next_actions)?;
        let targets: Vec<f64> = (0..n).map(|i| batch.rewards[i] + gamma * next_q[[i, 0]]).collect();

        let q = self.critic.forward(&batch.states, &batch.actions)?;
        let mut loss = 0.0;
        let mut upstream = Array2::zeros((n, 1));
        let mut td_errors = Vec::with_capacity(n);
        for i in 0..n {
            let diff = q[[i, 0]] - targets[i];
            loss += batch.weights[i] * diff * diff;
            upstream[[i, 0]] = 2.0 * batch.weights[i] * diff / n as f64;
            td_errors.push(diff.abs().max(PRIORITY_FLOOR));
        }
        let back = self.critic.backward(&upstream)?;
        self.critic_opt.step_params(self.critic.params_mut(), &back.grads)?;
        Ok(CriticUpdate {
            td_errors,
            loss: loss / n as f64,
        })
    }

    /// Policy-gradient ascent step using the online critic. Returns the mean
    /// Q of the pre-step actions.
    pub fn update_actor(&mut self, states: &Array2<f64>) -> Result<f64> {
        let critic = &mut self.critic;
        actor_step(&mut self.actor, &mut self.actor_opt, states, |s, a| {
            let q = critic.forward(s, a)?;
            let back = critic.backward(&Array2::from_elem((s.nrows(), 1), 1.0))?;
            Ok((q, back.action_grad))
        })
    }

    /// Actor step against an arbitrary differentiable action value:
    /// `value(s, a)` returns `Q` as an `(n, 1)` matrix and `dQ/da`.
    pub fn update_actor_with<F>(&mut self, states: &Array2<f64>, value: F) -> Result<f64>
    where
        F: FnMut(&Array2<f64>, &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)>,
    {
        actor_step(&mut self.actor, &mut self.actor_opt, states, value)
    }

    pub fn soft_update(&mut self) -> Result<()> {
        let tau = self.hyperparams.tau;
        self.actor_target.soft_update_from(&self.actor, tau)?;
        self.critic_target.soft_update_from(&self.critic, tau)
    }
}

fn actor_step<F>(actor: &mut Network, opt: &mut Adam, states: &Array2<f64>, mut value: F) -> Result<f64>
where
    F: FnMut(&Array2<f64>, &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)>,
{
    let n = states.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty minibatch".into()));
    }
    actor.set_mode(Mode::Train);
    let actions = actor.forward(states)?;
    let (q, dq_da) = value(states, &actions)?;
    if dq_da.dim() != actions.dim() {
        return Err(Error::ShapeMismatch(format!(
            "action gradient {:?} vs actions {:?}",
            dq_da.dim(),
            actions.dim()
        )));
    }
    // Descend on -mean(Q).
    let back = actor.backward(&(dq_da * (-1.0 / n as f64)))?;
    opt.step(actor, &back.grads)?;
    Ok(q.mean().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddpg::replay::Transition;
    use ndarray::Array1;

    fn hp(seed: u64) -> AgentHyperparams {
        AgentHyperparams {
            seed,
            ..AgentHyperparams::default()
        }
    }

    fn batch_from(buffer: &ReplayBuffer, n: usize, seed: u64) -> Minibatch {
        buffer.sample_minibatch(n, 1.0, &mut rng::stream(seed, 0)).unwrap()
    }

    fn random_buffer(n: usize, seed: u64) -> ReplayBuffer {
        let mut r = rng::stream(seed, 3);
        let mut b = ReplayBuffer::new(n, 0.0).unwrap();
        for _ in 0..n {
            let v = |r: &mut rand_chacha::ChaCha8Rng, k| (0..k).map(|_| r.random::<f64>()).collect::<Vec<_>>();
            b.push(Transition {
                state: v(&mut r, 7),
                action: v(&mut r, 10),
                reward: r.random_range(-1.0..1.0),
                next_state: v(&mut r, 7),
            });
        }
        b
    }

    #[test]
    fn targets_start_as_copies_and_actions_in_unit_box() {
        let agent = Agent::new(7, 10, hp(1)).unwrap();
        assert_eq!(agent.actor.params(), agent.actor_target.params());
        assert_eq!(agent.critic, agent.critic_target);
        let mut r = rng::stream(0, 0);
        for sigma in [0.0, 0.3, 5.0] {
            let a = agent.select_action(&[0.5; 7], sigma, &mut r).unwrap();
            assert_eq!(a.len(), 10);
            assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        // Small final layer: initial actions sit near the middle.
        let p = agent.policy(&[0.5; 7]).unwrap();
        assert!(p.iter().all(|v| (v - 0.5).abs() < 0.05));
    }

    #[test]
    fn noise_reproducible_and_zero_sigma_deterministic() {
        let agent = Agent::new(7, 10, hp(2)).unwrap();
        let s = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
        let a = agent.select_action(&s, 0.2, &mut rng::stream(5, 0)).unwrap();
        let b = agent.select_action(&s, 0.2, &mut rng::stream(5, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(agent.select_action(&s, 0.0, &mut rng::stream(6, 0)).unwrap(), agent.policy(&s).unwrap());
    }

    #[test]
    fn zero_gamma_targets_are_rewards() {
        let mut agent = Agent::new(7, 10, AgentHyperparams { gamma: 0.0, ..hp(3) }).unwrap();
        let buffer = random_buffer(32, 3);
        let batch = batch_from(&buffer, 16, 0);
        let q = agent.critic.output(&batch.states, &batch.actions).unwrap();
        let update = agent.update_critic(&batch).unwrap();
        for i in 0..16 {
            let expected = (q[[i, 0]] - batch.rewards[i]).abs().max(PRIORITY_FLOOR);
            assert!((update.td_errors[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn satisfied_critic_gets_zero_step() {
        let mut agent = Agent::new(7, 10, AgentHyperparams { gamma: 0.0, ..hp(4) }).unwrap();
        let buffer = random_buffer(16, 4);
        let mut batch = batch_from(&buffer, 8, 1);
        let q = agent.critic.output(&batch.states, &batch.actions).unwrap();
        batch.rewards = q.column(0).to_vec();
        let before = agent.critic.clone();
        let update = agent.update_critic(&batch).unwrap();
        assert_eq!(update.loss, 0.0);
        assert_eq!(agent.critic, before);
    }

    #[test]
    fn critic_loss_falls_on_frozen_batch() {
        let mut agent = Agent::new(7, 10, AgentHyperparams { gamma: 0.0, ..hp(5) }).unwrap();
        let buffer = random_buffer(64, 5);
        let batch = batch_from(&buffer, 32, 2);
        let losses: Vec<f64> = (0..50).map(|_| agent.update_critic(&batch).unwrap().loss).collect();
        let smooth = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
        let windows: Vec<f64> = losses.chunks(10).map(smooth).collect();
        assert!(windows.windows(2).all(|w| w[1] < w[0]), "{windows:?}");
    }

    #[test]
    fn actor_converges_on_quadratic_critic() {
        let target = Array1::from(vec![0.2, 0.8, 0.5, 0.35]);
        let mut agent = Agent::new(3, 4, AgentHyperparams { actor_lr: 3e-4, ..hp(6) }).unwrap();
        let states = Array2::from_shape_fn((16, 3), |(i, j)| ((i * 3 + j) % 7) as f64 / 7.0);
        // Train-mode outputs on the fixed batch depend only on parameters.
        let distance = |agent: &Agent| {
            let a = agent.actor.output_in(&states, Mode::Train).unwrap();
            (&a - &target).mapv(|d| d * d).sum().sqrt()
        };
        let critic_before = agent.critic.clone();
        let start = distance(&agent);
        let mut prev = start;
        for _ in 0..200 {
            agent
                .update_actor_with(&states, |_, a| {
                    let diff = a - &target;
                    let q = diff.mapv(|d| -d * d).sum_axis(Axis(1)).insert_axis(Axis(1));
                    Ok((q, diff * -2.0))
                })
                .unwrap();
            let d = distance(&agent);
            assert!(d < prev, "{d} !< {prev}");
            prev = d;
        }
        assert!(prev < 0.5 * start, "{prev} vs {start}");
        assert_eq!(agent.critic, critic_before);
    }

    #[test]
    fn constant_critic_leaves_actor() {
        let mut agent = Agent::new(7, 10, hp(7)).unwrap();
        let before = agent.actor.params().into_iter().cloned().collect::<Vec<_>>();
        let states = Array2::from_elem((4, 7), 0.3);
        agent
            .update_actor_with(&states, |s, a| Ok((Array2::from_elem((s.nrows(), 1), 2.0), Array2::zeros(a.raw_dim()))))
            .unwrap();
        let after = agent.actor.params().into_iter().cloned().collect::<Vec<_>>();
        assert_eq!(before, after);
    }

    #[test]
    fn actor_step_raises_mean_q() {
        let mut agent = Agent::new(7, 10, AgentHyperparams { actor_lr: 1e-5, ..hp(8) }).unwrap();
        let buffer = random_buffer(64, 8);
        let batch = batch_from(&buffer, 32, 3);
        for _ in 0..20 {
            agent.update_critic(&batch).unwrap();
        }
        let critic = agent.critic.clone();
        let q_of = |agent: &Agent| {
            let a = agent.actor.output_in(&batch.states, Mode::Train).unwrap();
            critic.output(&batch.states, &a).unwrap().mean().unwrap()
        };
        let before = q_of(&agent);
        agent.update_actor(&batch.states).unwrap();
        assert!(q_of(&agent) >= before);
        assert_eq!(agent.critic, critic);
    }

    #[test]
    fn checkpoint_round_trip() {
        let agent = Agent::new(7, 10, hp(9)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.json");
        Checkpoint {
            version: CHECKPOINT_VERSION,
            seed: 9,
            steps: 0,
            agent: agent.clone(),
            buffer: Some(random_buffer(4, 1)),
        }
        .save(&path)
        .unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.agent.actor, agent.actor);
        assert_eq!(back.agent.critic_target, agent.critic_target);
        assert_eq!(back.buffer.unwrap().len(), 4);
        let s = [0.3; 7];
        assert_eq!(back.agent.policy(&s).unwrap(), agent.policy(&s).unwrap());
    }
}
