use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest priority a stored transition can hold, so every item stays
/// reachable by sampling.
pub const PRIORITY_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Ring buffer with proportional prioritized sampling backed by a sum tree
/// over `priority^alpha`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    alpha: f64,
    items: Vec<Transition>,
    priorities: Vec<f64>,
    /// Next slot to overwrite once full.
    cursor: usize,
    max_priority: f64,
    /// Implicit binary tree; leaves start at `leaves`.
    tree: Vec<f64>,
    leaves: usize,
}

/// A sampled minibatch in matrix form, plus where each row came from.
#[derive(Clone, Debug)]
pub struct Minibatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
    pub weights: Vec<f64>,
    pub indices: Vec<usize>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, alpha: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be at least 1".into()));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("priority exponent {alpha} must be >= 0")));
        }
        let leaves = capacity.next_power_of_two();
        Ok(Self {
            capacity,
            alpha,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            priorities: Vec::new(),
            cursor: 0,
            max_priority: 1.0,
            tree: vec![0.0; 2 * leaves],
            leaves,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.items.get(index)
    }

    pub fn priority(&self, index: usize) -> Option<f64> {
        self.priorities.get(index).copied()
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    fn total(&self) -> f64 {
        self.tree[1]
    }

    fn set_leaf(&mut self, index: usize, priority: f64) {
        let mut node = self.leaves + index;
        self.tree[node] = priority.powf(self.alpha);
        while node > 1 {
            node /= 2;
            self.tree[node] = self.tree[2 * node] + self.tree[2 * node + 1];
        }
    }

    /// Stores a transition at the current maximum priority, evicting the
    /// oldest one when full.
    pub fn push(&mut self, transition: Transition) {
        let p = self.max_priority;
        let slot = if self.items.len() < self.capacity {
            self.items.push(transition);
            self.priorities.push(p);
            self.items.len() - 1
        } else {
            let slot = self.cursor;
            self.items[slot] = transition;
            self.priorities[slot] = p;
            self.cursor = (self.cursor + 1) % self.capacity;
            slot
        };
        self.set_leaf(slot, p);
    }

    pub fn update_priority(&mut self, index: usize, priority: f64) -> Result<()> {
        if index >= self.items.len() {
            return Err(Error::InvalidArgument(format!("no transition at index {index}")));
        }
        if !priority.is_finite() {
            return Err(Error::NonFinite("priority"));
        }
        let p = priority.abs().max(PRIORITY_FLOOR);
        self.priorities[index] = p;
        self.max_priority = self.max_priority.max(p);
        self.set_leaf(index, p);
        Ok(())
    }

    /// Probability of drawing `index` in a single draw.
    pub fn probability(&self, index: usize) -> f64 {
        self.tree[self.leaves + index] / self.total()
    }

    fn find(&self, mut mass: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = 2 * node;
            if mass < self.tree[left] || self.tree[left + 1] <= 0.0 {
                node = left;
            } else {
                mass -= self.tree[left];
                node = left + 1;
            }
        }
        (node - self.leaves).min(self.items.len() - 1)
    }

    /// Draws `n` indices independently with probability proportional to
    /// `priority^alpha`, with importance weights `(len * P(i))^-beta` scaled
    /// so the largest weight in the batch is 1.
    pub fn sample_indices<R: Rng>(&self, n: usize, beta: f64, rng: &mut R) -> Result<(Vec<usize>, Vec<f64>)> {
        if n == 0 || self.items.len() < n {
            return Err(Error::BufferUnderflow {
                available: self.items.len(),
                requested: n,
            });
        }
        let total = self.total();
        let indices: Vec<usize> = (0..n).map(|_| self.find(rng.random::<f64>() * total)).collect();
        let len = self.items.len() as f64;
        let raw: Vec<f64> = indices
            .iter()
            .map(|&i| (len * self.probability(i)).powf(-beta))
            .collect();
        let max = raw.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
        Ok((indices, raw.into_iter().map(|w| w / max).collect()))
    }

    pub fn sample_minibatch<R: Rng>(&self, n: usize, beta: f64, rng: &mut R) -> Result<Minibatch> {
        let (indices, weights) = self.sample_indices(n, beta, rng)?;
        let first = &self.items[indices[0]];
        let (ds, da) = (first.state.len(), first.action.len());
        let mut states = Array2::zeros((n, ds));
        let mut actions = Array2::zeros((n, da));
        let mut next_states = Array2::zeros((n, ds));
        let mut rewards = Vec::with_capacity(n);
        for (row, &i) in indices.iter().enumerate() {
            let t = &self.items[i];
            if t.state.len() != ds || t.next_state.len() != ds || t.action.len() != da {
                return Err(Error::ShapeMismatch(format!("transition {i} has inconsistent widths")));
            }
            states.row_mut(row).assign(&ndarray::ArrayView1::from(&t.state));
            actions.row_mut(row).assign(&ndarray::ArrayView1::from(&t.action));
            next_states.row_mut(row).assign(&ndarray::ArrayView1::from(&t.next_state));
            rewards.push(t.reward);
        }
        Ok(Minibatch {
            states,
            actions,
            rewards,
            next_states,
            weights,
            indices,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn t(tag: f64) -> Transition {
        Transition {
            state: vec![tag],
            action: vec![tag],
            reward: tag,
            next_state: vec![tag],
        }
    }

    #[test]
    fn equal_priorities_are_uniform_with_unit_weights() {
        let mut b = ReplayBuffer::new(8, 0.6).unwrap();
        for i in 0..5 {
            b.push(t(i as f64));
        }
        for i in 0..5 {
            assert!((b.probability(i) - 0.2).abs() < 1e-15);
        }
        let (_, w) = b.sample_indices(4, 0.4, &mut rng::stream(0, 0)).unwrap();
        assert!(w.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn alpha_zero_ignores_priorities() {
        let mut b = ReplayBuffer::new(4, 0.0).unwrap();
        for i in 0..4 {
            b.push(t(i as f64));
        }
        b.update_priority(0, 100.0).unwrap();
        b.update_priority(1, 1e-3).unwrap();
        for i in 0..4 {
            assert!((b.probability(i) - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn nine_to_one_ratio() {
        let mut b = ReplayBuffer::new(2, 1.0).unwrap();
        b.push(t(0.0));
        b.push(t(1.0));
        b.update_priority(0, 9.0).unwrap();
        b.update_priority(1, 1.0).unwrap();
        let draws = 100_000;
        let mut r = rng::stream(4, 0);
        let hits = (0..draws / 2)
            .flat_map(|_| b.sample_indices(2, 1.0, &mut r).unwrap().0)
            .filter(|&i| i == 0)
            .count() as f64;
        // Binomial(n, 0.9): mean 90000, sd sqrt(n p q) ~ 94.9.
        let sd = (draws as f64 * 0.9 * 0.1).sqrt();
        assert!((hits - 90_000.0).abs() <= 3.0 * sd, "{hits}");
    }

    #[test]
    fn importance_weights_follow_probabilities() {
        let mut b = ReplayBuffer::new(2, 1.0).unwrap();
        b.push(t(0.0));
        b.push(t(1.0));
        b.update_priority(0, 3.0).unwrap();
        b.update_priority(1, 1.0).unwrap();
        // P = (0.75, 0.25); raw weights (2 * P)^-1 = (2/3, 2). A batch
        // holding both is normalized by 2.
        let mut r = rng::stream(1, 0);
        let mut mixed = 0;
        for _ in 0..100 {
            let (idx, w) = b.sample_indices(2, 1.0, &mut r).unwrap();
            if idx[0] != idx[1] {
                mixed += 1;
                for (i, w) in idx.iter().zip(w) {
                    let expected = if *i == 0 { 1.0 / 3.0 } else { 1.0 };
                    assert!((w - expected).abs() < 1e-12);
                }
            } else {
                assert_eq!(w, vec![1.0, 1.0]);
            }
        }
        assert!(mixed > 0);
    }

    #[test]
    fn new_items_get_max_priority_and_evict_oldest() {
        let mut b = ReplayBuffer::new(3, 0.6).unwrap();
        for i in 0..3 {
            b.push(t(i as f64));
        }
        b.update_priority(1, 5.0).unwrap();
        b.push(t(3.0));
        assert_eq!(b.len(), 3);
        assert_eq!(b.get(0).unwrap().reward, 3.0);
        assert_eq!(b.priority(0), Some(5.0));
        b.push(t(4.0));
        assert_eq!(b.get(1).unwrap().reward, 4.0);
    }

    #[test]
    fn underflow() {
        let mut b = ReplayBuffer::new(4, 0.6).unwrap();
        b.push(t(0.0));
        assert!(matches!(
            b.sample_minibatch(2, 0.4, &mut rng::stream(0, 0)),
            Err(Error::BufferUnderflow { available: 1, requested: 2 })
        ));
    }

    #[test]
    fn minibatch_rows_match_indices() {
        let mut b = ReplayBuffer::new(16, 0.6).unwrap();
        for i in 0..10 {
            b.push(t(i as f64));
        }
        let m = b.sample_minibatch(6, 0.5, &mut rng::stream(2, 0)).unwrap();
        for (row, &i) in m.indices.iter().enumerate() {
            assert_eq!(m.states[[row, 0]], i as f64);
            assert_eq!(m.rewards[row], i as f64);
        }
    }

    proptest! {
        #[test]
        fn bounded_and_all_sampleable(cap in 1usize..20, pushes in 0usize..60, updates in prop::collection::vec((0usize..20, 0.0..10.0f64), 0..20)) {
            let mut b = ReplayBuffer::new(cap, 0.6).unwrap();
            for i in 0..pushes {
                b.push(t(i as f64));
                prop_assert!(b.len() <= cap);
            }
            for (i, p) in updates {
                if i < b.len() {
                    b.update_priority(i, p).unwrap();
                }
            }
            for i in 0..b.len() {
                prop_assert!(b.probability(i) > 0.0);
            }
        }
    }
}
