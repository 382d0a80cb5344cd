//! CART regression tree grown by variance reduction.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ForestHyperparams, MaxFeatures};

const LEAF: u32 = u32::MAX;

/// Flat node arrays. For a leaf `feature == LEAF` and `value` holds the
/// prediction; otherwise `value` is the threshold and rows with
/// `x[feature] <= value` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    feature: Vec<u32>,
    value: Vec<f64>,
    left: Vec<u32>,
    right: Vec<u32>,
}

#[derive(Clone, Copy, Debug)]
struct Split {
    feature: usize,
    threshold: f64,
    cost: f64,
    /// Rows sorted by the split feature; the first `n_left` go left.
    n_left: usize,
}

impl Split {
    fn beats(&self, other: &Split) -> bool {
        match self.cost.total_cmp(&other.cost) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => match self.threshold.total_cmp(&other.threshold) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => self.feature < other.feature,
            },
        }
    }
}

struct Grower<'a, R> {
    rows: &'a [Vec<f64>],
    target: &'a [f64],
    n_features: usize,
    max_features: usize,
    max_depth: Option<usize>,
    min_leaf: usize,
    rng: &'a mut R,
    tree: DecisionTree,
}

impl DecisionTree {
    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, node: usize) -> usize {
            if t.feature[node] == LEAF {
                0
            } else {
                1 + walk(t, t.left[node] as usize).max(walk(t, t.right[node] as usize))
            }
        }
        walk(self, 0)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        loop {
            let f = self.feature[node];
            if f == LEAF {
                return self.value[node];
            }
            node = if x[f as usize] <= self.value[node] {
                self.left[node]
            } else {
                self.right[node]
            } as usize;
        }
    }

    fn push(&mut self, feature: u32, value: f64) -> usize {
        self.feature.push(feature);
        self.value.push(value);
        self.left.push(0);
        self.right.push(0);
        self.feature.len() - 1
    }
}

/// Grows one tree on `sample` (row indices, repeats allowed).
///
/// At each node a random subset of `max_features` features is searched; if
/// none of them admits a split the remaining features are tried in the same
/// random order. Thresholds are midpoints between consecutive distinct
/// values; the split with lowest summed child squared error wins, ties going
/// to the lower threshold and then the lower feature index.
pub fn fit_tree<R: Rng>(
    rows: &[Vec<f64>],
    target: &[f64],
    sample: &[usize],
    hp: &ForestHyperparams,
    rng: &mut R,
) -> DecisionTree {
    let n_features = rows.first().map_or(0, Vec::len);
    let max_features = match hp.max_features {
        MaxFeatures::All => n_features,
        MaxFeatures::Sqrt => ((n_features as f64).sqrt().floor() as usize).max(1),
        MaxFeatures::Count(k) => k.clamp(1, n_features.max(1)),
    };
    let mut grower = Grower {
        rows,
        target,
        n_features,
        max_features,
        max_depth: hp.max_depth,
        min_leaf: hp.min_samples_leaf.max(1),
        rng,
        tree: DecisionTree {
            feature: Vec::new(),
            value: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
        },
    };
    let mut idx = sample.to_vec();
    grower.grow(&mut idx, 0);
    grower.tree
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        // Sorting by (target) makes the leaf mean independent of row order.
        let leaf_value = |idx: &mut [usize], target: &[f64]| {
            idx.sort_by(|&a, &b| target[a].total_cmp(&target[b]));
            idx.iter().map(|&i| target[i]).sum::<f64>() / idx.len() as f64
        };

        let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(self.target[i]), hi.max(self.target[i]))
        });
        let stop = lo == hi
            || idx.len() < 2 * self.min_leaf
            || self.max_depth.is_some_and(|d| depth >= d);
        let split = if stop { None } else { self.best_split(idx) };

        let Some(split) = split else {
            let value = leaf_value(idx, self.target);
            return self.tree.push(LEAF, value);
        };

        self.sort_by_feature(idx, split.feature);
        let node = self.tree.push(split.feature as u32, split.threshold);
        let (left, right) = idx.split_at_mut(split.n_left);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.tree.left[node] = l as u32;
        self.tree.right[node] = r as u32;
        node
    }

    fn sort_by_feature(&self, idx: &mut [usize], f: usize) {
        let (rows, target) = (self.rows, self.target);
        idx.sort_by(|&a, &b| {
            rows[a][f]
                .total_cmp(&rows[b][f])
                .then(target[a].total_cmp(&target[b]))
        });
    }

    fn best_split(&mut self, idx: &mut [usize]) -> Option<Split> {
        let mut order: Vec<usize> = (0..self.n_features).collect();
        order.shuffle(self.rng);
        let (first, rest) = order.split_at(self.max_features);
        let mut first = first.to_vec();
        first.sort_unstable();

        let mut best: Option<Split> = None;
        for &f in &first {
            if let Some(s) = self.split_on(idx, f) {
                if best.is_none_or(|b| s.beats(&b)) {
                    best = Some(s);
                }
            }
        }
        if best.is_none() {
            for &f in rest {
                if let Some(s) = self.split_on(idx, f) {
                    return Some(s);
                }
            }
        }
        best
    }

    fn split_on(&self, idx: &mut [usize], f: usize) -> Option<Split> {
        self.sort_by_feature(idx, f);
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.target[i]).sum();
        let total_sq: f64 = idx.iter().map(|&i| self.target[i] * self.target[i]).sum();

        let mut best: Option<Split> = None;
        let (mut sum_l, mut sq_l) = (0.0, 0.0);
        for k in 1..n {
            let y = self.target[idx[k - 1]];
            sum_l += y;
            sq_l += y * y;
            if k < self.min_leaf || n - k < self.min_leaf {
                continue;
            }
            let (a, b) = (self.rows[idx[k - 1]][f], self.rows[idx[k]][f]);
            if a >= b {
                continue;
            }
            let (nl, nr) = (k as f64, (n - k) as f64);
            let sum_r = total - sum_l;
            let cost = (sq_l - sum_l * sum_l / nl) + ((total_sq - sq_l) - sum_r * sum_r / nr);
            let mut threshold = a + (b - a) / 2.0;
            if threshold >= b {
                threshold = a;
            }
            let candidate = Split {
                feature: f,
                threshold,
                cost,
                n_left: k,
            };
            if best.is_none_or(|s| candidate.beats(&s)) {
                best = Some(candidate);
            }
        }
        best
    }
}
