//! Random-forest surrogate: one bagged forest per output column, trained on
//! min-max normalized inputs and targets.

mod tree;

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use tree::{fit_tree, DecisionTree};

use crate::error::{Error, Result};
use crate::oracle::{Dataset, Scenario, StateMetrics, LATENCY_COLUMN, METRIC_NAMES, THROUGHPUT_COLUMN};
use crate::rng;
use crate::space::{Configuration, ParameterSpace};

pub const MODEL_VERSION: u32 = 1;
pub const N_TARGETS: usize = 9;
pub const THROUGHPUT: usize = 7;
pub const LATENCY: usize = 8;

pub fn target_names() -> [&'static str; N_TARGETS] {
    let m = METRIC_NAMES;
    [m[0], m[1], m[2], m[3], m[4], m[5], m[6], THROUGHPUT_COLUMN, LATENCY_COLUMN]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestHyperparams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or `min_samples_leaf` binds.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 2,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidArgument(
                "n_trees and min_samples_leaf must be at least 1".into(),
            ));
        }
        if matches!(self.max_features, MaxFeatures::Count(0)) {
            return Err(Error::InvalidArgument("max_features must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub min: f64,
    pub max: f64,
}

impl ColumnStats {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        Self { min, max }
    }

    pub fn is_constant(&self) -> bool {
        self.max <= self.min
    }

    pub fn normalize(&self, v: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }
}

/// Predicted targets in both normalized and raw units, ordered as
/// [`target_names`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub normalized: [f64; N_TARGETS],
    pub raw: [f64; N_TARGETS],
}

impl Prediction {
    pub fn state_normalized(&self) -> [f64; 7] {
        self.normalized[..7].try_into().expect("7 state metrics")
    }

    pub fn state(&self) -> StateMetrics {
        StateMetrics::from_array(self.raw[..7].try_into().expect("7 state metrics"))
    }

    pub fn throughput(&self) -> f64 {
        self.raw[THROUGHPUT]
    }

    pub fn latency(&self) -> f64 {
        self.raw[LATENCY]
    }

    pub fn throughput_normalized(&self) -> f64 {
        self.normalized[THROUGHPUT]
    }

    pub fn latency_normalized(&self) -> f64 {
        self.normalized[LATENCY]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub version: u32,
    pub hyperparams: ForestHyperparams,
    pub scenario: Scenario,
    pub space: ParameterSpace,
    pub input_stats: Vec<ColumnStats>,
    pub output_stats: Vec<ColumnStats>,
    pub forests: Vec<Forest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetAccuracy {
    pub target: String,
    /// `None` when the column is constant on the training or holdout split.
    pub r2: Option<f64>,
    pub mae: f64,
    /// `100 * R²`.
    pub accuracy_pct: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub holdout_rows: usize,
    pub targets: Vec<TargetAccuracy>,
    /// Output columns that were constant in the training split.
    pub degenerate: Vec<String>,
}

impl AccuracyReport {
    pub fn get(&self, target: &str) -> Option<&TargetAccuracy> {
        self.targets.iter().find(|t| t.target == target)
    }
}

/// Coefficient of determination; `None` if the truth has zero variance.
pub fn r_squared(truth: &[f64], predicted: &[f64]) -> Option<f64> {
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    let ss_res: f64 = truth.iter().zip(predicted).map(|(t, p)| (t - p).powi(2)).sum();
    (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot)
}

/// Fits one forest per output on a seeded train/holdout split and scores the
/// holdout rows.
pub fn train(
    dataset: &Dataset,
    space: &ParameterSpace,
    hp: &ForestHyperparams,
    holdout_fraction: f64,
) -> Result<(SurrogateModel, AccuracyReport)> {
    hp.validate()?;
    if dataset.rows.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} rows, at least 10 required",
            dataset.rows.len()
        )));
    }
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(Error::InvalidArgument(format!("holdout fraction {holdout_fraction}")));
    }

    let inputs = dataset
        .rows
        .iter()
        .map(|r| space.encode(&r.config))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<[f64; N_TARGETS]> = dataset.rows.iter().map(|r| r.targets()).collect();

    let n = inputs.len();
    let n_holdout = ((n as f64) * holdout_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(hp.seed, 0x5917));
    let (holdout, train_idx) = order.split_at(n_holdout.min(n - 1));

    let input_stats: Vec<ColumnStats> = (0..space.dim())
        .map(|j| ColumnStats::of(train_idx.iter().map(|&i| inputs[i][j])))
        .collect();
    let output_stats: Vec<ColumnStats> = (0..N_TARGETS)
        .map(|k| ColumnStats::of(train_idx.iter().map(|&i| targets[i][k])))
        .collect();

    let x: Vec<Vec<f64>> = train_idx
        .iter()
        .map(|&i| normalize_row(&inputs[i], &input_stats))
        .collect();
    let y: Vec<Vec<f64>> = (0..N_TARGETS)
        .map(|k| {
            train_idx
                .iter()
                .map(|&i| output_stats[k].normalize(targets[i][k]))
                .collect()
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..N_TARGETS)
        .flat_map(|k| (0..hp.n_trees).map(move |t| (k, t)))
        .collect();
    let trees: Vec<DecisionTree> = jobs
        .par_iter()
        .map(|&(k, t)| {
            let mut rng = rng::stream(rng::mix(hp.seed, k as u64), t as u64);
            let sample: Vec<usize> = if hp.bootstrap {
                (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
            } else {
                (0..x.len()).collect()
            };
            fit_tree(&x, &y[k], &sample, hp, &mut rng)
        })
        .collect();
    let mut trees = trees.into_iter();
    let forests = (0..N_TARGETS)
        .map(|_| Forest {
            trees: trees.by_ref().take(hp.n_trees).collect(),
        })
        .collect();

    let model = SurrogateModel {
        version: MODEL_VERSION,
        hyperparams: hp.clone(),
        scenario: dataset.scenario.clone(),
        space: space.clone(),
        input_stats,
        output_stats,
        forests,
    };

    let names = target_names();
    let degenerate: Vec<String> = (0..N_TARGETS)
        .filter(|&k| model.output_stats[k].is_constant())
        .map(|k| names[k].to_string())
        .collect();
    let mut report = AccuracyReport {
        holdout_rows: holdout.len(),
        targets: Vec::new(),
        degenerate,
    };
    if !holdout.is_empty() {
        let predictions: Vec<[f64; N_TARGETS]> = holdout
            .iter()
            .map(|&i| model.predict_encoded(&inputs[i]).raw)
            .collect();
        for k in 0..N_TARGETS {
            let truth: Vec<f64> = holdout.iter().map(|&i| targets[i][k]).collect();
            let pred: Vec<f64> = predictions.iter().map(|p| p[k]).collect();
            let mae = truth.iter().zip(&pred).map(|(t, p)| (t - p).abs()).sum::<f64>()
                / truth.len() as f64;
            let r2 = if model.output_stats[k].is_constant() {
                None
            } else {
                r_squared(&truth, &pred)
            };
            report.targets.push(TargetAccuracy {
                target: names[k].to_string(),
                r2,
                mae,
                accuracy_pct: r2.map(|r| 100.0 * r),
            });
        }
    }
    Ok((model, report))
}

fn normalize_row(raw: &[f64], stats: &[ColumnStats]) -> Vec<f64> {
    raw.iter().zip(stats).map(|(v, s)| s.normalize(*v)).collect()
}

impl SurrogateModel {
    pub fn predict(&self, config: &Configuration) -> Result<Prediction> {
        Ok(self.predict_encoded(&self.space.encode(config)?))
    }

    /// Predicts from an action vector, decoding it through the model's space.
    pub fn predict_action(&self, action: &[f64]) -> Result<(Configuration, Prediction)> {
        let config = self.space.denormalize(action)?;
        let prediction = self.predict(&config)?;
        Ok((config, prediction))
    }

    fn predict_encoded(&self, encoded: &[f64]) -> Prediction {
        let x = normalize_row(encoded, &self.input_stats);
        let mut normalized = [0.0; N_TARGETS];
        let mut raw = [0.0; N_TARGETS];
        for k in 0..N_TARGETS {
            normalized[k] = self.forests[k].predict(&x);
            raw[k] = self.output_stats[k].denormalize(normalized[k]);
        }
        Prediction { normalized, raw }
    }

    pub fn normalize_target(&self, target: usize, raw: f64) -> f64 {
        self.output_stats[target].normalize(raw)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.version != MODEL_VERSION {
            return Err(Error::Version {
                found: header.version,
                expected: MODEL_VERSION,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
