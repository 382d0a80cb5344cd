//! Latency-constrained throughput tuning for message-broker configurations.
//!
//! The pipeline: sample configurations ([`lhs`]), measure them against a
//! performance model ([`oracle`]), fit a random-forest surrogate ([`forest`]),
//! then train a DDPG agent against the surrogate ([`ddpg`]) and compare it
//! with black-box [`baselines`].

pub mod baselines;
pub mod ddpg;
pub mod error;
pub mod forest;
pub mod lhs;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod space;

pub use baselines::{anneal_search, random_search, AnnealParams, BaselineResult};
pub use ddpg::{tune, AgentHyperparams, Recommendation, RewardMode, TuningResult};
pub use error::{Error, Result};
pub use forest::{train, AccuracyReport, ForestHyperparams, SurrogateModel};
pub use lhs::{lhs_sample, SampleBatch};
pub use oracle::{evaluate, generate_dataset, Dataset, Observation, OracleProfile, Scenario, StateMetrics};
pub use space::{Configuration, KnobValue, ParameterSpace, ParameterSpec, Violation};
