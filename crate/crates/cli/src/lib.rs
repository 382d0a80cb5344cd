//! Experiment pipeline around `brokertune-core`: plan files, sweeps over
//! scenarios and latency factors, reports and run manifests.

pub mod plan;
pub mod report;
pub mod run;

pub use plan::{lcf_to_limit, ExperimentPlan, Method};
pub use report::{render_report, Cell, Evaluated, MethodOutcome, Report, ScenarioSummary};
pub use run::{evaluate_recommendation, run_plan, write_manifest};
