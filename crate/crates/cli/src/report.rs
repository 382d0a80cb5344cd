use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use brokertune_core::Configuration;
use serde::{Deserialize, Serialize};

use crate::plan::{ExperimentPlan, Method};

pub const REPORT_VERSION: u32 = 1;

/// Oracle re-evaluation of one method's recommendation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluated {
    pub config: Configuration,
    pub predicted_throughput: f64,
    pub predicted_latency: f64,
    /// Whether the recommendation was predicted to satisfy the limit (as
    /// opposed to a best-reward fallback).
    pub predicted_feasible: bool,
    pub oracle_throughput: f64,
    pub oracle_latency: f64,
    pub improvement_pct: f64,
    /// Oracle latency exceeds the limit.
    pub violation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub evaluated: Option<Evaluated>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub scenario: u32,
    pub lcf: f64,
    pub seed: u64,
    pub latency_limit: Option<f64>,
    pub outcomes: Vec<MethodOutcome>,
}

impl Cell {
    pub fn outcome(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: u32,
    pub name: String,
    pub default_throughput: Option<f64>,
    pub default_latency: Option<f64>,
    pub throughput_r2: Option<f64>,
    pub latency_r2: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub profile_version: String,
    pub plan: ExperimentPlan,
    pub scenarios: Vec<ScenarioSummary>,
    pub cells: Vec<Cell>,
}

/// Percentage improvement of `value` over `reference`, with negative zero
/// folded to zero.
pub fn improvement_pct(value: f64, reference: f64) -> f64 {
    100.0 * (value - reference) / reference + 0.0
}

impl Report {
    pub fn methods(&self) -> &[Method] {
        &self.plan.methods
    }

    pub fn failures(&self) -> usize {
        self.cells
            .iter()
            .flat_map(|c| &c.outcomes)
            .filter(|o| o.evaluated.is_none())
            .count()
    }

    pub fn is_complete(&self) -> bool {
        self.failures() == 0 && self.scenarios.iter().all(|s| s.error.is_none())
    }

    /// `(violations, completed cells)` for one method across all cells.
    pub fn violation_count(&self, method: Method) -> (usize, usize) {
        self.cells
            .iter()
            .filter_map(|c| c.outcome(method)?.evaluated.as_ref())
            .fold((0, 0), |(v, n), e| (v + usize::from(e.violation), n + 1))
    }

    pub fn violation_pct(&self, method: Method) -> Option<f64> {
        let (v, n) = self.violation_count(method);
        (n > 0).then(|| 100.0 * v as f64 / n as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading report {}", path.display()))?;
        let report: Self = serde_json::from_str(&text).context("parsing report")?;
        anyhow::ensure!(
            report.version == REPORT_VERSION,
            "report version {} is not supported (expected {REPORT_VERSION})",
            report.version
        );
        Ok(report)
    }
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.prec$}"))
}

/// Human-readable tables: scenario defaults, one improvement matrix per
/// method (rows are lcf/seed, columns are scenarios; `*` marks an oracle
/// latency violation, `!` a failed run) and the aggregate violation rate.
pub fn render_report(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Scenario defaults (oracle, noise-free)");
    let _ = writeln!(
        out,
        "{:<10} {:<26} {:>9} {:>10} {:>8} {:>8}",
        "scenario", "name", "TP MB/s", "latency ms", "R2 TP", "R2 lat"
    );
    for s in &report.scenarios {
        let _ = writeln!(
            out,
            "{:<10} {:<26} {:>9} {:>10} {:>8} {:>8}{}",
            s.scenario,
            s.name,
            fmt_opt(s.default_throughput, 2),
            fmt_opt(s.default_latency, 3),
            fmt_opt(s.throughput_r2, 3),
            fmt_opt(s.latency_r2, 3),
            s.error.as_ref().map(|e| format!("  FAILED: {e}")).unwrap_or_default()
        );
    }

    let scenarios: Vec<u32> = report.scenarios.iter().map(|s| s.scenario).collect();
    let mut rows: Vec<(f64, u64)> = Vec::new();
    for c in &report.cells {
        if !rows.contains(&(c.lcf, c.seed)) {
            rows.push((c.lcf, c.seed));
        }
    }

    for &method in report.methods() {
        let _ = writeln!(out);
        let _ = writeln!(out, "[{method}] throughput improvement % over default (* = latency violation, ! = failed)");
        let _ = write!(out, "{:>6} {:>6} |", "lcf", "seed");
        for s in &scenarios {
            let _ = write!(out, " {:>10}", format!("S{s}"));
        }
        let _ = writeln!(out);
        for &(lcf, seed) in &rows {
            let _ = write!(out, "{lcf:>6} {seed:>6} |");
            for &s in &scenarios {
                let cell = report
                    .cells
                    .iter()
                    .find(|c| c.scenario == s && c.lcf == lcf && c.seed == seed)
                    .and_then(|c| c.outcome(method));
                let text = match cell {
                    None => "-".to_string(),
                    Some(MethodOutcome { evaluated: None, .. }) => "!".to_string(),
                    Some(MethodOutcome {
                        evaluated: Some(e), ..
                    }) => format!("{:+.1}{}", e.improvement_pct, if e.violation { "*" } else { " " }),
                };
                let _ = write!(out, " {text:>10}");
            }
            let _ = writeln!(out);
        }
    }

    let _ = writeln!(out);
    let _ = writeln!(out, "Latency violation rate (oracle, all lcf values)");
    for &method in report.methods() {
        let (v, n) = report.violation_count(method);
        let _ = writeln!(
            out,
            "{:<16} {:>7}%  ({v}/{n})",
            method.as_str(),
            fmt_opt(report.violation_pct(method), 2)
        );
    }
    out
}
