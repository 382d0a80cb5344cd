use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use brokertune_core::ddpg::{Checkpoint, CHECKPOINT_VERSION};
use brokertune_core::forest::{LATENCY, MODEL_VERSION, THROUGHPUT};
use brokertune_core::{
    anneal_search, evaluate, generate_dataset, random_search, train, tune, AccuracyReport, Observation,
    OracleProfile, ParameterSpace, Recommendation, Scenario, SurrogateModel,
};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::plan::{lcf_to_limit, ExperimentPlan, Method};
use crate::report::{improvement_pct, Cell, Evaluated, MethodOutcome, Report, ScenarioSummary, REPORT_VERSION};

pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

/// Re-evaluates a recommendation on the noise-free oracle.
pub fn evaluate_recommendation(
    rec: &Recommendation,
    predicted_feasible: bool,
    scenario: &Scenario,
    profile: &OracleProfile,
    default: &Observation,
    latency_limit: Option<f64>,
) -> Result<Evaluated> {
    let truth = evaluate(&rec.config, scenario, profile, 0.0, 0)?;
    Ok(Evaluated {
        config: rec.config.clone(),
        predicted_throughput: rec.predicted_throughput,
        predicted_latency: rec.predicted_latency,
        predicted_feasible,
        oracle_throughput: truth.throughput,
        oracle_latency: truth.latency,
        improvement_pct: improvement_pct(truth.throughput, default.throughput),
        violation: latency_limit.is_some_and(|l| truth.latency > l),
    })
}

/// Everything a tuning job needs about one scenario.
pub struct Prepared {
    pub number: u32,
    pub scenario: Scenario,
    pub model: SurrogateModel,
    pub accuracy: AccuracyReport,
    /// Noise-free oracle observation of the default configuration.
    pub default: Observation,
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn prepare(plan: &ExperimentPlan, profile: &OracleProfile, number: u32, dir: &Path) -> Result<Prepared> {
    let space = ParameterSpace::default_space();
    let scenario = Scenario::use_case(number)?;
    fs::create_dir_all(dir)?;
    let data = generate_dataset(
        &space,
        &scenario,
        profile,
        plan.dataset_size,
        plan.noise_sigma,
        plan.data_seed,
        plan.workers,
    )?;
    data.save(&space, dir.join("dataset.csv"))?;
    let (model, accuracy) = train(&data, &space, &plan.forest, plan.holdout_fraction)?;
    model.save(dir.join("model.json"))?;
    write_json(&dir.join("accuracy.json"), &accuracy)?;
    let default = evaluate(&space.default_config(), &scenario, profile, 0.0, 0)?;
    Ok(Prepared {
        number,
        scenario,
        model,
        accuracy,
        default,
    })
}

fn lcf_dir(lcf: f64) -> String {
    format!("lcf-{lcf}")
}

fn run_method(
    plan: &ExperimentPlan,
    profile: &OracleProfile,
    prep: &Prepared,
    lcf: f64,
    seed: u64,
    method: Method,
    dir: &Path,
) -> Result<Evaluated> {
    let limit = lcf_to_limit(prep.default.latency, lcf)?;
    fs::create_dir_all(dir)?;
    let (rec, feasible) = match method {
        Method::Ddpg => {
            let hp = brokertune_core::AgentHyperparams {
                seed,
                ..plan.agent.clone()
            };
            let (result, checkpoint) = tune(&prep.model, limit, &hp)?;
            write_json(&dir.join("ddpg.json"), &result)?;
            Checkpoint {
                buffer: None,
                ..checkpoint
            }
            .save(dir.join("ddpg.checkpoint.json"))?;
            (result.recommended().clone(), result.best_feasible.is_some())
        }
        Method::RandomSearch | Method::AnnealSearch => {
            let budget = plan.baseline_budget();
            let result = if method == Method::RandomSearch {
                random_search(&prep.model, limit, budget, seed)?
            } else {
                anneal_search(&prep.model, limit, budget, seed, &plan.anneal)?
            };
            write_json(&dir.join(format!("{method}.json")), &result)?;
            (result.recommended().clone(), result.best_feasible.is_some())
        }
    };
    evaluate_recommendation(&rec, feasible, &prep.scenario, profile, &prep.default, limit)
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    report_version: u32,
    model_version: u32,
    checkpoint_version: u32,
    profile_version: &'a str,
    data_seed: Option<u64>,
    seeds: &'a [u64],
    complete: bool,
    files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path.strip_prefix(root)? != Path::new(MANIFEST_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

/// Writes `manifest.json` listing every other file under `dir` with its
/// SHA-256.
pub fn write_manifest(
    dir: &Path,
    profile: &OracleProfile,
    data_seed: Option<u64>,
    seeds: &[u64],
    complete: bool,
) -> Result<()> {
    let mut paths = Vec::new();
    collect_files(dir, dir, &mut paths)?;
    let mut files = Vec::with_capacity(paths.len());
    for path in paths {
        let bytes = fs::read(&path)?;
        let rel = path.strip_prefix(dir)?;
        files.push(ManifestEntry {
            path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        report_version: REPORT_VERSION,
        model_version: MODEL_VERSION,
        checkpoint_version: CHECKPOINT_VERSION,
        profile_version: &profile.version,
        data_seed,
        seeds,
        complete,
        files,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

/// Runs every (scenario, lcf, seed, method) cell of the plan and writes the
/// run directory: per-scenario datasets and models, per-cell results and
/// checkpoints, `report.json`, `report.txt`, wall-clock `timings.json` and a
/// hash manifest. Failures are recorded in the report rather than aborting.
pub fn run_plan(plan: &ExperimentPlan, profile: &OracleProfile, out_dir: &Path) -> Result<Report> {
    plan.validate()?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    fs::write(out_dir.join("plan.toml"), plan.to_toml()?)?;
    fs::write(out_dir.join("profile.toml"), profile.to_toml())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .context("building worker pool")?;
    let mut timings: BTreeMap<String, f64> = BTreeMap::new();

    let mut prepared = Vec::new();
    let mut summaries = Vec::new();
    for &number in &plan.scenarios {
        let dir = out_dir.join(format!("scenario-{number}"));
        let start = Instant::now();
        let result = prepare(plan, profile, number, &dir);
        timings.insert(format!("scenario-{number}/prepare"), start.elapsed().as_secs_f64());
        let name = Scenario::use_case(number).map(|s| s.name).unwrap_or_default();
        match result {
            Ok(p) => {
                summaries.push(ScenarioSummary {
                    scenario: number,
                    name,
                    default_throughput: Some(p.default.throughput),
                    default_latency: Some(p.default.latency),
                    throughput_r2: p.accuracy.targets[THROUGHPUT].r2,
                    latency_r2: p.accuracy.targets[LATENCY].r2,
                    error: None,
                });
                prepared.push(Ok(p));
            }
            Err(e) => {
                summaries.push(ScenarioSummary {
                    scenario: number,
                    name,
                    default_throughput: None,
                    default_latency: None,
                    throughput_r2: None,
                    latency_r2: None,
                    error: Some(format!("{e:#}")),
                });
                prepared.push(Err(format!("scenario setup failed: {e:#}")));
            }
        }
    }

    let mut jobs = Vec::new();
    for (si, &number) in plan.scenarios.iter().enumerate() {
        for &lcf in &plan.lcf {
            for &seed in &plan.seeds {
                for &method in &plan.methods {
                    jobs.push((si, number, lcf, seed, method));
                }
            }
        }
    }
    let outcomes: Vec<(MethodOutcome, String, f64)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(si, number, lcf, seed, method)| {
                let cell_dir = format!("scenario-{number}/{}/seed-{seed}", lcf_dir(lcf));
                let key = format!("{cell_dir}/{method}");
                let start = Instant::now();
                let result = match &prepared[si] {
                    Ok(prep) => {
                        run_method(plan, profile, prep, lcf, seed, method, &out_dir.join(&cell_dir))
                            .map_err(|e| format!("{e:#}"))
                    }
                    Err(e) => Err(e.clone()),
                };
                let outcome = match result {
                    Ok(evaluated) => MethodOutcome {
                        method,
                        evaluated: Some(evaluated),
                        error: None,
                    },
                    Err(error) => MethodOutcome {
                        method,
                        evaluated: None,
                        error: Some(error),
                    },
                };
                (outcome, key, start.elapsed().as_secs_f64())
            })
            .collect()
    });

    let mut cells: Vec<Cell> = Vec::new();
    let mut outcomes = outcomes.into_iter();
    for (si, &number) in plan.scenarios.iter().enumerate() {
        for &lcf in &plan.lcf {
            for &seed in &plan.seeds {
                let latency_limit = prepared[si]
                    .as_ref()
                    .ok()
                    .and_then(|p| lcf_to_limit(p.default.latency, lcf).ok().flatten());
                let mut cell = Cell {
                    scenario: number,
                    lcf,
                    seed,
                    latency_limit,
                    outcomes: Vec::with_capacity(plan.methods.len()),
                };
                for _ in &plan.methods {
                    let (outcome, key, secs) = outcomes.next().expect("one outcome per job");
                    timings.insert(key, secs);
                    cell.outcomes.push(outcome);
                }
                cells.push(cell);
            }
        }
    }

    let report = Report {
        version: REPORT_VERSION,
        profile_version: profile.version.clone(),
        plan: plan.clone(),
        scenarios: summaries,
        cells,
    };
    fs::write(out_dir.join(REPORT_FILE), report.to_json()?)?;
    fs::write(out_dir.join(REPORT_TEXT_FILE), crate::report::render_report(&report))?;
    write_json(&out_dir.join(TIMINGS_FILE), &timings)?;
    write_manifest(out_dir, profile, Some(plan.data_seed), &plan.seeds, report.is_complete())?;
    Ok(report)
}
