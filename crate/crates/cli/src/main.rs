use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use brokertune_cli::plan::{lcf_to_limit, ExperimentPlan, Method};
use brokertune_cli::report::{render_report, Report};
use brokertune_cli::run::{evaluate_recommendation, run_plan, write_json, write_manifest, REPORT_FILE};
use brokertune_core::ddpg::Checkpoint;
use brokertune_core::{
    anneal_search, evaluate, generate_dataset, random_search, train, tune, AgentHyperparams, AnnealParams, Dataset,
    ForestHyperparams, OracleProfile, ParameterSpace, Scenario, SurrogateModel,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "brokertune", version, about = "Latency-constrained throughput tuning for message-broker configurations")]
struct Cli {
    /// Seed for sampling, training and tuning. For `sweep`, replaces the
    /// plan's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory that receives all artifacts of the command.
    #[arg(long, global = true, default_value = "run")]
    out_dir: PathBuf,
    /// Oracle profile file (TOML); the built-in v1 profile when omitted.
    #[arg(long, global = true)]
    profile: Option<PathBuf>,
    /// Relative measurement noise of the oracle.
    #[arg(long, global = true)]
    noise_sigma: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Limit {
    /// Latency constraint factor: the limit is the default latency divided
    /// by this value, 0 means unconstrained.
    #[arg(long, conflicts_with = "latency_limit")]
    lcf: Option<f64>,
    /// Absolute latency limit in ms.
    #[arg(long)]
    latency_limit: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample configurations with LHS and measure them on the oracle.
    GenData {
        /// Use case 1-9.
        #[arg(long, default_value_t = 2)]
        scenario: u32,
        #[arg(long, default_value_t = 1000)]
        rows: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Fit the random-forest surrogate to a dataset.
    TrainSurrogate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 0.2)]
        holdout: f64,
    },
    /// Train the DDPG agent against a surrogate and recommend a configuration.
    Tune {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        limit: Limit,
        #[arg(long, default_value_t = 5000)]
        steps: usize,
    },
    /// Run a black-box baseline against a surrogate.
    Baseline {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "random_search")]
        method: Method,
        #[arg(long, default_value_t = 5000)]
        budget: usize,
        #[command(flatten)]
        limit: Limit,
    },
    /// Run every cell of an experiment plan.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        /// Overrides the plan's worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print the text tables of a finished sweep.
    Report {
        /// A run directory or a report.json file.
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_profile(path: Option<&Path>) -> Result<OracleProfile> {
    match path {
        Some(p) => OracleProfile::load(p).with_context(|| format!("loading profile {}", p.display())),
        None => Ok(OracleProfile::v1()),
    }
}

/// Resolves the latency limit for a model's scenario, returning it with the
/// noise-free default observation used as the improvement reference.
fn resolve_limit(
    limit: &Limit,
    scenario: &Scenario,
    profile: &OracleProfile,
) -> Result<(Option<f64>, brokertune_core::Observation)> {
    let default = evaluate(&ParameterSpace::default_space().default_config(), scenario, profile, 0.0, 0)?;
    let resolved = match (limit.lcf, limit.latency_limit) {
        (_, Some(l)) if !(l > 0.0 && l.is_finite()) => bail!("latency limit {l} must be positive"),
        (_, Some(l)) => Some(l),
        (Some(lcf), None) => lcf_to_limit(default.latency, lcf)?,
        (None, None) => None,
    };
    Ok((resolved, default))
}

fn execute(cli: Cli) -> Result<bool> {
    let profile = load_profile(cli.profile.as_deref())?;
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out_dir.as_path();
    let space = ParameterSpace::default_space();

    match cli.command {
        Command::GenData { scenario, rows, workers } => {
            fs::create_dir_all(out)?;
            let sc = Scenario::use_case(scenario)?;
            let sigma = cli.noise_sigma.unwrap_or(0.02);
            let data = generate_dataset(&space, &sc, &profile, rows, sigma, seed, workers.max(1))?;
            data.save(&space, out.join("dataset.csv"))?;
            write_manifest(out, &profile, Some(seed), &[], true)?;
            println!("wrote {} rows for {} to {}", data.rows.len(), sc.name, out.join("dataset.csv").display());
        }
        Command::TrainSurrogate { data, trees, holdout } => {
            fs::create_dir_all(out)?;
            let dataset = Dataset::load(&space, &data).with_context(|| format!("loading {}", data.display()))?;
            let hp = ForestHyperparams {
                n_trees: trees,
                seed,
                ..ForestHyperparams::default()
            };
            let (model, accuracy) = train(&dataset, &space, &hp, holdout)?;
            model.save(out.join("model.json"))?;
            write_json(&out.join("accuracy.json"), &accuracy)?;
            write_manifest(out, &profile, Some(dataset.seed), &[seed], true)?;
            for t in &accuracy.targets {
                let r2 = t.r2.map_or_else(|| "n/a".to_string(), |r| format!("{r:.4}"));
                println!("{:<24} R2 {r2:>8}  MAE {:.4}", t.target, t.mae);
            }
        }
        Command::Tune { model, limit, steps } => {
            fs::create_dir_all(out)?;
            let model = SurrogateModel::load(&model).with_context(|| format!("loading {}", model.display()))?;
            let (latency_limit, default) = resolve_limit(&limit, &model.scenario, &profile)?;
            let hp = AgentHyperparams {
                seed,
                total_steps: steps,
                ..AgentHyperparams::default()
            };
            let (result, checkpoint) = tune(&model, latency_limit, &hp)?;
            write_json(&out.join("tune.json"), &result)?;
            Checkpoint { buffer: None, ..checkpoint }.save(out.join("checkpoint.json"))?;
            let evaluated = evaluate_recommendation(
                result.recommended(),
                result.best_feasible.is_some(),
                &model.scenario,
                &profile,
                &default,
                latency_limit,
            )?;
            write_json(&out.join("evaluation.json"), &evaluated)?;
            write_manifest(out, &profile, None, &[seed], true)?;
            print_evaluation("ddpg", &evaluated, latency_limit);
        }
        Command::Baseline {
            model,
            method,
            budget,
            limit,
        } => {
            fs::create_dir_all(out)?;
            let model = SurrogateModel::load(&model).with_context(|| format!("loading {}", model.display()))?;
            let (latency_limit, default) = resolve_limit(&limit, &model.scenario, &profile)?;
            let result = match method {
                Method::RandomSearch => random_search(&model, latency_limit, budget, seed)?,
                Method::AnnealSearch => anneal_search(&model, latency_limit, budget, seed, &AnnealParams::default())?,
                Method::Ddpg => bail!("ddpg is not a baseline; use the tune command"),
            };
            write_json(&out.join(format!("{method}.json")), &result)?;
            let evaluated = evaluate_recommendation(
                result.recommended(),
                result.best_feasible.is_some(),
                &model.scenario,
                &profile,
                &default,
                latency_limit,
            )?;
            write_json(&out.join("evaluation.json"), &evaluated)?;
            write_manifest(out, &profile, None, &[seed], true)?;
            print_evaluation(method.as_str(), &evaluated, latency_limit);
        }
        Command::Sweep { plan, workers } => {
            let mut plan = ExperimentPlan::load(&plan)?;
            if let Some(seed) = cli.seed {
                plan.seeds = vec![seed];
            }
            if let Some(sigma) = cli.noise_sigma {
                plan.noise_sigma = sigma;
            }
            if let Some(w) = workers {
                plan.workers = w;
            }
            let report = run_plan(&plan, &profile, out)?;
            print!("{}", render_report(&report));
            if !report.is_complete() {
                eprintln!("{} job(s) failed; see {}", report.failures(), out.join(REPORT_FILE).display());
                return Ok(false);
            }
        }
        Command::Report { run } => {
            let path = if run.is_dir() { run.join(REPORT_FILE) } else { run };
            let report = Report::load(&path)?;
            print!("{}", render_report(&report));
            return Ok(report.is_complete());
        }
    }
    Ok(true)
}

fn print_evaluation(method: &str, e: &brokertune_cli::Evaluated, limit: Option<f64>) {
    println!("{method} recommendation:");
    for (knob, value) in e.config.iter() {
        println!("  {knob} = {value}");
    }
    println!(
        "predicted: {:.2} MB/s, {:.3} ms ({})",
        e.predicted_throughput,
        e.predicted_latency,
        if e.predicted_feasible { "feasible" } else { "no feasible point found" }
    );
    println!(
        "oracle:    {:.2} MB/s, {:.3} ms, {:+.1}% vs default{}",
        e.oracle_throughput,
        e.oracle_latency,
        e.improvement_pct,
        match limit {
            Some(l) if e.violation => format!(", VIOLATES limit {l:.3} ms"),
            Some(l) => format!(", within limit {l:.3} ms"),
            None => String::new(),
        }
    );
}
