//! Command-line entry point: config validation, single runs with trajectory
//! persistence, and the six studies.
//!
//! Exit codes: 0 success / all verdicts pass, 1 verdict failure, 2 usage or
//! config error, 3 runtime solver failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chemolab::error::Error;
use chemolab::experiments::{ensemble, run_study, ExperimentConfig, STUDY_NAMES};
use chemolab::model::{validate_assumptions, validate_balance};
use chemolab::norms::lp_norm;
use chemolab::solver::{evolve, persist_trajectory};

#[derive(Parser)]
#[command(
    name = "chemolab",
    version,
    about = "Numerical laboratory for a degenerate diffusion-chemotaxis system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Dotted-path config override, e.g. --set solver.dt_max=1e-4
    #[arg(long = "set", global = true)]
    sets: Vec<String>,

    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Ensemble seed override
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check balance conditions and structural assumptions of the model
    Validate,
    /// Evolve one initial state and persist the trajectory
    Run,
    /// Run a named study: dissipative | pair | smoothing | regularization |
    /// propagation | dimension
    Study { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized");
        }
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}

/// 2 for configuration problems, 3 for runtime solver failures.
fn classify(e: &Error) -> u8 {
    match e {
        Error::SolverNoConvergence { .. }
        | Error::UnstableTimeStep { .. }
        | Error::NonFiniteState { .. } => 3,
        _ => 2,
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode, Error> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Validate => cmd_validate(&config),
        Command::Run => cmd_run(&config, &cli.out),
        Command::Study { name } => cmd_study(name, &config, &cli.out),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut value = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)?
        }
        None => serde_json::to_value(ExperimentConfig::default())?,
    };
    for set in &cli.sets {
        apply_override(&mut value, set)?;
    }
    if let Some(seed) = cli.seed {
        apply_override(&mut value, &format!("ensemble.seed={seed}"))?;
    }
    let config: ExperimentConfig = serde_json::from_value(value)?;
    config.solver.validate()?;
    Ok(config)
}

/// Apply one `dotted.path=value` override; the value parses as JSON when
/// possible and falls back to a string.
fn apply_override(root: &mut serde_json::Value, set: &str) -> Result<(), Error> {
    let (path, raw) = set.split_once('=').ok_or_else(|| {
        Error::InvalidConfig(format!("override {set:?} is not of the form key=value"))
    })?;
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        if seg.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "override path {path:?} has an empty segment"
            )));
        }
        if !cursor.is_object() {
            return Err(Error::InvalidConfig(format!(
                "override path {path:?} descends into a non-object"
            )));
        }
        let map = cursor.as_object_mut().unwrap();
        if i == segments.len() - 1 {
            map.insert(seg.to_string(), parsed);
            return Ok(());
        }
        cursor = map
            .entry(seg.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("split never yields an empty iterator")
}

fn cmd_validate(config: &ExperimentConfig) -> Result<ExitCode, Error> {
    let params = config.model_params()?;
    let balance = validate_balance(params.alpha, params.gamma, params.beta);
    let mut all = true;
    println!("balance conditions:");
    for c in &balance.conditions {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        println!("  {tag}  {} (slack {:.6})", c.name, c.slack);
        all &= c.pass;
    }
    let sweep = validate_assumptions(&params, 400)?;
    println!("structural assumptions ({} samples):", sweep.sample_count);
    for r in &sweep.reports {
        let tag = if r.pass { "PASS" } else { "FAIL" };
        print!("  {tag}  {} (worst margin {:.3e}", r.name, r.worst_margin);
        if let Some((m, rho)) = r.witness {
            print!(" at M={m:.3e}, rho={rho:.3e}");
        }
        println!(")");
        all &= r.pass;
    }
    Ok(if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_run(config: &ExperimentConfig, out: &Path) -> Result<ExitCode, Error> {
    let params = config.model_params()?;
    let states = ensemble(config)?;
    let state0 = states.first().ok_or_else(|| {
        Error::InvalidConfig("ensemble.count must be at least 1 for run".to_string())
    })?;
    let traj = evolve(state0, &params, &config.solver)?;
    let dir = out.join("trajectory");
    persist_trajectory(&dir, &traj)?;
    let last = traj.last();
    println!(
        "wrote {} snapshots to {}; final t={:.4}, ||M||_L2={:.6e}, ||rho||_L2={:.6e}",
        traj.snapshots().len(),
        dir.display(),
        last.time,
        lp_norm(&last.m, 2.0)?,
        lp_norm(&last.rho, 2.0)?,
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_study(name: &str, config: &ExperimentConfig, out: &Path) -> Result<ExitCode, Error> {
    if !STUDY_NAMES.contains(&name) {
        eprintln!(
            "unknown study {name:?}; valid names: {}",
            STUDY_NAMES.join(", ")
        );
        return Ok(ExitCode::from(2));
    }
    let report = run_study(name, config, out)?;
    for v in &report.verdicts {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag}  {}: value {:.6e} vs {} = {:.6e}",
            v.name, v.value, v.tolerance_name, v.tolerance
        );
    }
    println!(
        "report written to {}",
        out.join(name).join("report.json").display()
    );
    Ok(if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
