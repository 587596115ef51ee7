//! Command-line front end: simulate swing-equation trajectories, estimate
//! inertia and damping constants, and run Monte Carlo experiments on the
//! bundled or user-provided scenario files.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use swingid::analysis::run_monte_carlo;
use swingid::config::{load_config, ExperimentConfig, MethodChoice};
use swingid::dynamics::{simulate, Trajectory};
use swingid::error::Error as CoreError;
use swingid::estimators::{estimate_with, EstimationResult, Method};
use swingid::scenarios::{load_scenario, scenario_toml, SCENARIO_NAMES};

#[derive(Parser)]
#[command(
    name = "swingid",
    about = "Swing-equation simulation and structure-preserving inertia/damping estimation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the bundled scenarios, or print one with --emit.
    Scenarios {
        /// Print the TOML text of this bundled scenario to stdout.
        #[arg(long)]
        emit: Option<String>,
    },
    /// Simulate a trajectory and write it as CSV plus a JSON sidecar.
    Simulate(SimulateArgs),
    /// Estimate inertia and damping constants, from a fresh simulation or
    /// from a trajectory file.
    Estimate(EstimateArgs),
    /// Monte Carlo error statistics over a horizon grid.
    Montecarlo(MontecarloArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Bundled scenario name or path to a config file.
    #[arg(long)]
    config: String,
    /// Output CSV path; a `<out>.meta.json` sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    config: String,
    /// Estimate from this trajectory CSV instead of simulating.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Estimator: unconstrained | constrained | per-node | naive | all
    /// (defaults to the config's estimator section).
    #[arg(long)]
    method: Option<String>,
    /// Output JSON path; prints to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MontecarloArgs {
    #[arg(long)]
    config: String,
    /// Comma-separated horizon grid.
    #[arg(long, default_value = "50,100,200,400")]
    grid: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Output directory for summary.csv, per_node_errors.csv,
    /// histograms.csv and report.json.
    #[arg(long)]
    out: PathBuf,
    /// Master seed (defaults to the config's seed).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 0 = success, 1 = validation/parse, 2 = numerical failure, 3 = io.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return match core {
                CoreError::Parse(_)
                | CoreError::Validation { .. }
                | CoreError::InvalidTopology { .. }
                | CoreError::DimensionMismatch { .. }
                | CoreError::NonpositiveDamping { .. }
                | CoreError::ZeroTruth { .. } => 1,
                CoreError::RankDeficient { .. }
                | CoreError::DegenerateNode { .. }
                | CoreError::ExtractionUnstable { .. }
                | CoreError::SingularInteriorBlock { .. }
                | CoreError::NotPsd { .. }
                | CoreError::Numerical(_) => 2,
                CoreError::Io(_) => 3,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Scenarios { emit } => cmd_scenarios(emit),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Montecarlo(args) => cmd_montecarlo(args),
    }
}

/// Resolves `--config` as a bundled scenario name first, then as a path.
fn resolve_config(source: &str) -> Result<ExperimentConfig> {
    if SCENARIO_NAMES.contains(&source) {
        return Ok(load_scenario(source)?);
    }
    let path = Path::new(source);
    if !path.exists() {
        anyhow::bail!(
            "`{source}` is neither a bundled scenario ({}) nor an existing file",
            SCENARIO_NAMES.join(", ")
        );
    }
    Ok(load_config(path)?)
}

fn cmd_scenarios(emit: Option<String>) -> Result<()> {
    match emit {
        None => {
            for name in SCENARIO_NAMES {
                let cfg = load_scenario(name)?;
                println!(
                    "{name}: {} generators, sigma {}, horizon {}, method {}",
                    cfg.n(),
                    cfg.sigma[0],
                    cfg.horizon,
                    cfg.method.as_str()
                );
            }
        }
        Some(name) => {
            let text = scenario_toml(&name).ok_or_else(|| {
                anyhow::anyhow!(
                    "unknown scenario `{name}` (bundled: {})",
                    SCENARIO_NAMES.join(", ")
                )
            })?;
            print!("{text}");
        }
    }
    Ok(())
}

fn simulate_from_config(config: &ExperimentConfig, seed: Option<u64>) -> Result<Trajectory> {
    let system = config.build_system()?;
    let seed = seed.unwrap_or(config.seed);
    Ok(simulate(
        &system,
        &config.delta0,
        &config.omega0,
        config.horizon,
        seed,
    )?)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let config = resolve_config(&args.config)?;
    let traj = simulate_from_config(&config, args.seed)?;
    output::write_trajectory_csv(&args.out, &traj, &config)?;
    let sidecar = sidecar_path(&args.out);
    output::write_trajectory_sidecar(&sidecar, &traj, &config)?;
    println!(
        "wrote {} samples to {} (sidecar {})",
        traj.horizon(),
        args.out.display(),
        sidecar.display()
    );
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}

#[derive(Serialize)]
struct MethodRecord {
    method: String,
    m_hat: Option<Vec<f64>>,
    d_hat: Option<Vec<f64>>,
    objective: Option<f64>,
    rank_ok: Option<bool>,
    active_set: Option<Vec<String>>,
    fit_residuals: Option<Vec<f64>>,
    /// Relative inertia errors against the config truth; zero-inertia
    /// (droop) nodes carry no relative error and appear as null.
    relative_errors: Option<Vec<Option<f64>>>,
    error: Option<String>,
}

#[derive(Serialize)]
struct EstimateRecord {
    name: String,
    fingerprint: String,
    seed: u64,
    ts: f64,
    horizon: usize,
    truth_inertia: Vec<f64>,
    truth_damping: Vec<f64>,
    results: Vec<MethodRecord>,
}

fn method_record(config: &ExperimentConfig, result: &EstimationResult) -> MethodRecord {
    let rel: Vec<Option<f64>> = (0..config.n())
        .map(|i| {
            let truth = config.params.m()[i];
            if truth == 0.0 {
                None
            } else {
                Some((result.m_hat[i] - truth) / truth)
            }
        })
        .collect();
    MethodRecord {
        method: result.method.to_string(),
        m_hat: Some(result.m_hat.iter().cloned().collect()),
        d_hat: Some(result.d_hat.iter().cloned().collect()),
        objective: Some(result.diagnostics.objective),
        rank_ok: Some(result.diagnostics.rank_ok),
        active_set: Some(
            result
                .diagnostics
                .active_set
                .iter()
                .map(|a| format!("d[{}] at {:?} bound", a.node + 1, a.side))
                .collect(),
        ),
        fit_residuals: result.diagnostics.fit_residuals.clone(),
        relative_errors: Some(rel),
        error: None,
    }
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let config = resolve_config(&args.config)?;
    let traj = match &args.trajectory {
        Some(path) => output::read_trajectory_csv(path, &config)?,
        None => simulate_from_config(&config, args.seed)?,
    };
    let choice = match &args.method {
        Some(m) => MethodChoice::parse(m)?,
        None => config.method,
    };
    let methods: Vec<Method> = match choice {
        MethodChoice::Single(m) => vec![m],
        MethodChoice::All => vec![
            Method::Unconstrained,
            Method::Constrained,
            Method::PerNode,
            Method::Naive,
        ],
    };
    let comparison = methods.len() > 1;

    let mut records = Vec::new();
    let mut estimates: Vec<(Method, Option<EstimationResult>)> = Vec::new();
    for method in methods {
        match estimate_with(
            &traj,
            config.laplacian(),
            method,
            &config.droop_positions,
            config.d_max,
        ) {
            Ok(result) => {
                records.push(method_record(&config, &result));
                estimates.push((method, Some(result)));
            }
            Err(err) if comparison => {
                // In comparison mode a failing method is part of the report.
                records.push(MethodRecord {
                    method: method.to_string(),
                    m_hat: None,
                    d_hat: None,
                    objective: None,
                    rank_ok: None,
                    active_set: None,
                    fit_residuals: None,
                    relative_errors: None,
                    error: Some(err.to_string()),
                });
                estimates.push((method, None));
            }
            Err(err) => return Err(anyhow::Error::from(err).context("estimation failed")),
        }
    }

    print_comparison_table(&config, &estimates);

    let record = EstimateRecord {
        name: config.name.clone(),
        fingerprint: config.fingerprint.clone(),
        seed: traj.seed,
        ts: traj.ts,
        horizon: traj.horizon(),
        truth_inertia: config.params.m().iter().cloned().collect(),
        truth_damping: config.params.d().iter().cloned().collect(),
        results: records,
    };
    let json = serde_json::to_string_pretty(&record)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, &json)
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

/// Side-by-side inertia table: the true constant, then
/// `estimate (relative error)` for every requested method.
fn print_comparison_table(
    config: &ExperimentConfig,
    estimates: &[(Method, Option<EstimationResult>)],
) {
    let n = config.n();
    let mut header = format!("{:<10} {:>10}", "generator", "true m");
    for (method, _) in estimates {
        header.push_str(&format!(" {:>26}", method.to_string()));
    }
    println!("{header}");
    for i in 0..n {
        let truth = config.params.m()[i];
        let mut line = format!("{:<10} {:>10.5}", format!("m{}", i + 1), truth);
        for (_, est) in estimates {
            match est {
                Some(e) => {
                    let cell = if truth == 0.0 {
                        format!("{:.5} (n/a)", e.m_hat[i])
                    } else {
                        format!("{:.5} ({:+.3e})", e.m_hat[i], (e.m_hat[i] - truth) / truth)
                    };
                    line.push_str(&format!(" {cell:>26}"));
                }
                None => line.push_str(&format!(" {:>26}", "failed")),
            }
        }
        println!("{line}");
    }
}

fn cmd_montecarlo(args: MontecarloArgs) -> Result<()> {
    let config = resolve_config(&args.config)?;
    let grid: Vec<usize> = args
        .grid
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .context("bad --grid (expected comma-separated integers)")?;
    let master_seed = args.seed.unwrap_or(config.seed);
    let report = run_monte_carlo(&config, &grid, args.trials, master_seed)?;
    output::write_monte_carlo_outputs(&args.out, &report)?;
    for (k, t) in report.horizon_grid.iter().enumerate() {
        println!(
            "T={t}: e_int {:.3e} +- {:.3e}, d_int {:.3e} +- {:.3e} ({} failures)",
            report.e_int_mean[k],
            report.e_int_std[k],
            report.d_int_mean[k],
            report.d_int_std[k],
            report.per_node[k].failures
        );
    }
    println!("wrote outputs to {}", args.out.display());
    Ok(())
}
