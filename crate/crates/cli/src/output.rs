//! File formats: trajectory CSV with metadata comments, JSON result
//! records, and the Monte Carlo CSV set.
//!
//! Numbers serialize with 17 significant digits so every f64 round-trips
//! exactly and file-based pipelines match in-process ones bit for bit.

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

use swingid::analysis::{histogram, MonteCarloReport};
use swingid::config::ExperimentConfig;
use swingid::dynamics::{residual, Trajectory};

/// 17 significant digits, round-trip exact for f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

pub fn write_trajectory_csv(
    path: &Path,
    traj: &Trajectory,
    config: &ExperimentConfig,
) -> Result<()> {
    let n = traj.n();
    let mut out = String::new();
    writeln!(out, "# swingid trajectory")?;
    writeln!(out, "# fingerprint={}", config.fingerprint)?;
    writeln!(out, "# seed={}", traj.seed)?;
    writeln!(out, "# ts={}", fmt_f64(traj.ts))?;
    let mut header = String::from("k");
    for i in 1..=n {
        write!(header, ",delta_{i}")?;
    }
    for i in 1..=n {
        write!(header, ",omega_{i}")?;
    }
    writeln!(out, "{header}")?;
    for k in 0..traj.horizon() {
        write!(out, "{k}")?;
        for i in 0..n {
            write!(out, ",{}", fmt_f64(traj.delta[(k, i)]))?;
        }
        for i in 0..n {
            write!(out, ",{}", fmt_f64(traj.omega[(k, i)]))?;
        }
        writeln!(out)?;
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryMetaRecord<'a> {
    kind: &'static str,
    name: &'a str,
    fingerprint: &'a str,
    seed: u64,
    ts: f64,
    n: usize,
    horizon: usize,
}

pub fn write_trajectory_sidecar(
    path: &Path,
    traj: &Trajectory,
    config: &ExperimentConfig,
) -> Result<()> {
    let record = TrajectoryMetaRecord {
        kind: "trajectory",
        name: &config.name,
        fingerprint: &config.fingerprint,
        seed: traj.seed,
        ts: traj.ts,
        n: traj.n(),
        horizon: traj.horizon(),
    };
    let text = serde_json::to_string_pretty(&record)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reads a trajectory CSV written by `write_trajectory_csv`. The noise
/// matrix is reconstructed through the model residual, which reproduces
/// the recorded noise of the original simulation exactly.
pub fn read_trajectory_csv(path: &Path, config: &ExperimentConfig) -> Result<Trajectory> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut seed = 0u64;
    let mut ts = None::<f64>;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut header_seen = false;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("seed=") {
                seed = v.parse().context("bad seed in trajectory metadata")?;
            } else if let Some(v) = rest.strip_prefix("ts=") {
                ts = Some(v.parse().context("bad ts in trajectory metadata")?);
            }
            continue;
        }
        if !header_seen {
            header_seen = true; // column header
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .skip(1) // k column
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("bad row in {}", path.display()))?;
        rows.push(values);
    }
    let n = config.n();
    if rows.is_empty() || rows.iter().any(|r| r.len() != 2 * n) {
        bail!(
            "trajectory file {} does not match the {}-generator config",
            path.display(),
            n
        );
    }
    let ts = ts.unwrap_or(config.ts);
    if (ts - config.ts).abs() > 0.0 {
        bail!(
            "trajectory sampling period {} differs from the config ({})",
            ts,
            config.ts
        );
    }
    let horizon = rows.len();
    let mut delta = DMatrix::zeros(horizon, n);
    let mut omega = DMatrix::zeros(horizon, n);
    for (k, row) in rows.iter().enumerate() {
        for i in 0..n {
            delta[(k, i)] = row[i];
            omega[(k, i)] = row[n + i];
        }
    }
    let mut traj = Trajectory {
        delta,
        omega,
        noise: DMatrix::zeros(horizon - 1, n),
        ts,
        seed,
    };
    let system = config.build_system()?;
    traj.noise = residual(&system, &traj)?;
    Ok(traj)
}

pub fn write_monte_carlo_outputs(
    dir: &Path,
    report: &MonteCarloReport,
) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut summary = String::new();
    writeln!(summary, "# fingerprint={}", report.config_fingerprint)?;
    writeln!(summary, "# master_seed={}", report.master_seed)?;
    writeln!(summary, "T,e_int_mean,e_int_std,d_int_mean,d_int_std")?;
    for (k, t) in report.horizon_grid.iter().enumerate() {
        writeln!(
            summary,
            "{},{},{},{},{}",
            t,
            fmt_f64(report.e_int_mean[k]),
            fmt_f64(report.e_int_std[k]),
            fmt_f64(report.d_int_mean[k]),
            fmt_f64(report.d_int_std[k])
        )?;
    }
    std::fs::write(dir.join("summary.csv"), summary)?;

    let mut samples = String::new();
    writeln!(samples, "# fingerprint={}", report.config_fingerprint)?;
    writeln!(samples, "# master_seed={}", report.master_seed)?;
    writeln!(samples, "T,trial,node,m_error,d_error")?;
    for horizon in &report.per_node {
        for trial in 0..horizon.m_errors.nrows() {
            for node in 0..horizon.m_errors.ncols() {
                writeln!(
                    samples,
                    "{},{},{},{},{}",
                    horizon.horizon,
                    trial,
                    node + 1,
                    fmt_f64(horizon.m_errors[(trial, node)]),
                    fmt_f64(horizon.d_errors[(trial, node)])
                )?;
            }
        }
    }
    std::fs::write(dir.join("per_node_errors.csv"), samples)?;

    let mut hist = String::new();
    writeln!(hist, "# fingerprint={}", report.config_fingerprint)?;
    writeln!(hist, "# master_seed={}", report.master_seed)?;
    writeln!(hist, "T,node,param,bin,left_edge,right_edge,count")?;
    for horizon in &report.per_node {
        for node in 0..horizon.m_errors.ncols() {
            for (param, errors) in [("m", &horizon.m_errors), ("d", &horizon.d_errors)] {
                let column: Vec<f64> =
                    (0..errors.nrows()).map(|r| errors[(r, node)]).collect();
                let h = histogram(&column);
                for (bin, count) in h.counts.iter().enumerate() {
                    writeln!(
                        hist,
                        "{},{},{},{},{},{},{}",
                        horizon.horizon,
                        node + 1,
                        param,
                        bin,
                        fmt_f64(h.edges[bin]),
                        fmt_f64(h.edges[bin + 1]),
                        count
                    )?;
                }
            }
        }
    }
    std::fs::write(dir.join("histograms.csv"), hist)?;

    #[derive(Serialize)]
    struct McRecord<'a> {
        kind: &'static str,
        fingerprint: &'a str,
        master_seed: u64,
        trials: usize,
        horizon_grid: &'a [usize],
        failures: Vec<usize>,
    }
    let record = McRecord {
        kind: "montecarlo",
        fingerprint: &report.config_fingerprint,
        master_seed: report.master_seed,
        trials: report.trials,
        horizon_grid: &report.horizon_grid,
        failures: report.per_node.iter().map(|h| h.failures).collect(),
    };
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&record)?,
    )?;
    Ok(())
}
