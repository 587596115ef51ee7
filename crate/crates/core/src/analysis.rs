//! Error metrics, estimator-distribution characterization, and the seeded
//! Monte Carlo harness.

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::dynamics::{simulate, GeneratorParams};
use crate::error::{Error, Result};
use crate::estimators::{estimate_with, EstimationResult};

/// Mean squared errors of the inertia and damping estimates:
/// `(1/N) sum (m_hat - m*)^2` and the same for damping.
pub fn error_metrics(result: &EstimationResult, truth: &GeneratorParams) -> Result<(f64, f64)> {
    let n = truth.n();
    if result.m_hat.len() != n || result.d_hat.len() != n {
        return Err(Error::dims(format!(
            "estimate covers {} nodes, truth has {}",
            result.m_hat.len(),
            n
        )));
    }
    let e_int = (&result.m_hat - truth.m()).norm_squared() / n as f64;
    let d_int = (&result.d_hat - truth.d()).norm_squared() / n as f64;
    Ok((e_int, d_int))
}

/// Sign-preserving relative inertia errors `(m_hat_i - m*_i) / m*_i`.
/// Zero-inertia truths have no relative error; callers reporting droop
/// systems must exclude those nodes before calling.
pub fn relative_errors(result: &EstimationResult, truth: &GeneratorParams) -> Result<DVector<f64>> {
    let n = truth.n();
    if result.m_hat.len() != n {
        return Err(Error::dims(format!(
            "estimate covers {} nodes, truth has {}",
            result.m_hat.len(),
            n
        )));
    }
    for i in 0..n {
        if truth.m()[i] == 0.0 {
            return Err(Error::ZeroTruth { index: i });
        }
    }
    Ok(DVector::from_fn(n, |i, _| {
        (result.m_hat[i] - truth.m()[i]) / truth.m()[i]
    }))
}

/// Covariance of the estimate under the linear-model reading of the
/// regression: `ts^2 W+ Sigma_zeta (W+)^T`. The regressors are treated as
/// deterministic, which is a modeling approximation; the result is
/// guaranteed symmetric positive semidefinite for PSD inputs.
pub fn predicted_covariance(
    pair: &crate::estimators::DataMatrixPair,
    sigma_zeta: &DMatrix<f64>,
    ts: f64,
) -> Result<DMatrix<f64>> {
    let rows = pair.w.nrows();
    if sigma_zeta.nrows() != rows || sigma_zeta.ncols() != rows {
        return Err(Error::dims(format!(
            "sigma_zeta is {}x{}, expected {}x{}",
            sigma_zeta.nrows(),
            sigma_zeta.ncols(),
            rows,
            rows
        )));
    }
    let scale = sigma_zeta.abs().max().max(1e-300);
    let asym = (sigma_zeta - sigma_zeta.transpose()).abs().max();
    if asym > 1e-10 * scale {
        return Err(Error::Numerical(format!(
            "sigma_zeta is not symmetric (max asymmetry {:e})",
            asym
        )));
    }
    let eig = sigma_zeta.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let trace: f64 = sigma_zeta.diagonal().iter().sum();
    if min_eig < -1e-10 * trace.abs().max(1e-300) {
        return Err(Error::NotPsd { min_eig });
    }

    let ncols = pair.w.ncols();
    let svd = pair.w.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let threshold = rows.max(ncols) as f64 * f64::EPSILON * sigma_max;
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > threshold && s > 0.0)
        .count();
    if rank < ncols {
        return Err(Error::RankDeficient {
            rank,
            required: ncols,
        });
    }
    let pinv = svd
        .pseudo_inverse(threshold)
        .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))?;
    let mut cov = ts * ts * (&pinv * sigma_zeta * pinv.transpose());
    let cov_t = cov.transpose();
    cov = (cov + cov_t) * 0.5;

    let eig = cov.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let trace: f64 = cov.diagonal().iter().sum();
    if min_eig < -1e-10 * trace.abs().max(1e-300) {
        return Err(Error::NotPsd { min_eig });
    }
    Ok(cov)
}

/// Sample mean and covariance of the stacked estimate `[m_hat; d_hat]` over
/// repeated simulate-estimate runs.
#[derive(Debug, Clone)]
pub struct EmpiricalCovariance {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub trials_used: usize,
    pub trials_failed: usize,
}

/// Estimates the sampling distribution of the configured estimator by
/// Monte Carlo. Failed trials are counted and excluded.
pub fn empirical_estimator_covariance(
    config: &ExperimentConfig,
    trials: usize,
    seed: u64,
) -> Result<EmpiricalCovariance> {
    if trials < 2 {
        return Err(Error::validation(
            "trials",
            format!("need at least 2 trials to form a covariance, got {}", trials),
        ));
    }
    let system = config.build_system()?;
    let n = config.n();
    let method = config.method.primary();

    let mut samples: Vec<DVector<f64>> = Vec::with_capacity(trials);
    let mut failed = 0usize;
    for trial in 0..trials {
        let trial_seed = derive_trial_seed(seed, config.horizon, trial);
        let traj = simulate(
            &system,
            &config.delta0,
            &config.omega0,
            config.horizon,
            trial_seed,
        )?;
        match estimate_with(
            &traj,
            config.laplacian(),
            method,
            &config.droop_positions,
            config.d_max,
        ) {
            Ok(est) => {
                let stacked = DVector::from_fn(2 * n, |i, _| {
                    if i < n {
                        est.m_hat[i]
                    } else {
                        est.d_hat[i - n]
                    }
                });
                samples.push(stacked);
            }
            Err(_) => failed += 1,
        }
    }
    let used = samples.len();
    if used < 2 {
        return Err(Error::Numerical(format!(
            "only {} of {} trials produced an estimate",
            used, trials
        )));
    }

    let mut mean = DVector::zeros(2 * n);
    for s in &samples {
        mean += s;
    }
    mean /= used as f64;
    let mut cov = DMatrix::zeros(2 * n, 2 * n);
    for s in &samples {
        let c = s - &mean;
        cov += &c * c.transpose();
    }
    cov /= (used - 1) as f64;

    Ok(EmpiricalCovariance {
        mean,
        covariance: cov,
        trials_used: used,
        trials_failed: failed,
    })
}

/// Per-horizon error samples kept for histogramming.
#[derive(Debug, Clone)]
pub struct HorizonSamples {
    pub horizon: usize,
    /// trials x N inertia errors `m_hat - m*` of the successful trials.
    pub m_errors: DMatrix<f64>,
    /// trials x N damping errors `d_hat - d*`.
    pub d_errors: DMatrix<f64>,
    pub failures: usize,
}

/// Aggregated Monte Carlo statistics over a horizon grid.
#[derive(Debug, Clone)]
pub struct MonteCarloReport {
    pub trials: usize,
    pub horizon_grid: Vec<usize>,
    pub e_int_mean: Vec<f64>,
    pub e_int_std: Vec<f64>,
    pub d_int_mean: Vec<f64>,
    pub d_int_std: Vec<f64>,
    pub per_node: Vec<HorizonSamples>,
    pub config_fingerprint: String,
    pub master_seed: u64,
}

/// Derives the seed of one trial from the master seed, the horizon and the
/// trial index through SHA-256 (first eight digest bytes, little endian),
/// so adding grid points never perturbs existing trials.
pub fn derive_trial_seed(master_seed: u64, horizon: usize, trial: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"swingid.trial.v1");
    hasher.update(master_seed.to_le_bytes());
    hasher.update((horizon as u64).to_le_bytes());
    hasher.update((trial as u64).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Runs `trials` independent simulate-estimate-metrics pipelines for every
/// horizon in the grid, with per-trial seeds pre-derived from the master
/// seed. Trials that fail to estimate are counted per grid point and
/// excluded from the statistics.
pub fn run_monte_carlo(
    config: &ExperimentConfig,
    horizon_grid: &[usize],
    trials: usize,
    master_seed: u64,
) -> Result<MonteCarloReport> {
    if trials < 1 {
        return Err(Error::validation("trials", "need at least one trial"));
    }
    if horizon_grid.is_empty() {
        return Err(Error::validation("grid", "horizon grid is empty"));
    }
    let system = config.build_system()?;
    let n = config.n();
    let method = config.method.primary();

    let mut report = MonteCarloReport {
        trials,
        horizon_grid: horizon_grid.to_vec(),
        e_int_mean: Vec::new(),
        e_int_std: Vec::new(),
        d_int_mean: Vec::new(),
        d_int_std: Vec::new(),
        per_node: Vec::new(),
        config_fingerprint: config.fingerprint.clone(),
        master_seed,
    };

    for &horizon in horizon_grid {
        if horizon < 2 {
            return Err(Error::validation(
                "grid",
                format!("horizon {} is too short", horizon),
            ));
        }
        let mut e_samples = Vec::with_capacity(trials);
        let mut d_samples = Vec::with_capacity(trials);
        let mut m_err_rows: Vec<DVector<f64>> = Vec::with_capacity(trials);
        let mut d_err_rows: Vec<DVector<f64>> = Vec::with_capacity(trials);
        let mut failures = 0usize;

        for trial in 0..trials {
            let seed = derive_trial_seed(master_seed, horizon, trial);
            let traj = simulate(&system, &config.delta0, &config.omega0, horizon, seed)?;
            match estimate_with(
                &traj,
                config.laplacian(),
                method,
                &config.droop_positions,
                config.d_max,
            ) {
                Ok(est) => {
                    let (e_int, d_int) = error_metrics(&est, config.params())?;
                    e_samples.push(e_int);
                    d_samples.push(d_int);
                    m_err_rows.push(&est.m_hat - config.params().m());
                    d_err_rows.push(&est.d_hat - config.params().d());
                }
                Err(_) => failures += 1,
            }
        }

        report.e_int_mean.push(mean(&e_samples));
        report.e_int_std.push(sample_std(&e_samples));
        report.d_int_mean.push(mean(&d_samples));
        report.d_int_std.push(sample_std(&d_samples));

        let used = m_err_rows.len();
        let mut m_errors = DMatrix::zeros(used, n);
        let mut d_errors = DMatrix::zeros(used, n);
        for (r, (me, de)) in m_err_rows.iter().zip(d_err_rows.iter()).enumerate() {
            for c in 0..n {
                m_errors[(r, c)] = me[c];
                d_errors[(r, c)] = de[c];
            }
        }
        report.per_node.push(HorizonSamples {
            horizon,
            m_errors,
            d_errors,
            failures,
        });
    }
    Ok(report)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation (n-1 denominator); zero for fewer than two
/// samples.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}

/// Fixed-width histogram with `ceil(sqrt(n))` bins over the sample range.
/// Bin edges are emitted so plotting stays external.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(samples: &[f64]) -> Histogram {
    if samples.is_empty() {
        return Histogram {
            edges: vec![],
            counts: vec![],
        };
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bins = (samples.len() as f64).sqrt().ceil() as usize;
    if hi == lo {
        return Histogram {
            edges: vec![lo, hi],
            counts: vec![samples.len()],
        };
    }
    let width = (hi - lo) / bins as f64;
    let mut edges = Vec::with_capacity(bins + 1);
    for i in 0..bins {
        edges.push(lo + width * i as f64);
    }
    edges.push(hi);
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let mut idx = ((x - lo) / width) as usize;
        if idx >= bins {
            idx = bins - 1;
        }
        counts[idx] += 1;
    }
    Histogram { edges, counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::estimators::{Diagnostics, Method, TrajectoryMeta};
    use crate::dynamics::GeneratorKind;

    fn result_with(m: &[f64], d: &[f64]) -> EstimationResult {
        EstimationResult {
            m_hat: DVector::from_row_slice(m),
            d_hat: DVector::from_row_slice(d),
            method: Method::Unconstrained,
            diagnostics: Diagnostics {
                objective: 0.0,
                rank_ok: true,
                active_set: vec![],
                fit_residuals: None,
            },
            meta: TrajectoryMeta {
                horizon: 2,
                ts: 1.0,
                seed: 0,
            },
        }
    }

    fn truth(m: &[f64], d: &[f64]) -> GeneratorParams {
        let kind: Vec<GeneratorKind> = m
            .iter()
            .map(|&mi| {
                if mi == 0.0 {
                    GeneratorKind::Droop
                } else {
                    GeneratorKind::Synchronous
                }
            })
            .collect();
        GeneratorParams::new(
            DVector::from_row_slice(m),
            DVector::from_row_slice(d),
            kind,
        )
        .unwrap()
    }

    #[test]
    fn error_metrics_examples() {
        let t = truth(&[0.2, 0.3], &[0.05, 0.05]);
        let exact = result_with(&[0.2, 0.3], &[0.05, 0.05]);
        assert_eq!(error_metrics(&exact, &t).unwrap(), (0.0, 0.0));

        let t2 = truth(&[1e-12, 2.0], &[0.05, 0.05]);
        let off = result_with(&[1.0 + 1e-12, 1.0], &[0.05, 0.05]);
        let (e, _) = error_metrics(&off, &t2).unwrap();
        assert!((e - 1.0).abs() < 1e-9);

        // Constant offset c gives e_int = c^2.
        let shifted = result_with(&[0.2 + 0.1, 0.3 + 0.1], &[0.05, 0.05]);
        let (e, _) = error_metrics(&shifted, &t).unwrap();
        assert!((e - 0.01).abs() < 1e-15);
    }

    #[test]
    fn relative_errors_examples() {
        let t = truth(&[0.2228, 0.0019], &[0.05, 0.05]);
        let r = result_with(&[0.2228, -0.0008], &[0.05, 0.05]);
        let rel = relative_errors(&r, &t).unwrap();
        assert_eq!(rel[0], 0.0);
        assert!((rel[1] - (-1.4211)).abs() < 1e-3);

        let zero = truth(&[0.0, 0.2], &[0.05, 0.05]);
        let err = relative_errors(&r, &zero).unwrap_err();
        assert!(matches!(err, Error::ZeroTruth { index: 0 }));
    }

    #[test]
    fn trial_seed_is_stable() {
        // Frozen values guard the documented derivation.
        let a = derive_trial_seed(1, 100, 0);
        let b = derive_trial_seed(1, 100, 0);
        assert_eq!(a, b);
        assert_ne!(a, derive_trial_seed(1, 100, 1));
        assert_ne!(a, derive_trial_seed(1, 200, 0));
        assert_ne!(a, derive_trial_seed(2, 100, 0));
    }

    #[test]
    fn histogram_bins_and_edges() {
        let samples: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let h = histogram(&samples);
        assert_eq!(h.counts.len(), 10);
        assert_eq!(h.edges.len(), 11);
        assert_eq!(h.counts.iter().sum::<usize>(), 100);
        assert_eq!(h.edges[0], 0.0);
        assert_eq!(*h.edges.last().unwrap(), 99.0);

        let flat = histogram(&[1.5, 1.5, 1.5]);
        assert_eq!(flat.counts, vec![3]);
    }

    const SMALL: &str = r#"
        [network]
        laplacian = [[0.8, -0.5, -0.3], [-0.5, 0.9, -0.4], [-0.3, -0.4, 0.7]]

        [generators]
        inertia = [0.25, 0.15, 0.4]
        damping = 0.05
        kind = ["synchronous", "synchronous", "synchronous"]

        [noise]
        sigma = 0.01

        [simulation]
        ts = 0.02
        horizon = 80
        seed = 3
        delta0 = [0.1, -0.05, 0.02]

        [estimator]
        method = "unconstrained"
    "#;

    #[test]
    fn monte_carlo_report_is_reproducible() {
        let cfg = parse_config(SMALL, "small").unwrap();
        let a = run_monte_carlo(&cfg, &[20, 40], 5, 99).unwrap();
        let b = run_monte_carlo(&cfg, &[20, 40], 5, 99).unwrap();
        assert_eq!(a.e_int_mean, b.e_int_mean);
        assert_eq!(a.d_int_std, b.d_int_std);
        assert_eq!(a.per_node[0].m_errors, b.per_node[0].m_errors);
        assert_eq!(a.per_node[1].failures, 0);
    }

    #[test]
    fn noiseless_single_trial_has_zero_error() {
        let cfg_text = SMALL.replace("sigma = 0.01", "sigma = 0.0");
        let cfg = parse_config(&cfg_text, "small").unwrap();
        let report = run_monte_carlo(&cfg, &[40], 1, 1).unwrap();
        assert!(report.e_int_mean[0] < 1e-16);
        assert!(report.d_int_mean[0] < 1e-16);
        assert_eq!(report.e_int_std[0], 0.0);
    }

    #[test]
    fn empirical_covariance_basics() {
        // Low noise keeps the sample mean close to the truth.
        let quiet = SMALL.replace("sigma = 0.01", "sigma = 0.001");
        let cfg = parse_config(&quiet, "small").unwrap();
        let emp = empirical_estimator_covariance(&cfg, 16, 5).unwrap();
        assert_eq!(emp.trials_used, 16);
        assert_eq!(emp.mean.len(), 6);
        // Mean should sit near the truth.
        assert!((emp.mean[0] - 0.25).abs() < 0.05);

        // Noiseless trials concentrate on a point.
        let cfg0 = parse_config(&SMALL.replace("sigma = 0.01", "sigma = 0.0"), "s").unwrap();
        let emp0 = empirical_estimator_covariance(&cfg0, 4, 5).unwrap();
        assert!(emp0.covariance.abs().max() < 1e-20);

        let err = empirical_estimator_covariance(&cfg, 1, 5).unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn predicted_covariance_properties() {
        use crate::dynamics::simulate;
        use crate::estimators::build_data_matrix;
        let cfg = parse_config(SMALL, "small").unwrap();
        let sys = cfg.build_system().unwrap();
        let traj = simulate(&sys, &cfg.delta0, &cfg.omega0, 12, 4).unwrap();
        let pair = build_data_matrix(&traj, cfg.laplacian()).unwrap();
        let rows = pair.w.nrows();

        // Zero input gives the zero matrix.
        let zero = predicted_covariance(&pair, &DMatrix::zeros(rows, rows), cfg.ts).unwrap();
        assert_eq!(zero.abs().max(), 0.0);

        // Linearity: doubling sigma scales the covariance by exactly 4.
        let sigma = DMatrix::<f64>::identity(rows, rows) * 1e-4;
        let c1 = predicted_covariance(&pair, &sigma, cfg.ts).unwrap();
        let c2 = predicted_covariance(&pair, &(4.0 * &sigma), cfg.ts).unwrap();
        assert!((&c2 - 4.0 * &c1).abs().max() <= 1e-12 * c2.abs().max());

        // Indefinite input is rejected.
        let mut indef = DMatrix::<f64>::identity(rows, rows);
        indef[(0, 0)] = -1.0;
        let err = predicted_covariance(&pair, &indef, cfg.ts).unwrap_err();
        assert!(matches!(err, Error::NotPsd { .. }));
    }

    #[test]
    fn predicted_covariance_block_structure_for_diagonal_input() {
        // With a diagonal noise covariance the inter-node blocks of the
        // estimate covariance stay diagonal, because the data matrix has
        // node-diagonal blocks.
        use crate::dynamics::simulate;
        use crate::estimators::build_data_matrix;
        let cfg = parse_config(SMALL, "small").unwrap();
        let sys = cfg.build_system().unwrap();
        let traj = simulate(&sys, &cfg.delta0, &cfg.omega0, 10, 4).unwrap();
        let pair = build_data_matrix(&traj, cfg.laplacian()).unwrap();
        let rows = pair.w.nrows();
        let sigma = DMatrix::<f64>::identity(rows, rows) * 1e-4;
        let cov = predicted_covariance(&pair, &sigma, cfg.ts).unwrap();
        let n = 3;
        let scale = cov.abs().max();
        for bi in 0..2 {
            for bj in 0..2 {
                for r in 0..n {
                    for c in 0..n {
                        if r != c {
                            let v = cov[(bi * n + r, bj * n + c)];
                            assert!(
                                v.abs() <= 1e-10 * scale,
                                "off-diagonal coupling {} at block ({},{})",
                                v,
                                bi,
                                bj
                            );
                        }
                    }
                }
            }
        }
    }
}
