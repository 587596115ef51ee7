//! Inertia and damping estimators.
//!
//! The structure-preserving path regresses directly on the descriptor-form
//! residual: stack `[Diag(w[k+1]-w[k]) | Ts Diag(w[k])]` into a data matrix
//! and fit `[m; d]` against `-Ts (I (x) H) delta`, optionally with exact
//! zero-inertia equality constraints and box constraints on damping. The
//! per-node closed form solves the same regression one generator at a time.
//! The naive baseline first fits the one-step transition matrix of the
//! inverted state-space form and then extracts the constants from its
//! blocks; it needs the descriptor matrix to be invertible and degrades
//! badly when inertias approach zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::network::Laplacian;

/// Relative threshold on `c3 = c0 c2 - c1^2` below which a node counts as
/// degenerate for the per-node closed form.
const DEGENERATE_C3_REL: f64 = 1e-14;
/// A fitted transition-block slope this close to zero aborts the naive
/// extraction.
const SLOPE_TOL: f64 = 1e-12;

/// Which estimator produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Unconstrained,
    Constrained,
    PerNode,
    Naive,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Unconstrained => "unconstrained",
            Method::Constrained => "constrained",
            Method::PerNode => "per-node",
            Method::Naive => "naive",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSide {
    Lower,
    Upper,
}

/// A damping bound that is active at the solution, identified by 0-based
/// node position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveBound {
    pub node: usize,
    pub side: BoundSide,
}

/// Solver diagnostics attached to every estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Final sum of squared residuals of the underlying regression.
    pub objective: f64,
    /// Whether the regression had full numerical column rank.
    pub rank_ok: bool,
    /// Active damping bounds (constrained method only).
    pub active_set: Vec<ActiveBound>,
    /// Per-node residual norms of the extraction fits (naive method only).
    pub fit_residuals: Option<Vec<f64>>,
}

/// Origin of the trajectory an estimate was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub horizon: usize,
    pub ts: f64,
    pub seed: u64,
}

/// Estimated inertia and damping vectors with method tag and diagnostics.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub m_hat: DVector<f64>,
    pub d_hat: DVector<f64>,
    pub method: Method,
    pub diagnostics: Diagnostics,
    pub meta: TrajectoryMeta,
}

/// The stacked regression `W [m; d] ~ target` built from a trajectory.
///
/// `w` has one `N x 2N` block row per transition: `[Diag(w~[k]) | Ts Diag(w[k])]`
/// with `w~[k] = w[k+1] - w[k]`, so each scalar row carries exactly two
/// nonzeros. `target` stacks `-Ts H delta[k]` conformably, which makes
/// `w [m*; d*] - target` equal to the recorded noise of a simulated
/// trajectory.
#[derive(Debug, Clone)]
pub struct DataMatrixPair {
    pub w: DMatrix<f64>,
    pub target: DVector<f64>,
    pub n: usize,
    pub meta: TrajectoryMeta,
}

/// Assembles the data matrix and target vector from a trajectory; uses the
/// angle samples `delta[0..T-2]`, each paired with the frequency increment
/// starting at the same step.
pub fn build_data_matrix(trajectory: &Trajectory, laplacian: &Laplacian) -> Result<DataMatrixPair> {
    let n = trajectory.n();
    let t = trajectory.horizon();
    if laplacian.n() != n {
        return Err(Error::dims(format!(
            "laplacian is {}x{} but the trajectory covers {} nodes",
            laplacian.n(),
            laplacian.n(),
            n
        )));
    }
    if t < 2 {
        return Err(Error::dims("trajectory needs at least 2 samples"));
    }
    let ts = trajectory.ts;
    let h = laplacian.matrix();
    let rows = (t - 1) * n;
    let mut w = DMatrix::<f64>::zeros(rows, 2 * n);
    let mut target = DVector::<f64>::zeros(rows);
    for k in 0..t - 1 {
        let dk = trajectory.delta.row(k).transpose();
        let coupling = h * dk;
        for i in 0..n {
            let row = k * n + i;
            w[(row, i)] = trajectory.omega[(k + 1, i)] - trajectory.omega[(k, i)];
            w[(row, n + i)] = ts * trajectory.omega[(k, i)];
            target[row] = -ts * coupling[i];
        }
    }
    Ok(DataMatrixPair {
        w,
        target,
        n,
        meta: TrajectoryMeta {
            horizon: t,
            ts,
            seed: trajectory.seed,
        },
    })
}

/// Least squares through an SVD, with numerical rank checked against
/// `max_dim * eps * sigma_max`. Returns the solution and the residual
/// sum of squares.
fn svd_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let ncols = a.ncols();
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let threshold = a.nrows().max(ncols) as f64 * f64::EPSILON * sigma_max;
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
    let x = svd
        .solve(b, threshold)
        .map_err(|e| Error::Numerical(format!("svd solve failed: {e}")))?;
    let x = DVector::from_column_slice(x.as_slice());
    let objective = (a * &x - b).norm_squared();
    Ok((x, objective))
}

/// Unconstrained least-squares estimate of all inertia and damping
/// constants at once (the pseudo-inverse solution of the stacked
/// regression). Fails with `RankDeficient` on under-excited data such as an
/// exact equilibrium trajectory.
pub fn estimate_unconstrained(pair: &DataMatrixPair) -> Result<EstimationResult> {
    let n = pair.n;
    let (theta, objective) = svd_lstsq(&pair.w, &pair.target)?;
    Ok(EstimationResult {
        m_hat: DVector::from_fn(n, |i, _| theta[i]),
        d_hat: DVector::from_fn(n, |i, _| theta[n + i]),
        method: Method::Unconstrained,
        diagnostics: Diagnostics {
            objective,
            rank_ok: true,
            active_set: Vec::new(),
            fit_residuals: None,
        },
        meta: pair.meta,
    })
}

/// Closed-form estimate at a single node (0-based position), exploiting the
/// diagonal block structure of the data matrix. Equivalent to the matching
/// entries of [`estimate_unconstrained`]; the sampling period is absorbed
/// into the damping column and the target, so the formula specializes to
/// the unit-period closed form when `ts = 1`.
pub fn estimate_per_node(
    trajectory: &Trajectory,
    laplacian: &Laplacian,
    node: usize,
) -> Result<(f64, f64)> {
    let n = trajectory.n();
    let t = trajectory.horizon();
    if laplacian.n() != n {
        return Err(Error::dims(format!(
            "laplacian is {}x{} but the trajectory covers {} nodes",
            laplacian.n(),
            laplacian.n(),
            n
        )));
    }
    if node >= n {
        return Err(Error::dims(format!("node {} out of 0..{}", node, n)));
    }
    if t < 2 {
        return Err(Error::dims("trajectory needs at least 2 samples"));
    }
    let ts = trajectory.ts;

    let mut c0 = 0.0;
    let mut c1 = 0.0;
    let mut c2 = 0.0;
    for k in 0..t - 1 {
        let wt = trajectory.omega[(k + 1, node)] - trajectory.omega[(k, node)];
        let w = trajectory.omega[(k, node)];
        c0 += wt * wt;
        c1 += wt * w;
        c2 += w * w;
    }
    let c3 = c0 * c2 - c1 * c1;
    if c3.abs() <= DEGENERATE_C3_REL * c0 * c2 {
        return Err(Error::DegenerateNode { index: node });
    }

    // Inner sums over time for every neighbor angle.
    let mut s_m = DVector::<f64>::zeros(n);
    let mut s_d = DVector::<f64>::zeros(n);
    for k in 0..t - 1 {
        let wt = trajectory.omega[(k + 1, node)] - trajectory.omega[(k, node)];
        let w = trajectory.omega[(k, node)];
        let wm = (c2 * wt - c1 * w) / c3;
        let wd = (c0 * w - c1 * wt) / c3;
        for j in 0..n {
            s_m[j] += wm * trajectory.delta[(k, j)];
            s_d[j] += wd * trajectory.delta[(k, j)];
        }
    }
    let h = laplacian.matrix();
    let mut m_hat = 0.0;
    let mut d_hat = 0.0;
    for j in 0..n {
        m_hat -= h[(node, j)] * s_m[j];
        d_hat -= h[(node, j)] * s_d[j];
    }
    Ok((ts * m_hat, d_hat))
}

/// Runs the per-node closed form at every generator and packages the
/// result. The reported objective is the residual of the stacked regression
/// at the assembled estimate.
pub fn estimate_per_node_all(
    trajectory: &Trajectory,
    laplacian: &Laplacian,
) -> Result<EstimationResult> {
    let n = trajectory.n();
    let mut m_hat = DVector::zeros(n);
    let mut d_hat = DVector::zeros(n);
    for i in 0..n {
        let (m, d) = estimate_per_node(trajectory, laplacian, i)?;
        m_hat[i] = m;
        d_hat[i] = d;
    }
    let pair = build_data_matrix(trajectory, laplacian)?;
    let theta = DVector::from_fn(2 * n, |i, _| if i < n { m_hat[i] } else { d_hat[i - n] });
    let objective = (&pair.w * theta - &pair.target).norm_squared();
    Ok(EstimationResult {
        m_hat,
        d_hat,
        method: Method::PerNode,
        diagnostics: Diagnostics {
            objective,
            rank_ok: true,
            active_set: Vec::new(),
            fit_residuals: None,
        },
        meta: pair.meta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Free,
    AtLower,
    AtUpper,
}

/// Constrained least squares: exact zero-inertia equalities on `droop_set`
/// (0-based positions, applied by eliminating those columns) and, when
/// `d_max` is given, box constraints `0 <= d <= d_max` handled by an
/// active-set iteration over the bounds. `d_max = None` drops the damping
/// constraints entirely, so with an empty droop set the result coincides
/// with the unconstrained estimate. Each subproblem is solved by an
/// orthogonal factorization; the returned solution satisfies the KKT
/// conditions of the box problem.
pub fn estimate_constrained(
    pair: &DataMatrixPair,
    droop_set: &[usize],
    d_max: Option<f64>,
) -> Result<EstimationResult> {
    let n = pair.n;
    let mut droop = vec![false; n];
    for &node in droop_set {
        if node >= n {
            return Err(Error::dims(format!("droop node {} out of 0..{}", node, n)));
        }
        droop[node] = true;
    }
    if let Some(dm) = d_max {
        if !(dm > 0.0) {
            return Err(Error::validation(
                "estimator.d_max",
                format!("d_max must be positive, got {}", dm),
            ));
        }
    }

    // Columns kept after applying the equality constraints. `cols[v]` is the
    // original column of reduced variable v; the first block is the free
    // inertias, the second block is all dampings (bounded).
    let mut cols: Vec<usize> = (0..n).filter(|&i| !droop[i]).collect();
    let n_free_m = cols.len();
    for i in 0..n {
        cols.push(n + i);
    }
    let nvars = cols.len();
    let w_red = pair.w.select_columns(&cols);

    // Fast path: without damping bounds, or when the unconstrained optimum
    // of the reduced problem already sits inside the box, that optimum is
    // the constrained optimum.
    let (theta0, objective0) = svd_lstsq(&w_red, &pair.target)?;
    let feasible = |theta: &DVector<f64>| -> bool {
        match d_max {
            None => true,
            Some(dm) => (n_free_m..nvars).all(|v| theta[v] >= 0.0 && theta[v] <= dm),
        }
    };
    let (theta, objective, state) = if feasible(&theta0) {
        (theta0, objective0, vec![VarState::Free; nvars])
    } else {
        let dm = d_max.expect("infeasible only with bounds");
        bvls_active_set(&w_red, &pair.target, n_free_m, dm, theta0)?
    };

    let mut m_hat = DVector::zeros(n);
    let mut d_hat = DVector::zeros(n);
    for (v, &c) in cols.iter().enumerate() {
        if c < n {
            m_hat[c] = theta[v];
        } else {
            d_hat[c - n] = theta[v];
        }
    }
    let active_set = state
        .iter()
        .enumerate()
        .skip(n_free_m)
        .filter_map(|(v, s)| match s {
            VarState::Free => None,
            VarState::AtLower => Some(ActiveBound {
                node: cols[v] - n,
                side: BoundSide::Lower,
            }),
            VarState::AtUpper => Some(ActiveBound {
                node: cols[v] - n,
                side: BoundSide::Upper,
            }),
        })
        .collect();

    Ok(EstimationResult {
        m_hat,
        d_hat,
        method: Method::Constrained,
        diagnostics: Diagnostics {
            objective,
            rank_ok: true,
            active_set,
            fit_residuals: None,
        },
        meta: pair.meta,
    })
}

/// Bounded-variable least squares on the reduced problem. Variables below
/// `n_free_m` are unbounded; the rest live in `[0, upper]`. Maintains a
/// feasible iterate, releasing one bound per outer step and binding
/// variables that a subproblem solution pushes across a bound.
fn bvls_active_set(
    w: &DMatrix<f64>,
    b: &DVector<f64>,
    n_free_m: usize,
    upper: f64,
    unconstrained: DVector<f64>,
) -> Result<(DVector<f64>, f64, Vec<VarState>)> {
    let nvars = w.ncols();

    // Feasible warm start: clamp the unconstrained solution onto the box and
    // mark the clamped variables active.
    let mut theta = unconstrained;
    let mut state = vec![VarState::Free; nvars];
    for v in n_free_m..nvars {
        if theta[v] <= 0.0 {
            theta[v] = 0.0;
            state[v] = VarState::AtLower;
        } else if theta[v] >= upper {
            theta[v] = upper;
            state[v] = VarState::AtUpper;
        }
    }

    let grad_scale = (w.transpose() * b).abs().max().max(1.0);
    let release_tol = 1e-12 * grad_scale;
    let max_outer = 30 + 6 * nvars;

    for _outer in 0..max_outer {
        // Solve for the free variables with the active ones pinned.
        let free: Vec<usize> = (0..nvars).filter(|&v| state[v] == VarState::Free).collect();
        if !free.is_empty() {
            let mut inner_free = free;
            loop {
                let mut rhs = b.clone();
                for v in 0..nvars {
                    if state[v] != VarState::Free && theta[v] != 0.0 {
                        rhs -= theta[v] * w.column(v);
                    }
                }
                let wf = w.select_columns(&inner_free);
                let (sol, _) = svd_lstsq(&wf, &rhs)?;

                // Walk from the current feasible point toward the subproblem
                // solution, stopping at the first bound crossing.
                let mut alpha = 1.0_f64;
                let mut hit: Option<(usize, VarState)> = None;
                for (fi, &v) in inner_free.iter().enumerate() {
                    if v < n_free_m {
                        continue;
                    }
                    let step = sol[fi] - theta[v];
                    if sol[fi] < 0.0 {
                        let a = (0.0 - theta[v]) / step;
                        if a < alpha {
                            alpha = a;
                            hit = Some((v, VarState::AtLower));
                        }
                    } else if sol[fi] > upper {
                        let a = (upper - theta[v]) / step;
                        if a < alpha {
                            alpha = a;
                            hit = Some((v, VarState::AtUpper));
                        }
                    }
                }
                match hit {
                    None => {
                        for (fi, &v) in inner_free.iter().enumerate() {
                            theta[v] = sol[fi];
                        }
                        break;
                    }
                    Some((vb, bound)) => {
                        for (fi, &v) in inner_free.iter().enumerate() {
                            theta[v] += alpha * (sol[fi] - theta[v]);
                        }
                        theta[vb] = if bound == VarState::AtLower { 0.0 } else { upper };
                        state[vb] = bound;
                        inner_free.retain(|&v| v != vb);
                        if inner_free.is_empty() {
                            break;
                        }
                    }
                }
            }
        }

        // KKT check on the active bounds: release the worst violator.
        let grad = 2.0 * w.transpose() * (w * &theta - b);
        let mut worst: Option<(usize, f64)> = None;
        for v in n_free_m..nvars {
            let violation = match state[v] {
                VarState::AtLower => -grad[v],
                VarState::AtUpper => grad[v],
                VarState::Free => continue,
            };
            if violation > release_tol && worst.is_none_or(|(_, w)| violation > w) {
                worst = Some((v, violation));
            }
        }
        match worst {
            None => {
                let objective = (w * &theta - b).norm_squared();
                return Ok((theta, objective, state));
            }
            Some((v, _)) => state[v] = VarState::Free,
        }
    }
    Err(Error::Numerical(
        "active-set iteration did not converge".into(),
    ))
}

/// Two-step baseline: fit the one-step transition matrix
/// `A_d = I + Ts E^-1 A` by least squares on the full state, then extract
/// each inertia from a scalar fit of the known coupling row against the
/// estimated bottom-left block row (slope `1/m`), and each damping from the
/// bottom-right diagonal `1 - Ts d/m`. Assumes every inertia is strictly
/// positive; with near-zero inertias the transition fit degrades badly,
/// which is the failure mode this baseline exists to demonstrate. Errors
/// only when the regression is underdetermined (`T - 1 < 2N`) or the data
/// is entirely degenerate.
pub fn estimate_naive(trajectory: &Trajectory, laplacian: &Laplacian) -> Result<EstimationResult> {
    let n = trajectory.n();
    let t = trajectory.horizon();
    if laplacian.n() != n {
        return Err(Error::dims(format!(
            "laplacian is {}x{} but the trajectory covers {} nodes",
            laplacian.n(),
            laplacian.n(),
            n
        )));
    }
    if t < 2 || t - 1 < 2 * n {
        return Err(Error::RankDeficient {
            rank: t.saturating_sub(1),
            required: 2 * n,
        });
    }
    let ts = trajectory.ts;

    // Regression rows are the stacked states z[k] = [delta[k]; omega[k]].
    let rows = t - 1;
    let mut x = DMatrix::<f64>::zeros(rows, 2 * n);
    let mut y = DMatrix::<f64>::zeros(rows, 2 * n);
    for k in 0..rows {
        for i in 0..n {
            x[(k, i)] = trajectory.delta[(k, i)];
            x[(k, n + i)] = trajectory.omega[(k, i)];
            y[(k, i)] = trajectory.delta[(k + 1, i)];
            y[(k, n + i)] = trajectory.omega[(k + 1, i)];
        }
    }
    let svd = x.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let threshold = rows.max(2 * n) as f64 * f64::EPSILON * sigma_max;
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > threshold && s > 0.0)
        .count();
    if rank == 0 {
        return Err(Error::RankDeficient {
            rank,
            required: 2 * n,
        });
    }
    // The transition fit itself follows common practice: a pseudo-inverse
    // solve that silently truncates directions below the rank threshold.
    // Data collapsed onto a few dominant directions therefore still yields
    // an estimate, just an unreliable one; `rank_ok` records the collapse.
    let rank_ok = rank == 2 * n;
    let a_d_t = svd
        .solve(&y, threshold)
        .map_err(|e| Error::Numerical(format!("svd solve failed: {e}")))?;
    let a_d = a_d_t.transpose();
    let objective = (&x * a_d.transpose() - &y).norm_squared();

    let h = laplacian.matrix();
    let mut m_hat = DVector::zeros(n);
    let mut d_hat = DVector::zeros(n);
    let mut fit_residuals = Vec::with_capacity(n);
    for i in 0..n {
        // Bottom-left block row i should equal -Ts/m_i times the coupling row.
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for j in 0..n {
            let xj = -ts * h[(i, j)];
            let yj = a_d[(n + i, j)];
            sxx += xj * xj;
            sxy += xj * yj;
        }
        if sxx == 0.0 {
            return Err(Error::ExtractionUnstable {
                index: i,
                slope: 0.0,
            });
        }
        let slope = sxy / sxx;
        if slope.abs() < SLOPE_TOL {
            return Err(Error::ExtractionUnstable { index: i, slope });
        }
        m_hat[i] = 1.0 / slope;
        d_hat[i] = m_hat[i] * (1.0 - a_d[(n + i, n + i)]) / ts;

        let mut res = 0.0;
        for j in 0..n {
            let e = a_d[(n + i, j)] - slope * (-ts * h[(i, j)]);
            res += e * e;
        }
        fit_residuals.push(res.sqrt());
    }

    Ok(EstimationResult {
        m_hat,
        d_hat,
        method: Method::Naive,
        diagnostics: Diagnostics {
            objective,
            rank_ok,
            active_set: Vec::new(),
            fit_residuals: Some(fit_residuals),
        },
        meta: TrajectoryMeta {
            horizon: t,
            ts,
            seed: trajectory.seed,
        },
    })
}

/// Dispatches a trajectory to one of the four estimators.
pub fn estimate_with(
    trajectory: &Trajectory,
    laplacian: &Laplacian,
    method: Method,
    droop_set: &[usize],
    d_max: Option<f64>,
) -> Result<EstimationResult> {
    match method {
        Method::Unconstrained => {
            let pair = build_data_matrix(trajectory, laplacian)?;
            estimate_unconstrained(&pair)
        }
        Method::Constrained => {
            let pair = build_data_matrix(trajectory, laplacian)?;
            estimate_constrained(&pair, droop_set, d_max)
        }
        Method::PerNode => estimate_per_node_all(trajectory, laplacian),
        Method::Naive => estimate_naive(trajectory, laplacian),
    }
}
