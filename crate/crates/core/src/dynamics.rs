//! Descriptor-form swing dynamics and the discrete-time simulator.
//!
//! The continuous model couples angle and frequency deviations through
//! `E z' = A z + [0; eps]` with `E = blockdiag(I, M)` and
//! `A = [[0, I], [-H, -D]]`. Droop-controlled generators have zero inertia,
//! so `E` is singular and their rows are purely algebraic. The simulator
//! advances the Euler-Maruyama discretization
//! `E (z[k+1] - z[k]) = Ts A z[k] + [0; r[k]]` with `r[k] ~ N(0, Ts sigma^2)`,
//! solving the algebraic rows for the droop frequencies at every step.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Laplacian;

/// Control family of a generator; droop control contributes exactly zero
/// inertia while a virtual synchronous machine emulates a small one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Synchronous,
    Vsm,
    Droop,
}

/// Per-generator inertia and damping constants, in per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    m: DVector<f64>,
    d: DVector<f64>,
    kind: Vec<GeneratorKind>,
}

impl GeneratorParams {
    /// Validates that damping is strictly positive, inertia is nonnegative,
    /// and inertia vanishes exactly on the droop generators and only there.
    pub fn new(m: DVector<f64>, d: DVector<f64>, kind: Vec<GeneratorKind>) -> Result<Self> {
        let n = m.len();
        if d.len() != n || kind.len() != n {
            return Err(Error::dims(format!(
                "inertia ({}), damping ({}) and kind ({}) lengths differ",
                n,
                d.len(),
                kind.len()
            )));
        }
        for i in 0..n {
            if !(d[i] > 0.0) {
                return Err(Error::NonpositiveDamping { index: i, value: d[i] });
            }
            if m[i] < 0.0 {
                return Err(Error::validation(
                    format!("generators.inertia[{}]", i + 1),
                    format!("inertia must be nonnegative, got {}", m[i]),
                ));
            }
            let is_droop = kind[i] == GeneratorKind::Droop;
            if is_droop && m[i] != 0.0 {
                return Err(Error::validation(
                    format!("generators.inertia[{}]", i + 1),
                    format!("droop generators must have exactly zero inertia, got {}", m[i]),
                ));
            }
            if !is_droop && m[i] == 0.0 {
                return Err(Error::validation(
                    format!("generators.kind[{}]", i + 1),
                    "zero inertia requires kind = droop".to_string(),
                ));
            }
        }
        Ok(GeneratorParams { m, d, kind })
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn m(&self) -> &DVector<f64> {
        &self.m
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn kind(&self) -> &[GeneratorKind] {
        &self.kind
    }

    /// 0-based positions of the droop (zero-inertia) generators.
    pub fn droop_nodes(&self) -> Vec<usize> {
        self.kind
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == GeneratorKind::Droop)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_droop(&self) -> bool {
        self.kind.contains(&GeneratorKind::Droop)
    }
}

/// The validated (E, A) pair together with the noise scale and sampling
/// period. The blocks are materialized on demand from the stored parts so
/// they can never drift out of sync.
#[derive(Debug, Clone)]
pub struct DescriptorSystem {
    laplacian: Laplacian,
    params: GeneratorParams,
    sigma: DVector<f64>,
    ts: f64,
}

impl DescriptorSystem {
    pub fn laplacian(&self) -> &Laplacian {
        &self.laplacian
    }

    pub fn params(&self) -> &GeneratorParams {
        &self.params
    }

    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }

    /// `E = blockdiag(I, M)`; singular exactly when a droop generator exists.
    pub fn descriptor_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut e = DMatrix::identity(2 * n, 2 * n);
        for i in 0..n {
            e[(n + i, n + i)] = self.params.m[i];
        }
        e
    }

    /// `A = [[0, I], [-H, -D]]`.
    pub fn dynamics_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            a[(i, n + i)] = 1.0;
            a[(n + i, n + i)] = -self.params.d[i];
        }
        let h = self.laplacian.matrix();
        for r in 0..n {
            for c in 0..n {
                a[(n + r, c)] = -h[(r, c)];
            }
        }
        a
    }

    /// Discrete noise covariance `Ts * diag(sigma_i^2)`.
    pub fn noise_covariance(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                self.ts * self.sigma[r] * self.sigma[r]
            } else {
                0.0
            }
        })
    }
}

/// Validates dimensions and parameter signs and assembles the system.
pub fn assemble_descriptor(
    laplacian: Laplacian,
    params: GeneratorParams,
    sigma: DVector<f64>,
    ts: f64,
) -> Result<DescriptorSystem> {
    let n = laplacian.n();
    if params.n() != n {
        return Err(Error::dims(format!(
            "laplacian is {}x{} but parameters cover {} generators",
            n,
            n,
            params.n()
        )));
    }
    if sigma.len() != n {
        return Err(Error::dims(format!(
            "noise vector has {} entries for {} generators",
            sigma.len(),
            n
        )));
    }
    for i in 0..n {
        if sigma[i] < 0.0 {
            return Err(Error::validation(
                format!("noise.sigma[{}]", i + 1),
                format!("sigma must be nonnegative, got {}", sigma[i]),
            ));
        }
    }
    if !(ts > 0.0) {
        return Err(Error::validation("simulation.ts", "sampling period must be positive"));
    }
    Ok(DescriptorSystem {
        laplacian,
        params,
        sigma,
        ts,
    })
}

/// A simulated (or reloaded) sample path: `T` angle and frequency rows plus
/// the `T-1` realized discrete noise rows and the seed that produced them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub delta: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub noise: DMatrix<f64>,
    pub ts: f64,
    pub seed: u64,
}

impl Trajectory {
    /// Number of samples `T`.
    pub fn horizon(&self) -> usize {
        self.delta.nrows()
    }

    pub fn n(&self) -> usize {
        self.delta.ncols()
    }
}

/// Simulates `steps` samples of the discretized descriptor dynamics.
///
/// Semi-explicit index-1 stepping: at each step the droop frequencies are
/// solved from the algebraic rows `0 = Ts(-H d - D w) + r` using the current
/// angles and fresh noise, then all angles advance by the exact Euler update
/// `delta[k+1] = delta[k] + Ts * omega[k]`, and the inertial frequencies
/// advance by `omega[k+1] = omega[k] + (Ts/m)(-H delta[k] - d omega[k]) + r/m`.
///
/// `omega0` entries at droop nodes are ignored (those frequencies are
/// algebraically determined). The final droop frequency sample consumes one
/// extra noise row from the stream that is not part of the recorded noise,
/// because no transition follows it.
pub fn simulate(
    system: &DescriptorSystem,
    delta0: &DVector<f64>,
    omega0: &DVector<f64>,
    steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    let n = system.n();
    if steps < 2 {
        return Err(Error::validation(
            "simulation.horizon",
            format!("need at least 2 samples, got {}", steps),
        ));
    }
    if delta0.len() != n || omega0.len() != n {
        return Err(Error::dims(format!(
            "initial state ({}, {}) does not match {} generators",
            delta0.len(),
            omega0.len(),
            n
        )));
    }

    let h = system.laplacian.matrix();
    let m = &system.params.m;
    let d = &system.params.d;
    let ts = system.ts;
    let droop: Vec<bool> = system
        .params
        .kind
        .iter()
        .map(|k| *k == GeneratorKind::Droop)
        .collect();

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    // Noise is drawn row by row, node order within a row, so a seed pins the
    // whole stream regardless of platform.
    let noise_std: Vec<f64> = (0..n).map(|i| system.sigma[i] * ts.sqrt()).collect();
    let draw_row = |rng: &mut ChaCha12Rng| -> DVector<f64> {
        DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let z: f64 = rng.sample(StandardNormal);
                noise_std[i] * z
            }),
        )
    };

    let mut delta = DMatrix::zeros(steps, n);
    let mut omega = DMatrix::zeros(steps, n);
    let mut noise = DMatrix::zeros(steps - 1, n);

    let mut cur_delta = delta0.clone();
    let mut cur_omega = omega0.clone();

    for k in 0..steps - 1 {
        let r = draw_row(&mut rng);
        let coupling = h * &cur_delta;
        for i in 0..n {
            if droop[i] {
                cur_omega[i] = (r[i] / ts - coupling[i]) / d[i];
            }
        }
        for i in 0..n {
            delta[(k, i)] = cur_delta[i];
            omega[(k, i)] = cur_omega[i];
            noise[(k, i)] = r[i];
        }
        let mut next_omega = cur_omega.clone();
        for i in 0..n {
            if !droop[i] {
                next_omega[i] =
                    cur_omega[i] + ts / m[i] * (-coupling[i] - d[i] * cur_omega[i]) + r[i] / m[i];
            }
        }
        cur_delta += ts * &cur_omega;
        cur_omega = next_omega;
    }

    if system.params.has_droop() {
        let r = draw_row(&mut rng);
        let coupling = h * &cur_delta;
        for i in 0..n {
            if droop[i] {
                cur_omega[i] = (r[i] / ts - coupling[i]) / d[i];
            }
        }
    }
    for i in 0..n {
        delta[(steps - 1, i)] = cur_delta[i];
        omega[(steps - 1, i)] = cur_omega[i];
    }

    Ok(Trajectory {
        delta,
        omega,
        noise,
        ts,
        seed,
    })
}

/// Evaluates the bottom block of the discrete dynamics along a trajectory:
/// `M (omega[k+1] - omega[k]) + Ts H delta[k] + Ts D omega[k]` for each k.
/// On a simulated trajectory this reproduces the recorded noise exactly.
pub fn residual(system: &DescriptorSystem, trajectory: &Trajectory) -> Result<DMatrix<f64>> {
    let n = system.n();
    let t = trajectory.horizon();
    if trajectory.n() != n {
        return Err(Error::dims(format!(
            "trajectory covers {} nodes but the system has {}",
            trajectory.n(),
            n
        )));
    }
    if trajectory.omega.nrows() != t {
        return Err(Error::dims("angle and frequency row counts differ"));
    }
    let h = system.laplacian.matrix();
    let m = &system.params.m;
    let d = &system.params.d;
    let ts = system.ts;

    let mut res = DMatrix::zeros(t - 1, n);
    for k in 0..t - 1 {
        let dk = trajectory.delta.row(k).transpose();
        let coupling = h * dk;
        for i in 0..n {
            let omega_dot = trajectory.omega[(k + 1, i)] - trajectory.omega[(k, i)];
            res[(k, i)] =
                m[i] * omega_dot + ts * coupling[i] + ts * d[i] * trajectory.omega[(k, i)];
        }
    }
    Ok(res)
}
