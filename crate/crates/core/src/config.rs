//! Experiment configuration: TOML schema, validation, and the resolved
//! in-memory form used by the simulation and estimation pipelines.
//!
//! See `docs/config-schema.md` for the field-by-field reference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::dynamics::{assemble_descriptor, DescriptorSystem, GeneratorKind, GeneratorParams};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::network::{build_laplacian, kron_reduce, Edge, Laplacian, NetworkTopology};

pub const SCHEMA_VERSION: u32 = 1;

/// Estimator selection: a single method or the side-by-side comparison of
/// all four.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Single(Method),
    All,
}

impl MethodChoice {
    /// The method used when a single estimate is needed (Monte Carlo runs,
    /// covariance sampling); the comparison mode falls back to the
    /// unconstrained path.
    pub fn primary(&self) -> Method {
        match self {
            MethodChoice::Single(m) => *m,
            MethodChoice::All => Method::Unconstrained,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "unconstrained" => MethodChoice::Single(Method::Unconstrained),
            "constrained" => MethodChoice::Single(Method::Constrained),
            "per-node" => MethodChoice::Single(Method::PerNode),
            "naive" => MethodChoice::Single(Method::Naive),
            "all" => MethodChoice::All,
            other => {
                return Err(Error::validation(
                    "estimator.method",
                    format!(
                        "unknown method `{}` (expected unconstrained, constrained, per-node, naive or all)",
                        other
                    ),
                ))
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodChoice::Single(Method::Unconstrained) => "unconstrained",
            MethodChoice::Single(Method::Constrained) => "constrained",
            MethodChoice::Single(Method::PerNode) => "per-node",
            MethodChoice::Single(Method::Naive) => "naive",
            MethodChoice::All => "all",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

impl ScalarOrVec {
    fn resolve(&self, n: usize) -> Vec<f64> {
        match self {
            ScalarOrVec::Scalar(v) => vec![*v; n],
            ScalarOrVec::Vec(v) => v.clone(),
        }
    }

    fn len_or(&self, n: usize) -> usize {
        match self {
            ScalarOrVec::Scalar(_) => n,
            ScalarOrVec::Vec(v) => v.len(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    i: usize,
    j: usize,
    beta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    laplacian: Option<Vec<Vec<f64>>>,
    bus_labels: Option<Vec<usize>>,
    n_buses: Option<usize>,
    edges: Option<Vec<RawEdge>>,
    generator_buses: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerators {
    inertia: Vec<f64>,
    damping: ScalarOrVec,
    kind: Vec<GeneratorKind>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    sigma: ScalarOrVec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    ts: f64,
    horizon: usize,
    seed: Option<u64>,
    delta0: Option<Vec<f64>>,
    omega0: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimator {
    method: String,
    droop_buses: Option<Vec<usize>>,
    d_max: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: Option<u32>,
    name: Option<String>,
    network: RawNetwork,
    generators: RawGenerators,
    noise: RawNoise,
    simulation: RawSimulation,
    estimator: RawEstimator,
}

/// A fully validated experiment description with every default resolved.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub laplacian: Laplacian,
    pub params: GeneratorParams,
    pub sigma: DVector<f64>,
    pub ts: f64,
    pub horizon: usize,
    pub seed: u64,
    pub method: MethodChoice,
    /// 0-based generator positions declared as droop-controlled.
    pub droop_positions: Vec<usize>,
    pub d_max: Option<f64>,
    pub delta0: DVector<f64>,
    pub omega0: DVector<f64>,
    /// SHA-256 of the canonical resolved form; embedded in every output.
    pub fingerprint: String,
}

impl ExperimentConfig {
    pub fn n(&self) -> usize {
        self.laplacian.n()
    }

    pub fn laplacian(&self) -> &Laplacian {
        &self.laplacian
    }

    pub fn params(&self) -> &GeneratorParams {
        &self.params
    }

    pub fn build_system(&self) -> Result<DescriptorSystem> {
        assemble_descriptor(
            self.laplacian.clone(),
            self.params.clone(),
            self.sigma.clone(),
            self.ts,
        )
    }
}

/// Reads and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let fallback = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("unnamed");
    parse_config(&text, fallback)
}

/// Parses and validates a config from TOML text. `fallback_name` is used
/// when the file does not carry a `name` field.
pub fn parse_config(text: &str, fallback_name: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;

    if let Some(v) = raw.schema_version {
        if v != SCHEMA_VERSION {
            return Err(Error::validation(
                "schema_version",
                format!("unsupported schema version {} (this build reads {})", v, SCHEMA_VERSION),
            ));
        }
    }
    let name = raw.name.unwrap_or_else(|| fallback_name.to_string());

    let laplacian = resolve_network(&raw.network)?;
    let n = laplacian.n();

    if raw.generators.inertia.len() != n {
        return Err(Error::validation(
            "generators.inertia",
            format!("expected {} entries, got {}", n, raw.generators.inertia.len()),
        ));
    }
    if raw.generators.kind.len() != n {
        return Err(Error::validation(
            "generators.kind",
            format!("expected {} entries, got {}", n, raw.generators.kind.len()),
        ));
    }
    if raw.generators.damping.len_or(n) != n {
        return Err(Error::validation(
            "generators.damping",
            format!("expected {} entries, got {}", n, raw.generators.damping.len_or(n)),
        ));
    }
    let params = GeneratorParams::new(
        DVector::from_vec(raw.generators.inertia.clone()),
        DVector::from_vec(raw.generators.damping.resolve(n)),
        raw.generators.kind.clone(),
    )?;

    if raw.noise.sigma.len_or(n) != n {
        return Err(Error::validation(
            "noise.sigma",
            format!("expected {} entries, got {}", n, raw.noise.sigma.len_or(n)),
        ));
    }
    let sigma_vec = raw.noise.sigma.resolve(n);
    for (i, s) in sigma_vec.iter().enumerate() {
        if *s < 0.0 {
            return Err(Error::validation(
                format!("noise.sigma[{}]", i + 1),
                format!("sigma must be nonnegative, got {}", s),
            ));
        }
    }
    let sigma = DVector::from_vec(sigma_vec);

    if !(raw.simulation.ts > 0.0) {
        return Err(Error::validation(
            "simulation.ts",
            format!("sampling period must be positive, got {}", raw.simulation.ts),
        ));
    }
    if raw.simulation.horizon < 2 {
        return Err(Error::validation(
            "simulation.horizon",
            format!("need at least 2 samples, got {}", raw.simulation.horizon),
        ));
    }
    let delta0 = resolve_state(&raw.simulation.delta0, n, "simulation.delta0")?;
    let omega0 = resolve_state(&raw.simulation.omega0, n, "simulation.omega0")?;

    let method = MethodChoice::parse(&raw.estimator.method)?;
    if let Some(dm) = raw.estimator.d_max {
        if !(dm > 0.0) {
            return Err(Error::validation(
                "estimator.d_max",
                format!("d_max must be positive, got {}", dm),
            ));
        }
    }

    // The declared droop buses must match the kind vector exactly.
    let droop_from_kind: Vec<usize> = params.droop_nodes();
    let declared: Vec<usize> = raw.estimator.droop_buses.clone().unwrap_or_default();
    let mut declared_positions = Vec::with_capacity(declared.len());
    for &bus in &declared {
        let pos = laplacian
            .node_labels()
            .iter()
            .position(|&l| l == bus)
            .ok_or_else(|| {
                Error::validation(
                    "estimator.droop_buses",
                    format!("bus {} is not a generator bus", bus),
                )
            })?;
        declared_positions.push(pos);
    }
    declared_positions.sort_unstable();
    if declared_positions != droop_from_kind {
        let kind_buses: Vec<usize> = droop_from_kind
            .iter()
            .map(|&p| laplacian.node_labels()[p])
            .collect();
        return Err(Error::validation(
            "estimator.droop_buses",
            format!(
                "declared droop buses {:?} do not match kind = droop generators {:?}",
                declared, kind_buses
            ),
        ));
    }

    let mut config = ExperimentConfig {
        name,
        laplacian,
        params,
        sigma,
        ts: raw.simulation.ts,
        horizon: raw.simulation.horizon,
        seed: raw.simulation.seed.unwrap_or(0),
        method,
        droop_positions: droop_from_kind,
        d_max: raw.estimator.d_max,
        delta0,
        omega0,
        fingerprint: String::new(),
    };
    config.fingerprint = fingerprint(&config);
    Ok(config)
}

fn resolve_state(raw: &Option<Vec<f64>>, n: usize, field: &str) -> Result<DVector<f64>> {
    match raw {
        None => Ok(DVector::zeros(n)),
        Some(v) => {
            if v.len() != n {
                return Err(Error::validation(
                    field,
                    format!("expected {} entries, got {}", n, v.len()),
                ));
            }
            Ok(DVector::from_vec(v.clone()))
        }
    }
}

fn resolve_network(raw: &RawNetwork) -> Result<Laplacian> {
    match (&raw.laplacian, &raw.edges) {
        (Some(rows), None) => {
            let n = rows.len();
            for (r, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::validation(
                        format!("network.laplacian[{}]", r + 1),
                        format!("expected {} entries, got {}", n, row.len()),
                    ));
                }
            }
            let matrix = DMatrix::from_fn(n, n, |r, c| rows[r][c]);
            let labels = match &raw.bus_labels {
                Some(l) => {
                    if l.len() != n {
                        return Err(Error::validation(
                            "network.bus_labels",
                            format!("expected {} labels, got {}", n, l.len()),
                        ));
                    }
                    l.clone()
                }
                None => (1..=n).collect(),
            };
            Laplacian::from_matrix(matrix, labels).map_err(|e| match e {
                Error::Numerical(msg) => Error::validation("network.laplacian", msg),
                other => other,
            })
        }
        (None, Some(edges)) => {
            let n_buses = raw.n_buses.ok_or_else(|| {
                Error::validation("network.n_buses", "required together with edges")
            })?;
            let generator_buses = raw.generator_buses.clone().ok_or_else(|| {
                Error::validation("network.generator_buses", "required together with edges")
            })?;
            let topo = NetworkTopology {
                n_buses,
                edges: edges
                    .iter()
                    .map(|e| Edge {
                        i: e.i,
                        j: e.j,
                        beta: e.beta,
                    })
                    .collect(),
                generator_buses: generator_buses.clone(),
            };
            let full = build_laplacian(&topo)?;
            kron_reduce(&full, &generator_buses)
        }
        (Some(_), Some(_)) => Err(Error::validation(
            "network",
            "give either `laplacian` or `edges`, not both",
        )),
        (None, None) => Err(Error::validation(
            "network",
            "one of `laplacian` or `edges` is required",
        )),
    }
}

#[derive(Serialize)]
struct CanonicalConfig<'a> {
    schema_version: u32,
    name: &'a str,
    bus_labels: &'a [usize],
    laplacian: Vec<Vec<f64>>,
    inertia: Vec<f64>,
    damping: Vec<f64>,
    kind: Vec<&'static str>,
    sigma: Vec<f64>,
    ts: f64,
    horizon: usize,
    seed: u64,
    method: &'static str,
    droop_positions: &'a [usize],
    d_max: Option<f64>,
    delta0: Vec<f64>,
    omega0: Vec<f64>,
}

/// SHA-256 over a canonical serialization of the resolved config. Field
/// order is fixed by the struct, floats serialize to their shortest exact
/// decimal form, so the fingerprint is stable across platforms.
pub fn fingerprint(config: &ExperimentConfig) -> String {
    let n = config.n();
    let lap = config.laplacian.matrix();
    let canonical = CanonicalConfig {
        schema_version: SCHEMA_VERSION,
        name: &config.name,
        bus_labels: config.laplacian.node_labels(),
        laplacian: (0..n)
            .map(|r| (0..n).map(|c| lap[(r, c)]).collect())
            .collect(),
        inertia: config.params.m().iter().cloned().collect(),
        damping: config.params.d().iter().cloned().collect(),
        kind: config
            .params
            .kind()
            .iter()
            .map(|k| match k {
                GeneratorKind::Synchronous => "synchronous",
                GeneratorKind::Vsm => "vsm",
                GeneratorKind::Droop => "droop",
            })
            .collect(),
        sigma: config.sigma.iter().cloned().collect(),
        ts: config.ts,
        horizon: config.horizon,
        seed: config.seed,
        method: config.method.as_str(),
        droop_positions: &config.droop_positions,
        d_max: config.d_max,
        delta0: config.delta0.iter().cloned().collect(),
        omega0: config.omega0.iter().cloned().collect(),
    };
    let text = toml::to_string(&canonical).expect("canonical config serializes");
    let digest = Sha256::digest(text.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{:02x}", byte));
    }
    hex
}
