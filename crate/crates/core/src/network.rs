//! Susceptance network model: weighted-graph topology, the associated
//! Laplacian coupling matrix, and Kron reduction down to generator buses.

use nalgebra::DMatrix;
use std::collections::HashSet;

use crate::error::{Error, Result};

/// Row sums of a (possibly Kron-reduced) Laplacian must vanish to this
/// absolute tolerance.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Off-diagonal entries must not exceed this value (rounding may leave a
/// tiny positive residue after reduction).
pub const OFF_DIAG_TOL: f64 = 1e-12;
/// Condition estimate above which the eliminated block counts as singular.
pub const SINGULAR_COND: f64 = 1e12;

/// One transmission line between two buses, with its susceptance weight.
///
/// Bus indices are 1-based, matching the convention used in every file
/// format of this crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub beta: f64,
}

/// A bus/line description of the network, before any matrix is formed.
#[derive(Debug, Clone)]
pub struct NetworkTopology {
    pub n_buses: usize,
    pub edges: Vec<Edge>,
    pub generator_buses: Vec<usize>,
}

impl NetworkTopology {
    /// Checks all structural invariants: valid 1-based endpoints, no
    /// self-loops, strictly positive susceptances, no duplicate undirected
    /// edges, and a non-empty duplicate-free generator set.
    pub fn validate(&self) -> Result<()> {
        if self.n_buses == 0 {
            return Err(Error::InvalidTopology {
                reason: "network has no buses".into(),
            });
        }
        let mut seen = HashSet::new();
        for e in &self.edges {
            if e.i == 0 || e.j == 0 || e.i > self.n_buses || e.j > self.n_buses {
                return Err(Error::InvalidTopology {
                    reason: format!(
                        "edge ({}, {}) references a bus outside 1..={}",
                        e.i, e.j, self.n_buses
                    ),
                });
            }
            if e.i == e.j {
                return Err(Error::InvalidTopology {
                    reason: format!("self-loop at bus {}", e.i),
                });
            }
            if !(e.beta > 0.0) {
                return Err(Error::InvalidTopology {
                    reason: format!("edge ({}, {}) has nonpositive susceptance {}", e.i, e.j, e.beta),
                });
            }
            let key = (e.i.min(e.j), e.i.max(e.j));
            if !seen.insert(key) {
                return Err(Error::InvalidTopology {
                    reason: format!("duplicate edge between buses {} and {}", key.0, key.1),
                });
            }
        }
        if self.generator_buses.is_empty() {
            return Err(Error::InvalidTopology {
                reason: "generator bus set is empty".into(),
            });
        }
        let mut gens = HashSet::new();
        for &g in &self.generator_buses {
            if g == 0 || g > self.n_buses {
                return Err(Error::InvalidTopology {
                    reason: format!("generator bus {} outside 1..={}", g, self.n_buses),
                });
            }
            if !gens.insert(g) {
                return Err(Error::InvalidTopology {
                    reason: format!("duplicate generator bus {}", g),
                });
            }
        }
        Ok(())
    }
}

/// Symmetric susceptance Laplacian over an ordered set of bus labels.
///
/// Invariants enforced at construction: symmetry, off-diagonals at most
/// [`OFF_DIAG_TOL`], and row sums below [`ROW_SUM_TOL`] in absolute value.
/// These imply positive semidefiniteness (weak diagonal dominance) with a
/// zero eigenvalue along the all-ones vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
    node_labels: Vec<usize>,
}

impl Laplacian {
    /// Validates and wraps an explicit matrix, e.g. one read from a file.
    pub fn from_matrix(matrix: DMatrix<f64>, node_labels: Vec<usize>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::dims(format!(
                "laplacian must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if node_labels.len() != matrix.nrows() {
            return Err(Error::dims(format!(
                "{} node labels for a {}x{} matrix",
                node_labels.len(),
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let n = matrix.nrows();
        for r in 0..n {
            for c in 0..n {
                if (matrix[(r, c)] - matrix[(c, r)]).abs() > OFF_DIAG_TOL {
                    return Err(Error::Numerical(format!(
                        "laplacian not symmetric at ({}, {}): {} vs {}",
                        r,
                        c,
                        matrix[(r, c)],
                        matrix[(c, r)]
                    )));
                }
                if r != c && matrix[(r, c)] > OFF_DIAG_TOL {
                    return Err(Error::Numerical(format!(
                        "positive off-diagonal {} at ({}, {})",
                        matrix[(r, c)],
                        r,
                        c
                    )));
                }
            }
            let row_sum: f64 = matrix.row(r).iter().sum();
            if row_sum.abs() > ROW_SUM_TOL {
                return Err(Error::Numerical(format!(
                    "laplacian row {} sums to {:e}, expected 0",
                    r, row_sum
                )));
            }
        }
        Ok(Laplacian {
            matrix,
            node_labels,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn node_labels(&self) -> &[usize] {
        &self.node_labels
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Builds the susceptance Laplacian of a validated topology:
/// `H[i][j] = -beta_ij` on edges, zero off edges, and diagonal entries
/// equal to the incident susceptance sums.
pub fn build_laplacian(topology: &NetworkTopology) -> Result<Laplacian> {
    topology.validate()?;
    let n = topology.n_buses;
    let mut h = DMatrix::<f64>::zeros(n, n);
    for e in &topology.edges {
        let (i, j) = (e.i - 1, e.j - 1);
        h[(i, j)] -= e.beta;
        h[(j, i)] -= e.beta;
        h[(i, i)] += e.beta;
        h[(j, j)] += e.beta;
    }
    Laplacian::from_matrix(h, (1..=n).collect())
}

/// Schur-complement (Kron) reduction onto the buses listed in `keep`.
///
/// `keep` is given as bus labels present in `lap.node_labels()`; the result
/// is ordered as in `keep`. Eliminating the complement set `e` yields
/// `H_kk - H_ke H_ee^-1 H_ek`, which is again a Laplacian whenever the
/// eliminated buses do not form a connected component of their own.
pub fn kron_reduce(lap: &Laplacian, keep: &[usize]) -> Result<Laplacian> {
    if keep.is_empty() {
        return Err(Error::InvalidTopology {
            reason: "keep set is empty".into(),
        });
    }
    let mut keep_pos = Vec::with_capacity(keep.len());
    let mut seen = HashSet::new();
    for &label in keep {
        if !seen.insert(label) {
            return Err(Error::InvalidTopology {
                reason: format!("duplicate bus {} in keep set", label),
            });
        }
        let pos = lap
            .node_labels
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| Error::InvalidTopology {
                reason: format!("bus {} not present in the laplacian", label),
            })?;
        keep_pos.push(pos);
    }
    let elim_pos: Vec<usize> = (0..lap.n()).filter(|p| !keep_pos.contains(p)).collect();

    if elim_pos.is_empty() {
        let matrix = lap.matrix.select_rows(&keep_pos).select_columns(&keep_pos);
        return Laplacian::from_matrix(matrix, keep.to_vec());
    }

    let h_kk = lap.matrix.select_rows(&keep_pos).select_columns(&keep_pos);
    let h_ke = lap.matrix.select_rows(&keep_pos).select_columns(&elim_pos);
    let h_ek = lap.matrix.select_rows(&elim_pos).select_columns(&keep_pos);
    let h_ee = lap.matrix.select_rows(&elim_pos).select_columns(&elim_pos);

    // Condition estimate of the eliminated block; a singular block means the
    // eliminated buses are disconnected from every kept bus.
    let svd = h_ee.clone().svd(false, false);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let sigma_min = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let cond = if sigma_min > 0.0 {
        sigma_max / sigma_min
    } else {
        f64::INFINITY
    };
    if !cond.is_finite() || cond > SINGULAR_COND {
        return Err(Error::SingularInteriorBlock { cond });
    }

    let x = h_ee
        .lu()
        .solve(&h_ek)
        .ok_or(Error::SingularInteriorBlock { cond })?;
    let mut schur = h_kk - h_ke * x;
    // Exact symmetry can be lost to rounding in the solve; restore it.
    let schur_t = schur.transpose();
    schur = (schur + schur_t) * 0.5;

    Laplacian::from_matrix(schur, keep.to_vec())
}
