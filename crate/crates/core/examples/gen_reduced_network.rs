//! Regenerates the network sections of the bundled `ieee39_*` scenarios.
//!
//! A seeded synthetic New England-style grid is built: 29 transmission
//! buses in a meshed ring with line susceptances of 10-50 p.u. (reactances
//! 0.01-0.05 p.u.), plus ten generator buses 30-39. Two variants are
//! reduced onto the generator buses with the Kron (Schur-complement)
//! reduction:
//!
//! - the machine network, where every unit connects through a standard
//!   step-up branch (used by `ieee39_case1`);
//! - the converter network, identical except that the units at buses
//!   32-34 interface through weak converter-side susceptances (used by
//!   `ieee39_case2` and `ieee39_droop`).
//!
//! The susceptance values are representative synthetic data, not taken
//! from any published benchmark table. Output is TOML ready to paste into
//! the scenario files, plus the disturbed initial-angle pattern shared by
//! all three scenarios.
//!
//!     cargo run -p swingid --example gen_reduced_network

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use swingid::network::{build_laplacian, kron_reduce, Edge, Laplacian, NetworkTopology};

const N_NET: usize = 29;
const N_GEN: usize = 10;
const MESH_SEED: u64 = 3901;
const MESH_SCALE: f64 = 0.5;
/// Interface susceptances of the converter units at buses 32, 33, 34.
const CONVERTER_TIES: [f64; 3] = [0.004, 0.003, 0.002];

fn reduced(converter: bool) -> Laplacian {
    let mut rng = ChaCha12Rng::seed_from_u64(MESH_SEED);
    let mut edges: Vec<Edge> = Vec::new();
    let beta = |rng: &mut ChaCha12Rng| {
        let x: f64 = rng.random_range(0.01..0.05);
        MESH_SCALE / x
    };
    // Ring backbone plus chords.
    for i in 1..=N_NET {
        let j = if i == N_NET { 1 } else { i + 1 };
        let b = beta(&mut rng);
        edges.push(Edge { i, j, beta: b });
    }
    let mut added = 0;
    while added < 7 {
        let a = rng.random_range(1..=N_NET);
        let b = rng.random_range(1..=N_NET);
        if a == b || a.abs_diff(b) <= 1 {
            continue;
        }
        if edges
            .iter()
            .any(|e| (e.i.min(e.j), e.i.max(e.j)) == (a.min(b), a.max(b)))
        {
            continue;
        }
        let w = beta(&mut rng);
        edges.push(Edge { i: a, j: b, beta: w });
        added += 1;
    }
    // Generator branches; the converter variant swaps three of them.
    for g in 0..N_GEN {
        let bus = N_NET + 1 + g;
        let attach = 1 + (g * N_NET) / N_GEN;
        let x: f64 = rng.random_range(0.01..0.05);
        let step_up = MESH_SCALE / x * 4.0;
        let b = if converter && (2..5).contains(&g) {
            CONVERTER_TIES[g - 2]
        } else {
            step_up
        };
        edges.push(Edge { i: bus, j: attach, beta: b });
    }
    let topo = NetworkTopology {
        n_buses: N_NET + N_GEN,
        edges,
        generator_buses: (N_NET + 1..=N_NET + N_GEN).collect(),
    };
    kron_reduce(&build_laplacian(&topo).unwrap(), &topo.generator_buses).unwrap()
}

fn print_toml(label: &str, lap: &Laplacian) {
    println!("# --- {label} ---");
    println!("laplacian = [");
    let m = lap.matrix();
    for r in 0..N_GEN {
        let row: Vec<String> = (0..N_GEN).map(|c| format!("{:.16e}", m[(r, c)])).collect();
        println!("  [{}],", row.join(", "));
    }
    println!("]");
    println!("bus_labels = [30, 31, 32, 33, 34, 35, 36, 37, 38, 39]");
}

fn main() {
    print_toml("machine network (ieee39_case1)", &reduced(false));
    print_toml("converter network (ieee39_case2, ieee39_droop)", &reduced(true));

    // Disturbed initial angle pattern shared by the scenarios.
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    let delta0 = DVector::<f64>::from_fn(N_GEN, |_, _| rng.random_range(-1.0..1.0));
    let row: Vec<String> = delta0.iter().map(|v| format!("{:.16e}", v)).collect();
    println!("delta0 = [{}]", row.join(", "));
}
