//! End-to-end tests of the binary: file formats, determinism, exit codes,
//! and equivalence of the file-based and in-process pipelines.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn swingid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swingid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL: &str = r#"
name = "small"

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
horizon = 120
seed = 5
delta0 = [0.15, -0.1, 0.05]

[estimator]
method = "unconstrained"
"#;

fn write_small(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn scenarios_lists_bundled_cases() {
    let out = swingid(&["scenarios"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for name in ["ieee39_case1", "ieee39_case2", "ieee39_droop"] {
        assert!(text.contains(name), "missing {name} in:\n{text}");
    }
}

#[test]
fn scenarios_emit_round_trips() {
    let out = swingid(&["scenarios", "--emit", "ieee39_case1"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("[generators]"));
}

#[test]
fn simulate_is_deterministic_and_well_shaped() {
    let dir = TempDir::new().unwrap();
    let config = write_small(dir.path());
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out_path in [&a, &b] {
        let out = swingid(&[
            "simulate",
            "--config",
            &config,
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text_a = std::fs::read(&a).unwrap();
    let text_b = std::fs::read(&b).unwrap();
    assert_eq!(text_a, text_b, "same seed must give byte-identical files");

    let text = String::from_utf8(text_a).unwrap();
    let data_rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('k'))
        .collect();
    assert_eq!(data_rows.len(), 120);
    assert_eq!(data_rows[0].split(',').count(), 1 + 2 * 3);
    assert!(text.contains("# fingerprint="));
    assert!(a.with_file_name("a.csv.meta.json").exists());
}

#[test]
fn noiseless_zero_state_trajectory_is_all_zero() {
    let dir = TempDir::new().unwrap();
    let config_text = SMALL
        .replace("sigma = 0.01", "sigma = 0.0")
        .replace("delta0 = [0.15, -0.1, 0.05]", "delta0 = [0.0, 0.0, 0.0]");
    let path = dir.path().join("zero.toml");
    std::fs::write(&path, config_text).unwrap();
    let out_path = dir.path().join("zero.csv");
    let out = swingid(&[
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.starts_with('k')) {
        for field in line.split(',').skip(1) {
            assert_eq!(field.parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn estimate_from_file_matches_in_process() {
    let dir = TempDir::new().unwrap();
    let config = write_small(dir.path());
    let traj = dir.path().join("traj.csv");
    assert!(swingid(&["simulate", "--config", &config, "--out", traj.to_str().unwrap()])
        .status
        .success());

    let direct = dir.path().join("direct.json");
    let from_file = dir.path().join("from_file.json");
    assert!(swingid(&["estimate", "--config", &config, "--out", direct.to_str().unwrap()])
        .status
        .success());
    let out = swingid(&[
        "estimate",
        "--config",
        &config,
        "--trajectory",
        traj.to_str().unwrap(),
        "--out",
        from_file.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&direct).unwrap()).unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&from_file).unwrap()).unwrap();
    // 17-significant-digit serialization keeps the two pipelines identical.
    assert_eq!(a["results"][0]["m_hat"], b["results"][0]["m_hat"]);
    assert_eq!(a["results"][0]["d_hat"], b["results"][0]["d_hat"]);
}

#[test]
fn estimate_all_emits_comparison_table() {
    let dir = TempDir::new().unwrap();
    let config = write_small(dir.path());
    let out = swingid(&["estimate", "--config", &config, "--method", "all"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("unconstrained"));
    assert!(text.contains("naive"));
    assert!(text.contains("true m"));
    // JSON record carries all four method entries.
    let json_start = text.find('{').unwrap();
    let record: serde_json::Value = serde_json::from_str(&text[json_start..]).unwrap();
    assert_eq!(record["results"].as_array().unwrap().len(), 4);
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = TempDir::new().unwrap();

    // Validation error: nonpositive sampling period.
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, SMALL.replace("ts = 0.02", "ts = 0.0")).unwrap();
    let out = swingid(&[
        "simulate",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));

    // Numerical failure: an exact equilibrium trajectory has no excitation.
    let flat = dir.path().join("flat.toml");
    std::fs::write(
        &flat,
        SMALL
            .replace("sigma = 0.01", "sigma = 0.0")
            .replace("delta0 = [0.15, -0.1, 0.05]", "delta0 = [0.0, 0.0, 0.0]"),
    )
    .unwrap();
    let out = swingid(&["estimate", "--config", flat.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    // Missing config path.
    let out = swingid(&["estimate", "--config", "/nonexistent/nowhere.toml"]);
    assert_eq!(out.status.code(), Some(1));

    // IO failure: unwritable output directory.
    let out = swingid(&[
        "simulate",
        "--config",
        &write_small(dir.path()),
        "--out",
        "/nonexistent_dir/sub/out.csv",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn montecarlo_writes_reproducible_outputs() {
    let dir = TempDir::new().unwrap();
    let config = write_small(dir.path());
    let out_a = dir.path().join("mc_a");
    let out_b = dir.path().join("mc_b");
    for out_dir in [&out_a, &out_b] {
        let out = swingid(&[
            "montecarlo",
            "--config",
            &config,
            "--grid",
            "20,40",
            "--trials",
            "8",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["summary.csv", "per_node_errors.csv", "histograms.csv", "report.json"] {
        let a = std::fs::read(out_a.join(file)).unwrap();
        let b = std::fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} must reproduce byte-for-byte");
    }
    let summary = std::fs::read_to_string(out_a.join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("20,")));
    assert!(summary.lines().any(|l| l.starts_with("40,")));
    assert!(summary.contains("# master_seed=5"));
}
