//! Bundled experiment scenarios.
//!
//! Three ready-to-run cases on a 10-generator reduced New England-style
//! network:
//!
//! - `ieee39_case1`: all ten machines synchronous, unconstrained estimation;
//! - `ieee39_case2`: machines 3-5 replaced by low-inertia virtual
//!   synchronous machines, for the side-by-side estimator comparison;
//! - `ieee39_droop`: the case-2 low-inertia machines pushed to exactly zero
//!   inertia (droop control), exercising the algebraic simulation rows and
//!   the zero-inertia equality constraints.
//!
//! The susceptance couplings in these files are representative reduced
//! benchmark values, not data from any specific publication; see the
//! comments inside each file.

use crate::config::{parse_config, ExperimentConfig};
use crate::error::{Error, Result};

pub const SCENARIO_NAMES: [&str; 3] = ["ieee39_case1", "ieee39_case2", "ieee39_droop"];

/// Raw TOML text of a bundled scenario.
pub fn scenario_toml(name: &str) -> Option<&'static str> {
    match name {
        "ieee39_case1" => Some(include_str!("../scenarios/ieee39_case1.toml")),
        "ieee39_case2" => Some(include_str!("../scenarios/ieee39_case2.toml")),
        "ieee39_droop" => Some(include_str!("../scenarios/ieee39_droop.toml")),
        _ => None,
    }
}

/// Parses a bundled scenario into a validated config.
pub fn load_scenario(name: &str) -> Result<ExperimentConfig> {
    let text = scenario_toml(name).ok_or_else(|| {
        Error::validation(
            "scenario",
            format!(
                "unknown scenario `{}` (bundled: {})",
                name,
                SCENARIO_NAMES.join(", ")
            ),
        )
    })?;
    parse_config(text, name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::GeneratorKind;

    #[test]
    fn all_bundled_scenarios_load() {
        for name in SCENARIO_NAMES {
            let cfg = load_scenario(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.n(), 10, "{name} should have 10 generators");
        }
    }

    #[test]
    fn case1_parameters() {
        let cfg = load_scenario("ieee39_case1").unwrap();
        let expected = [
            0.2228, 0.1607, 0.1873, 0.1517, 0.1379, 0.1846, 0.1401, 0.18289, 0.1830, 2.6526,
        ];
        for (i, &m) in expected.iter().enumerate() {
            assert_eq!(cfg.params.m()[i], m);
            assert_eq!(cfg.params.d()[i], 0.0531);
        }
        assert_eq!(cfg.ts, 1.0 / 60.0);
        assert_eq!(cfg.sigma[0], 0.01);
        assert!(cfg.droop_positions.is_empty());

        // The descriptor matrix carries the inertias in its bottom block.
        let sys = cfg.build_system().unwrap();
        let e = sys.descriptor_matrix();
        for (i, &m) in expected.iter().enumerate() {
            assert_eq!(e[(10 + i, 10 + i)], m);
            assert_eq!(e[(i, i)], 1.0);
        }
    }

    #[test]
    fn case2_low_inertia_machines() {
        let cfg = load_scenario("ieee39_case2").unwrap();
        assert_eq!(cfg.params.m()[2], 0.0019);
        assert_eq!(cfg.params.m()[3], 0.0015);
        assert_eq!(cfg.params.m()[4], 0.0014);
        // Case 2 carries its own value for machine 8.
        assert_eq!(cfg.params.m()[7], 0.1289);
        for i in [2, 3, 4] {
            assert_eq!(cfg.params.kind()[i], GeneratorKind::Vsm);
        }
    }

    #[test]
    fn droop_variant_has_exact_zeros() {
        let cfg = load_scenario("ieee39_droop").unwrap();
        assert_eq!(cfg.droop_positions, vec![2, 3, 4]);
        for i in [2, 3, 4] {
            assert_eq!(cfg.params.m()[i], 0.0);
            assert_eq!(cfg.params.kind()[i], GeneratorKind::Droop);
        }
        let sys = cfg.build_system().unwrap();
        // E must be singular for the droop variant.
        assert_eq!(sys.descriptor_matrix().determinant(), 0.0);
    }
}
