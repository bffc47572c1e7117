//! Built-in scenarios and their default configurations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{
    CoefficientConfig, ConfigError, DiagnosticsConfig, FamilyConfig, FieldSpec, MeasureConfig, ScenarioConfig,
    TripletConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 7] =
        [ScenarioId::S1, ScenarioId::S2, ScenarioId::S3, ScenarioId::S4, ScenarioId::S5, ScenarioId::S6, ScenarioId::S7];

    pub fn title(self) -> &'static str {
        match self {
            ScenarioId::S1 => "atom at the jump-free skeleton",
            ScenarioId::S2 => "derivative validation",
            ScenarioId::S3 => "regularization by a monotone drift",
            ScenarioId::S4 => "flat-drift counterexample",
            ScenarioId::S5 => "stratification invariance",
            ScenarioId::S6 => "Marcus reductions",
            ScenarioId::S7 => "Doss-Sussman representation",
        }
    }

    /// What the scenario demonstrates.
    pub fn claim(self) -> &'static str {
        match self {
            ScenarioId::S1 => {
                "finite jump measure of rate λ with monotone drift: X_t has an atom of mass exp(-λt) at the deterministic skeleton"
            }
            ScenarioId::S2 => {
                "jump-time derivative (a(X_T-) - a(X_T))·exp∫ȧ and flow derivative exp∫ȧ agree with finite-difference re-simulation"
            }
            ScenarioId::S3 => {
                "infinite jump measure with strictly increasing drift: Z_1 sits on a lattice while X_1 has no atoms and leaves it"
            }
            ScenarioId::S4 => {
                "drift constant near x0: X_1 inherits the singular lattice support of Z_1 with positive probability"
            }
            ScenarioId::S5 => {
                "redrawing the first marked jump time uniformly below the second keeps the law of X_1, and Y_1 is strictly monotone in it"
            }
            ScenarioId::S6 => {
                "Marcus equation: unit-σ reduction, proportional closed form, conjugacy to unit diffusion, chain rule, quadratic jump remainder"
            }
            ScenarioId::S7 => {
                "with a Brownian part, the pathwise Doss-Sussman solution has the same law as the Marcus solution"
            }
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ScenarioId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ConfigError::UnknownScenario(s.trim().to_string()))
    }
}

/// One line per scenario: id, title and claim, in S1..S7 order.
pub fn list_scenarios() -> String {
    ScenarioId::ALL
        .iter()
        .map(|id| format!("{id}  {}  (claim: {})\n", id.title(), id.claim()))
        .collect()
}

/// Documented defaults of each scenario.
pub fn default_config(id: ScenarioId) -> ScenarioConfig {
    let pure_jump = |drift: f64| TripletConfig { drift, brownian_variance: 0.0, compensate: false, brownian_cells_per_unit: 4096 };
    let coefficients = |a: FieldSpec| CoefficientConfig { a, sigma: FieldSpec::Constant(1.0), randomize: false };
    let base = ScenarioConfig {
        scenario: id,
        seed: 1,
        replicas: 10_000,
        x0: 0.0,
        horizon: 1.0,
        step: 2f64.powi(-10),
        truncation: 1e-6,
        output: None,
        triplet: pure_jump(0.0),
        measure: MeasureConfig::Atoms(vec![(1.0, 2.0)]),
        coefficients: coefficients(FieldSpec::Logistic(0.0, 1.0, 1.0)),
        diagnostics: DiagnosticsConfig::default(),
    };
    match id {
        ScenarioId::S1 => ScenarioConfig { replicas: 100_000, triplet: pure_jump(0.3), ..base },
        ScenarioId::S2 => ScenarioConfig {
            replicas: 100,
            step: 2f64.powi(-12),
            triplet: pure_jump(0.2),
            measure: MeasureConfig::Atoms(vec![(0.8, 2.0), (-0.6, 1.5), (0.3, 2.0)]),
            coefficients: CoefficientConfig { randomize: true, ..base.coefficients },
            ..base
        },
        ScenarioId::S3 => ScenarioConfig {
            truncation: 2f64.powi(-13),
            measure: MeasureConfig::Family(FamilyConfig::dyadic(12)),
            coefficients: coefficients(FieldSpec::Logistic(0.0, 1.0, 0.25)),
            ..base
        },
        ScenarioId::S4 => ScenarioConfig {
            truncation: 2f64.powi(-13),
            triplet: pure_jump(-12.0),
            measure: MeasureConfig::Family(FamilyConfig::dyadic(12)),
            coefficients: coefficients(FieldSpec::Plateau(0.5, 0.0, 4.0, 1.0, 1.0)),
            ..base
        },
        ScenarioId::S5 => ScenarioConfig {
            replicas: 100_000,
            step: 2f64.powi(-8),
            triplet: pure_jump(0.1),
            measure: MeasureConfig::Atoms(vec![(0.5, 4.0), (-0.4, 2.0), (0.9, 1.0)]),
            coefficients: coefficients(FieldSpec::Logistic(0.2, 1.0, 1.0)),
            ..base
        },
        ScenarioId::S6 => ScenarioConfig {
            replicas: 50,
            triplet: pure_jump(0.05),
            measure: MeasureConfig::Atoms(vec![(0.25, 1.0), (-0.2, 1.0)]),
            coefficients: CoefficientConfig {
                a: FieldSpec::Logistic(0.0, 0.3, 1.0),
                sigma: FieldSpec::ArctanDiffusion,
                randomize: true,
            },
            ..base
        },
        ScenarioId::S7 => ScenarioConfig {
            step: 2f64.powi(-8),
            triplet: TripletConfig { drift: 0.0, brownian_variance: 1.0, compensate: false, brownian_cells_per_unit: 256 },
            measure: MeasureConfig::Atoms(vec![(0.3, 2.0), (-0.5, 1.0)]),
            coefficients: CoefficientConfig {
                a: FieldSpec::Logistic(0.2, 0.5, 1.0),
                sigma: FieldSpec::Logistic(1.0, 0.4, 1.0),
                randomize: false,
            },
            ..base
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listing_is_complete_and_ordered() {
        let text = list_scenarios();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        for (i, line) in lines.iter().enumerate() {
            assert!(line.starts_with(&format!("S{}", i + 1)));
            assert!(line.contains("claim: "));
        }
        assert_eq!(text, list_scenarios());
    }

    #[test]
    fn ids_parse_case_insensitively() {
        assert_eq!("s4".parse::<ScenarioId>().unwrap(), ScenarioId::S4);
        assert_eq!(" S7 ".parse::<ScenarioId>().unwrap(), ScenarioId::S7);
        assert!("S0".parse::<ScenarioId>().is_err());
    }
}
