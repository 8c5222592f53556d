//! The experiment configuration document (JSON).

use bpire_core::env::EnvironmentModel;
use bpire_core::sampler::DEFAULT_PROMOTION_THRESHOLD;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Rate,
    WalkOracle,
    Elogw,
    Decay,
    BerryEsseen,
    Laplace,
    Moments,
    Validate,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Rate => "rate",
            ExperimentKind::WalkOracle => "walk-oracle",
            ExperimentKind::Elogw => "elogw",
            ExperimentKind::Decay => "decay",
            ExperimentKind::BerryEsseen => "berry-esseen",
            ExperimentKind::Laplace => "laplace",
            ExperimentKind::Moments => "moments",
            ExperimentKind::Validate => "validate",
        }
    }
}

/// Inclusive evenly spaced grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentModel,
    pub kind: ExperimentKind,
    #[serde(default = "default_x_grid")]
    pub x_grid: GridSpec,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "one")]
    pub q: f64,
    #[serde(default = "two")]
    pub r: f64,
    #[serde(default = "two")]
    pub delta: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "default_threshold")]
    pub promotion_threshold: u64,
    /// Worker threads; 0 picks automatically.
    #[serde(default)]
    pub threads: usize,
    /// Laplace-transform arguments.
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
}

fn default_x_grid() -> GridSpec {
    GridSpec { min: -1.0, max: 1.0, step: 1.0 }
}

fn default_n_list() -> Vec<usize> {
    vec![16, 64, 256]
}

fn default_replicates() -> usize {
    100_000
}

fn default_horizon() -> usize {
    30
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn default_threshold() -> u64 {
    DEFAULT_PROMOTION_THRESHOLD
}

fn default_t_grid() -> Vec<f64> {
    [2.0f64, 4.0, 8.0].iter().map(|k| k.exp()).collect()
}

impl ExperimentConfig {
    /// A config with every optional key at its default.
    pub fn new(environment: EnvironmentModel, kind: ExperimentKind) -> Self {
        Self {
            environment,
            kind,
            x_grid: default_x_grid(),
            n_list: default_n_list(),
            replicates: default_replicates(),
            master_seed: 0,
            horizon: default_horizon(),
            q: one(),
            r: two(),
            delta: two(),
            p: two(),
            promotion_threshold: default_threshold(),
            threads: 0,
            t_grid: default_t_grid(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_fills_defaults() {
        let text = r#"{
            "environment": {"atoms": [
                {"offspring": {"kind": "shifted_poisson", "lambda": 1.0}, "immigration": {"kind": "poisson", "nu": 1.0}, "prob": 0.5},
                {"offspring": {"kind": "shifted_poisson", "lambda": 2.0}, "immigration": {"kind": "poisson", "nu": 1.0}, "prob": 0.5}
            ]},
            "kind": "validate"
        }"#;
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c, ExperimentConfig::new(EnvironmentModel::reference_a(), ExperimentKind::Validate));
    }

    #[test]
    fn unknown_key_is_named() {
        let text = r#"{"environment": {"atoms": []}, "kind": "rate", "replicate": 5}"#;
        let e = ExperimentConfig::parse(text).unwrap_err().to_string();
        assert!(e.contains("replicate"), "{e}");
        assert!(e.contains("line"), "{e}");
    }

    #[test]
    fn kinds_are_kebab_case() {
        for k in [
            ExperimentKind::Rate,
            ExperimentKind::WalkOracle,
            ExperimentKind::Elogw,
            ExperimentKind::Decay,
            ExperimentKind::BerryEsseen,
            ExperimentKind::Laplace,
            ExperimentKind::Moments,
            ExperimentKind::Validate,
        ] {
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.as_str()));
        }
    }

    #[test]
    fn large_seed_roundtrips_in_decimal() {
        let mut c = ExperimentConfig::new(EnvironmentModel::reference_a(), ExperimentKind::Rate);
        c.master_seed = u64::MAX;
        let s = c.to_json();
        assert!(s.contains("18446744073709551615"));
        assert_eq!(ExperimentConfig::parse(&s).unwrap(), c);
    }
}
