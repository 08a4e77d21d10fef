//! Experiment configuration: a TOML document with fixed sections.
//!
//! ```toml
//! [problem]            # zoo entry: name plus its parameters
//! name = "linear"
//! matrix = [[2.0]]
//! root = [1.0]
//! [problem.noise]      # optional; Gaussian with identity covariance by default
//! kind = "gaussian"
//!
//! [schedule]           # gain gamma / (n + 1)^alpha
//! gamma = 1.0
//! alpha = 0.7
//!
//! [compacts]           # K_j = center + r0 * growth^j * (unit ball | box)
//! shape = "ball"
//! center = [0.0]
//! r0 = 2.0
//! growth = 2.0
//!
//! [run]
//! x0 = [0.0]
//! n_steps = 20000
//! replicates = 5000
//! checkpoints = [1000, 10000, 20000]
//! base_seed = 2024
//! ```
//!
//! Every table rejects unknown keys.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use truncsa::iterate::Algorithm;
use truncsa::problems::CheckOptions;
use truncsa::{builtin, CompactFamily, EnsembleConfig, GainSchedule, Problem, ProblemParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemParams,
    pub schedule: GainSchedule,
    pub compacts: CompactFamily,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub x0: Vec<f64>,
    pub n_steps: u64,
    pub replicates: usize,
    pub checkpoints: Vec<u64>,
    pub base_seed: u64,
    #[serde(default)]
    pub algorithm: Algorithm,
    /// Radius of the restricted second moment; `min(1, μ/2)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// `run` fails when `cov_rel_err` at the last checkpoint exceeds this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_tolerance: Option<f64>,
    /// Artifact directory, relative to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// Sampling settings of `check`; omitted keys keep the library defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_per_axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    /// Parse errors carry the line, column and offending key.
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is representable in TOML")
    }

    /// Resolves the problem against the zoo and checks cross-section
    /// consistency.
    pub fn validate(&self) -> Result<Problem, String> {
        let problem = builtin(&self.problem).map_err(|e| format!("[problem] {e}"))?;
        self.ensemble()
            .validate(problem.dim())
            .map_err(|e| format!("[run] {e}"))?;
        if let Some(tol) = self.run.cov_tolerance {
            if !(tol > 0.0) {
                return Err(format!("[run] cov_tolerance must be positive, got {tol}"));
            }
        }
        Ok(problem)
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            problem: self.problem.clone(),
            schedule: self.schedule,
            family: self.compacts.clone(),
            x0: self.run.x0.clone(),
            n_steps: self.run.n_steps,
            replicates: self.run.replicates,
            base_seed: self.run.base_seed,
            checkpoints: self.run.checkpoints.clone(),
            algorithm: self.run.algorithm,
            eta: self.run.eta,
        }
    }

    pub fn check_options(&self) -> CheckOptions {
        let mut opts = CheckOptions::default();
        if let Some(c) = &self.check {
            opts.radius = c.radius.unwrap_or(opts.radius);
            opts.grid_per_axis = c.grid_per_axis.unwrap_or(opts.grid_per_axis);
            opts.cloud = c.cloud.unwrap_or(opts.cloud);
            opts.seed = c.seed.unwrap_or(opts.seed);
        }
        opts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use truncsa::problems::{NoiseKind, NoiseParams};

    const BENCHMARK: &str = include_str!("../configs/linear_alpha07.cfg");

    #[test]
    fn benchmark_parses_and_resolves() {
        let cfg = ExperimentConfig::parse(BENCHMARK).unwrap();
        assert_eq!(cfg.problem.name, "linear");
        assert_eq!(cfg.schedule.alpha(), 0.7);
        assert_eq!(cfg.run.replicates, 5000);
        assert_eq!(cfg.validate().unwrap().dim(), 1);
    }

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = ExperimentConfig::parse(BENCHMARK).unwrap();
        cfg.problem = cfg.problem.with_noise(NoiseParams {
            kind: NoiseKind::HeavyTailed,
            covariance: Some(vec![vec![0.3]]),
            state_scale: None,
            rho: Some(0.25),
            tail_index: None,
        });
        cfg.compacts = CompactFamily::new(
            truncsa::Shape::Box { aspect: vec![1.5] },
            vec![0.1],
            0.7,
            3.0,
        )
        .unwrap();
        cfg.run.eta = Some(0.1 + 0.2);
        cfg.run.algorithm = Algorithm::RobbinsMonro;
        cfg.run.out_dir = Some("a/b".into());
        cfg.check = Some(CheckSection {
            radius: Some(2.5),
            cloud: Some(10),
            ..Default::default()
        });
        let text = cfg.to_toml();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg, "{text}");
        let again = ExperimentConfig::parse(BENCHMARK).unwrap();
        assert_eq!(ExperimentConfig::parse(&again.to_toml()).unwrap(), again);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        for (from, to, key) in [
            ("alpha = 0.7", "alpha = 0.7\nbeta = 1.0", "beta"),
            ("r0 = 2.0", "r0 = 2.0\nradius = 1.0", "radius"),
            ("base_seed", "seeed = 1\nbase_seed", "seeed"),
            ("[run]", "[runs]\nx = 1\n[run]", "runs"),
        ] {
            let err = ExperimentConfig::parse(&BENCHMARK.replacen(from, to, 1)).unwrap_err();
            assert!(err.contains(key), "{key}: {err}");
            assert!(err.contains("line"), "{err}");
        }
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = ExperimentConfig::parse(&BENCHMARK.replacen("alpha = 0.7", "alpha = 0.4", 1))
            .unwrap_err();
        assert!(err.contains("alpha"), "{err}");
        let err = ExperimentConfig::parse(&BENCHMARK.replacen("growth = 2.0", "growth = 1.0", 1))
            .unwrap_err();
        assert!(err.contains("growth"), "{err}");
        let err =
            ExperimentConfig::parse(&BENCHMARK.replacen("n_steps = 20000", "n_steps = \"x\"", 1))
                .unwrap_err();
        assert!(err.contains("n_steps"), "{err}");
    }

    #[test]
    fn names_must_resolve_against_the_zoo() {
        let cfg =
            ExperimentConfig::parse(&BENCHMARK.replacen("\"linear\"", "\"quartic\"", 1)).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(
            err.starts_with("[problem]") && err.contains("quartic"),
            "{err}"
        );
        let cfg = ExperimentConfig::parse(&BENCHMARK.replacen("x0 = [0.0]", "x0 = [0.0, 1.0]", 1))
            .unwrap();
        assert!(cfg.validate().unwrap_err().contains("x0"));
    }
}
