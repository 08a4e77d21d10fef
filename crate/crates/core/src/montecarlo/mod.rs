//! Seeded replicate ensembles and the empirical law of `Δ_n`.
//!
//! Replicate `r` draws from its own counter-mode stream
//! ([`crate::rng::replicate_rng`]), runs on any worker, and results are
//! reduced in replicate order. Summaries are therefore bit-identical for any
//! thread count.

mod output;
mod stats;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{limit_covariance, LimitCovariance};
use crate::compact::CompactFamily;
use crate::error::{Error, Result};
use crate::iterate::{Algorithm, StepOutcome, Stepper, TruncatedState};
use crate::problems::{boundary_margin, builtin, Problem, ProblemParams};
use crate::rng::{replicate_rng, GENERATOR};
use crate::schedule::{GainSchedule, Regime};

pub use output::{write_samples_csv, write_summary_json, CSV_HEADER_PREFIX, SCHEMA_VERSION};
pub use stats::{
    cov_rel_err, kolmogorov_sf, ks_test, mean_and_covariance, normality_report, KsResult,
    NormalityReport, KS_LEVEL, MIN_SAMPLES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub problem: ProblemParams,
    pub schedule: GainSchedule,
    pub family: CompactFamily,
    pub x0: Vec<f64>,
    pub n_steps: u64,
    pub replicates: usize,
    pub base_seed: u64,
    /// Strictly increasing step indices at which `Δ_n` is recorded.
    pub checkpoints: Vec<u64>,
    #[serde(default)]
    pub algorithm: Algorithm,
    /// Radius of the restricted second moment; `min(1, μ/2)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl EnsembleConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidEnsemble(msg));
        if self.replicates < 2 {
            return bad(format!(
                "replicates must be at least 2, got {}",
                self.replicates
            ));
        }
        if self.n_steps == 0 {
            return bad("n_steps must be at least 1".into());
        }
        if self.checkpoints.is_empty() {
            return bad("at least one checkpoint is required".into());
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return bad("checkpoints must be strictly increasing".into());
        }
        if let Some(&last) = self.checkpoints.last() {
            if last > self.n_steps {
                return bad(format!(
                    "checkpoint {last} exceeds n_steps = {}",
                    self.n_steps
                ));
            }
        }
        if self.x0.len() != dim {
            return Err(Error::Dimension {
                what: "x0",
                expected: dim,
                got: self.x0.len(),
            });
        }
        if self.family.dim() != dim {
            return Err(Error::Dimension {
                what: "compact family",
                expected: dim,
                got: self.family.dim(),
            });
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "x0",
                step: 0,
            });
        }
        if let Some(eta) = self.eta {
            if !(eta >= 0.0) {
                return bad(format!("eta must be non-negative, got {eta}"));
            }
        }
        Ok(())
    }
}

/// Per-replicate outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub replicate: u64,
    /// `Δ_n` at each checkpoint reached.
    pub deltas: Vec<Vec<f64>>,
    /// `sup_{N0 ≤ m ≤ n} |X_m − x*| ≤ η` at each checkpoint reached.
    pub within_eta: Vec<bool>,
    pub final_sigma: u64,
    /// Last step index at which `σ` was incremented.
    pub last_increment: Option<u64>,
    pub diverged_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub sigma: u64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationStats {
    /// Final `σ_n` over every replicate; counts sum to `M`.
    pub histogram: Vec<HistogramBin>,
    pub fraction_zero: f64,
    pub max_sigma: u64,
    /// Among non-diverged replicates, the share with no increment in the
    /// second half of the run.
    pub stabilized_fraction: f64,
    pub divergence_count: usize,
}

pub fn truncation_stats(records: &[ReplicateRecord], n_steps: u64) -> TruncationStats {
    let mut histogram: Vec<HistogramBin> = Vec::new();
    let mut sigmas: Vec<u64> = records.iter().map(|r| r.final_sigma).collect();
    sigmas.sort_unstable();
    for s in sigmas {
        match histogram.last_mut() {
            Some(bin) if bin.sigma == s => bin.count += 1,
            _ => histogram.push(HistogramBin { sigma: s, count: 1 }),
        }
    }
    let m = records.len().max(1) as f64;
    let alive: Vec<&ReplicateRecord> = records.iter().filter(|r| r.diverged_at.is_none()).collect();
    let half = n_steps / 2;
    let stable = alive
        .iter()
        .filter(|r| r.last_increment.is_none_or(|k| k < half))
        .count();
    TruncationStats {
        fraction_zero: records.iter().filter(|r| r.final_sigma == 0).count() as f64 / m,
        max_sigma: records.iter().map(|r| r.final_sigma).max().unwrap_or(0),
        stabilized_fraction: if alive.is_empty() {
            0.0
        } else {
            stable as f64 / alive.len() as f64
        },
        divergence_count: records.len() - alive.len(),
        histogram,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub n: u64,
    /// Non-diverged replicates contributing.
    pub samples: usize,
    pub mean: Vec<f64>,
    #[serde(with = "crate::linalg::rows_serde")]
    pub covariance: DMatrix<f64>,
    pub cov_rel_err: f64,
    /// `E[|Δ_n|² ; sup_{N0 ≤ m ≤ n} |X_m − x*| ≤ η]`.
    pub restricted_second_moment: f64,
    /// Absent when `V` is singular or fewer than [`MIN_SAMPLES`] samples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normality: Option<NormalityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub schema_version: u32,
    pub problem: String,
    pub dim: usize,
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub alpha: f64,
    pub regime: Regime,
    pub replicates: usize,
    pub n_steps: u64,
    pub base_seed: u64,
    pub generator: String,
    pub eta: f64,
    /// Start of the window of the restricted second moment.
    pub n0: u64,
    pub theory: LimitCovariance,
    pub checkpoints: Vec<CheckpointSummary>,
    pub truncation: TruncationStats,
    pub divergence_count: usize,
    /// `cov_rel_err` at the last checkpoint.
    pub cov_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub summary: EnsembleSummary,
    pub records: Vec<ReplicateRecord>,
    pub checkpoints: Vec<u64>,
}

/// Runs a zoo problem. `threads = 0` uses every core.
pub fn run_ensemble(config: &EnsembleConfig, threads: usize) -> Result<EnsembleRun> {
    let problem = builtin(&config.problem)?;
    run_ensemble_with(&problem, config, threads)
}

/// Runs `problem`; `config.problem` is ignored.
pub fn run_ensemble_with(
    problem: &Problem,
    config: &EnsembleConfig,
    threads: usize,
) -> Result<EnsembleRun> {
    config.validate(problem.dim())?;
    // V first: an α = 1 configuration outside the regime stops here.
    let theory = limit_covariance(problem.jacobian(), problem.noise_cov(), &config.schedule)?;
    let eta = config
        .eta
        .unwrap_or_else(|| (boundary_margin(problem.root(), &config.family) / 2.0).min(1.0));
    let n0 = config.checkpoints[0] / 2;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidEnsemble(format!("thread pool: {e}")))?;
    let records: Vec<ReplicateRecord> = pool.install(|| {
        (0..config.replicates as u64)
            .into_par_iter()
            .map(|r| simulate(problem, config, r, eta, n0))
            .collect::<Result<Vec<_>>>()
    })?;

    let checkpoints = summarize_checkpoints(&records, config, &theory.v)?;
    let truncation = truncation_stats(&records, config.n_steps);
    let summary = EnsembleSummary {
        schema_version: SCHEMA_VERSION,
        problem: problem.name().to_string(),
        dim: problem.dim(),
        algorithm: config.algorithm,
        gamma: config.schedule.gamma(),
        alpha: config.schedule.alpha(),
        regime: config.schedule.regime(),
        replicates: config.replicates,
        n_steps: config.n_steps,
        base_seed: config.base_seed,
        generator: GENERATOR.to_string(),
        eta,
        n0,
        cov_rel_err: checkpoints.last().map_or(f64::NAN, |c| c.cov_rel_err),
        divergence_count: truncation.divergence_count,
        theory,
        checkpoints,
        truncation,
    };
    Ok(EnsembleRun {
        summary,
        records,
        checkpoints: config.checkpoints.clone(),
    })
}

fn simulate(
    problem: &Problem,
    config: &EnsembleConfig,
    replicate: u64,
    eta: f64,
    n0: u64,
) -> Result<ReplicateRecord> {
    let root = problem.root();
    let schedule = &config.schedule;
    let mut rng = replicate_rng(config.base_seed, replicate);
    let mut stepper = Stepper::new(problem, schedule, &config.family, config.algorithm);
    let mut state = TruncatedState::new(config.x0.clone());
    let eta2 = eta * eta;
    let dist2 = |x: &[f64]| -> f64 { x.iter().zip(root).map(|(a, b)| (a - b) * (a - b)).sum() };

    let mut record = ReplicateRecord {
        replicate,
        deltas: Vec::with_capacity(config.checkpoints.len()),
        within_eta: Vec::with_capacity(config.checkpoints.len()),
        final_sigma: 0,
        last_increment: None,
        diverged_at: None,
    };
    let mut within = n0 > 0 || dist2(&state.x) <= eta2;
    let mut next = 0;
    let mut observe = |state: &TruncatedState, within: bool, next: &mut usize| {
        while *next < config.checkpoints.len() && config.checkpoints[*next] == state.n {
            let scale = schedule.gain(state.n).sqrt();
            record.deltas.push(
                state
                    .x
                    .iter()
                    .zip(root)
                    .map(|(x, r)| (x - r) / scale)
                    .collect(),
            );
            record.within_eta.push(within);
            *next += 1;
        }
    };
    observe(&state, within, &mut next);

    for step in 0..config.n_steps {
        match stepper.step(&mut state, &mut rng) {
            Ok(StepOutcome::Moved { truncated }) => {
                if truncated {
                    record.last_increment = Some(step);
                }
            }
            Ok(StepOutcome::Diverged) | Err(Error::NonFinite { .. }) => {
                record.diverged_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        }
        if within && state.n >= n0 && dist2(&state.x) > eta2 {
            within = false;
        }
        observe(&state, within, &mut next);
    }
    record.final_sigma = state.sigma;
    Ok(record)
}

fn summarize_checkpoints(
    records: &[ReplicateRecord],
    config: &EnsembleConfig,
    v: &DMatrix<f64>,
) -> Result<Vec<CheckpointSummary>> {
    let d = v.nrows();
    let alive: Vec<&ReplicateRecord> = records.iter().filter(|r| r.diverged_at.is_none()).collect();
    let v_is_pd = v.clone().cholesky().is_some();
    config
        .checkpoints
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let samples: Vec<Vec<f64>> = alive.iter().map(|r| r.deltas[i].clone()).collect();
            let (mean, covariance) = mean_and_covariance(&samples, d);
            let restricted = if alive.is_empty() {
                f64::NAN
            } else {
                alive
                    .iter()
                    .filter(|r| r.within_eta[i])
                    .map(|r| r.deltas[i].iter().map(|x| x * x).sum::<f64>())
                    .sum::<f64>()
                    / alive.len() as f64
            };
            let normality = if v_is_pd && samples.len() >= MIN_SAMPLES {
                Some(normality_report(&samples, v)?)
            } else {
                None
            };
            Ok(CheckpointSummary {
                n,
                samples: samples.len(),
                mean: mean.iter().copied().collect(),
                cov_rel_err: cov_rel_err(&covariance, v),
                covariance,
                restricted_second_moment: restricted,
                normality,
            })
        })
        .collect()
}
