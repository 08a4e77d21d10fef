//! The randomly truncated Robbins–Monro iteration and the plain baseline.
//!
//! One truncated step reads
//!
//! ```text
//! X_{n+1/2} = X_n - g u(X_n) - g dM_{n+1},           g = gamma_{n+1}
//! X_{n+1}   = X_{n+1/2},  sigma_{n+1} = sigma_n       if X_{n+1/2} ∈ K_{sigma_n}
//! X_{n+1}   = X_0,        sigma_{n+1} = sigma_n + 1   otherwise
//! ```
//!
//! and can equivalently be written in additive form
//! `X_{n+1} = X_n - g u(X_n) - g dM_{n+1} + g p_{n+1}` with the truncation term
//! `p_{n+1} = (u(X_n) + dM_{n+1} + (X_0 - X_n) / g) 1{X_{n+1/2} ∉ K_{sigma_n}}`.
//!
//! The iterator never draws randomness itself: callers pass `u(X_n)` and the
//! noise draw `dM_{n+1}`. [`run`] is the seeded driver on top of it.

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;

use crate::compact::CompactFamily;
use crate::error::{Error, Result};
use crate::problems::Problem;
use crate::rng::replicate_rng;
use crate::schedule::GainSchedule;

/// `(X_n, sigma_n, n)` together with the reset point `X_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedState {
    pub x: Vec<f64>,
    pub sigma: u64,
    pub n: u64,
    pub x0: Vec<f64>,
}

impl TruncatedState {
    pub fn new(x0: Vec<f64>) -> Self {
        TruncatedState {
            x: x0.clone(),
            sigma: 0,
            n: 0,
            x0,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Advance in place. `x_half` receives `X_{n+1/2}`; returns whether the
    /// step truncated.
    #[inline]
    pub fn advance(
        &mut self,
        schedule: &GainSchedule,
        family: &CompactFamily,
        drift: &[f64],
        noise: &[f64],
        x_half: &mut [f64],
    ) -> Result<bool> {
        let d = self.x.len();
        check_len("drift", d, drift.len())?;
        check_len("noise", d, noise.len())?;
        check_len("x_half", d, x_half.len())?;
        if drift.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "drift",
                step: self.n,
            });
        }
        if noise.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "noise",
                step: self.n,
            });
        }
        let g = schedule.step_gain(self.n);
        half_step(&self.x, g, drift, noise, x_half);
        // A non-finite candidate can never belong to a compact set.
        let inside = x_half.iter().all(|v| v.is_finite()) && family.contains(self.sigma, x_half);
        if inside {
            self.x.copy_from_slice(x_half);
        } else {
            self.x.copy_from_slice(&self.x0);
            self.sigma += 1;
        }
        self.n += 1;
        Ok(!inside)
    }
}

#[inline]
fn half_step(x: &[f64], g: f64, drift: &[f64], noise: &[f64], out: &mut [f64]) {
    for i in 0..x.len() {
        out[i] = x[i] - g * drift[i] - g * noise[i];
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}

/// Truncation term `p_{n+1}`.
///
/// A reset keeps `p` as an exact rational, `(X_0 - X_{n+1/2}) / gamma_{n+1}`,
/// which equals `u + dM + (X_0 - X_n) / gamma_{n+1}` for the computed
/// `X_{n+1/2}`. A rounded `p` cannot make the additive form land on `X_0`
/// exactly; the exact one does.
#[derive(Debug, Clone, PartialEq)]
pub enum TruncationTerm {
    Zero { dim: usize },
    Reset { exact: Vec<BigRational> },
}

impl TruncationTerm {
    pub fn is_zero(&self) -> bool {
        match self {
            TruncationTerm::Zero { .. } => true,
            TruncationTerm::Reset { exact } => exact.iter().all(Zero::is_zero),
        }
    }

    /// Nearest `f64` values of `p`.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            TruncationTerm::Zero { dim } => vec![0.0; *dim],
            TruncationTerm::Reset { exact } => exact
                .iter()
                .map(|q| q.to_f64().unwrap_or(f64::NAN))
                .collect(),
        }
    }
}

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite value")
}

/// Inputs and by-products of one truncated step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub x_half: Vec<f64>,
    pub p: TruncationTerm,
    pub dm: Vec<f64>,
    pub truncated: bool,
}

/// One step of the truncated iteration from `state`.
///
/// `drift_value` must be `u(X_n)` and `noise` the draw `dM_{n+1}`.
pub fn step_truncated(
    state: &TruncatedState,
    schedule: &GainSchedule,
    family: &CompactFamily,
    drift_value: &[f64],
    noise: &[f64],
) -> Result<(TruncatedState, StepRecord)> {
    let mut next = state.clone();
    let mut x_half = vec![0.0; state.dim()];
    let truncated = next.advance(schedule, family, drift_value, noise, &mut x_half)?;
    let p = if truncated {
        let g = exact(schedule.step_gain(state.n));
        if x_half.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "pre-truncation iterate",
                step: state.n,
            });
        }
        let exact_p = state
            .x0
            .iter()
            .zip(&x_half)
            .map(|(&x0, &h)| (exact(x0) - exact(h)) / &g)
            .collect();
        TruncationTerm::Reset { exact: exact_p }
    } else {
        TruncationTerm::Zero { dim: state.dim() }
    };
    Ok((
        next,
        StepRecord {
            x_half,
            p,
            dm: noise.to_vec(),
            truncated,
        },
    ))
}

/// Additive form `X_n - g u(X_n) - g dM_{n+1} + g p_{n+1}`.
///
/// The first three terms are evaluated in floating point exactly as the
/// half-step is; a nonzero truncation term is added in exact arithmetic and
/// rounded once.
pub fn additive_update(
    x: &[f64],
    gain: f64,
    drift_value: &[f64],
    noise: &[f64],
    p: &TruncationTerm,
) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    half_step(x, gain, drift_value, noise, &mut out);
    if let TruncationTerm::Reset { exact: terms } = p {
        let g = exact(gain);
        for (o, q) in out.iter_mut().zip(terms) {
            let sum = exact(*o) + &g * q;
            *o = sum.to_f64().unwrap_or(f64::NAN);
        }
    }
    out
}

/// The iterate left a finite range (plain Robbins–Monro only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Divergence {
    pub step: u64,
}

/// One plain Robbins–Monro step `X_n - gamma_{n+1} (u(X_n) + dM_{n+1})`.
///
/// Non-finite inputs or output are reported as a [`Divergence`] at step `n`.
pub fn step_robbins_monro(
    x: &[f64],
    schedule: &GainSchedule,
    drift_value: &[f64],
    noise: &[f64],
    n: u64,
) -> std::result::Result<Vec<f64>, Divergence> {
    let mut out = vec![0.0; x.len()];
    rm_in_place(x, schedule.step_gain(n), drift_value, noise, &mut out)
        .map_err(|_| Divergence { step: n })?;
    Ok(out)
}

#[inline]
pub(crate) fn rm_in_place(
    x: &[f64],
    gain: f64,
    drift: &[f64],
    noise: &[f64],
    out: &mut [f64],
) -> std::result::Result<(), ()> {
    if drift.iter().chain(noise).any(|v| !v.is_finite()) {
        return Err(());
    }
    half_step(x, gain, drift, noise, out);
    if out.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(())
    }
}

/// Which recursion a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Truncated,
    RobbinsMonro,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub n_steps: u64,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Keep every `thin`-th iterate (including `X_0`) when set.
    pub thin: Option<u64>,
}

impl RunOptions {
    pub fn new(n_steps: u64, seed: u64) -> Self {
        RunOptions {
            n_steps,
            seed,
            algorithm: Algorithm::Truncated,
            thin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub final_state: TruncatedState,
    /// Step indices `n` at which `X_{n+1/2} ∉ K_{sigma_n}`.
    pub truncation_steps: Vec<u64>,
    pub diverged_at: Option<u64>,
    pub thinned: Vec<(u64, Vec<f64>)>,
}

/// Reusable per-trajectory buffers and the step loop shared with the
/// Monte Carlo harness.
pub(crate) struct Stepper<'a> {
    pub problem: &'a Problem,
    pub schedule: &'a GainSchedule,
    pub family: &'a CompactFamily,
    pub algorithm: Algorithm,
    drift: Vec<f64>,
    noise: Vec<f64>,
    scratch: Vec<f64>,
}

pub(crate) enum StepOutcome {
    Moved { truncated: bool },
    Diverged,
}

impl<'a> Stepper<'a> {
    pub fn new(
        problem: &'a Problem,
        schedule: &'a GainSchedule,
        family: &'a CompactFamily,
        algorithm: Algorithm,
    ) -> Self {
        let d = problem.dim();
        Stepper {
            problem,
            schedule,
            family,
            algorithm,
            drift: vec![0.0; d],
            noise: vec![0.0; d],
            scratch: vec![0.0; d],
        }
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        state: &mut TruncatedState,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        self.problem.drift(&state.x, &mut self.drift);
        self.problem.noise(&state.x, rng, &mut self.noise);
        match self.algorithm {
            Algorithm::Truncated => {
                let truncated = state.advance(
                    self.schedule,
                    self.family,
                    &self.drift,
                    &self.noise,
                    &mut self.scratch,
                )?;
                Ok(StepOutcome::Moved { truncated })
            }
            Algorithm::RobbinsMonro => {
                let g = self.schedule.step_gain(state.n);
                match rm_in_place(&state.x, g, &self.drift, &self.noise, &mut self.scratch) {
                    Ok(()) => {
                        state.x.copy_from_slice(&self.scratch);
                        state.n += 1;
                        Ok(StepOutcome::Moved { truncated: false })
                    }
                    Err(()) => Ok(StepOutcome::Diverged),
                }
            }
        }
    }
}

/// Seeded trajectory of `n_steps` steps from `x0`.
///
/// The result depends only on the arguments. Non-finite drift or noise in the
/// truncated iteration is an error naming the step; divergence of the plain
/// iteration is reported in [`Trajectory::diverged_at`].
pub fn run(
    problem: &Problem,
    schedule: &GainSchedule,
    family: &CompactFamily,
    x0: &[f64],
    opts: &RunOptions,
) -> Result<Trajectory> {
    if opts.n_steps == 0 {
        return Err(Error::InvalidEnsemble("n_steps must be at least 1".into()));
    }
    check_len("x0", problem.dim(), x0.len())?;
    check_len("compact family", problem.dim(), family.dim())?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "x0",
            step: 0,
        });
    }
    let mut rng = replicate_rng(opts.seed, 0);
    let mut state = TruncatedState::new(x0.to_vec());
    let mut stepper = Stepper::new(problem, schedule, family, opts.algorithm);
    let mut truncation_steps = Vec::new();
    let mut thinned = Vec::new();
    let mut diverged_at = None;
    if opts.thin.is_some() {
        thinned.push((0, state.x.clone()));
    }
    for n in 0..opts.n_steps {
        match stepper.step(&mut state, &mut rng)? {
            StepOutcome::Moved { truncated } => {
                if truncated {
                    truncation_steps.push(n);
                }
            }
            StepOutcome::Diverged => {
                diverged_at = Some(n);
                break;
            }
        }
        if let Some(k) = opts.thin {
            if k > 0 && state.n.is_multiple_of(k) {
                thinned.push((state.n, state.x.clone()));
            }
        }
    }
    Ok(Trajectory {
        final_state: state,
        truncation_steps,
        diverged_at,
        thinned,
    })
}
