//! Randomly truncated Robbins–Monro stochastic approximation.
//!
//! The iteration `X_{n+1} = X_n − γ_{n+1} U(X_n, Z_{n+1})` is kept inside an
//! increasing family of compacts `K_0 ⊂ K_1 ⊂ …`: a step that leaves
//! `K_{σ_n}` resets to `X_0` and moves to the next compact. Under the usual
//! hypotheses the normalized error `(X_n − x*)/√γ_n` is asymptotically
//! `N(0, V)`. This crate provides the iteration ([`iterate`]), a problem zoo
//! ([`problems`]), the covariance `V` ([`asymptotics`]), numerical checks of
//! the weighted-sum machinery behind the limit theorem ([`proofcheck`]) and
//! seeded Monte Carlo ensembles that compare the empirical law with
//! `N(0, V)` ([`montecarlo`]).

pub mod asymptotics;
pub mod compact;
pub mod error;
pub mod iterate;
pub mod linalg;
pub mod montecarlo;
pub mod problems;
pub mod proofcheck;
pub mod rng;
pub mod schedule;

pub use asymptotics::{limit_covariance, matrix_exp, solve_lyapunov, LimitCovariance};
pub use compact::{CompactFamily, Shape};
pub use error::{Error, Result};
pub use iterate::{
    additive_update, run, step_robbins_monro, step_truncated, Algorithm, Divergence, RunOptions,
    StepRecord, Trajectory, TruncatedState, TruncationTerm,
};
pub use montecarlo::{run_ensemble, EnsembleConfig, EnsembleRun, EnsembleSummary};
pub use problems::{builtin, check_hypotheses, Problem, ProblemParams};
pub use schedule::{GainSchedule, Regime};
