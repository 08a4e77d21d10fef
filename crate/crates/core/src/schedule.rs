//! Decreasing gain sequences `gamma / (n + 1)^alpha`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which limit theorem applies to a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `1/2 < alpha < 1`: the limit covariance solves `A V + V A' = Sigma`.
    #[serde(rename = "alpha_lt_1")]
    AlphaLt1,
    /// `alpha = 1`: requires `gamma A - I/2` positive definite.
    #[serde(rename = "alpha_eq_1")]
    AlphaEq1,
}

/// Gain sequence `gain(n) = gamma / (n + 1)^alpha` with `gamma > 0` and
/// `1/2 < alpha <= 1`.
///
/// The step `X_n -> X_{n+1}` uses `gain(n + 1)`; see [`GainSchedule::step_gain`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct GainSchedule {
    gamma: f64,
    alpha: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    gamma: f64,
    alpha: f64,
}

impl TryFrom<RawSchedule> for GainSchedule {
    type Error = Error;
    fn try_from(raw: RawSchedule) -> Result<Self> {
        GainSchedule::new(raw.gamma, raw.alpha)
    }
}

impl From<GainSchedule> for RawSchedule {
    fn from(s: GainSchedule) -> Self {
        RawSchedule {
            gamma: s.gamma,
            alpha: s.alpha,
        }
    }
}

impl GainSchedule {
    pub fn new(gamma: f64, alpha: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "gamma must be positive and finite, got {gamma}"
            )));
        }
        if !(alpha > 0.5 && alpha <= 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "alpha must lie in (1/2, 1], got {alpha}"
            )));
        }
        Ok(GainSchedule { gamma, alpha })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn regime(&self) -> Regime {
        if self.alpha == 1.0 {
            Regime::AlphaEq1
        } else {
            Regime::AlphaLt1
        }
    }

    /// `gamma_n = gamma / (n + 1)^alpha`.
    #[inline]
    pub fn gain(&self, n: u64) -> f64 {
        let base = (n as f64) + 1.0;
        if self.alpha == 1.0 {
            self.gamma / base
        } else {
            self.gamma / base.powf(self.alpha)
        }
    }

    /// Gain used by the step from index `n` to `n + 1`, i.e. `gamma_{n+1}`.
    #[inline]
    pub fn step_gain(&self, n: u64) -> f64 {
        self.gain(n + 1)
    }
}
