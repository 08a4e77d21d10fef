//! Limit covariance of the normalized error `Δ_n = (X_n − x*)/√γ_n`.
//!
//! For `α < 1`, `V = ∫ e^{−At} Σ e^{−A't} dt`, i.e. `AV + VA' = Σ`.
//! For `α = 1`, `V = γ ∫ e^{(I/2 − γA)t} Σ e^{(I/2 − γA)'t} dt`, i.e.
//! `(γA − I/2)V + V(γA − I/2)' = γΣ`. The scalar case gives
//! `V = γσ²/(2γa − 1)`, which is the limit of the exact variance recursion.

mod expm;
mod lyapunov;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use expm::matrix_exp;
pub use lyapunov::{lyapunov_residual, solve_lyapunov, MAX_DIM};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, ensure_square, sym_min_eigenvalue};
use crate::problems::h5_min_eigenvalue;
use crate::schedule::{GainSchedule, Regime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCovariance {
    #[serde(with = "crate::linalg::rows_serde")]
    pub v: DMatrix<f64>,
    pub regime: Regime,
    /// Drift matrix of the linearized weighted sums: `A` for `α < 1`,
    /// `A − I/(2γ)` for `α = 1`.
    #[serde(with = "crate::linalg::rows_serde")]
    pub q: DMatrix<f64>,
}

impl LimitCovariance {
    pub fn dim(&self) -> usize {
        self.v.nrows()
    }
}

/// Right-hand side and operator of the Lyapunov equation defining `V`.
pub fn lyapunov_system(
    a: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    schedule: &GainSchedule,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = a.nrows();
    match schedule.regime() {
        Regime::AlphaLt1 => (a.clone(), sigma.clone()),
        Regime::AlphaEq1 => {
            let g = schedule.gamma();
            (a * g - DMatrix::identity(d, d) * 0.5, sigma * g)
        }
    }
}

pub fn limit_covariance(
    a: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    schedule: &GainSchedule,
) -> Result<LimitCovariance> {
    ensure_square(a, "A")?;
    ensure_square(sigma, "Sigma")?;
    ensure_finite(a, "A")?;
    ensure_finite(sigma, "Sigma")?;
    let d = a.nrows();
    if sigma.nrows() != d {
        return Err(Error::Dimension {
            what: "Sigma",
            expected: d,
            got: sigma.nrows(),
        });
    }
    let regime = schedule.regime();
    match regime {
        Regime::AlphaLt1 => {
            let min = sym_min_eigenvalue(a);
            if !(min > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    min_eigenvalue: min,
                });
            }
        }
        Regime::AlphaEq1 => {
            let min = h5_min_eigenvalue(a, schedule.gamma());
            if !(min > 0.0) {
                return Err(Error::RegimeBoundary {
                    min_eigenvalue: min,
                });
            }
        }
    }
    let (b, c) = lyapunov_system(a, sigma, schedule);
    let v = solve_lyapunov(&b, &c)?;
    let q = match regime {
        Regime::AlphaLt1 => a.clone(),
        Regime::AlphaEq1 => a - DMatrix::identity(d, d) / (2.0 * schedule.gamma()),
    };
    Ok(LimitCovariance { v, regime, q })
}
