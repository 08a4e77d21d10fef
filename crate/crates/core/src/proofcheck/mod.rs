//! The time grid `s_{n,k}` and the exponentially weighted sums behind the
//! limit theorem.
//!
//! On the grid `s_{n,0} = 0`, `s_{n,k} = s_{n,k-1} + γ_{n+k}`, the sums
//!
//! ```text
//! Z_t = Σ_{k=0}^t e^{Q(s_{n,k} - s_{n,t})} w_{n+k} y_k
//! ```
//!
//! are Riemann sums of `∫ e^{-Qu} y du`. With `w = γ` and `y_k → x` they
//! tend to `Q^{-1} x`; with `w = √γ` and martingale increments their
//! variance tends to the solution of `QV + VQ' = Σ`.
//!
//! `Z_t` is evaluated by the recursion `Z_k = e^{-Qγ_{n+k}} Z_{k-1} + w y_k`.
//! The running product of the per-step factors is `e^{-Q s_{n,k}}`; every
//! [`CHECK_EVERY`] steps it is compared with a direct exponential, an error
//! is raised past [`DRIFT_TOLERANCE`], and the product is resynchronized.

mod battery;

use nalgebra::{DMatrix, DVector};

use crate::asymptotics::matrix_exp;
use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, ensure_square, ensure_stable};
use crate::schedule::GainSchedule;

pub use battery::{run_battery, BatteryOptions, BatteryReport, PropertyCheck};

pub const CHECK_EVERY: usize = 64;
pub const DRIFT_TOLERANCE: f64 = 1e-8;
/// Hard cap on the number of terms of the `V_n` series.
pub const MAX_SERIES_TERMS: usize = 10_000_000;
/// Relative-term stopping threshold used when none is given.
pub const DEFAULT_SERIES_TOLERANCE: f64 = 1e-10;

/// `s_{n,k}` for a fixed base index `n`, extended on demand.
#[derive(Debug, Clone)]
pub struct Grid {
    n: u64,
    schedule: GainSchedule,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(n: u64, schedule: GainSchedule) -> Self {
        Grid {
            n,
            schedule,
            values: vec![0.0],
        }
    }

    pub fn base(&self) -> u64 {
        self.n
    }

    pub fn schedule(&self) -> &GainSchedule {
        &self.schedule
    }

    /// `γ_{n+k}`.
    #[inline]
    pub fn gain(&self, k: usize) -> f64 {
        self.schedule.gain(self.n + k as u64)
    }

    pub fn extend_to(&mut self, k: usize) {
        while self.values.len() <= k {
            let j = self.values.len();
            let next = self.values[j - 1] + self.gain(j);
            self.values.push(next);
        }
    }

    pub fn s(&mut self, k: usize) -> f64 {
        self.extend_to(k);
        self.values[k]
    }

    /// Values computed so far, `s_{n,0}, s_{n,1}, …`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Smallest `k ≤ cap` with `s_{n,k} ≥ target`.
    pub fn first_reaching(&mut self, target: f64, cap: usize) -> Option<usize> {
        if let Some(k) = self.values.iter().position(|&s| s >= target) {
            return Some(k);
        }
        while self.values.len() <= cap {
            let k = self.values.len();
            self.extend_to(k);
            if self.values[k] >= target {
                return Some(k);
            }
        }
        None
    }
}

/// Per-step factors `e^{-Qγ_{n+k}}` with the periodic drift check.
struct Decay {
    neg_q: DMatrix<f64>,
    product: DMatrix<f64>,
    k: usize,
}

impl Decay {
    fn new(q: &DMatrix<f64>) -> Result<Self> {
        ensure_square(q, "Q")?;
        ensure_finite(q, "Q")?;
        ensure_stable(q)?;
        let d = q.nrows();
        Ok(Decay {
            neg_q: -q,
            product: DMatrix::identity(d, d),
            k: 0,
        })
    }

    /// Factor for step `k + 1`; afterwards `product = e^{-Q s_{n,k+1}}`.
    fn advance(&mut self, grid: &mut Grid) -> Result<DMatrix<f64>> {
        self.k += 1;
        let factor = matrix_exp(&(&self.neg_q * grid.gain(self.k)))?;
        self.product = &factor * &self.product;
        if self.k.is_multiple_of(CHECK_EVERY) {
            let direct = matrix_exp(&(&self.neg_q * grid.s(self.k)))?;
            let scale = direct.norm();
            let gap = (&self.product - &direct).norm();
            let deviation = if scale > 1e-200 { gap / scale } else { gap };
            if !(deviation <= DRIFT_TOLERANCE) {
                return Err(Error::FactorDrift {
                    k: self.k,
                    deviation,
                });
            }
            self.product = direct;
        }
        Ok(factor)
    }
}

/// Precomputed factors `e^{-Qγ_{n+k}}` for `k = 1..=t`, shared by many
/// evaluations on the same grid. Memory grows with `t d²`.
#[derive(Debug, Clone)]
pub struct StepFactors {
    factors: Vec<DMatrix<f64>>,
    weights: Vec<f64>,
}

impl StepFactors {
    pub fn new(grid: &mut Grid, q: &DMatrix<f64>, t: usize) -> Result<Self> {
        let mut decay = Decay::new(q)?;
        grid.extend_to(t);
        let mut factors = Vec::with_capacity(t);
        for _ in 0..t {
            factors.push(decay.advance(grid)?);
        }
        let weights = (0..=t).map(|k| grid.gain(k)).collect();
        Ok(StepFactors { factors, weights })
    }

    pub fn horizon(&self) -> usize {
        self.factors.len()
    }

    pub fn dim(&self) -> usize {
        self.factors.first().map_or(0, |f| f.nrows())
    }

    /// `Σ_{k=0}^t e^{Q(s_k - s_t)} w(γ_{n+k}) y_k`.
    pub fn accumulate<W, Y>(&self, d: usize, weight: W, mut y: Y) -> Result<DVector<f64>>
    where
        W: Fn(f64) -> f64,
        Y: FnMut(usize, &mut [f64]),
    {
        let mut z = DVector::zeros(d);
        let mut buf = vec![0.0; d];
        for k in 0..=self.horizon() {
            if k > 0 {
                z = &self.factors[k - 1] * z;
            }
            y(k, &mut buf);
            add_weighted(&mut z, weight(self.weights[k]), &buf, k)?;
        }
        Ok(z)
    }
}

/// `Z_t = Σ_{k=0}^t e^{Q(s_{n,k} - s_{n,t})} γ_{n+k} y_k`.
pub fn weighted_sum<Y>(grid: &mut Grid, q: &DMatrix<f64>, t: usize, y: Y) -> Result<DVector<f64>>
where
    Y: FnMut(usize, &mut [f64]),
{
    streaming_sum(grid, q, t, |g| g, y)
}

/// `Σ_{k=0}^t e^{Q(s_{n,k} - s_{n,t})} √γ_{n+k} δM_{n+k}`.
pub fn weighted_noise_sum<Y>(
    grid: &mut Grid,
    q: &DMatrix<f64>,
    t: usize,
    noise: Y,
) -> Result<DVector<f64>>
where
    Y: FnMut(usize, &mut [f64]),
{
    streaming_sum(grid, q, t, f64::sqrt, noise)
}

fn streaming_sum<W, Y>(
    grid: &mut Grid,
    q: &DMatrix<f64>,
    t: usize,
    weight: W,
    mut y: Y,
) -> Result<DVector<f64>>
where
    W: Fn(f64) -> f64,
    Y: FnMut(usize, &mut [f64]),
{
    let mut decay = Decay::new(q)?;
    let d = q.nrows();
    let mut z = DVector::zeros(d);
    let mut buf = vec![0.0; d];
    for k in 0..=t {
        if k > 0 {
            z = decay.advance(grid)? * z;
        }
        y(k, &mut buf);
        add_weighted(&mut z, weight(grid.gain(k)), &buf, k)?;
    }
    Ok(z)
}

fn add_weighted(z: &mut DVector<f64>, w: f64, y: &[f64], k: usize) -> Result<()> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "y",
            step: k as u64,
        });
    }
    for (zi, yi) in z.iter_mut().zip(y) {
        *zi += w * yi;
    }
    Ok(())
}

/// `V_n = Σ_{k≥0} γ_{n+k} e^{-Q s_{n,k}} Σ e^{-Q' s_{n,k}}`.
///
/// Summation stops at the first term whose norm is below
/// `tolerance · ‖partial sum‖`. Terms then shrink by about `1 − 2qγ_{n+k}`
/// per step, so the neglected tail is near `tolerance / (2qγ_{n+k})` in
/// relative terms. More than [`MAX_SERIES_TERMS`] terms is an
/// error.
pub fn series_variance(
    grid: &mut Grid,
    q: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    tolerance: f64,
) -> Result<DMatrix<f64>> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidEnsemble(format!(
            "series tolerance must be positive, got {tolerance}"
        )));
    }
    let mut decay = Decay::new(q)?;
    ensure_square(sigma, "Sigma")?;
    ensure_finite(sigma, "Sigma")?;
    let d = q.nrows();
    if sigma.nrows() != d {
        return Err(Error::Dimension {
            what: "Sigma",
            expected: d,
            got: sigma.nrows(),
        });
    }
    let mut sum = sigma * grid.gain(0);
    if sigma.norm() == 0.0 {
        return Ok(sum);
    }
    let mut last_ratio = 1.0;
    for k in 1..=MAX_SERIES_TERMS {
        decay.advance(grid)?;
        let e = &decay.product;
        let term = e * sigma * e.transpose() * grid.gain(k);
        let ratio = term.norm() / sum.norm();
        sum += term;
        last_ratio = ratio;
        if ratio < tolerance {
            return Ok((&sum + sum.transpose()) * 0.5);
        }
    }
    Err(Error::SeriesNotConverged {
        terms: MAX_SERIES_TERMS,
        last_ratio,
    })
}
