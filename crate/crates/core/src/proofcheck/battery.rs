//! Property battery over the grid, the weighted sums and the `V_n` series.
//!
//! Uniform integrability cannot be checked on finite samples; the
//! stochastic property uses `y_k = x + ξ_k/(k+1)` with standard normal `ξ_k`,
//! which is uniformly integrable and converges to `x` in probability.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{series_variance, weighted_sum, Grid, StepFactors, DEFAULT_SERIES_TOLERANCE};
use crate::asymptotics::solve_lyapunov;
use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, ensure_square, ensure_stable, spectral_norm};
use crate::rng::replicate_rng;
use crate::schedule::GainSchedule;

/// Base index of every grid in the battery.
const BASE: u64 = 1000;
/// `(alpha, gamma)`: `γ = 4` at `α = 1` keeps the horizon `s ≥ 20` short.
const SCHEDULES: [(f64, f64); 3] = [(0.6, 1.0), (0.8, 1.0), (1.0, 4.0)];
const HORIZONS: [f64; 3] = [5.0, 10.0, 20.0];
const FINAL_HORIZON: f64 = 20.0;
const HORIZON_CAP: usize = 1 << 24;
/// `e^{-2 s}` is below `1e-13` past this horizon.
const NOISE_HORIZON: f64 = 15.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryOptions {
    pub q: DMatrix<f64>,
    pub seed: u64,
    /// Replays for the stochastic weighted-sum property.
    pub replays: usize,
    /// Replays for the Monte Carlo check of `V_n`.
    pub series_replays: usize,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        BatteryOptions {
            q: DMatrix::identity(1, 1),
            seed: 0,
            replays: 1000,
            series_replays: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    /// Headline gap compared against `tolerance`.
    pub gap: f64,
    pub tolerance: f64,
    pub observed: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryReport {
    pub passed: bool,
    #[serde(serialize_with = "crate::linalg::rows_serde::serialize")]
    pub q: DMatrix<f64>,
    pub seed: u64,
    pub properties: Vec<PropertyCheck>,
}

fn rel_spectral(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    spectral_norm(&(got - want)) / spectral_norm(want)
}

/// Runs every property. An unstable `Q` is an error, not a failed report.
pub fn run_battery(opts: &BatteryOptions) -> Result<BatteryReport> {
    let q = &opts.q;
    ensure_square(q, "Q")?;
    ensure_finite(q, "Q")?;
    ensure_stable(q)?;
    if opts.replays < 10 || opts.series_replays < 10 {
        return Err(Error::TooFewSamples {
            needed: 10,
            got: opts.replays.min(opts.series_replays),
        });
    }
    let d = q.nrows();
    let x = DVector::from_element(d, 1.0);
    let target = q.clone().lu().solve(&x).ok_or(Error::Singular("Q"))?;

    let mut properties = vec![grid_recursion()];
    for (alpha, gamma) in SCHEDULES {
        properties.push(deterministic(q, &x, &target, alpha, gamma)?);
    }
    properties.push(stochastic(q, &x, &target, opts)?);
    properties.extend(series(q, opts)?);

    Ok(BatteryReport {
        passed: properties.iter().all(|p| p.passed),
        q: q.clone(),
        seed: opts.seed,
        properties,
    })
}

fn grid_recursion() -> PropertyCheck {
    let mut worst = 0.0f64;
    let mut observed = BTreeMap::new();
    for (alpha, gamma) in SCHEDULES {
        let mut g = Grid::new(
            BASE,
            GainSchedule::new(gamma, alpha).expect("valid schedule"),
        );
        g.extend_to(10_000);
        let s = g.values();
        let mut gap = if s[0] == 0.0 { 0.0 } else { f64::INFINITY };
        for k in 1..s.len() {
            // rounding of s_k is the only admissible discrepancy
            let diff = ((s[k] - s[k - 1]) - g.gain(k)).abs();
            gap = gap.max(diff / (f64::EPSILON * s[k]));
            if !(s[k] > s[k - 1]) {
                gap = f64::INFINITY;
            }
        }
        observed.insert(format!("alpha={alpha}"), gap);
        worst = worst.max(gap);
    }
    PropertyCheck {
        name: "grid_recursion".into(),
        passed: worst <= 1.0,
        gap: worst,
        tolerance: 1.0,
        observed,
    }
}

fn deterministic(
    q: &DMatrix<f64>,
    x: &DVector<f64>,
    target: &DVector<f64>,
    alpha: f64,
    gamma: f64,
) -> Result<PropertyCheck> {
    let mut grid = Grid::new(BASE, GainSchedule::new(gamma, alpha)?);
    let mut observed = BTreeMap::new();
    let mut gap_at = |h: f64| -> Result<f64> {
        let t = horizon(&mut grid, h)?;
        let z = weighted_sum(&mut grid, q, t, |k, y| {
            for (yi, xi) in y.iter_mut().zip(x.iter()) {
                *yi = xi + 1.0 / (k as f64 + 1.0);
            }
        })?;
        Ok((z - target).norm() / target.norm())
    };
    let headline = gap_at(FINAL_HORIZON)?;
    observed.insert(format!("s>={FINAL_HORIZON}"), headline);
    // Before s*, the transient e^{-Qs} can cancel the discretization bias.
    let s_star = monotone_horizon(q)?;
    let mut gaps = Vec::new();
    for h in [s_star, 2.0 * s_star, 3.0 * s_star] {
        let gap = gap_at(h)?;
        observed.insert(format!("s>={h:.3}"), gap);
        gaps.push(gap);
    }
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
    observed.insert("monotone".into(), if monotone { 1.0 } else { 0.0 });
    Ok(PropertyCheck {
        name: format!("weighted_sum_deterministic(alpha={alpha},gamma={gamma})"),
        passed: headline <= 0.02 && monotone,
        gap: headline,
        tolerance: 0.02,
        observed,
    })
}

fn stochastic(
    q: &DMatrix<f64>,
    x: &DVector<f64>,
    target: &DVector<f64>,
    opts: &BatteryOptions,
) -> Result<PropertyCheck> {
    let d = q.nrows();
    let mut grid = Grid::new(BASE, GainSchedule::new(1.0, 0.7)?);
    let mut observed = BTreeMap::new();
    let mut p90s = Vec::new();
    for (i, h) in HORIZONS.into_iter().enumerate() {
        let t = horizon(&mut grid, h)?;
        let factors = StepFactors::new(&mut grid, q, t)?;
        let mut errors = (0..opts.replays as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = replicate_rng(opts.seed, r + (i as u64) * (1 << 32));
                let z = factors.accumulate(
                    d,
                    |g| g,
                    |k, y| {
                        for (yi, xi) in y.iter_mut().zip(x.iter()) {
                            let xi_k: f64 = StandardNormal.sample(&mut rng);
                            *yi = xi + xi_k / (k as f64 + 1.0);
                        }
                    },
                )?;
                Ok((z - target).norm() / target.norm())
            })
            .collect::<Result<Vec<f64>>>()?;
        errors.sort_by(f64::total_cmp);
        let p90 = errors[(errors.len() * 9).div_ceil(10) - 1];
        observed.insert(format!("p90(s>={h})"), p90);
        p90s.push(p90);
    }
    let decreasing = p90s.windows(2).all(|w| w[1] < w[0]);
    Ok(PropertyCheck {
        name: "weighted_sum_stochastic".into(),
        passed: decreasing,
        gap: p90s[2],
        tolerance: p90s[1],
        observed,
    })
}

fn series(q: &DMatrix<f64>, opts: &BatteryOptions) -> Result<Vec<PropertyCheck>> {
    let d = q.nrows();
    let sigma = DMatrix::identity(d, d);
    let mut grid = Grid::new(BASE, GainSchedule::new(1.0, 0.7)?);
    let v_n = series_variance(&mut grid, q, &sigma, DEFAULT_SERIES_TOLERANCE)?;
    let v = solve_lyapunov(q, &sigma)?;
    let limit_gap = rel_spectral(&v_n, &v);

    let t = horizon(&mut grid, NOISE_HORIZON)?;
    let factors = StepFactors::new(&mut grid, q, t)?;
    let samples = (0..opts.series_replays as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(opts.seed ^ 0x5eed, r);
            factors.accumulate(d, f64::sqrt, |_, y| {
                for yi in y.iter_mut() {
                    *yi = StandardNormal.sample(&mut rng);
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cov = DMatrix::zeros(d, d);
    for z in &samples {
        cov += z * z.transpose();
    }
    cov /= samples.len() as f64;
    let mc_gap = rel_spectral(&cov, &v_n);

    let mut limit_obs = BTreeMap::new();
    limit_obs.insert("norm(V_n)".into(), spectral_norm(&v_n));
    limit_obs.insert("norm(V)".into(), spectral_norm(&v));
    let mut mc_obs = BTreeMap::new();
    mc_obs.insert("horizon_t".into(), t as f64);
    mc_obs.insert("norm(empirical)".into(), spectral_norm(&cov));
    Ok(vec![
        PropertyCheck {
            name: "series_variance_vs_limit(n=1000)".into(),
            passed: limit_gap <= 0.02,
            gap: limit_gap,
            tolerance: 0.02,
            observed: limit_obs,
        },
        PropertyCheck {
            name: "series_variance_vs_monte_carlo(n=1000)".into(),
            passed: mc_gap <= 0.05,
            gap: mc_gap,
            tolerance: 0.05,
            observed: mc_obs,
        },
    ])
}

/// `s*` with `e^{-λ s*} = 1e-4` for the slowest mode of `Q`, at least 5.
fn monotone_horizon(q: &DMatrix<f64>) -> Result<f64> {
    let lambda = crate::linalg::least_stable_eigenvalue(q)?.0;
    Ok((1e4f64.ln() / lambda).max(5.0))
}

fn horizon(grid: &mut Grid, s: f64) -> Result<usize> {
    grid.first_reaching(s, HORIZON_CAP)
        .ok_or_else(|| Error::InvalidEnsemble(format!("grid does not reach s = {s}")))
}
