//! Gaussian goodness-of-fit for samples of `Δ_n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;

/// Minimal sample count accepted by [`normality_report`].
pub const MIN_SAMPLES: usize = 100;
/// Significance level used for the `consistent` flag.
pub const KS_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test of `samples` against `cdf`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(d, sorted.len()),
    }
}

/// `P(D_n > d)` from the Kolmogorov limit law with Stephens' small-sample
/// correction `λ = (√n + 0.12 + 0.11/√n) d`.
pub fn kolmogorov_sf(d: f64, n: usize) -> f64 {
    if n == 0 || d.is_nan() {
        return f64::NAN;
    }
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // Jacobi theta form of the CDF; converges fast for small lambda
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let cdf: f64 = (1..=20)
            .map(|j| (-((2 * j - 1) as f64).powi(2) * c).exp())
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).sqrt()
            / lambda;
        1.0 - cdf
    } else {
        let mut sum = 0.0;
        for j in 1..=100 {
            let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
            sum += if j % 2 == 1 { term } else { -term };
            if term < 1e-16 {
                break;
            }
        }
        2.0 * sum
    };
    p.clamp(0.0, 1.0)
}

/// Mean and unbiased covariance of the rows of `samples`.
pub fn mean_and_covariance(samples: &[Vec<f64>], d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let m = samples.len();
    let mut mean = DVector::zeros(d);
    for s in samples {
        for (a, v) in mean.iter_mut().zip(s) {
            *a += v;
        }
    }
    if m > 0 {
        mean /= m as f64;
    }
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        for i in 0..d {
            let di = s[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += di * (s[j] - mean[j]);
            }
        }
    }
    if m > 1 {
        cov /= (m - 1) as f64;
    }
    for i in 0..d {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    (mean, cov)
}

/// `‖Ĉ − V‖ / ‖V‖` in spectral norm; the absolute error `‖Ĉ‖` when `V = 0`.
pub fn cov_rel_err(empirical: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let scale = spectral_norm(v);
    let gap = spectral_norm(&(empirical - v));
    if scale > 0.0 {
        gap / scale
    } else {
        gap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub samples: usize,
    /// Mean of `Δ' V^{-1} Δ`; equals `d` under the limit law.
    pub mahalanobis_mean: f64,
    /// KS test of the Mahalanobis statistics against `χ²_d`.
    pub mahalanobis_ks: KsResult,
    /// KS test of each coordinate against `N(0, V_ii)`.
    pub coordinate_ks: Vec<KsResult>,
    pub cov_rel_err: f64,
    /// Mahalanobis KS p-value above [`KS_LEVEL`].
    pub consistent: bool,
}

/// Compares `samples` (one row per replicate) with `N(0, V)`.
pub fn normality_report(samples: &[Vec<f64>], v: &DMatrix<f64>) -> Result<NormalityReport> {
    let d = v.nrows();
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::Dimension {
            what: "sample row",
            expected: d,
            got: bad.len(),
        });
    }
    let chol = v
        .clone()
        .cholesky()
        .ok_or(Error::Singular("limit covariance V"))?;

    let mahalanobis: Vec<f64> = samples
        .iter()
        .map(|s| {
            let x = DVector::from_column_slice(s);
            x.dot(&chol.solve(&x))
        })
        .collect();
    let chi2 = ChiSquared::new(d as f64).expect("positive degrees of freedom");
    let mahalanobis_ks = ks_test(&mahalanobis, |m| chi2.cdf(m));

    let coordinate_ks = (0..d)
        .map(|i| {
            let normal = Normal::new(0.0, v[(i, i)].sqrt()).expect("positive variance");
            let column: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            ks_test(&column, |x| normal.cdf(x))
        })
        .collect();

    let (_, cov) = mean_and_covariance(samples, d);
    Ok(NormalityReport {
        samples: samples.len(),
        mahalanobis_mean: mahalanobis.iter().sum::<f64>() / mahalanobis.len() as f64,
        mahalanobis_ks,
        coordinate_ks,
        cov_rel_err: cov_rel_err(&cov, v),
        consistent: mahalanobis_ks.p_value > KS_LEVEL,
    })
}
