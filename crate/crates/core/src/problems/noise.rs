//! Martingale-increment noise models `dM = U(x, Z) - u(x)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `dM = F xi`, `xi ~ N(0, I)`, `F F' = Sigma`.
    #[default]
    Gaussian,
    /// `dM = (1 + c |x - x*|) F xi`; the conditional covariance tends to
    /// `Sigma` as `x -> x*`.
    Scaled,
    /// `dM = F xi` with i.i.d. unit-variance symmetrized Pareto coordinates.
    HeavyTailed,
    /// `dM = 0`.
    None,
}

/// Declarative noise description, as found in configuration files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    #[serde(default)]
    pub kind: NoiseKind,
    /// `Sigma`; identity when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    /// `c` of the scaled kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_scale: Option<f64>,
    /// Moment excess `rho` of the heavy-tailed kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Pareto tail index; defaults to `3 + rho`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_index: Option<f64>,
}

pub const DEFAULT_RHO: f64 = 0.5;
pub const DEFAULT_STATE_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
enum Draw {
    Gaussian,
    Pareto { dist: Pareto<f64>, unit: f64 },
    Zero,
}

/// Validated noise model bound to a problem's root.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
    root: Vec<f64>,
    state_scale: f64,
    rho: f64,
    tail_index: Option<f64>,
    draw: Draw,
}

impl NoiseModel {
    pub fn from_params(params: &NoiseParams, root: &[f64]) -> Result<Self> {
        let d = root.len();
        let bad = |reason: String| Error::InvalidParams {
            problem: "noise".into(),
            reason,
        };
        let covariance = match (&params.kind, &params.covariance) {
            (NoiseKind::None, _) => DMatrix::zeros(d, d),
            (_, None) => DMatrix::identity(d, d),
            (_, Some(rows)) => crate::linalg::matrix_from_rows(rows, "noise covariance")?,
        };
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::Dimension {
                what: "noise covariance",
                expected: d,
                got: covariance.nrows(),
            });
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > 1e-12 * covariance.amax().max(1.0) {
            return Err(bad("covariance must be symmetric".into()));
        }
        let eig = covariance.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.min();
        if min_eig < -1e-12 * covariance.amax().max(1.0) {
            return Err(bad(format!(
                "covariance must be positive semi-definite (eigenvalue {min_eig})"
            )));
        }
        let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals);

        let rho = params.rho.unwrap_or(DEFAULT_RHO);
        let state_scale = params.state_scale.unwrap_or(DEFAULT_STATE_SCALE);
        if !(state_scale.is_finite() && state_scale >= 0.0) {
            return Err(bad(format!("state_scale must be >= 0, got {state_scale}")));
        }
        let (draw, tail_index) = match params.kind {
            NoiseKind::HeavyTailed => {
                if !(rho.is_finite() && rho > 0.0) {
                    return Err(bad(format!("rho must be positive, got {rho}")));
                }
                let k = params.tail_index.unwrap_or(3.0 + rho);
                if !(k.is_finite() && k > 2.0 + rho) {
                    return Err(bad(format!(
                        "tail index {k} must exceed 2 + rho = {} for a finite (2+rho)-moment",
                        2.0 + rho
                    )));
                }
                let dist = Pareto::new(1.0, k).map_err(|e| bad(e.to_string()))?;
                // E[P^2] = k / (k - 2) for P ~ Pareto(1, k)
                let unit = ((k - 2.0) / k).sqrt();
                (Draw::Pareto { dist, unit }, Some(k))
            }
            NoiseKind::None => (Draw::Zero, None),
            _ => (Draw::Gaussian, None),
        };
        Ok(NoiseModel {
            kind: params.kind,
            covariance,
            factor,
            root: root.to_vec(),
            state_scale,
            rho,
            tail_index,
            draw,
        })
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    /// Conditional covariance at the root.
    pub fn covariance_at_root(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Why the moment and bracket conditions hold for this model.
    pub fn moment_certificate(&self) -> String {
        match self.kind {
            NoiseKind::Gaussian => {
                "gaussian increments: i.i.d., all moments finite, conditional covariance \
                 equal to Sigma everywhere"
                    .into()
            }
            NoiseKind::Scaled => format!(
                "gaussian increments scaled by 1 + {}|x - x*|: all moments finite on bounded \
                 sets, conditional covariance continuous with value Sigma at x*",
                self.state_scale
            ),
            NoiseKind::HeavyTailed => format!(
                "symmetrized Pareto increments with tail index {} > 2 + rho = {}: \
                 (2+rho)-moment finite, covariance Sigma",
                self.tail_index.unwrap_or(f64::NAN),
                2.0 + self.rho
            ),
            NoiseKind::None => "no noise: every condition holds trivially".into(),
        }
    }

    fn standard<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.draw {
            Draw::Gaussian => StandardNormal.sample(rng),
            Draw::Pareto { dist, unit } => {
                let magnitude = dist.sample(rng) * unit;
                if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            }
            Draw::Zero => 0.0,
        }
    }

    /// Draw `dM` at state `x` into `out`.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, out: &mut [f64]) {
        let d = out.len();
        if matches!(self.draw, Draw::Zero) {
            out.fill(0.0);
            return;
        }
        if d == 1 {
            out[0] = self.factor[(0, 0)] * self.standard(rng);
        } else {
            let mut xi = [0.0f64; 16];
            let mut heap;
            let xi: &mut [f64] = if d <= 16 {
                &mut xi[..d]
            } else {
                heap = vec![0.0; d];
                &mut heap
            };
            for v in xi.iter_mut() {
                *v = self.standard(rng);
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o = (0..d).map(|j| self.factor[(i, j)] * xi[j]).sum();
            }
        }
        if self.kind == NoiseKind::Scaled {
            let dist = x
                .iter()
                .zip(&self.root)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let scale = 1.0 + self.state_scale * dist;
            out.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replicate_rng;

    #[test]
    fn heavy_tail_index_must_exceed_two_plus_rho() {
        let p = NoiseParams {
            kind: NoiseKind::HeavyTailed,
            rho: Some(0.5),
            tail_index: Some(2.4),
            ..Default::default()
        };
        assert!(NoiseModel::from_params(&p, &[0.0]).is_err());
        let p = NoiseParams {
            kind: NoiseKind::HeavyTailed,
            ..Default::default()
        };
        let m = NoiseModel::from_params(&p, &[0.0]).unwrap();
        assert_eq!(m.tail_index, Some(3.5));
        assert!(m.moment_certificate().contains("3.5"));
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let p = NoiseParams {
            covariance: Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]]),
            ..Default::default()
        };
        assert!(NoiseModel::from_params(&p, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn scaled_noise_grows_away_from_root() {
        let p = NoiseParams {
            kind: NoiseKind::Scaled,
            state_scale: Some(2.0),
            ..Default::default()
        };
        let m = NoiseModel::from_params(&p, &[0.0]).unwrap();
        let mut a = [0.0];
        let mut b = [0.0];
        m.sample(&[0.0], &mut replicate_rng(1, 0), &mut a);
        m.sample(&[3.0], &mut replicate_rng(1, 0), &mut b);
        assert!((b[0] - 7.0 * a[0]).abs() < 1e-12);
    }
}
