//! Drift fields with a known root, their Jacobian at the root, and noisy
//! oracles `U(x, Z) = u(x) + dM`.
//!
//! The zoo ([`builtin`]) covers `linear`, `cubic`, `logistic` and `rotation`.
//! Other drifts plug in through [`DriftField`] and [`Problem::custom`].

mod hypotheses;
mod noise;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, sym_min_eigenvalue};

pub use hypotheses::{
    boundary_margin, check_hypotheses, h5_min_eigenvalue, CheckOptions, HypothesisReport, Verdict,
};
pub use noise::{NoiseKind, NoiseModel, NoiseParams, DEFAULT_RHO, DEFAULT_STATE_SCALE};

/// A user-supplied drift `u: R^d -> R^d`.
pub trait DriftField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone)]
enum Drift {
    /// `A (x - x*)`
    Linear {
        a: DMatrix<f64>,
    },
    /// `(x - x*) + |x - x*|^2 (x - x*)`
    Cubic,
    /// `e^x - c`
    Logistic {
        c: f64,
    },
    Custom(Arc<dyn DriftField>),
}

/// Problem zoo entry: name plus parameter map.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    pub name: String,
    /// `x*` (linear, cubic, rotation). Defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<Vec<f64>>,
    /// `A` of the linear problem, as rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Dimension of the cubic problem when no root is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// `c` of the logistic problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// `a` and `b` of the rotation problem `A = [[a, b], [-b, a]]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default)]
    pub noise: NoiseParams,
}

impl ProblemParams {
    pub fn linear(matrix: Vec<Vec<f64>>, root: Vec<f64>) -> Self {
        ProblemParams {
            name: "linear".into(),
            root: Some(root),
            matrix: Some(matrix),
            ..Default::default()
        }
    }

    pub fn cubic(root: Vec<f64>) -> Self {
        ProblemParams {
            name: "cubic".into(),
            root: Some(root),
            ..Default::default()
        }
    }

    pub fn logistic(c: f64) -> Self {
        ProblemParams {
            name: "logistic".into(),
            c: Some(c),
            ..Default::default()
        }
    }

    pub fn rotation(a: f64, b: f64) -> Self {
        ProblemParams {
            name: "rotation".into(),
            a: Some(a),
            b: Some(b),
            ..Default::default()
        }
    }

    pub fn with_noise(mut self, noise: NoiseParams) -> Self {
        self.noise = noise;
        self
    }

    pub fn zero_noise(self) -> Self {
        self.with_noise(NoiseParams {
            kind: NoiseKind::None,
            ..Default::default()
        })
    }

    pub fn with_covariance(mut self, covariance: Vec<Vec<f64>>) -> Self {
        self.noise.covariance = Some(covariance);
        self
    }
}

/// Immutable problem: drift, root, Jacobian at the root and noise model.
#[derive(Debug, Clone)]
pub struct Problem {
    name: String,
    root: Vec<f64>,
    jacobian: DMatrix<f64>,
    drift: Drift,
    noise: NoiseModel,
}

impl Problem {
    /// Wrap a user drift. `jacobian` must be `Du(root)`.
    pub fn custom(
        name: impl Into<String>,
        field: Arc<dyn DriftField>,
        root: Vec<f64>,
        jacobian: DMatrix<f64>,
        noise: &NoiseParams,
    ) -> Result<Self> {
        let d = root.len();
        if field.dim() != d || jacobian.nrows() != d || jacobian.ncols() != d {
            return Err(Error::Dimension {
                what: "custom problem",
                expected: d,
                got: field.dim(),
            });
        }
        Ok(Problem {
            name: name.into(),
            noise: NoiseModel::from_params(noise, &root)?,
            root,
            jacobian,
            drift: Drift::Custom(field),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.root.len()
    }

    pub fn root(&self) -> &[f64] {
        &self.root
    }

    /// `A = Du(x*)`.
    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }

    /// `Sigma`, the conditional noise covariance at the root.
    pub fn noise_cov(&self) -> &DMatrix<f64> {
        self.noise.covariance_at_root()
    }

    pub fn noise_model(&self) -> &NoiseModel {
        &self.noise
    }

    /// `u(x)` into `out`.
    #[inline]
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            Drift::Linear { a } => {
                let d = x.len();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..d).map(|j| a[(i, j)] * (x[j] - self.root[j])).sum();
                }
            }
            Drift::Cubic => {
                let r2: f64 = x
                    .iter()
                    .zip(&self.root)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                for ((o, xi), ri) in out.iter_mut().zip(x).zip(&self.root) {
                    *o = (xi - ri) + r2 * (xi - ri);
                }
            }
            Drift::Logistic { c } => out[0] = x[0].exp() - c,
            Drift::Custom(field) => field.eval(x, out),
        }
    }

    pub fn drift_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.drift(x, &mut out);
        out
    }

    /// Martingale increment `dM` drawn at `x`.
    #[inline]
    pub fn noise<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, out: &mut [f64]) {
        self.noise.sample(x, rng, out);
    }

    /// One oracle call `U(x, Z) = u(x) + dM`.
    pub fn oracle<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, out: &mut [f64]) {
        let mut dm = vec![0.0; self.dim()];
        self.drift(x, out);
        self.noise(x, rng, &mut dm);
        out.iter_mut().zip(&dm).for_each(|(o, m)| *o += m);
    }
}

/// Build a zoo problem from its name and parameters.
pub fn builtin(params: &ProblemParams) -> Result<Problem> {
    let invalid = |reason: String| Error::InvalidParams {
        problem: params.name.clone(),
        reason,
    };
    let finite = |v: &[f64], what: &str| {
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(invalid(format!("{what} must be finite")))
        }
    };
    let (root, jacobian, drift) = match params.name.as_str() {
        "linear" => {
            let rows = params
                .matrix
                .as_ref()
                .ok_or_else(|| invalid("`matrix` is required".into()))?;
            let a = matrix_from_rows(rows, "linear matrix")?;
            let d = a.nrows();
            if a.ncols() != d {
                return Err(invalid("`matrix` must be square".into()));
            }
            let root = params.root.clone().unwrap_or_else(|| vec![0.0; d]);
            if root.len() != d {
                return Err(Error::Dimension {
                    what: "linear root",
                    expected: d,
                    got: root.len(),
                });
            }
            finite(&root, "root")?;
            let min = sym_min_eigenvalue(&a);
            if min <= 0.0 {
                return Err(invalid(format!(
                    "symmetric part of `matrix` must be positive definite (minimal eigenvalue {min})"
                )));
            }
            (root, a.clone(), Drift::Linear { a })
        }
        "cubic" => {
            let root = match (&params.root, params.dim) {
                (Some(r), Some(d)) if r.len() != d => {
                    return Err(Error::Dimension {
                        what: "cubic root",
                        expected: d,
                        got: r.len(),
                    })
                }
                (Some(r), _) => r.clone(),
                (None, d) => vec![0.0; d.unwrap_or(1)],
            };
            if root.is_empty() {
                return Err(invalid("dimension must be at least 1".into()));
            }
            finite(&root, "root")?;
            let d = root.len();
            (root, DMatrix::identity(d, d), Drift::Cubic)
        }
        "logistic" => {
            let c = params.c.unwrap_or(1.0);
            if !(c.is_finite() && c > 0.0) {
                return Err(invalid(format!("`c` must be positive, got {c}")));
            }
            (
                vec![c.ln()],
                DMatrix::from_element(1, 1, c),
                Drift::Logistic { c },
            )
        }
        "rotation" => {
            let a = params.a.unwrap_or(1.0);
            let b = params.b.unwrap_or(0.0);
            if !(a.is_finite() && b.is_finite()) {
                return Err(invalid("`a` and `b` must be finite".into()));
            }
            if a <= 0.0 {
                return Err(invalid(format!(
                    "symmetric part a I must be positive definite, got a = {a}"
                )));
            }
            let root = params.root.clone().unwrap_or_else(|| vec![0.0; 2]);
            if root.len() != 2 {
                return Err(Error::Dimension {
                    what: "rotation root",
                    expected: 2,
                    got: root.len(),
                });
            }
            finite(&root, "root")?;
            let m = DMatrix::from_row_slice(2, 2, &[a, b, -b, a]);
            (root, m.clone(), Drift::Linear { a: m })
        }
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    Ok(Problem {
        name: params.name.clone(),
        noise: NoiseModel::from_params(&params.noise, &root)?,
        root,
        jacobian,
        drift,
    })
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 4] = ["linear", "cubic", "logistic", "rotation"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replicate_rng;

    fn fd_jacobian(p: &Problem, h: f64) -> DMatrix<f64> {
        let d = p.dim();
        let mut j = DMatrix::zeros(d, d);
        for k in 0..d {
            let mut plus = p.root().to_vec();
            let mut minus = p.root().to_vec();
            plus[k] += h;
            minus[k] -= h;
            let up = p.drift_vec(&plus);
            let um = p.drift_vec(&minus);
            for i in 0..d {
                j[(i, k)] = (up[i] - um[i]) / (2.0 * h);
            }
        }
        j
    }

    fn zoo() -> Vec<Problem> {
        vec![
            builtin(&ProblemParams::linear(
                vec![vec![2.0, 0.5], vec![0.1, 1.0]],
                vec![1.0, -2.0],
            ))
            .unwrap(),
            builtin(&ProblemParams::cubic(vec![0.5, -0.5, 1.0])).unwrap(),
            builtin(&ProblemParams::logistic(3.0)).unwrap(),
            builtin(&ProblemParams::rotation(1.0, 4.0)).unwrap(),
        ]
    }

    #[test]
    fn zoo_roots_and_jacobians() {
        for p in zoo() {
            let at_root = p.drift_vec(p.root());
            assert!(
                at_root.iter().all(|v| v.abs() <= 1e-12),
                "{}: {at_root:?}",
                p.name()
            );
            let fd = fd_jacobian(&p, 1e-5);
            let rel = (&fd - p.jacobian()).norm() / p.jacobian().norm();
            assert!(rel <= 1e-5, "{}: relative error {rel}", p.name());
        }
    }

    #[test]
    fn named_examples() {
        let lin = builtin(&ProblemParams::linear(vec![vec![1.0]], vec![0.0])).unwrap();
        assert_eq!(lin.drift_vec(&[1.0]), vec![1.0]);
        assert_eq!(lin.jacobian(), &DMatrix::identity(1, 1));
        assert_eq!(lin.noise_cov(), &DMatrix::identity(1, 1));

        let cubic = builtin(&ProblemParams::cubic(vec![0.0])).unwrap();
        assert_eq!(cubic.drift_vec(&[2.0]), vec![10.0]);
        assert_eq!(cubic.jacobian(), &DMatrix::identity(1, 1));

        let logistic = builtin(&ProblemParams::logistic(1.0)).unwrap();
        assert_eq!(logistic.root(), &[0.0]);
        assert_eq!(logistic.drift_vec(&[0.0]), vec![0.0]);
    }

    #[test]
    fn cubic_is_strictly_monotone() {
        let cubic = builtin(&ProblemParams::cubic(vec![0.0, 0.0])).unwrap();
        let mut rng = replicate_rng(11, 0);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-50.0..50.0)).collect();
            let u = cubic.drift_vec(&x);
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let inner: f64 = x.iter().zip(&u).map(|(a, b)| a * b).sum();
            assert!((inner - (r2 + r2 * r2)).abs() <= 1e-9 * (r2 + r2 * r2));
            assert!(inner > 0.0);
        }
    }

    #[test]
    fn errors() {
        assert_eq!(
            builtin(&ProblemParams {
                name: "quartic".into(),
                ..Default::default()
            })
            .unwrap_err(),
            Error::UnknownProblem("quartic".into())
        );
        assert!(builtin(&ProblemParams::linear(
            vec![vec![1.0, 0.0], vec![0.0, -1.0]],
            vec![0.0, 0.0]
        ))
        .is_err());
        assert!(builtin(&ProblemParams::rotation(-1.0, 1.0)).is_err());
        assert!(builtin(&ProblemParams::logistic(0.0)).is_err());
        assert!(builtin(&ProblemParams::linear(vec![vec![1.0]], vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn oracle_is_unbiased_with_prescribed_covariance() {
        // 10^5 draws at a frozen x away from the root; mean of U - u and the
        // empirical covariance against Sigma. Tolerances are ~4 standard
        // errors of the estimators.
        let sigma = vec![vec![2.0, 0.6], vec![0.6, 1.0]];
        let p = builtin(
            &ProblemParams::linear(vec![vec![1.0, 0.0], vec![0.0, 2.0]], vec![0.0, 0.0])
                .with_covariance(sigma.clone()),
        )
        .unwrap();
        let x = [0.7, -0.3];
        let u = p.drift_vec(&x);
        let mut rng = replicate_rng(5, 0);
        let n = 100_000;
        let mut sum = [0.0; 2];
        let mut sum2 = [[0.0; 2]; 2];
        let mut out = [0.0; 2];
        for _ in 0..n {
            p.oracle(&x, &mut rng, &mut out);
            let dm = [out[0] - u[0], out[1] - u[1]];
            for i in 0..2 {
                sum[i] += dm[i];
                for j in 0..2 {
                    sum2[i][j] += dm[i] * dm[j];
                }
            }
        }
        for i in 0..2 {
            let mean = sum[i] / n as f64;
            assert!(
                mean.abs() < 4.0 * (sigma[i][i] / n as f64).sqrt(),
                "mean {mean}"
            );
            for j in 0..2 {
                let cov = sum2[i][j] / n as f64;
                let se =
                    ((sigma[i][i] * sigma[j][j] + sigma[i][j] * sigma[i][j]) / n as f64).sqrt();
                assert!(
                    (cov - sigma[i][j]).abs() < 4.0 * se,
                    "cov[{i}][{j}] = {cov}"
                );
            }
        }
    }

    #[test]
    fn heavy_tailed_oracle_has_unit_variance() {
        let p = builtin(&ProblemParams::cubic(vec![0.0]).with_noise(NoiseParams {
            kind: NoiseKind::HeavyTailed,
            tail_index: Some(6.0),
            ..Default::default()
        }))
        .unwrap();
        let mut rng = replicate_rng(9, 0);
        let n = 100_000;
        let mut out = [0.0];
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            p.noise(&[0.0], &mut rng, &mut out);
            s1 += out[0];
            s2 += out[0] * out[0];
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64;
        // Pareto(1, 6) rescaled: E xi^4 = 4/3, so Var(xi^2) = 1/3
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!(
            (var - 1.0).abs() < 4.0 * (1.0 / 3.0 / n as f64).sqrt(),
            "var {var}"
        );
    }
}
