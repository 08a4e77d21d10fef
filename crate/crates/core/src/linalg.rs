//! Small dense-matrix helpers shared by the engines.

use nalgebra::{Complex, DMatrix, Schur};

use crate::error::{Error, Result};

/// Row-major nested vectors to a matrix. Rows must have equal length.
pub fn matrix_from_rows(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::Dimension {
            what,
            expected: 1,
            got: 0,
        });
    }
    let ncols = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::Dimension {
            what,
            expected: ncols,
            got: bad.len(),
        });
    }
    let m = DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteMatrix(what));
    }
    Ok(m)
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// `(M + M') / 2`.
pub fn sym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn sym_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_part(m).symmetric_eigenvalues().min()
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

pub(crate) fn ensure_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteMatrix(what))
    }
}

pub(crate) fn ensure_square(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.nrows() == m.ncols() {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected: m.nrows(),
            got: m.ncols(),
        })
    }
}

/// Relative deflation tolerances of the real Schur iteration, tried in
/// order. At machine epsilon the iteration can stall on benign matrices.
const SCHUR_TOLERANCES: [f64; 3] = [1e-14, 1e-12, 1e-10];

/// Eigenvalues of a square matrix by a real Schur iteration capped at
/// `1000 d` sweeps per tolerance.
pub fn eigenvalues(b: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let max_niter = 1000 * b.nrows().max(1);
    SCHUR_TOLERANCES
        .iter()
        .find_map(|&eps| Schur::try_new(b.clone(), eps, max_niter))
        .map(|s| s.complex_eigenvalues().iter().copied().collect())
        .ok_or(Error::NoConvergence("real Schur iteration"))
}

/// Eigenvalue of `b` with the smallest real part, as `(re, im)`.
pub fn least_stable_eigenvalue(b: &DMatrix<f64>) -> Result<(f64, f64)> {
    Ok(eigenvalues(b)?
        .iter()
        .map(|z| (z.re, z.im))
        .fold(
            (f64::INFINITY, 0.0),
            |acc, z| if z.0 < acc.0 { z } else { acc },
        ))
}

/// Every eigenvalue of `b` must have a positive real part.
pub fn ensure_stable(b: &DMatrix<f64>) -> Result<()> {
    let (re, im) = least_stable_eigenvalue(b)?;
    if re > 0.0 {
        Ok(())
    } else {
        Err(Error::unstable(re, im))
    }
}

/// Serde adapter writing a matrix as row-major nested arrays.
pub mod rows_serde {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::matrix_from_rows(&rows, "matrix").map_err(D::Error::custom)
    }
}
