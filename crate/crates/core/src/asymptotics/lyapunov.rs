//! Continuous Lyapunov equation `B X + X B' = C` for stable `B`.
//!
//! Solved as the Kronecker system `(I ⊗ B + B ⊗ I) vec(X) = vec(C)` with a
//! dense LU factorization. That is `O(d^6)` work, which is fine for the
//! `d <= 32` this crate targets. For stable `B` the solution equals
//! `∫_0^∞ e^{-Bt} C e^{-B't} dt`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, ensure_square, ensure_stable};

/// Largest dimension accepted by [`solve_lyapunov`].
pub const MAX_DIM: usize = 32;

pub fn solve_lyapunov(b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(b, "Lyapunov B")?;
    ensure_square(c, "Lyapunov C")?;
    ensure_finite(b, "Lyapunov B")?;
    ensure_finite(c, "Lyapunov C")?;
    let d = b.nrows();
    if c.nrows() != d {
        return Err(Error::Dimension {
            what: "Lyapunov C",
            expected: d,
            got: c.nrows(),
        });
    }
    if d > MAX_DIM {
        return Err(Error::Dimension {
            what: "Lyapunov dimension (max)",
            expected: MAX_DIM,
            got: d,
        });
    }
    ensure_stable(b)?;

    let n = d * d;
    // vec is column-major: index(i, j) = i + j d
    let mut k = DMatrix::<f64>::zeros(n, n);
    for j in 0..d {
        for i in 0..d {
            let row = i + j * d;
            for l in 0..d {
                // (B X)_{ij} = sum_l B_{il} X_{lj}
                k[(row, l + j * d)] += b[(i, l)];
                // (X B')_{ij} = sum_l X_{il} B_{jl}
                k[(row, i + l * d)] += b[(j, l)];
            }
        }
    }
    let rhs = DVector::from_column_slice(c.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("Lyapunov operator"))?;
    let x = DMatrix::from_column_slice(d, d, sol.as_slice());
    let symmetric_rhs = (c - c.transpose()).amax() == 0.0;
    Ok(if symmetric_rhs {
        (&x + x.transpose()) * 0.5
    } else {
        x
    })
}

/// `‖B X + X B' − C‖_F`.
pub fn lyapunov_residual(b: &DMatrix<f64>, x: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    (b * x + x * b.transpose() - c).norm()
}
