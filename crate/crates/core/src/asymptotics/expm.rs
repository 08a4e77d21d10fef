//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants (degree 3, 5, 7, 9 or 13, chosen from the 1-norm).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, ensure_square};

// Largest 1-norms for which the degree-m approximant is accurate to unit
// roundoff in double precision (Higham, 2005).
const THETA: [(usize, f64); 5] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068e0),
    (13, 5.371_920_351_148_152e0),
];

/// `b_j = (2m - j)! m! / ((2m)! j! (m - j)!)`.
fn pade_coefficients(m: usize) -> Vec<f64> {
    let mut b = vec![1.0; m + 1];
    for j in 1..=m {
        b[j] = b[j - 1] * (m + 1 - j) as f64 / (j as f64 * (2 * m + 1 - j) as f64);
    }
    b
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^M`.
pub fn matrix_exp(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(m, "matrix_exp input")?;
    ensure_finite(m, "matrix_exp input")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if n == 1 {
        return Ok(DMatrix::from_element(1, 1, m[(0, 0)].exp()));
    }
    let norm = one_norm(m);
    for &(deg, theta) in &THETA[..4] {
        if norm <= theta {
            return pade(m, deg);
        }
    }
    let (_, theta13) = THETA[4];
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = m * 2f64.powi(-s);
    let mut r = pade(&scaled, 13)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade(a: &DMatrix<f64>, deg: usize) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let b = pade_coefficients(deg);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let (u, v) = if deg == 13 {
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
        let u = a * (&a6 * &inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
        let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
        let v = &a6 * &inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
        (u, v)
    } else {
        // even powers I, A^2, A^4, ...
        let mut powers = vec![id.clone(), a2.clone()];
        while powers.len() <= deg / 2 {
            let next = powers.last().unwrap() * &a2;
            powers.push(next);
        }
        let mut u_inner = DMatrix::zeros(n, n);
        let mut v = DMatrix::zeros(n, n);
        for (k, p) in powers.iter().enumerate() {
            if 2 * k < deg {
                u_inner += p * b[2 * k + 1];
            }
            v += p * b[2 * k];
        }
        (a * u_inner, v)
    };
    let q = &v - &u;
    let p = &v + &u;
    q.lu().solve(&p).ok_or(Error::Singular("Padé denominator"))
}
