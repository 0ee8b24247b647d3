//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Cholesky factorization that surfaces failure instead of falling back to a
/// pseudo-inverse.
pub fn cholesky<T: Real>(m: &DMatrix<T>, what: &str) -> Result<Cholesky<T, Dyn>> {
    if m.iter().any(|v| !v.finite()) {
        return Err(Error::NonFinite(format!("{what} has non-finite entries")));
    }
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// log-determinant from a Cholesky factor.
pub fn log_det<T: Real>(chol: &Cholesky<T, Dyn>) -> T {
    let l = chol.l_dirty();
    (0..l.nrows()).fold(T::zero(), |acc, i| acc + l[(i, i)].ln()) * T::lit(2.0)
}

pub fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Raises eigenvalues of a symmetric matrix to at least `rel_floor` times the
/// mean eigenvalue. Returns the repaired matrix and whether any eigenvalue was
/// raised.
pub fn floor_eigenvalues<T: Real>(m: &DMatrix<T>, rel_floor: T) -> (DMatrix<T>, bool) {
    let n = m.nrows();
    if n == 0 {
        return (m.clone(), false);
    }
    let eig = m.clone().symmetric_eigen();
    let mean = eig.eigenvalues.iter().fold(T::zero(), |a, &v| a + v) / T::from_usize_lossy(n);
    let floor = mean.abs() * rel_floor;
    let mut floored = false;
    let vals = eig.eigenvalues.map(|v| {
        if v < floor {
            floored = true;
            floor
        } else {
            v
        }
    });
    if !floored {
        return (m.clone(), false);
    }
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&vals) * q.transpose();
    symmetrize(&mut out);
    (out, true)
}

/// Least-squares solution with the unscaled coefficient covariance `(XᵀX)⁻¹`.
#[derive(Debug, Clone)]
pub struct LeastSquares<T: Real> {
    pub coef: DVector<T>,
    pub xtx_inv: DMatrix<T>,
    pub residuals: DVector<T>,
    pub rss: T,
}

/// Solves `min ‖y − Xβ‖²` through a thin QR factorization of `X`.
pub fn least_squares<T: Real>(x: &DMatrix<T>, y: &DVector<T>) -> Result<LeastSquares<T>> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but response has {}",
            y.len()
        )));
    }
    if n < k {
        return Err(Error::Singular(format!(
            "XᵀX is singular: {n} rows for {k} coefficients"
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = (0..k).fold(T::zero(), |m, i| m.max(r[(i, i)].abs()));
    let tol = rmax * T::sqrt_eps() * T::lit(1e-2);
    if let Some(j) = (0..k).find(|&i| r[(i, i)].abs() <= tol) {
        return Err(Error::Singular(format!("XᵀX is singular (column {j})")));
    }
    let qty = qr.q().transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Singular("triangular inverse failed".into()))?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let residuals = y - x * &coef;
    let rss = residuals.dot(&residuals);
    Ok(LeastSquares {
        coef,
        xtx_inv,
        residuals,
        rss,
    })
}

/// Solves a general square system by LU with partial pivoting.
pub fn solve_square<T: Real>(a: DMatrix<T>, b: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    let lu = a.lu();
    let sol = lu.solve(b).ok_or_else(|| Error::Singular(what.to_string()))?;
    if sol.iter().any(|v| !v.finite()) {
        return Err(Error::Singular(what.to_string()));
    }
    Ok(sol)
}
