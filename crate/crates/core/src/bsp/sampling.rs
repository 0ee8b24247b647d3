//! Draws from the hierarchy, for simulation studies and calibration checks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::scalar::Real;

use super::BspHyperparams;

fn normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(StandardNormal.sample(rng))
}

/// Draws `Σ ~ IW(Ψ, ν)` (mean `Ψ/(ν − dim − 1)`) and returns it with a factor
/// `G` such that `Σ = G Gᵀ`.
///
/// With `Ψ = C Cᵀ` and a Bartlett factor `A` of a standard Wishart(I, ν)
/// draw, `Σ = C A⁻ᵀ A⁻¹ Cᵀ`.
pub fn sample_inverse_wishart<T: Real, R: Rng + ?Sized>(
    psi: &DMatrix<T>,
    nu: T,
    rng: &mut R,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let dim = psi.nrows();
    if !(nu.as_f64() > dim as f64 - 1.0) {
        return Err(Error::InvalidInput(format!(
            "inverse-Wishart needs ν > {} (got {nu})",
            dim as f64 - 1.0
        )));
    }
    let c = cholesky(psi, "inverse-Wishart scale")?.l();
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new(nu.as_f64() - i as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
        a[(i, i)] = T::lit(chi.sample(rng).sqrt());
        for j in 0..i {
            a[(i, j)] = normal(rng);
        }
    }
    let a_inv = a
        .solve_lower_triangular(&DMatrix::identity(dim, dim))
        .ok_or_else(|| Error::Singular("Bartlett factor".into()))?;
    let factor = c * a_inv.transpose();
    let sigma = &factor * factor.transpose();
    Ok((sigma, factor))
}

/// `B ~ MN(M, U, V)` given a factor `V = Lv Lvᵀ`: `M + Lu E Lvᵀ`. A zero row
/// covariance returns `M` exactly.
pub fn sample_matrix_normal<T: Real, R: Rng + ?Sized>(
    mean: &DMatrix<T>,
    row_cov: &DMatrix<T>,
    col_factor: &DMatrix<T>,
    rng: &mut R,
) -> Result<DMatrix<T>> {
    let (k, p) = mean.shape();
    if row_cov.iter().all(|&v| v == T::zero()) {
        return Ok(mean.clone());
    }
    let lu = cholesky(row_cov, "matrix-normal row covariance")?.l();
    let e = DMatrix::from_fn(k, p, |_, _| normal(rng));
    Ok(mean + lu * e * col_factor.transpose())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyDraw<T: Real> {
    /// n × p responses.
    pub y: DMatrix<T>,
    pub sigma: DMatrix<T>,
    pub b: DMatrix<T>,
}

/// One world from the hierarchy: Σ, then B, then independent rows
/// `y_t = z_t B + e_t`, `e_t ~ N(0, Σ)`.
pub fn simulate_hierarchy<T: Real, R: Rng + ?Sized>(
    hp: &BspHyperparams<T>,
    z: &DMatrix<T>,
    rng: &mut R,
) -> Result<HierarchyDraw<T>> {
    if z.ncols() != hp.k() {
        return Err(Error::DimensionMismatch(format!(
            "z has {} columns for k = {}",
            z.ncols(),
            hp.k()
        )));
    }
    let (sigma, factor) = sample_inverse_wishart(&hp.psi, hp.delta, rng)?;
    let b = sample_matrix_normal(&hp.b0, &hp.f_inv, &factor, rng)?;
    let n = z.nrows();
    let e: DMatrix<T> = DMatrix::from_fn(n, hp.p(), |_, _| normal(rng));
    let y = z * &b + e * factor.transpose();
    Ok(HierarchyDraw { y, sigma, b })
}
