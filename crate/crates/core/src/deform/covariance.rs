//! Extension of the D-space covariance model to every site.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{euclidean_distance, ProjPoint};
use crate::ingest::StationTable;
use crate::linalg::{cholesky, floor_eigenvalues, symmetrize};
use crate::scalar::Real;
use crate::variogram::ExpVariogramFit;

use super::tps::TpsMap;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedCovariance<T: Real> {
    /// p × p covariance in station-table order.
    pub cov: DMatrix<T>,
    pub corr: DMatrix<T>,
    pub sd: Vec<T>,
    /// Mapped D-space coordinates of every station.
    pub d_coords: Vec<ProjPoint<T>>,
    /// Whether the eigenvalue floor changed the correlation matrix.
    pub floored: bool,
}

/// Relative eigenvalue floor used for the positive-definite repair.
pub const EIGEN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdInterpolation {
    /// Inverse-distance weights use this power of D-space distance.
    pub power: i32,
    /// Only the nearest gauged sites take part; `None` uses all of them.
    pub neighbours: Option<usize>,
}

impl Default for SdInterpolation {
    fn default() -> Self {
        Self {
            power: 2,
            neighbours: None,
        }
    }
}

/// Inverse-distance interpolation of gauged standard deviations in D-space.
pub fn interpolate_sd<T: Real>(target: &ProjPoint<T>, gauged: &[ProjPoint<T>], sd_g: &[T], opts: SdInterpolation) -> T {
    let mut near: Vec<(T, T)> = gauged
        .iter()
        .zip(sd_g)
        .map(|(p, &s)| (euclidean_distance(target, p), s))
        .collect();
    near.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    if let Some(k) = opts.neighbours {
        near.truncate(k.max(1));
    }
    let mut num = T::zero();
    let mut den = T::zero();
    for (h, s) in near {
        if h <= T::lit(1e-9) {
            return s;
        }
        let w = T::one() / h.powi(opts.power);
        num += w * s;
        den += w;
    }
    num / den
}

/// Covariance over all stations: exponential correlation of mapped D-space
/// distances (with the fitted nugget share removed off the diagonal), scaled
/// by per-site standard deviations. Gauged sites keep `sd_g`; the rest
/// receive interpolated values.
pub fn extend_covariance<T: Real>(
    stations: &StationTable<T>,
    gauged_idx: &[usize],
    map: &TpsMap<T>,
    fit: &ExpVariogramFit<T>,
    sd_g: &[T],
    sd_opts: SdInterpolation,
) -> Result<ExtendedCovariance<T>> {
    if gauged_idx.len() != sd_g.len() || gauged_idx.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} gauged sites but {} standard deviations",
            gauged_idx.len(),
            sd_g.len()
        )));
    }
    if sd_g.iter().any(|&s| !(s > T::zero()) || !s.finite()) {
        return Err(Error::InvalidInput(
            "gauged standard deviations must be positive".into(),
        ));
    }
    if !(fit.range_phi > T::zero()) || !(fit.sill > T::zero()) || fit.nugget < T::zero() {
        return Err(Error::InvalidInput("variogram fit parameters out of range".into()));
    }
    let p = stations.len();
    let d_coords: Vec<ProjPoint<T>> = stations.iter().map(|s| map.apply_one(&s.proj)).collect();
    if d_coords.iter().any(|c| !c.s1.finite() || !c.s2.finite()) {
        return Err(Error::NonFinite("mapped D-space coordinates".into()));
    }
    let gauged_d: Vec<ProjPoint<T>> = gauged_idx.iter().map(|&i| d_coords[i]).collect();
    let mut sd = vec![T::zero(); p];
    let mut is_gauged = vec![false; p];
    for (&i, &s) in gauged_idx.iter().zip(sd_g) {
        sd[i] = s;
        is_gauged[i] = true;
    }
    for j in 0..p {
        if !is_gauged[j] {
            sd[j] = interpolate_sd(&d_coords[j], &gauged_d, sd_g, sd_opts);
        }
    }

    let mut corr = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            T::one()
        } else {
            fit.correlation(euclidean_distance(&d_coords[i], &d_coords[j]))
        }
    });
    symmetrize(&mut corr);
    let (repaired, floored) = floor_eigenvalues(&corr, T::lit(EIGEN_FLOOR));
    if floored {
        let dinv: Vec<T> = (0..p).map(|i| T::one() / repaired[(i, i)].sqrt()).collect();
        corr = DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                T::one()
            } else {
                repaired[(i, j)] * dinv[i] * dinv[j]
            }
        });
        log::warn!("extended correlation matrix needed an eigenvalue floor");
    }
    let mut cov = DMatrix::from_fn(p, p, |i, j| corr[(i, j)] * sd[i] * sd[j]);
    symmetrize(&mut cov);
    cholesky(&cov, "extended covariance")?;
    Ok(ExtendedCovariance {
        cov,
        corr,
        sd,
        d_coords,
        floored,
    })
}
