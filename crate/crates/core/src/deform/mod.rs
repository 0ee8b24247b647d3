//! Nonstationary residual covariance by space deformation: dispersions,
//! nonmetric MDS into D-space, a smoothing thin-plate spline from G-space to
//! D-space, fold diagnostics and the covariance extension to ungauged sites.

mod covariance;
mod mds;
mod tps;

pub use covariance::{extend_covariance, interpolate_sd, ExtendedCovariance, SdInterpolation, EIGEN_FLOOR};
pub use mds::{
    isotonic_regression, mds_embed, nonmetric_stress, procrustes_align, DSpaceConfig, MdsOptions, MonotonePair,
};
pub use tps::{apply_tps, fit_tps, fold_check, principal_stretches, CellStretch, DeformDiagnostics, ProbeGrid, TpsMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{euclidean_distance, ProjPoint};
use crate::scalar::Real;
use crate::variogram::{fit_exponential_variogram, ExpVariogramFit};

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionMatrix<T: Real> {
    /// `sqrt(2(1 − corr))`, zero diagonal.
    pub disp: DMatrix<T>,
    pub corr: DMatrix<T>,
    /// Residual standard deviation per site.
    pub sd: Vec<T>,
}

/// Sample correlations of the residual columns and the implied dispersions.
pub fn dispersion_matrix<T: Real>(residuals: &DMatrix<T>) -> Result<DispersionMatrix<T>> {
    let (n, g) = residuals.shape();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "{n} time points; dispersions need at least 3"
        )));
    }
    if residuals.iter().any(|v| !v.finite()) {
        return Err(Error::NonFinite("residual matrix".into()));
    }
    let nn = T::from_usize_lossy(n);
    let mut centred = residuals.clone();
    let mut sd = Vec::with_capacity(g);
    for j in 0..g {
        let mean = centred.column(j).sum() / nn;
        centred.column_mut(j).add_scalar_mut(-mean);
        let ss = centred.column(j).norm_squared();
        let s = (ss / (nn - T::one())).sqrt();
        if !(s > T::zero()) {
            return Err(Error::InvalidInput(format!("residual column {j} has zero variance")));
        }
        sd.push(s);
    }
    let cov = centred.transpose() * &centred / (nn - T::one());
    let corr = DMatrix::from_fn(g, g, |i, j| {
        if i == j {
            T::one()
        } else {
            (cov[(i, j)] / (sd[i] * sd[j])).max(-T::one()).min(T::one())
        }
    });
    let disp = corr.map(|c| (T::lit(2.0) * (T::one() - c)).max(T::zero()).sqrt());
    Ok(DispersionMatrix { disp, corr, sd })
}

/// Correlation implied by a dispersion: `1 − d²/2`.
pub fn corr_from_dispersion<T: Real>(d: T) -> T {
    T::one() - d * d * T::lit(0.5)
}

pub const DEFAULT_LAMBDAS: [f64; 6] = [0.0, 1.0, 2.0, 5.0, 10.0, 50.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow<T> {
    pub lambda: T,
    pub fold_fraction: T,
    /// RMS distance between mapped knots and their MDS positions.
    pub knot_rms: T,
    /// Normalized stress of the mapped knots against the dispersions.
    pub stress: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection<T> {
    pub lambda: T,
    pub table: Vec<LambdaRow<T>>,
    /// Every supplied candidate folded, so λ was raised past them; the extra
    /// values appear at the end of `table`.
    pub all_folded: bool,
}

/// λ stops growing here; near this the spline is close to affine.
pub const MAX_EXTENDED_LAMBDA: f64 = 1e6;

/// Smallest candidate whose spline does not fold on `probe`. If every
/// candidate folds, λ keeps growing tenfold past the largest until the map
/// no longer folds or reaches [`MAX_EXTENDED_LAMBDA`].
pub fn select_lambda<T: Real>(
    source: &[ProjPoint<T>],
    target: &[ProjPoint<T>],
    disp: &DMatrix<T>,
    candidates: &[T],
    probe: &ProbeGrid<T>,
) -> Result<LambdaSelection<T>> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no smoothing candidates given".into()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    sorted.dedup();
    let row = |lambda: T| -> Result<LambdaRow<T>> {
        let map = fit_tps(source, target, lambda)?;
        let diag = fold_check(&map, probe);
        let mapped = apply_tps(&map, source);
        Ok(LambdaRow {
            lambda,
            fold_fraction: diag.fold_fraction,
            knot_rms: map.knot_rms(target),
            stress: nonmetric_stress(disp, &mapped),
        })
    };
    let mut table = sorted.iter().map(|&l| row(l)).collect::<Result<Vec<_>>>()?;
    let chosen = table.iter().find(|r| r.fold_fraction == T::zero()).map(|r| r.lambda);
    let all_folded = chosen.is_none();
    let lambda = match chosen {
        Some(l) => l,
        None => {
            let cap = T::lit(MAX_EXTENDED_LAMBDA);
            let mut l = *sorted.last().unwrap();
            loop {
                l = if l > T::zero() {
                    (l * T::lit(10.0)).min(cap)
                } else {
                    T::one()
                };
                let r = row(l)?;
                table.push(r);
                if r.fold_fraction == T::zero() || l >= cap {
                    break;
                }
            }
            if table.last().unwrap().fold_fraction > T::zero() {
                log::warn!("the spline folds even at lambda = {l}");
            } else {
                log::warn!("every smoothing candidate folds; raised lambda to {l}");
            }
            l
        }
    };
    Ok(LambdaSelection {
        lambda,
        table,
        all_folded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformOptions<T> {
    pub mds: MdsOptions<T>,
    pub lambdas: Vec<T>,
    /// Fixed smoothing; skips selection when set.
    pub lambda: Option<T>,
    pub probe_cells: usize,
}

impl<T: Real> Default for DeformOptions<T> {
    fn default() -> Self {
        Self {
            mds: MdsOptions::default(),
            lambdas: DEFAULT_LAMBDAS.iter().map(|&l| T::lit(l)).collect(),
            lambda: None,
            probe_cells: 30,
        }
    }
}

/// Every fitted piece of the deformation model.
#[derive(Debug, Clone, PartialEq)]
pub struct Deformation<T: Real> {
    pub dispersion: DispersionMatrix<T>,
    pub config: DSpaceConfig<T>,
    pub selection: LambdaSelection<T>,
    pub map: TpsMap<T>,
    pub variogram: ExpVariogramFit<T>,
    pub probe: ProbeGrid<T>,
}

/// (mapped D-space distance, `1 − ρ`) for every gauged pair, the points the
/// D-space variogram is fitted to.
pub fn dspace_pairs<T: Real>(map: &TpsMap<T>, sources: &[ProjPoint<T>], corr: &DMatrix<T>) -> (Vec<T>, Vec<T>) {
    let mapped = apply_tps(map, sources);
    let g = sources.len();
    let mut h = Vec::with_capacity(g * (g - 1) / 2);
    let mut gamma = Vec::with_capacity(h.capacity());
    for i in 0..g {
        for j in (i + 1)..g {
            h.push(euclidean_distance(&mapped[i], &mapped[j]));
            gamma.push(T::one() - corr[(i, j)]);
        }
    }
    (h, gamma)
}

/// Fits the deformation to gauged residuals (n × g) at G-space locations.
pub fn fit_deformation<T: Real>(
    residuals: &DMatrix<T>,
    locations: &[ProjPoint<T>],
    opts: &DeformOptions<T>,
) -> Result<Deformation<T>> {
    let dispersion = dispersion_matrix(residuals)?;
    let config = mds_embed(&dispersion.disp, locations, opts.mds)?;
    let probe = ProbeGrid::covering(locations, T::lit(0.05), opts.probe_cells, opts.probe_cells);
    let candidates = match opts.lambda {
        Some(l) => vec![l],
        None => opts.lambdas.clone(),
    };
    let selection = select_lambda(locations, &config.coords, &dispersion.disp, &candidates, &probe)?;
    let map = fit_tps(locations, &config.coords, selection.lambda)?;
    let (h, gamma) = dspace_pairs(&map, locations, &dispersion.corr);
    let w = vec![T::one(); h.len()];
    let variogram = fit_exponential_variogram(&h, &gamma, &w)?;
    Ok(Deformation {
        dispersion,
        config,
        selection,
        map,
        variogram,
        probe,
    })
}
