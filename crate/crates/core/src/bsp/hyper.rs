//! Empirical-Bayes assembly of (B₀, F⁻¹, Ψ, δ).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det, symmetrize};
use crate::scalar::Real;

use super::{BspHyperparams, BspPredictor, DFormula};

/// δ candidates as offsets above the number of sites p; every one keeps the
/// prior mean of Σ finite.
pub const DEFAULT_DELTA_OFFSETS: [f64; 6] = [2.0, 5.0, 10.0, 20.0, 50.0, 100.0];
pub const DEFAULT_C_GRID: [f64; 4] = [0.0, 0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperOptions {
    /// δ = p + offset for each offset.
    pub delta_offsets: Vec<f64>,
    /// F⁻¹ = c·(ZᵀZ)⁻¹ for each c.
    pub c_grid: Vec<f64>,
    /// When false only (`delta_offsets[0]`, `c_grid[0]`) is used.
    pub grid_search: bool,
    /// Rescale Ψ per δ so that tr E[Σ_gg] matches the residual covariance.
    pub match_trace: bool,
}

impl Default for HyperOptions {
    fn default() -> Self {
        Self {
            delta_offsets: DEFAULT_DELTA_OFFSETS.to_vec(),
            c_grid: DEFAULT_C_GRID.to_vec(),
            grid_search: true,
            match_trace: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub delta: f64,
    pub c: f64,
    /// Multiplier applied to the Ψ shape.
    pub psi_scale: f64,
    /// Log marginal likelihood of the gauged data; `None` when not defined.
    pub loglik: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperReport {
    pub grid: Vec<GridPoint>,
    pub chosen: usize,
    pub delta: f64,
    pub c: f64,
    pub psi_scale: f64,
    pub predictive_dof: f64,
}

/// `ln Γ_g(a)`.
fn ln_mv_gamma(g: usize, a: f64) -> f64 {
    let gf = g as f64;
    gf * (gf - 1.0) / 4.0 * std::f64::consts::PI.ln()
        + (1..=g).map(|j| ln_gamma(a + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

/// Log marginal density of the gauged block `R = Y_g − Z B₀^(g)` (n × g)
/// under `Σ_gg ~ IW_g(Ψ_gg, ν)`, `ν = δ − u`, and F⁻¹ = c(ZᵀZ)⁻¹: a matrix t
/// with row covariance `A = I + cH` (H the hat matrix of Z).
pub fn marginal_loglik<T: Real>(
    resid: &DMatrix<T>,
    hat: &DMatrix<T>,
    k: usize,
    psi_gg: &DMatrix<T>,
    nu: f64,
    c: f64,
) -> Result<f64> {
    let (n, g) = resid.shape();
    if !(nu > g as f64 - 1.0) {
        return Err(Error::ImproperPredictive(format!(
            "ν = {nu} ≤ g − 1 = {}",
            g as f64 - 1.0
        )));
    }
    let r = resid.map(|v| v.as_f64());
    let h = hat.map(|v| v.as_f64());
    let psi = psi_gg.map(|v| v.as_f64());
    let a_inv = DMatrix::<f64>::identity(n, n) - h * (c / (1.0 + c));
    let mut post = &psi + r.transpose() * a_inv * &r;
    symmetrize(&mut post);
    let ld_post = log_det(&cholesky(&post, "posterior scale")?);
    let ld_psi = log_det(&cholesky(&psi, "Ψ_gg")?);
    let (nf, gf) = (n as f64, g as f64);
    Ok(
        -0.5 * nf * gf * std::f64::consts::PI.ln() - 0.5 * gf * k as f64 * (1.0 + c).ln()
            + ln_mv_gamma(g, 0.5 * (nu + nf))
            - ln_mv_gamma(g, 0.5 * nu)
            + 0.5 * nu * ld_psi
            - 0.5 * (nu + nf) * ld_post,
    )
}

/// Chooses (δ, c) by the marginal likelihood of the gauged data.
///
/// * `y_g`: n × g gauged observations, columns in `gauged_idx` order
/// * `z`: n × k time covariates
/// * `b0`: k × p prior mean
/// * `psi_shape`: p × p covariance shape, rescaled per δ when
///   `match_trace` is set
pub fn assemble_hyperparams<T: Real>(
    y_g: &DMatrix<T>,
    z: &DMatrix<T>,
    b0: &DMatrix<T>,
    psi_shape: &DMatrix<T>,
    gauged_idx: &[usize],
    ungauged_idx: &[usize],
    opts: &HyperOptions,
) -> Result<(BspHyperparams<T>, HyperReport)> {
    let (n, g) = y_g.shape();
    let k = z.ncols();
    let p = psi_shape.nrows();
    if z.nrows() != n || b0.shape() != (k, p) || psi_shape.ncols() != p || gauged_idx.len() != g {
        return Err(Error::DimensionMismatch(format!(
            "y_g {:?}, z {:?}, B₀ {:?}, Ψ {:?}, {} gauged indices",
            y_g.shape(),
            z.shape(),
            b0.shape(),
            psi_shape.shape(),
            gauged_idx.len()
        )));
    }
    if gauged_idx.len() + ungauged_idx.len() != p {
        return Err(Error::InvalidInput(
            "gauged and ungauged indices must cover every site".into(),
        ));
    }
    if opts.delta_offsets.is_empty() || opts.c_grid.is_empty() {
        return Err(Error::InvalidInput("empty hyperparameter grid".into()));
    }
    let u = ungauged_idx.len();
    let ztz_inv = cholesky(&(z.transpose() * z), "ZᵀZ")?.inverse();
    let hat = z * &ztz_inv * z.transpose();
    let resid = y_g - z * b0.select_columns(gauged_idx);
    let sample_trace = resid.norm_squared() / T::from_usize_lossy(n);
    let psi_gg_shape = psi_shape.select_rows(gauged_idx).select_columns(gauged_idx);
    let shape_trace = psi_gg_shape.trace();

    let deltas: Vec<f64> = if opts.grid_search {
        opts.delta_offsets.clone()
    } else {
        vec![opts.delta_offsets[0]]
    };
    let cs: Vec<f64> = if opts.grid_search {
        opts.c_grid.clone()
    } else {
        vec![opts.c_grid[0]]
    };

    let mut grid = Vec::with_capacity(deltas.len() * cs.len());
    for &off in &deltas {
        let delta = p as f64 + off;
        let psi_scale = if opts.match_trace {
            if !(off > 1.0) {
                return Err(Error::InvalidInput(format!(
                    "δ offset {off} leaves the prior mean of Σ undefined; trace matching needs offsets above 1"
                )));
            }
            (off - 1.0) * sample_trace.as_f64() / shape_trace.as_f64()
        } else {
            1.0
        };
        for &c in &cs {
            if c < 0.0 {
                return Err(Error::InvalidInput(format!("c = {c} must be nonnegative")));
            }
            let proper = delta - u as f64 + 1.0 > 0.0;
            let loglik = if proper && psi_scale.is_finite() && psi_scale > 0.0 {
                let psi_gg = &psi_gg_shape * T::lit(psi_scale);
                marginal_loglik(&resid, &hat, k, &psi_gg, delta - u as f64, c).ok()
            } else {
                None
            };
            grid.push(GridPoint {
                delta,
                c,
                psi_scale,
                loglik,
            });
        }
    }
    let single = grid.len() == 1;
    let chosen = if single {
        (grid[0].delta - u as f64 + 1.0 > 0.0).then_some(0)
    } else {
        grid.iter()
            .enumerate()
            .filter_map(|(i, gp)| gp.loglik.map(|l| (i, l)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
    .ok_or_else(|| Error::ImproperPredictive("no hyperparameter grid point gives a proper predictive".into()))?;
    let best = grid[chosen];
    let hp = BspHyperparams {
        b0: b0.clone(),
        f_inv: &ztz_inv * T::lit(best.c),
        psi: psi_shape * T::lit(best.psi_scale),
        delta: T::lit(best.delta),
        gauged_idx: gauged_idx.to_vec(),
        ungauged_idx: ungauged_idx.to_vec(),
    };
    // validates Ψ and the Schur complement Ψ_{u|g}
    BspPredictor::new(hp.clone(), DFormula::Corrected)?;
    let report = HyperReport {
        delta: best.delta,
        c: best.c,
        psi_scale: best.psi_scale,
        predictive_dof: best.delta - u as f64 + 1.0,
        grid,
        chosen,
    };
    Ok((hp, report))
}
