//! Nonmetric multidimensional scaling of a dispersion matrix into the plane.

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::ProjPoint;
use crate::scalar::Real;

/// Weighted least-squares nondecreasing fit to `y` (pool adjacent
/// violators). `y` is assumed to be listed in ascending order of its
/// predictor.
pub fn isotonic_regression<T: Real>(y: &[T], weights: &[T]) -> Vec<T> {
    assert_eq!(y.len(), weights.len(), "isotonic_regression: length mismatch");
    // blocks of (weighted mean, total weight, length)
    let mut blocks: Vec<(T, T, usize)> = Vec::with_capacity(y.len());
    for (&v, &w) in y.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            let wt = w1 + w2;
            let mean = if wt > T::zero() {
                (m1 * w1 + m2 * w2) / wt
            } else {
                (m1 + m2) * T::lit(0.5)
            };
            blocks.truncate(blocks.len() - 2);
            blocks.push((mean, wt, n1 + n2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, n)| std::iter::repeat_n(m, n))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonePair<T> {
    pub dispersion: T,
    pub distance: T,
    pub disparity: T,
}

/// Planar D-space configuration and the fit that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DSpaceConfig<T> {
    /// Aligned to the initial configuration by a similarity transform, so the
    /// coordinates are on the initial (km) scale.
    pub coords: Vec<ProjPoint<T>>,
    pub stress: T,
    /// Stress before the first update and after every accepted update.
    pub stress_trace: Vec<T>,
    /// One entry per site pair, sorted by dispersion.
    pub monotone_fit: Vec<MonotonePair<T>>,
    pub iterations: usize,
    pub converged: bool,
    /// RMS distance between aligned D-space and initial coordinates,
    /// relative to the RMS spread of the initial coordinates.
    pub procrustes_residual: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdsOptions<T> {
    pub max_iter: usize,
    /// Relative stress change below which iteration stops.
    pub tol: T,
}

impl<T: Real> Default for MdsOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: T::lit(1e-7),
        }
    }
}

fn pair_list(g: usize) -> Vec<(usize, usize)> {
    (0..g).flat_map(|i| ((i + 1)..g).map(move |j| (i, j))).collect()
}

fn distances<T: Real>(x: &[Vector2<T>], pairs: &[(usize, usize)]) -> Vec<T> {
    pairs.iter().map(|&(i, j)| (x[i] - x[j]).norm()).collect()
}

/// Disparities (isotonic fit of `h` in dispersion order, ties in dispersion
/// broken by `h`) and the normalized stress.
fn disparities<T: Real>(disp: &[T], h: &[T], order_by_disp: &[usize]) -> (Vec<T>, T) {
    let mut order = order_by_disp.to_vec();
    // stable sort keeps the dispersion order, reorders only tied runs
    order.sort_by(|&a, &b| {
        disp[a]
            .partial_cmp(&disp[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(h[a].partial_cmp(&h[b]).unwrap_or(std::cmp::Ordering::Equal))
    });
    let ys: Vec<T> = order.iter().map(|&k| h[k]).collect();
    let ones = vec![T::one(); ys.len()];
    let fitted = isotonic_regression(&ys, &ones);
    let mut dhat = vec![T::zero(); h.len()];
    for (pos, &k) in order.iter().enumerate() {
        dhat[k] = fitted[pos];
    }
    let num = h
        .iter()
        .zip(&dhat)
        .fold(T::zero(), |a, (&hi, &di)| a + (di - hi) * (di - hi));
    let den = h.iter().fold(T::zero(), |a, &hi| a + hi * hi);
    let stress = if den > T::zero() { num / den } else { T::zero() };
    (dhat, stress)
}

/// Normalized stress of a configuration against dispersions:
/// `min over monotone δ of Σ(δ(d_ij) − h_ij)² / Σ h_ij²`.
pub fn nonmetric_stress<T: Real>(disp: &DMatrix<T>, coords: &[ProjPoint<T>]) -> T {
    let pairs = pair_list(coords.len());
    let x: Vec<Vector2<T>> = coords.iter().map(|p| Vector2::new(p.s1, p.s2)).collect();
    let h = distances(&x, &pairs);
    let d: Vec<T> = pairs.iter().map(|&(i, j)| disp[(i, j)]).collect();
    let order: Vec<usize> = (0..pairs.len()).collect();
    disparities(&d, &h, &order).1
}

fn centre_and_scale<T: Real>(x: &mut [Vector2<T>], pairs: &[(usize, usize)]) -> Result<()> {
    let n = T::from_usize_lossy(x.len());
    let c = x.iter().fold(Vector2::zeros(), |a: Vector2<T>, v| a + v) / n;
    x.iter_mut().for_each(|v| *v -= c);
    let ss = distances(x, pairs).iter().fold(T::zero(), |a, &h| a + h * h);
    let rms = (ss / T::from_usize_lossy(pairs.len())).sqrt();
    if !(rms > T::zero()) || !rms.finite() {
        return Err(Error::NonFinite("configuration collapsed to a point".into()));
    }
    x.iter_mut().for_each(|v| *v /= rms);
    Ok(())
}

/// Guttman transform `(1/g)·B(X)·X` for fixed disparities.
fn guttman<T: Real>(x: &[Vector2<T>], pairs: &[(usize, usize)], h: &[T], dhat: &[T]) -> Vec<Vector2<T>> {
    let g = x.len();
    let mut out = vec![Vector2::zeros(); g];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        if h[k] <= T::zero() {
            continue;
        }
        let b = dhat[k] / h[k];
        let diff = (x[i] - x[j]) * b;
        out[i] += diff;
        out[j] -= diff;
    }
    let gn = T::from_usize_lossy(g);
    out.iter_mut().for_each(|v| *v /= gn);
    out
}

/// Similarity (scale, rotation, optional reflection, translation) aligning
/// `x` to `target` in least squares. Returns the aligned points and the
/// residual relative to the spread of `target`.
pub fn procrustes_align<T: Real>(x: &[Vector2<T>], target: &[Vector2<T>]) -> (Vec<Vector2<T>>, T) {
    let n = T::from_usize_lossy(x.len());
    let cx = x.iter().fold(Vector2::zeros(), |a: Vector2<T>, v| a + v) / n;
    let ct = target.iter().fold(Vector2::zeros(), |a: Vector2<T>, v| a + v) / n;
    let mut m = Matrix2::zeros();
    let mut sxx = T::zero();
    let mut stt = T::zero();
    for (a, b) in x.iter().zip(target) {
        let (a, b) = (a - cx, b - ct);
        m += b * a.transpose();
        sxx += a.norm_squared();
        stt += b.norm_squared();
    }
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let r = u * vt;
    let trace = svd.singular_values.sum();
    let s = if sxx > T::zero() { trace / sxx } else { T::zero() };
    let aligned: Vec<Vector2<T>> = x.iter().map(|a| r * (a - cx) * s + ct).collect();
    let resid = aligned
        .iter()
        .zip(target)
        .fold(T::zero(), |acc, (a, b)| acc + (a - b).norm_squared());
    let rel = if stt > T::zero() {
        (resid / stt).sqrt()
    } else {
        T::zero()
    };
    (aligned, rel)
}

/// Nonmetric MDS starting from `init` (G-space coordinates). Alternates the
/// isotonic disparity fit with a Guttman update; the update is halved until
/// the normalized stress does not increase, so the stress trace is
/// nonincreasing.
pub fn mds_embed<T: Real>(disp: &DMatrix<T>, init: &[ProjPoint<T>], opts: MdsOptions<T>) -> Result<DSpaceConfig<T>> {
    let g = init.len();
    if disp.shape() != (g, g) {
        return Err(Error::DimensionMismatch(format!(
            "dispersion matrix {:?} for {g} sites",
            disp.shape()
        )));
    }
    if g < 2 {
        return Err(Error::InsufficientData("MDS needs at least 2 sites".into()));
    }
    if disp.iter().any(|v| !v.finite()) {
        return Err(Error::NonFinite("dispersion matrix".into()));
    }
    let pairs = pair_list(g);
    let d: Vec<T> = pairs.iter().map(|&(i, j)| disp[(i, j)]).collect();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap_or(std::cmp::Ordering::Equal));

    let g_coords: Vec<Vector2<T>> = init.iter().map(|p| Vector2::new(p.s1, p.s2)).collect();
    let mut x = g_coords.clone();
    centre_and_scale(&mut x, &pairs)?;
    let mut h = distances(&x, &pairs);
    let (mut dhat, mut stress) = disparities(&d, &h, &order);
    let mut trace = vec![stress];
    let mut converged = false;
    let mut iterations = 0;
    let tiny = T::lit(1e-14);

    while iterations < opts.max_iter && stress > tiny {
        iterations += 1;
        let target = guttman(&x, &pairs, &h, &dhat);
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            let mut cand: Vec<Vector2<T>> = x.iter().zip(&target).map(|(a, b)| a + (b - a) * step).collect();
            if centre_and_scale(&mut cand, &pairs).is_ok() {
                let hc = distances(&cand, &pairs);
                let (dc, sc) = disparities(&d, &hc, &order);
                if !sc.finite() {
                    return Err(Error::NonFinite(format!(
                        "MDS stress became non-finite at iteration {iterations}; trace: {:?}",
                        trace.iter().map(|s| s.as_f64()).collect::<Vec<_>>()
                    )));
                }
                if sc <= stress {
                    accepted = Some((cand, hc, dc, sc));
                    break;
                }
            }
            step *= T::lit(0.5);
        }
        let Some((cand, hc, dc, sc)) = accepted else {
            converged = true;
            break;
        };
        let rel = (stress - sc) / stress.max(tiny);
        x = cand;
        h = hc;
        dhat = dc;
        stress = sc;
        trace.push(stress);
        if rel < opts.tol {
            converged = true;
            break;
        }
    }
    if stress <= tiny {
        converged = true;
    }
    let (aligned, procrustes_residual) = procrustes_align(&x, &g_coords);
    let mut monotone_fit: Vec<MonotonePair<T>> = (0..pairs.len())
        .map(|k| MonotonePair {
            dispersion: d[k],
            distance: h[k],
            disparity: dhat[k],
        })
        .collect();
    monotone_fit.sort_by(|a, b| {
        a.dispersion
            .partial_cmp(&b.dispersion)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.distance.partial_cmp(&b.distance).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(DSpaceConfig {
        coords: aligned.iter().map(|v| ProjPoint::new(v.x, v.y)).collect(),
        stress,
        stress_trace: trace,
        monotone_fit,
        iterations,
        converged,
        procrustes_residual,
    })
}
