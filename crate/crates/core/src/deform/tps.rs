//! Smoothing thin-plate splines from G-space to D-space, with Jacobian-based
//! fold and stretch diagnostics.

use nalgebra::{DMatrix, Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::ProjPoint;
use crate::linalg::solve_square;
use crate::scalar::Real;

/// `U(r) = r² ln r`, zero at the origin.
fn kernel<T: Real>(r2: T) -> T {
    if r2 <= T::zero() {
        T::zero()
    } else {
        r2 * r2.ln() * T::lit(0.5)
    }
}

/// Fitted map `f(x) = a + A·u + Σ w_i U(‖u − u_i‖)` where `u = (x − centre)/scale`
/// are knot-normalized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpsMap<T: Real> {
    pub lambda: T,
    /// Rows are output coordinates; columns are (1, u1, u2).
    pub affine: [[T; 3]; 2],
    /// One row of two output weights per knot.
    pub weights: Vec<[T; 2]>,
    /// Knots in original G-space units.
    pub knots: Vec<ProjPoint<T>>,
    pub centre: ProjPoint<T>,
    pub scale: T,
}

impl<T: Real> TpsMap<T> {
    fn normalize(&self, p: &ProjPoint<T>) -> Vector2<T> {
        Vector2::new(
            (p.s1 - self.centre.s1) / self.scale,
            (p.s2 - self.centre.s2) / self.scale,
        )
    }

    pub fn apply_one(&self, p: &ProjPoint<T>) -> ProjPoint<T> {
        let u = self.normalize(p);
        let mut out = [T::zero(); 2];
        for (o, a) in out.iter_mut().zip(&self.affine) {
            *o = a[0] + a[1] * u.x + a[2] * u.y;
        }
        for (k, w) in self.knots.iter().zip(&self.weights) {
            let d = u - self.normalize(k);
            let ker = kernel(d.norm_squared());
            out[0] += w[0] * ker;
            out[1] += w[1] * ker;
        }
        ProjPoint::new(out[0], out[1])
    }

    /// Analytic Jacobian of the map with respect to G-space coordinates.
    pub fn jacobian(&self, p: &ProjPoint<T>) -> Matrix2<T> {
        let u = self.normalize(p);
        let mut j = Matrix2::new(
            self.affine[0][1],
            self.affine[0][2],
            self.affine[1][1],
            self.affine[1][2],
        );
        for (k, w) in self.knots.iter().zip(&self.weights) {
            let d = u - self.normalize(k);
            let r2 = d.norm_squared();
            if r2 > T::zero() {
                // ∂U/∂u = (ln r² + 1)·(u − u_k)
                let g = d * (r2.ln() + T::one());
                for out in 0..2 {
                    j[(out, 0)] += w[out] * g.x;
                    j[(out, 1)] += w[out] * g.y;
                }
            }
        }
        j / self.scale
    }

    /// Mean squared distance between mapped knots and their targets.
    pub fn knot_rms(&self, targets: &[ProjPoint<T>]) -> T {
        let ss = self.knots.iter().zip(targets).fold(T::zero(), |a, (k, t)| {
            let m = self.apply_one(k);
            a + (m.s1 - t.s1) * (m.s1 - t.s1) + (m.s2 - t.s2) * (m.s2 - t.s2)
        });
        (ss / T::from_usize_lossy(targets.len().max(1))).sqrt()
    }
}

pub fn apply_tps<T: Real>(map: &TpsMap<T>, points: &[ProjPoint<T>]) -> Vec<ProjPoint<T>> {
    points.iter().map(|p| map.apply_one(p)).collect()
}

/// Solves the smoothing thin-plate-spline system
/// `[[K + λI, P], [Pᵀ, 0]]·[w; a] = [target; 0]` in knot-normalized
/// coordinates. λ = 0 interpolates the targets.
pub fn fit_tps<T: Real>(source: &[ProjPoint<T>], target: &[ProjPoint<T>], lambda: T) -> Result<TpsMap<T>> {
    let g = source.len();
    if target.len() != g {
        return Err(Error::DimensionMismatch(format!(
            "{g} knots but {} targets",
            target.len()
        )));
    }
    if g < 3 {
        return Err(Error::InsufficientData(
            "a thin-plate spline needs at least 3 knots".into(),
        ));
    }
    if lambda < T::zero() || !lambda.finite() {
        return Err(Error::InvalidInput(format!(
            "lambda = {lambda} must be finite and nonnegative"
        )));
    }
    if source.iter().chain(target).any(|p| !p.s1.finite() || !p.s2.finite()) {
        return Err(Error::NonFinite("thin-plate spline knots or targets".into()));
    }
    let n = T::from_usize_lossy(g);
    let centre = ProjPoint::new(
        source.iter().fold(T::zero(), |a, p| a + p.s1) / n,
        source.iter().fold(T::zero(), |a, p| a + p.s2) / n,
    );
    let ss = source.iter().fold(T::zero(), |a, p| {
        a + (p.s1 - centre.s1) * (p.s1 - centre.s1) + (p.s2 - centre.s2) * (p.s2 - centre.s2)
    });
    let scale = (ss / n).sqrt();
    if !(scale > T::zero()) {
        return Err(Error::Collinear("all knots coincide".into()));
    }
    let u: Vec<Vector2<T>> = source
        .iter()
        .map(|p| Vector2::new((p.s1 - centre.s1) / scale, (p.s2 - centre.s2) / scale))
        .collect();

    let p_mat = DMatrix::from_fn(g, 3, |i, c| [T::one(), u[i].x, u[i].y][c]);
    let sv = p_mat.clone().svd(false, false).singular_values;
    if sv.min() <= sv.max() * T::lit(1e-10) {
        return Err(Error::Collinear("thin-plate spline knots lie on a line".into()));
    }

    let m = g + 3;
    let mut a = DMatrix::zeros(m, m);
    for i in 0..g {
        for j in 0..g {
            a[(i, j)] = kernel((u[i] - u[j]).norm_squared());
        }
        a[(i, i)] += lambda;
        for c in 0..3 {
            a[(i, g + c)] = p_mat[(i, c)];
            a[(g + c, i)] = p_mat[(i, c)];
        }
    }
    let mut rhs = DMatrix::zeros(m, 2);
    for (i, t) in target.iter().enumerate() {
        rhs[(i, 0)] = t.s1;
        rhs[(i, 1)] = t.s2;
    }
    let sol = solve_square(a, &rhs, "thin-plate spline system")?;
    Ok(TpsMap {
        lambda,
        affine: [
            [sol[(g, 0)], sol[(g + 1, 0)], sol[(g + 2, 0)]],
            [sol[(g, 1)], sol[(g + 1, 1)], sol[(g + 2, 1)]],
        ],
        weights: (0..g).map(|i| [sol[(i, 0)], sol[(i, 1)]]).collect(),
        knots: source.to_vec(),
        centre,
        scale,
    })
}

/// Rectangular probe grid of `nx × ny` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
    pub nx: usize,
    pub ny: usize,
}

impl<T: Real> ProbeGrid<T> {
    /// Bounding box of `points` widened by `margin` of its extent on each side.
    pub fn covering(points: &[ProjPoint<T>], margin: T, nx: usize, ny: usize) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (points[0].s1, points[0].s1, points[0].s2, points[0].s2);
        for p in points {
            x0 = x0.min(p.s1);
            x1 = x1.max(p.s1);
            y0 = y0.min(p.s2);
            y1 = y1.max(p.s2);
        }
        let mx = (x1 - x0) * margin;
        let my = (y1 - y0) * margin;
        Self {
            x_min: x0 - mx,
            x_max: x1 + mx,
            y_min: y0 - my,
            y_max: y1 + my,
            nx: nx.max(1),
            ny: ny.max(1),
        }
    }

    pub fn node(&self, i: usize, j: usize) -> ProjPoint<T> {
        ProjPoint::new(
            self.x_min + (self.x_max - self.x_min) * T::from_usize_lossy(i) / T::from_usize_lossy(self.nx),
            self.y_min + (self.y_max - self.y_min) * T::from_usize_lossy(j) / T::from_usize_lossy(self.ny),
        )
    }
}

/// Local behaviour of the map on one probe cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStretch<T> {
    pub ix: usize,
    pub iy: usize,
    pub centre: ProjPoint<T>,
    pub det: T,
    pub sv_max: T,
    pub sv_min: T,
    /// Direction (radians from the s1 axis) in G-space of the largest stretch.
    pub major_angle: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformDiagnostics<T> {
    pub grid: ProbeGrid<T>,
    pub fold_fraction: T,
    /// Row-major over (iy, ix).
    pub cells: Vec<CellStretch<T>>,
}

/// Singular values and major-axis angle of a 2 × 2 matrix.
pub fn principal_stretches<T: Real>(j: &Matrix2<T>) -> (T, T, T) {
    let jtj = j.transpose() * j;
    let (a, b, c) = (jtj[(0, 0)], jtj[(0, 1)], jtj[(1, 1)]);
    let half = T::lit(0.5);
    let mid = (a + c) * half;
    let rad = (((a - c) * half).powi(2) + b * b).sqrt();
    let hi = (mid + rad).max(T::zero()).sqrt();
    let lo = (mid - rad).max(T::zero()).sqrt();
    let angle = (b * T::lit(2.0)).atan2(a - c) * half;
    (hi, lo, angle)
}

/// Corner-difference Jacobian on every probe cell.
pub fn fold_check<T: Real>(map: &TpsMap<T>, grid: &ProbeGrid<T>) -> DeformDiagnostics<T> {
    let nodes: Vec<ProjPoint<T>> = (0..=grid.ny)
        .flat_map(|j| (0..=grid.nx).map(move |i| (i, j)))
        .map(|(i, j)| grid.node(i, j))
        .collect();
    let mapped: Vec<ProjPoint<T>> = nodes.par_iter().map(|p| map.apply_one(p)).collect();
    let at = |i: usize, j: usize| mapped[j * (grid.nx + 1) + i];
    let dx = (grid.x_max - grid.x_min) / T::from_usize_lossy(grid.nx);
    let dy = (grid.y_max - grid.y_min) / T::from_usize_lossy(grid.ny);
    let two = T::lit(2.0);
    let cells: Vec<CellStretch<T>> = (0..grid.ny)
        .flat_map(|iy| (0..grid.nx).map(move |ix| (ix, iy)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(ix, iy)| {
            let (f00, f10, f01, f11) = (at(ix, iy), at(ix + 1, iy), at(ix, iy + 1), at(ix + 1, iy + 1));
            let j = Matrix2::new(
                (f10.s1 + f11.s1 - f00.s1 - f01.s1) / (two * dx),
                (f01.s1 + f11.s1 - f00.s1 - f10.s1) / (two * dy),
                (f10.s2 + f11.s2 - f00.s2 - f01.s2) / (two * dx),
                (f01.s2 + f11.s2 - f00.s2 - f10.s2) / (two * dy),
            );
            let (sv_max, sv_min, major_angle) = principal_stretches(&j);
            let c0 = grid.node(ix, iy);
            CellStretch {
                ix,
                iy,
                centre: ProjPoint::new(c0.s1 + dx / two, c0.s2 + dy / two),
                det: j.determinant(),
                sv_max,
                sv_min,
                major_angle,
            }
        })
        .collect();
    let folded = cells.iter().filter(|c| c.det < T::zero()).count();
    DeformDiagnostics {
        grid: *grid,
        fold_fraction: T::from_usize_lossy(folded) / T::from_usize_lossy(cells.len()),
        cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn knots(g: usize, seed: u64) -> Vec<ProjPoint<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..g)
            .map(|_| ProjPoint::new(rng.random_range(-400.0..400.0), rng.random_range(-250.0..250.0)))
            .collect()
    }

    fn warp(p: &ProjPoint<f64>) -> ProjPoint<f64> {
        ProjPoint::new(p.s1 + 40.0 * (p.s2 / 200.0).sin(), p.s2 + 0.0005 * p.s1 * p.s1)
    }

    #[test]
    fn interpolates_at_zero_lambda() {
        let src = knots(25, 1);
        let tgt: Vec<_> = src.iter().map(warp).collect();
        let m = fit_tps(&src, &tgt, 0.0).unwrap();
        for (a, b) in apply_tps(&m, &src).iter().zip(&tgt) {
            assert!((a.s1 - b.s1).abs() < 1e-8 && (a.s2 - b.s2).abs() < 1e-8);
        }
    }

    #[test]
    fn side_conditions_hold() {
        let src = knots(20, 2);
        let tgt: Vec<_> = src.iter().map(warp).collect();
        let m = fit_tps(&src, &tgt, 2.0).unwrap();
        for out in 0..2 {
            let s: f64 = m.weights.iter().map(|w| w[out]).sum();
            let sx: f64 = m
                .weights
                .iter()
                .zip(&src)
                .map(|(w, p)| w[out] * (p.s1 - m.centre.s1))
                .sum();
            assert!(s.abs() < 1e-8 && sx.abs() < 1e-6);
        }
    }

    #[test]
    fn affine_target_reproduced() {
        let src = knots(15, 3);
        let aff = |p: &ProjPoint<f64>| ProjPoint::new(3.0 + 1.2 * p.s1 - 0.4 * p.s2, -7.0 + 0.3 * p.s1 + 0.9 * p.s2);
        let tgt: Vec<_> = src.iter().map(aff).collect();
        for lambda in [0.0, 5.0, 1e4] {
            let m = fit_tps(&src, &tgt, lambda).unwrap();
            assert!(m.weights.iter().all(|w| w[0].abs() < 1e-8 && w[1].abs() < 1e-8));
            let mid = ProjPoint::new((src[0].s1 + src[1].s1) / 2.0, (src[0].s2 + src[1].s2) / 2.0);
            let fm = m.apply_one(&mid);
            let want = aff(&mid);
            assert!((fm.s1 - want.s1).abs() < 1e-8 && (fm.s2 - want.s2).abs() < 1e-8);
        }
    }

    #[test]
    fn huge_lambda_approaches_least_squares_affine() {
        let src = knots(30, 4);
        let tgt: Vec<_> = src.iter().map(warp).collect();
        let m = fit_tps(&src, &tgt, 1e8).unwrap();
        // oracle: ordinary least squares of each output on (1, s1, s2)
        let x = DMatrix::from_fn(30, 3, |i, c| [1.0, src[i].s1, src[i].s2][c]);
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        for out in 0..2 {
            let y = DMatrix::from_fn(30, 1, |i, _| if out == 0 { tgt[i].s1 } else { tgt[i].s2 });
            let beta = &xtx_inv * x.transpose() * y;
            for p in src.iter().take(10) {
                let f = m.apply_one(p);
                let got = if out == 0 { f.s1 } else { f.s2 };
                let want = beta[0] + beta[1] * p.s1 + beta[2] * p.s2;
                assert!((got - want).abs() < 1e-4, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn collinear_knots_rejected() {
        let src: Vec<_> = (0..5).map(|i| ProjPoint::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(fit_tps(&src, &src, 0.0), Err(Error::Collinear(_))));
    }

    #[test]
    fn identity_reflection_and_scaling_diagnostics() {
        let src = knots(12, 5);
        let grid = ProbeGrid::covering(&src, 0.05, 10, 8);
        let id = fit_tps(&src, &src, 0.0).unwrap();
        let p = ProjPoint::new(12.0, -33.0);
        let q = id.apply_one(&p);
        assert!((q.s1 - 12.0).abs() < 1e-9 && (q.s2 + 33.0).abs() < 1e-9);
        let d = fold_check(&id, &grid);
        assert_eq!(d.fold_fraction, 0.0);
        assert!(d
            .cells
            .iter()
            .all(|c| (c.sv_max - 1.0).abs() < 1e-9 && (c.sv_min - 1.0).abs() < 1e-9));

        let refl: Vec<_> = src.iter().map(|p| ProjPoint::new(-p.s1, p.s2)).collect();
        assert_eq!(
            fold_check(&fit_tps(&src, &refl, 0.0).unwrap(), &grid).fold_fraction,
            1.0
        );

        let dbl: Vec<_> = src.iter().map(|p| ProjPoint::new(2.0 * p.s1, 2.0 * p.s2)).collect();
        let d = fold_check(&fit_tps(&src, &dbl, 0.0).unwrap(), &grid);
        assert!(d
            .cells
            .iter()
            .all(|c| (c.sv_max - 2.0).abs() < 1e-9 && (c.sv_min - 2.0).abs() < 1e-9));
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let src = knots(18, 6);
        let tgt: Vec<_> = src.iter().map(warp).collect();
        let m = fit_tps(&src, &tgt, 1.0).unwrap();
        let p = ProjPoint::new(37.0, -12.0);
        let j = m.jacobian(&p);
        let h = 1e-3;
        let fx = |dx: f64, dy: f64| m.apply_one(&ProjPoint::new(p.s1 + dx, p.s2 + dy));
        let (a, b) = (fx(h, 0.0), fx(-h, 0.0));
        assert!(((a.s1 - b.s1) / (2.0 * h) - j[(0, 0)]).abs() < 1e-6);
        let (a, b) = (fx(0.0, h), fx(0.0, -h));
        assert!(((a.s2 - b.s2) / (2.0 * h) - j[(1, 1)]).abs() < 1e-6);
    }

    #[test]
    fn knot_residual_grows_with_lambda() {
        let src = knots(20, 7);
        let tgt: Vec<_> = src.iter().map(warp).collect();
        let rms: Vec<f64> = [0.0, 1.0, 2.0, 5.0, 10.0, 50.0]
            .iter()
            .map(|&l| fit_tps(&src, &tgt, l).unwrap().knot_rms(&tgt))
            .collect();
        assert!(rms[0] < 1e-8);
        assert!(rms.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }
}
