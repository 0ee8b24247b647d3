//! Ordinary kriging with a per-day maximum-likelihood exponential covariance.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geo::{distance_matrix, euclidean_distance, ProjPoint};
use crate::linalg::{cholesky, log_det};
use crate::scalar::Real;

/// Largest nugget share of the total variance the likelihood search may use.
pub const MAX_NUGGET_FRACTION: f64 = 0.999;
/// 95% point of χ² with two degrees of freedom.
const WHITE_NOISE_LR_CUTOFF: f64 = 5.991;
const PHI_STARTS: usize = 25;
const NUGGET_GRID: [f64; 7] = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, MAX_NUGGET_FRACTION];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlCovFit<T: Real> {
    /// Partial sill.
    pub sigma2: T,
    /// Range parameter, km.
    pub phi: T,
    /// Nugget.
    pub tau2: T,
    pub loglik: T,
    pub converged: bool,
    /// φ ended within 0.1% of either end of its search interval.
    pub phi_at_bound: bool,
    /// Little usable spatial signal: φ pinned at its lower bound, the nugget
    /// carrying more than 90% of the variance, or a likelihood-ratio statistic
    /// against pure white noise below the 95% χ²₂ point.
    pub weak_structure: bool,
}

impl<T: Real> MlCovFit<T> {
    /// `σ² exp(−h/φ) + τ² 1{h = 0}`.
    pub fn covariance(&self, h: T) -> T {
        let c = self.sigma2 * (-h / self.phi).exp();
        if h == T::zero() {
            c + self.tau2
        } else {
            c
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma2 > T::zero()
            && self.phi > T::zero()
            && self.tau2 >= T::zero()
            && self.sigma2.finite()
            && self.phi.finite()
            && self.tau2.finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "covariance parameters out of range: σ² = {}, φ = {}, τ² = {}",
                self.sigma2, self.phi, self.tau2
            )))
        }
    }
}

/// Which Gaussian likelihood the covariance fit maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// Full likelihood; φ and τ² are biased low for a few dozen sites.
    Full,
    /// Restricted likelihood of the mean-free contrasts.
    #[default]
    Restricted,
}

impl std::str::FromStr for Likelihood {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "restricted" => Ok(Self::Restricted),
            other => Err(Error::InvalidInput(format!(
                "unknown likelihood '{other}' (full | restricted)"
            ))),
        }
    }
}

/// Profiled likelihood at one `(φ, nugget fraction)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint<T: Real> {
    pub loglik: T,
    /// Total variance `σ² + τ²` maximizing the likelihood at this pair.
    pub total_variance: T,
    pub mean: T,
}

/// Gaussian log-likelihood with the constant mean and the total variance
/// profiled out, for correlation `(1 − ν) exp(−h/φ) + ν 1{h = 0}`. Additive
/// constants are kept, so full and restricted values are each comparable
/// across parameter values but not with each other.
///
/// Returns `None` when the correlation matrix is not numerically positive
/// definite.
pub fn profile_loglik<T: Real>(
    values: &DVector<T>,
    dist: &DMatrix<T>,
    phi: T,
    nugget_fraction: T,
    kind: Likelihood,
) -> Option<ProfilePoint<T>> {
    let g = values.len();
    let nf = nugget_fraction;
    let r = DMatrix::from_fn(g, g, |i, j| {
        let c = (T::one() - nf) * (-dist[(i, j)] / phi).exp();
        if i == j {
            c + nf
        } else {
            c
        }
    });
    let chol = cholesky(&r, "likelihood correlation").ok()?;
    let ones = DVector::from_element(g, T::one());
    let r_inv_one = chol.solve(&ones);
    let r_inv_y = chol.solve(values);
    let denom = ones.dot(&r_inv_one);
    let mean = ones.dot(&r_inv_y) / denom;
    let centred = values.add_scalar(-mean);
    let quad = centred.dot(&chol.solve(&centred));
    let m = match kind {
        Likelihood::Full => T::from_usize_lossy(g),
        Likelihood::Restricted => T::from_usize_lossy(g - 1),
    };
    let total_variance = quad / m;
    if !(total_variance > T::zero()) {
        return None;
    }
    let half = T::lit(0.5);
    let mut loglik = -half * m * (T::two_pi().ln() + total_variance.ln() + T::one()) - half * log_det(&chol);
    if kind == Likelihood::Restricted {
        loglik -= half * denom.ln();
    }
    loglik.finite().then_some(ProfilePoint {
        loglik,
        total_variance,
        mean,
    })
}

/// Search interval for φ: 1% to 200% of the largest inter-site distance.
pub fn phi_bounds<T: Real>(locations: &[ProjPoint<T>]) -> Result<(T, T)> {
    let dist = distance_matrix(locations);
    let h_max = dist.iter().fold(T::zero(), |a, &v| a.max(v));
    if !(h_max > T::zero()) {
        return Err(Error::InvalidInput("all locations coincide".into()));
    }
    Ok((h_max * T::lit(0.01), h_max * T::lit(2.0)))
}

/// The log-spaced φ values the search starts from.
pub fn phi_starts<T: Real>(lo: T, hi: T) -> Vec<T> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..PHI_STARTS)
        .map(|i| (a + (b - a) * T::from_usize_lossy(i) / T::from_usize_lossy(PHI_STARTS - 1)).exp())
        .collect()
}

/// Full maximum-likelihood fit of `σ² exp(−h/φ) + τ² 1{h=0}` with an
/// unknown constant mean. See [`fit_exponential_likelihood`].
pub fn fit_ml_exponential<T: Real>(values: &[T], locations: &[ProjPoint<T>]) -> Result<MlCovFit<T>> {
    fit_exponential_likelihood(values, locations, Likelihood::Full)
}

/// Likelihood fit of `σ² exp(−h/φ) + τ² 1{h=0}` with an unknown constant
/// mean.
///
/// The mean and total variance are profiled out in closed form. The
/// remaining two parameters, log φ and the nugget fraction, are searched on a
/// grid (25 log-spaced φ starts times a small nugget grid) and the three best
/// grid points are refined by bounded Nelder–Mead.
pub fn fit_exponential_likelihood<T: Real>(
    values: &[T],
    locations: &[ProjPoint<T>],
    kind: Likelihood,
) -> Result<MlCovFit<T>> {
    let g = values.len();
    if g != locations.len() {
        return Err(Error::DimensionMismatch(format!(
            "{g} values for {} locations",
            locations.len()
        )));
    }
    if g < 5 {
        return Err(Error::InsufficientData(format!(
            "likelihood fit needs at least 5 sites, got {g}"
        )));
    }
    if values.iter().any(|v| !v.finite()) {
        return Err(Error::NonFinite("kriging input values".into()));
    }
    let (lo, hi) = phi_bounds(locations)?;
    let dist = distance_matrix(locations);
    let y = DVector::from_column_slice(values);
    let (log_lo, log_hi) = (lo.as_f64().ln(), hi.as_f64().ln());

    let objective = |x: [f64; 2]| -> f64 {
        let lp = x[0].clamp(log_lo, log_hi);
        let nf = x[1].clamp(0.0, MAX_NUGGET_FRACTION);
        match profile_loglik(&y, &dist, T::lit(lp.exp()), T::lit(nf), kind) {
            Some(pp) => -pp.loglik.as_f64(),
            None => f64::INFINITY,
        }
    };

    let mut grid: Vec<([f64; 2], f64)> = Vec::with_capacity(PHI_STARTS * NUGGET_GRID.len());
    for phi in phi_starts(lo, hi) {
        for &nf in &NUGGET_GRID {
            let x = [phi.as_f64().ln(), nf];
            grid.push((x, objective(x)));
        }
    }
    grid.sort_by(|a, b| a.1.total_cmp(&b.1));
    if !grid[0].1.is_finite() {
        return Err(Error::NonFinite("likelihood at every grid start".into()));
    }

    let steps = [0.1 * (log_hi - log_lo), 0.1];
    let mut best = (grid[0].0, grid[0].1, false);
    for &(start, _) in grid.iter().take(3) {
        let (x, f, conv) = nelder_mead(&objective, start, steps, 1e-9, 400);
        if f < best.1 || (f == best.1 && conv) {
            best = (x, f, conv);
        }
    }
    let (x, f, converged) = best;
    let lp = x[0].clamp(log_lo, log_hi);
    let nf = x[1].clamp(0.0, MAX_NUGGET_FRACTION);
    let phi = T::lit(lp.exp());
    let pp = profile_loglik(&y, &dist, phi, T::lit(nf), kind)
        .ok_or_else(|| Error::NonFinite("likelihood at optimum".into()))?;
    debug_assert!((-pp.loglik.as_f64() - f).abs() <= 1e-9 * f.abs().max(1.0));
    let nf_t = T::lit(nf);
    let sigma2 = (T::one() - nf_t) * pp.total_variance;
    let tau2 = nf_t * pp.total_variance;
    let tol = 1e-3;
    let at_lower = lp - log_lo < tol;
    let white = profile_loglik(&y, &dist, phi, T::one(), kind).map_or(f64::NEG_INFINITY, |w| w.loglik.as_f64());
    let lr = 2.0 * (pp.loglik.as_f64() - white);
    let phi_at_bound = at_lower || log_hi - lp < tol;
    Ok(MlCovFit {
        sigma2,
        phi,
        tau2,
        loglik: pp.loglik,
        converged,
        phi_at_bound,
        weak_structure: at_lower || nf > 0.9 || lr < WHITE_NOISE_LR_CUTOFF,
    })
}

/// Minimizes `f` over two variables. Returns the best point, its value, and
/// whether the simplex spread fell below `ftol` within `max_iter` steps.
fn nelder_mead<F: Fn([f64; 2]) -> f64>(
    f: &F,
    start: [f64; 2],
    steps: [f64; 2],
    ftol: f64,
    max_iter: usize,
) -> ([f64; 2], f64, bool) {
    let mut simplex = [start, [start[0] + steps[0], start[1]], [start[0], start[1] + steps[1]]];
    let mut vals = simplex.map(f);
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.map(|i| simplex[i]);
        vals = order.map(|i| vals[i]);
        if (vals[2] - vals[0]).abs() <= ftol * (vals[0].abs() + ftol) {
            return (simplex[0], vals[0], true);
        }
        let centroid = lerp(simplex[0], simplex[1], 0.5);
        let reflected = lerp(centroid, simplex[2], -1.0);
        let fr = f(reflected);
        if fr < vals[0] {
            let expanded = lerp(centroid, simplex[2], -2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                vals[2] = fe;
            } else {
                simplex[2] = reflected;
                vals[2] = fr;
            }
        } else if fr < vals[1] {
            simplex[2] = reflected;
            vals[2] = fr;
        } else {
            let contracted = if fr < vals[2] {
                lerp(centroid, reflected, 0.5)
            } else {
                lerp(centroid, simplex[2], 0.5)
            };
            let fc = f(contracted);
            if fc < vals[2].min(fr) {
                simplex[2] = contracted;
                vals[2] = fc;
            } else {
                for i in 1..3 {
                    simplex[i] = lerp(simplex[0], simplex[i], 0.5);
                    vals[i] = f(simplex[i]);
                }
            }
        }
    }
    let i = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (simplex[i], vals[i], false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OkPrediction<T: Real> {
    pub value: T,
    /// Prediction variance for a new observation at the target, nugget
    /// included (zero only at a gauged site when τ² = 0).
    pub variance: T,
    pub weights: Vec<T>,
}

impl<T: Real> OkPrediction<T> {
    /// Normal-quantile interval at the given coverage level.
    pub fn interval(&self, level: f64) -> Result<(T, T)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidInput(format!(
                "interval level must lie in (0, 1), got {level}"
            )));
        }
        let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
        let half = T::lit(z) * self.variance.max(T::zero()).sqrt();
        Ok((self.value - half, self.value + half))
    }
}

/// Ordinary kriging of `values` to each target by the covariance matrix
/// bordered with the unbiasedness constraint.
///
/// The target-to-site covariances leave out the nugget, so a target that
/// coincides with a gauged site is reproduced exactly only when τ² = 0.
pub fn ordinary_krige<T: Real>(
    values: &[T],
    locations: &[ProjPoint<T>],
    targets: &[ProjPoint<T>],
    fit: &MlCovFit<T>,
) -> Result<Vec<OkPrediction<T>>> {
    fit.validate()?;
    let g = values.len();
    if g != locations.len() {
        return Err(Error::DimensionMismatch(format!(
            "{g} values for {} locations",
            locations.len()
        )));
    }
    if g == 0 {
        return Err(Error::InsufficientData("kriging needs at least one site".into()));
    }
    for i in 0..g {
        for j in 0..i {
            if euclidean_distance(&locations[i], &locations[j]) == T::zero() {
                return Err(Error::Singular(format!(
                    "kriging matrix: sites {j} and {i} share a location"
                )));
            }
        }
    }
    let m = targets.len();
    let mut a = DMatrix::zeros(g + 1, g + 1);
    for i in 0..g {
        for j in 0..g {
            a[(i, j)] = fit.covariance(euclidean_distance(&locations[i], &locations[j]));
        }
        a[(i, g)] = T::one();
        a[(g, i)] = T::one();
    }
    let mut rhs = DMatrix::zeros(g + 1, m);
    for (t, target) in targets.iter().enumerate() {
        for i in 0..g {
            let h = euclidean_distance(&locations[i], target);
            rhs[(i, t)] = fit.sigma2 * (-h / fit.phi).exp();
        }
        rhs[(g, t)] = T::one();
    }
    let lu = a.lu();
    let sol = lu.solve(&rhs).ok_or_else(|| Error::Singular("kriging matrix".into()))?;
    if sol.iter().any(|v| !v.finite()) {
        return Err(Error::Singular("kriging matrix".into()));
    }
    let total = fit.sigma2 + fit.tau2;
    Ok((0..m)
        .map(|t| {
            let weights: Vec<T> = (0..g).map(|i| sol[(i, t)]).collect();
            let value = weights.iter().zip(values).fold(T::zero(), |acc, (&w, &v)| acc + w * v);
            let explained = (0..g).fold(T::zero(), |acc, i| acc + sol[(i, t)] * rhs[(i, t)]);
            let variance = (total - explained - sol[(g, t)]).max(T::zero());
            OkPrediction {
                value,
                variance,
                weights,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayKriging<T: Real> {
    pub fit: MlCovFit<T>,
    pub predictions: Vec<OkPrediction<T>>,
}

/// Fits and kriges each row of `values` (times × gauged sites) independently,
/// in parallel; results keep row order.
pub fn krige_days<T: Real>(
    values: &DMatrix<T>,
    locations: &[ProjPoint<T>],
    targets: &[ProjPoint<T>],
    kind: Likelihood,
) -> Result<Vec<DayKriging<T>>> {
    if values.ncols() != locations.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} columns for {} locations",
            values.ncols(),
            locations.len()
        )));
    }
    (0..values.nrows())
        .into_par_iter()
        .map(|t| {
            let row: Vec<T> = values.row(t).iter().copied().collect();
            let fit = fit_exponential_likelihood(&row, locations, kind)?;
            let predictions = ordinary_krige(&row, locations, targets, &fit)?;
            Ok(DayKriging { fit, predictions })
        })
        .collect()
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn pt(a: f64, b: f64) -> ProjPoint<f64> {
        ProjPoint::new(a, b)
    }

    fn fit(sigma2: f64, phi: f64, tau2: f64) -> MlCovFit<f64> {
        MlCovFit {
            sigma2,
            phi,
            tau2,
            loglik: 0.0,
            converged: true,
            phi_at_bound: false,
            weak_structure: false,
        }
    }

    fn scattered(n: usize, seed: u64) -> Vec<ProjPoint<f64>> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| pt(rng.random_range(0.0..300.0), rng.random_range(0.0..300.0)))
            .collect()
    }

    /// Plain Gaussian elimination with partial pivoting.
    fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn four_site_bordered_system() {
        let locs = [pt(0.0, 0.0), pt(40.0, 5.0), pt(10.0, 55.0), pt(70.0, 60.0)];
        let vals = [1.5, -0.3, 2.2, 0.8];
        let target = pt(30.0, 25.0);
        let f = fit(2.0, 60.0, 0.3);
        let cov = |h: f64| if h == 0.0 { 2.3 } else { 2.0 * (-h / 60.0).exp() };
        let mut a = vec![vec![0.0; 5]; 5];
        let mut b = vec![0.0; 5];
        for i in 0..4 {
            for j in 0..4 {
                a[i][j] = cov(euclidean_distance(&locs[i], &locs[j]));
            }
            a[i][4] = 1.0;
            a[4][i] = 1.0;
            b[i] = 2.0 * (-euclidean_distance(&locs[i], &target) / 60.0).exp();
        }
        b[4] = 1.0;
        let x = gauss_solve(a, b.clone());
        let want_value: f64 = (0..4).map(|i| x[i] * vals[i]).sum();
        let want_var = 2.3 - (0..4).map(|i| x[i] * b[i]).sum::<f64>() - x[4];

        let got = &ordinary_krige(&vals, &locs, &[target], &f).unwrap()[0];
        for i in 0..4 {
            assert!((got.weights[i] - x[i]).abs() < 1e-10);
        }
        assert!((got.value - want_value).abs() < 1e-10);
        assert!((got.variance - want_var).abs() < 1e-10);
    }

    #[test]
    fn exact_interpolation_without_nugget() {
        let locs = scattered(8, 3);
        let vals: Vec<f64> = (0..8).map(|i| (i as f64).sin() * 3.0).collect();
        let preds = ordinary_krige(&vals, &locs, &locs, &fit(1.5, 80.0, 0.0)).unwrap();
        for (p, &v) in preds.iter().zip(&vals) {
            assert!((p.value - v).abs() < 1e-8);
            assert!(p.variance < 1e-8);
        }
        let noisy = ordinary_krige(&vals, &locs, &locs[..1], &fit(1.5, 80.0, 0.4)).unwrap();
        assert!(noisy[0].variance > 0.0);
    }

    #[test]
    fn symmetric_pair_weights() {
        let locs = [pt(-10.0, 0.0), pt(10.0, 0.0)];
        let p = &ordinary_krige(&[1.0, 3.0], &locs, &[pt(0.0, 7.0)], &fit(1.0, 50.0, 0.2)).unwrap()[0];
        assert!((p.weights[0] - 0.5).abs() < 1e-12 && (p.weights[1] - 0.5).abs() < 1e-12);
        assert!((p.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_locations_rejected() {
        let locs = [pt(0.0, 0.0), pt(0.0, 0.0), pt(5.0, 1.0)];
        let err = ordinary_krige(&[1.0, 2.0, 3.0], &locs, &[pt(1.0, 1.0)], &fit(1.0, 10.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn normal_interval() {
        let p: OkPrediction<f64> = OkPrediction {
            value: 1.0,
            variance: 4.0,
            weights: vec![],
        };
        let (lo, hi) = p.interval(0.95).unwrap();
        assert!((hi - 1.0 - 1.959963984540054 * 2.0).abs() < 1e-9);
        assert!((1.0 - lo - (hi - 1.0)).abs() < 1e-12);
    }

    fn simulate_field(locs: &[ProjPoint<f64>], sigma2: f64, phi: f64, tau2: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = locs.len();
        let c = DMatrix::from_fn(n, n, |i, j| {
            let h = euclidean_distance(&locs[i], &locs[j]);
            sigma2 * (-h / phi).exp() + if i == j { tau2 } else { 0.0 }
        });
        let l = c.cholesky().unwrap().l();
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        (l * z).iter().map(|v| v + 10.0).collect()
    }

    #[test]
    fn optimum_beats_every_grid_start() {
        let locs = scattered(30, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let vals = simulate_field(&locs, 2.0, 80.0, 0.3, &mut rng);
        let (lo, hi) = phi_bounds(&locs).unwrap();
        let y = DVector::from_vec(vals.clone());
        let dist = distance_matrix(&locs);
        for kind in [Likelihood::Full, Likelihood::Restricted] {
            let f = fit_exponential_likelihood(&vals, &locs, kind).unwrap();
            assert!(f.sigma2 > 0.0 && f.phi > 0.0 && f.tau2 >= 0.0);
            for phi in phi_starts(lo, hi) {
                for nf in [0.0, 0.05, 0.3, 0.6, 0.95] {
                    if let Some(pp) = profile_loglik(&y, &dist, phi, nf, kind) {
                        assert!(f.loglik >= pp.loglik - 1e-9, "{kind:?} φ {phi} ν {nf}");
                    }
                }
            }
        }
    }

    #[test]
    fn white_noise_is_flagged() {
        let locs = scattered(40, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut flagged = 0;
        for _ in 0..10 {
            let vals: Vec<f64> = (0..40).map(|_| StandardNormal.sample(&mut rng)).collect();
            flagged += fit_ml_exponential(&vals, &locs).unwrap().weak_structure as usize;
            flagged += fit_exponential_likelihood(&vals, &locs, Likelihood::Restricted)
                .unwrap()
                .weak_structure as usize;
        }
        assert!(flagged >= 16, "{flagged} of 20 flagged");
    }

    #[test]
    fn too_few_sites() {
        let locs = scattered(4, 1);
        assert!(matches!(
            fit_ml_exponential(&[1.0, 2.0, 3.0, 4.0], &locs),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn days_keep_order() {
        let locs = scattered(12, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| simulate_field(&locs, 1.0, 60.0, 0.1, &mut rng))
            .collect();
        let m = DMatrix::from_fn(4, 12, |i, j| rows[i][j]);
        let targets = [pt(150.0, 150.0)];
        let days = krige_days(&m, &locs, &targets, Likelihood::Restricted).unwrap();
        for (d, row) in days.iter().zip(&rows) {
            let single = fit_exponential_likelihood(row, &locs, Likelihood::Restricted).unwrap();
            assert_eq!(d.fit, single);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn weights_sum_to_one_and_shift(
            seed in 0u64..1000,
            sigma2 in 0.1f64..5.0,
            phi in 5.0f64..400.0,
            tau2 in 0.0f64..2.0,
            shift in -50.0f64..50.0,
            tx in 0.0f64..300.0,
            ty in 0.0f64..300.0,
        ) {
            let locs = scattered(10, seed);
            let vals: Vec<f64> = (0..10).map(|i| ((i as f64) * 1.7 + seed as f64).cos()).collect();
            let f = fit(sigma2, phi, tau2);
            let target = [pt(tx, ty)];
            let a = &ordinary_krige(&vals, &locs, &target, &f).unwrap()[0];
            let sum: f64 = a.weights.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
            prop_assert!(a.variance >= 0.0);
            let shifted: Vec<f64> = vals.iter().map(|v| v + shift).collect();
            let b = &ordinary_krige(&shifted, &locs, &target, &f).unwrap()[0];
            prop_assert!((b.value - a.value - shift).abs() < 1e-8);
            for (wa, wb) in a.weights.iter().zip(&b.weights) {
                prop_assert_eq!(wa, wb);
            }
        }
    }
}
