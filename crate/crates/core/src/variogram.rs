//! Binned empirical semivariograms, permutation envelopes and weighted
//! least-squares fits of the exponential variogram.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{distance_matrix, ProjPoint};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedVariogram<T> {
    /// `n_bins + 1` equally spaced edges starting at zero.
    pub bin_edges: Vec<T>,
    pub bin_midpoints: Vec<T>,
    /// Zero for empty bins.
    pub gamma_hat: Vec<T>,
    pub pair_counts: Vec<usize>,
    pub envelope_low: Option<Vec<T>>,
    pub envelope_high: Option<Vec<T>>,
}

impl<T: Real> BinnedVariogram<T> {
    pub fn n_bins(&self) -> usize {
        self.bin_midpoints.len()
    }

    pub fn max_dist(&self) -> T {
        *self.bin_edges.last().expect("at least one bin")
    }
}

/// Pair geometry shared by the observed variogram and its permutations.
struct PairBins {
    pairs: Vec<(usize, usize, usize)>,
    counts: Vec<usize>,
}

fn bin_pairs<T: Real>(dist: &DMatrix<T>, n_bins: usize, max_dist: T) -> PairBins {
    let p = dist.nrows();
    let width = max_dist / T::from_usize_lossy(n_bins);
    let mut pairs = Vec::new();
    let mut counts = vec![0; n_bins];
    for k in 0..p {
        for l in (k + 1)..p {
            let h = dist[(k, l)];
            if h > max_dist {
                continue;
            }
            let b = ((h / width).as_f64().floor() as usize).min(n_bins - 1);
            pairs.push((k, l, b));
            counts[b] += 1;
        }
    }
    PairBins { pairs, counts }
}

/// Semivariance per bin from rows of `values` (one row per replicate field,
/// e.g. per day), averaging over rows and pairs; `perm` relabels columns.
fn gamma_by_bin<T: Real>(values: &DMatrix<T>, bins: &PairBins, perm: Option<&[usize]>) -> Vec<T> {
    let n_bins = bins.counts.len();
    let mut sums = vec![T::zero(); n_bins];
    let col = |j: usize| perm.map_or(j, |p| p[j]);
    for &(k, l, b) in &bins.pairs {
        let (ck, cl) = (col(k), col(l));
        let mut s = T::zero();
        for t in 0..values.nrows() {
            let d = values[(t, ck)] - values[(t, cl)];
            s += d * d;
        }
        sums[b] += s;
    }
    let rows = T::from_usize_lossy(values.nrows());
    sums.iter()
        .zip(&bins.counts)
        .map(|(&s, &c)| {
            if c == 0 {
                T::zero()
            } else {
                s / (T::lit(2.0) * T::from_usize_lossy(c) * rows)
            }
        })
        .collect()
}

fn check_inputs<T: Real>(values: &DMatrix<T>, locations: &[ProjPoint<T>], n_bins: usize) -> Result<()> {
    if locations.len() < 2 {
        return Err(Error::InsufficientData("a semivariogram needs at least 2 sites".into()));
    }
    if values.ncols() != locations.len() || values.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} values per row for {} locations",
            values.ncols(),
            locations.len()
        )));
    }
    if n_bins == 0 {
        return Err(Error::InvalidInput("n_bins must be positive".into()));
    }
    if values.iter().any(|v| !v.finite()) {
        return Err(Error::NonFinite("semivariogram input".into()));
    }
    Ok(())
}

/// Half the largest inter-site distance.
pub fn default_max_dist<T: Real>(locations: &[ProjPoint<T>]) -> T {
    distance_matrix(locations).max() * T::lit(0.5)
}

/// Binned empirical semivariogram of a single field.
pub fn empirical_semivariogram<T: Real>(
    values: &[T],
    locations: &[ProjPoint<T>],
    n_bins: usize,
    max_dist: Option<T>,
) -> Result<BinnedVariogram<T>> {
    let m = DMatrix::from_row_slice(1, values.len(), values);
    pooled_semivariogram(&m, locations, n_bins, max_dist)
}

/// Semivariogram averaged over replicate fields (rows of `values`), each row
/// observed at every location.
pub fn pooled_semivariogram<T: Real>(
    values: &DMatrix<T>,
    locations: &[ProjPoint<T>],
    n_bins: usize,
    max_dist: Option<T>,
) -> Result<BinnedVariogram<T>> {
    check_inputs(values, locations, n_bins)?;
    let dist = distance_matrix(locations);
    let max_dist = max_dist.unwrap_or_else(|| dist.max() * T::lit(0.5));
    if max_dist <= T::zero() || !max_dist.finite() {
        return Err(Error::InvalidInput("max_dist must be positive".into()));
    }
    let bins = bin_pairs(&dist, n_bins, max_dist);
    if bins.pairs.is_empty() {
        return Err(Error::InsufficientData(format!("no site pairs within {max_dist} km")));
    }
    let width = max_dist / T::from_usize_lossy(n_bins);
    let bin_edges: Vec<T> = (0..=n_bins).map(|i| width * T::from_usize_lossy(i)).collect();
    let bin_midpoints = (0..n_bins)
        .map(|i| (bin_edges[i] + bin_edges[i + 1]) * T::lit(0.5))
        .collect();
    Ok(BinnedVariogram {
        gamma_hat: gamma_by_bin(values, &bins, None),
        pair_counts: bins.counts,
        bin_edges,
        bin_midpoints,
        envelope_low: None,
        envelope_high: None,
    })
}

/// Per-bin minimum and maximum semivariance over `n_perm` random relabelings
/// of the sites. Replicate `r` draws from stream `r` of a ChaCha generator
/// seeded with `seed`, so the result does not depend on thread scheduling.
pub fn permutation_envelope<T: Real>(
    values: &DMatrix<T>,
    locations: &[ProjPoint<T>],
    variogram: &BinnedVariogram<T>,
    n_perm: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    check_inputs(values, locations, variogram.n_bins())?;
    if n_perm < 19 {
        return Err(Error::InvalidInput(format!(
            "n_perm = {n_perm}; at least 19 permutations are required"
        )));
    }
    let bins = bin_pairs(&distance_matrix(locations), variogram.n_bins(), variogram.max_dist());
    let p = locations.len();
    let replicates: Vec<Vec<T>> = (0..n_perm)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut perm: Vec<usize> = (0..p).collect();
            perm.shuffle(&mut rng);
            gamma_by_bin(values, &bins, Some(&perm))
        })
        .collect();
    let nb = variogram.n_bins();
    let mut low = replicates[0].clone();
    let mut high = replicates[0].clone();
    for rep in &replicates[1..] {
        for b in 0..nb {
            low[b] = low[b].min(rep[b]);
            high[b] = high[b].max(rep[b]);
        }
    }
    Ok((low, high))
}

/// Convenience: binned variogram with its permutation envelope attached.
pub fn semivariogram_with_envelope<T: Real>(
    values: &DMatrix<T>,
    locations: &[ProjPoint<T>],
    n_bins: usize,
    max_dist: Option<T>,
    n_perm: usize,
    seed: u64,
) -> Result<BinnedVariogram<T>> {
    let mut v = pooled_semivariogram(values, locations, n_bins, max_dist)?;
    let (lo, hi) = permutation_envelope(values, locations, &v, n_perm, seed)?;
    v.envelope_low = Some(lo);
    v.envelope_high = Some(hi);
    Ok(v)
}

/// `γ(h) = nugget + sill·(1 − e^(−h/φ))` for `h > 0`; practical range is 3φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpVariogramFit<T> {
    pub nugget: T,
    pub sill: T,
    pub range_phi: T,
    /// Weighted sum of squared residuals at the optimum.
    pub objective: T,
    pub phi_at_bound: bool,
    pub sill_at_lower_bound: bool,
    /// Data carry no usable spatial structure (constant γ̂); φ is arbitrary.
    pub flat: bool,
}

impl<T: Real> ExpVariogramFit<T> {
    pub fn gamma(&self, h: T) -> T {
        if h <= T::zero() {
            return T::zero();
        }
        self.nugget + self.sill * (T::one() - (-h / self.range_phi).exp())
    }

    pub fn practical_range(&self) -> T {
        self.range_phi * T::lit(3.0)
    }

    /// Correlation implied for a unit-variance field: 1 at h = 0, otherwise
    /// `(sill / (nugget + sill))·e^(−h/φ)`.
    pub fn correlation(&self, h: T) -> T {
        if h <= T::zero() {
            return T::one();
        }
        self.sill / (self.nugget + self.sill) * (-h / self.range_phi).exp()
    }

    pub fn any_flag(&self) -> bool {
        self.phi_at_bound || self.sill_at_lower_bound || self.flat
    }
}

/// Weighted objective of an exponential variogram.
pub fn exp_objective<T: Real>(h: &[T], gamma: &[T], w: &[T], nugget: T, sill: T, phi: T) -> T {
    h.iter().zip(gamma).zip(w).fold(T::zero(), |acc, ((&h, &g), &w)| {
        let r = g - (nugget + sill * (T::one() - (-h / phi).exp()));
        acc + w * r * r
    })
}

/// Bounded linear least squares in (nugget ≥ 0, sill ≥ sill_floor) for a
/// fixed φ. The problem is a convex quadratic in two variables, so the
/// optimum is the best feasible point among the interior solution and the
/// solutions restricted to each active bound.
fn profile_linear<T: Real>(g: &[T], gamma: &[T], w: &[T], sill_floor: T) -> (T, T, T) {
    let (mut sw, mut sg, mut sgg, mut sy, mut sgy) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for ((&gi, &yi), &wi) in g.iter().zip(gamma).zip(w) {
        sw += wi;
        sg += wi * gi;
        sgg += wi * gi * gi;
        sy += wi * yi;
        sgy += wi * gi * yi;
    }
    let obj = |a: T, b: T| {
        g.iter().zip(gamma).zip(w).fold(T::zero(), |acc, ((&gi, &yi), &wi)| {
            let r = yi - a - b * gi;
            acc + wi * r * r
        })
    };
    let mut cands: Vec<(T, T)> = Vec::with_capacity(4);
    let det = sw * sgg - sg * sg;
    if det > T::default_epsilon() * sw * sgg {
        let a = (sgg * sy - sg * sgy) / det;
        let b = (sw * sgy - sg * sy) / det;
        if a >= T::zero() && b >= sill_floor {
            cands.push((a, b));
        }
    }
    if sgg > T::zero() {
        cands.push((T::zero(), (sgy / sgg).max(sill_floor)));
    }
    if sw > T::zero() {
        cands.push((((sy - sill_floor * sg) / sw).max(T::zero()), sill_floor));
    }
    cands.push((T::zero(), sill_floor));
    cands
        .into_iter()
        .map(|(a, b)| (a, b, obj(a, b)))
        .fold(None::<(T, T, T)>, |best, c| match best {
            Some(b) if b.2 <= c.2 => Some(b),
            _ => Some(c),
        })
        .expect("at least one candidate")
}

/// Options for [`fit_exponential_variogram_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFitOptions<T> {
    /// φ search interval; defaults to [1e-3, 10] × the largest distance.
    pub phi_bounds: Option<(T, T)>,
    pub grid_points: usize,
}

impl<T: Real> Default for ExpFitOptions<T> {
    fn default() -> Self {
        Self {
            phi_bounds: None,
            grid_points: 200,
        }
    }
}

/// Weighted least-squares exponential fit to (distance, semivariance) pairs.
pub fn fit_exponential_variogram<T: Real>(h: &[T], gamma: &[T], weights: &[T]) -> Result<ExpVariogramFit<T>> {
    fit_exponential_variogram_with(h, gamma, weights, ExpFitOptions::default())
}

/// Fit to the nonempty bins of a binned variogram, weighted by pair counts.
pub fn fit_binned<T: Real>(v: &BinnedVariogram<T>) -> Result<ExpVariogramFit<T>> {
    let keep: Vec<usize> = (0..v.n_bins()).filter(|&b| v.pair_counts[b] > 0).collect();
    let h: Vec<T> = keep.iter().map(|&b| v.bin_midpoints[b]).collect();
    let g: Vec<T> = keep.iter().map(|&b| v.gamma_hat[b]).collect();
    let w: Vec<T> = keep.iter().map(|&b| T::from_usize_lossy(v.pair_counts[b])).collect();
    fit_exponential_variogram(&h, &g, &w)
}

pub fn fit_exponential_variogram_with<T: Real>(
    h: &[T],
    gamma: &[T],
    weights: &[T],
    opts: ExpFitOptions<T>,
) -> Result<ExpVariogramFit<T>> {
    if h.len() != gamma.len() || h.len() != weights.len() {
        return Err(Error::DimensionMismatch(
            "distances, semivariances and weights differ in length".into(),
        ));
    }
    if h.iter().chain(gamma).chain(weights).any(|v| !v.finite()) || weights.iter().any(|&w| w < T::zero()) {
        return Err(Error::InvalidInput(
            "variogram fit input must be finite with nonnegative weights".into(),
        ));
    }
    let mut distinct: Vec<f64> = h.iter().filter(|v| **v > T::zero()).map(|v| v.as_f64()).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InsufficientData(
            "exponential fit needs at least 3 distinct positive distances".into(),
        ));
    }
    let h_max = T::lit(*distinct.last().unwrap());
    let (phi_lo, phi_hi) = opts.phi_bounds.unwrap_or((h_max * T::lit(1e-3), h_max * T::lit(10.0)));
    if !(phi_lo > T::zero() && phi_hi > phi_lo) {
        return Err(Error::InvalidInput("invalid φ bounds".into()));
    }
    let total_w = weights.iter().fold(T::zero(), |a, &w| a + w);
    if total_w <= T::zero() {
        return Err(Error::InsufficientData("all weights are zero".into()));
    }
    let mean_gamma = gamma.iter().zip(weights).fold(T::zero(), |a, (&g, &w)| a + g * w) / total_w;
    let sill_floor = (mean_gamma.abs() * T::lit(1e-8)).max(T::lit(1e-12));

    let profile = |phi: T| {
        let g: Vec<T> = h.iter().map(|&hi| T::one() - (-hi / phi).exp()).collect();
        let (a, b, obj) = profile_linear(&g, gamma, weights, sill_floor);
        (a, b, obj)
    };
    let ln_lo = phi_lo.ln();
    let ln_hi = phi_hi.ln();
    let n = opts.grid_points.max(3);
    let grid: Vec<T> = (0..n)
        .map(|i| (ln_lo + (ln_hi - ln_lo) * T::from_usize_lossy(i) / T::from_usize_lossy(n - 1)).exp())
        .collect();
    let evals: Vec<(T, T, T)> = grid.iter().map(|&phi| profile(phi)).collect();
    let best_i = (0..n)
        .min_by(|&a, &b| evals[a].2.partial_cmp(&evals[b].2).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();

    // golden-section refinement of ln φ between the neighbouring grid points
    let mut lo = grid[best_i.saturating_sub(1)].ln();
    let mut hi = grid[(best_i + 1).min(n - 1)].ln();
    let gr = T::lit(0.618_033_988_749_894_8);
    let mut x1 = hi - gr * (hi - lo);
    let mut x2 = lo + gr * (hi - lo);
    let mut f1 = profile(x1.exp()).2;
    let mut f2 = profile(x2.exp()).2;
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = profile(x1.exp()).2;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = profile(x2.exp()).2;
        }
    }
    let mut best = (grid[best_i], evals[best_i]);
    for x in [x1, x2] {
        let phi = x.exp();
        let e = profile(phi);
        if e.2 < best.1 .2 {
            best = (phi, e);
        }
    }
    let (phi, (nugget, sill, objective)) = best;

    let g_min = gamma.iter().fold(gamma[0], |a, &b| a.min(b));
    let g_max = gamma.iter().fold(gamma[0], |a, &b| a.max(b));
    let flat = g_max - g_min <= T::lit(1e-12) * g_max.abs().max(T::one());
    let sill_at_lower_bound = sill <= sill_floor * T::lit(1.000_001);
    let phi_at_bound = phi <= phi_lo * T::lit(1.000_001) || phi >= phi_hi * T::lit(0.999_999);
    Ok(ExpVariogramFit {
        nugget,
        sill,
        range_phi: phi,
        objective,
        phi_at_bound,
        sill_at_lower_bound,
        flat: flat || sill_at_lower_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_sites(p: usize, rng: &mut ChaCha8Rng) -> Vec<ProjPoint<f64>> {
        (0..p)
            .map(|_| ProjPoint::new(rng.random_range(0.0..500.0), rng.random_range(0.0..300.0)))
            .collect()
    }

    #[test]
    fn constant_field_and_two_sites() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sites = random_sites(12, &mut rng);
        let v = empirical_semivariogram(&[4.0; 12], &sites, 8, None).unwrap();
        assert!(v.gamma_hat.iter().all(|&g| g == 0.0));

        let two = [ProjPoint::new(0.0, 0.0), ProjPoint::new(3.0, 4.0)];
        let v = empirical_semivariogram(&[1.0, 3.0], &two, 1, Some(10.0)).unwrap();
        assert_eq!(v.pair_counts, vec![1]);
        assert_eq!(v.gamma_hat, vec![2.0]);
        assert!(empirical_semivariogram(&[1.0, 3.0], &two, 1, Some(1.0)).is_err());
    }

    #[test]
    fn counts_sum_and_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sites = random_sites(30, &mut rng);
        let vals: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v = empirical_semivariogram(&vals, &sites, 10, None).unwrap();
        let d = distance_matrix(&sites);
        let max = v.max_dist();
        let within = (0..30)
            .flat_map(|k| ((k + 1)..30).map(move |l| (k, l)))
            .filter(|&(k, l)| d[(k, l)] <= max)
            .count();
        assert_eq!(v.pair_counts.iter().sum::<usize>(), within);
        let shifted: Vec<f64> = vals.iter().map(|x| x + 100.0).collect();
        let v2 = empirical_semivariogram(&shifted, &sites, 10, None).unwrap();
        for (a, b) in v.gamma_hat.iter().zip(&v2.gamma_hat) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(v.bin_midpoints.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn white_noise_sill_equals_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sites = random_sites(10, &mut rng);
        let reps = 4000;
        let values = DMatrix::from_fn(reps, 10, |_, _| StandardNormal.sample(&mut rng));
        let v = pooled_semivariogram(&values, &sites, 4, Some(600.0)).unwrap();
        for (g, c) in v.gamma_hat.iter().zip(&v.pair_counts) {
            if *c > 0 {
                // Monte Carlo standard error of a mean of χ²₁/2-type terms is
                // below sqrt(2 / (reps·c)) ≤ 0.023 here
                assert!((g - 1.0).abs() < 0.1, "{g}");
            }
        }
    }

    #[test]
    fn envelope_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sites = random_sites(15, &mut rng);
        let values = DMatrix::from_fn(1, 15, |_, _| StandardNormal.sample(&mut rng));
        let a = semivariogram_with_envelope(&values, &sites, 6, None, 19, 7).unwrap();
        let b = semivariogram_with_envelope(&values, &sites, 6, None, 19, 7).unwrap();
        assert_eq!(a, b);
        assert!(permutation_envelope(&values, &sites, &a, 18, 7).is_err());
    }

    #[test]
    fn smooth_gradient_falls_below_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sites = random_sites(40, &mut rng);
        let values = DMatrix::from_fn(1, 40, |_, j| sites[j].s1 / 100.0);
        let v = semivariogram_with_envelope(&values, &sites, 8, None, 99, 1).unwrap();
        let low = v.envelope_low.unwrap();
        assert!(v.gamma_hat[0] < low[0]);
    }

    /// Dense grid over (nugget, sill, φ) as an independent oracle.
    fn grid_oracle(h: &[f64], g: &[f64], w: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=40 {
            let nug = 1.0 * i as f64 / 40.0;
            for j in 1..=60 {
                let sill = 4.0 * j as f64 / 60.0;
                for k in 0..=60 {
                    let phi = 10f64.powf(1.0 + 2.0 * k as f64 / 60.0);
                    best = best.min(exp_objective(h, g, w, nug, sill, phi));
                }
            }
        }
        best
    }

    #[test]
    fn exact_synthetic_recovered() {
        let h: Vec<f64> = (1..=15).map(|i| i as f64 * 25.0).collect();
        let truth = ExpVariogramFit {
            nugget: 0.5,
            sill: 2.0,
            range_phi: 100.0,
            objective: 0.0,
            phi_at_bound: false,
            sill_at_lower_bound: false,
            flat: false,
        };
        let g: Vec<f64> = h.iter().map(|&x| truth.gamma(x)).collect();
        let w: Vec<f64> = (0..15).map(|i| 10.0 + i as f64).collect();
        let fit = fit_exponential_variogram(&h, &g, &w).unwrap();
        assert!(fit.objective <= grid_oracle(&h, &g, &w) + 1e-4);
        assert!((fit.nugget - 0.5).abs() < 1e-4 && (fit.sill - 2.0).abs() < 1e-4);
        assert!((fit.range_phi - 100.0).abs() < 1e-2);
        assert!(!fit.any_flag());
    }

    #[test]
    fn flat_and_zero_cases() {
        let h: Vec<f64> = (1..=8).map(|i| i as f64 * 10.0).collect();
        let w = vec![1.0; 8];
        let fit = fit_exponential_variogram(&h, &[1.7; 8], &w).unwrap();
        assert!(fit.flat);
        // the fitted curve is ≈ c at every observed distance
        assert!(h.iter().all(|&x| (fit.gamma(x) - 1.7).abs() < 1e-3));
        let fit = fit_exponential_variogram(&h, &[0.0; 8], &w).unwrap();
        assert_eq!(fit.nugget, 0.0);
        assert!(fit.sill_at_lower_bound && fit.flat);
        assert!(fit_exponential_variogram(&[1.0, 2.0], &[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn fit_beats_coarse_grid(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h: Vec<f64> = (1..=12).map(|i| i as f64 * 20.0).collect();
            let nug = rng.random_range(0.0..0.8);
            let sill = rng.random_range(0.5..3.0);
            let phi = rng.random_range(15.0..400.0);
            let g: Vec<f64> = h.iter().map(|&x| nug + sill * (1.0 - (-x / phi).exp()) + rng.random_range(-0.1..0.1)).collect();
            let w: Vec<f64> = (0..12).map(|_| rng.random_range(1.0..50.0)).collect();
            let fit = fit_exponential_variogram(&h, &g, &w).unwrap();
            for i in 0..=10 {
                for j in 1..=10 {
                    for k in 0..=10 {
                        let o = exp_objective(&h, &g, &w, 0.1 * i as f64, 0.4 * j as f64, 10f64.powf(1.0 + 0.25 * k as f64));
                        proptest::prop_assert!(fit.objective <= o + 1e-9);
                    }
                }
            }
        }
    }
}
