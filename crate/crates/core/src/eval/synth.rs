//! Synthetic station networks drawn from the full hierarchy, with every
//! latent quantity kept for oracle checks.

use chrono::{Datelike, Duration, NaiveDate};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bsp::{sample_inverse_wishart, sample_matrix_normal, BspHyperparams};
use crate::deform::{fit_tps, TpsMap};
use crate::error::{Error, Result};
use crate::geo::{euclidean_distance, GeoPoint, LccParams, ProjPoint};
use crate::ingest::{split_train_validation, ObservationMatrix, SplitSpec, StationRecord, StationTable};
use crate::linalg::{cholesky, symmetrize};
use crate::scalar::Real;
use crate::trend::{design_rows, time_design, TrendSpec};

/// Coefficients of the interaction trend on standardized covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedTrend {
    /// `(intercept), long, lat, elev, long:lat, long:elev`.
    pub base: [f64; 6],
    /// Month offsets follow `seasonal_amplitude · sin(2π Δm / 12)`, Δm the
    /// distance in months from the baseline month.
    pub seasonal_amplitude: f64,
    /// Month-varying slope multipliers, same seasonal shape.
    pub seasonal_lon: f64,
    pub seasonal_lat: f64,
    pub seasonal_lon_lat: f64,
}

impl Default for PlantedTrend {
    fn default() -> Self {
        Self {
            base: [24.0, -2.5, -1.5, -3.0, 0.4, 0.3],
            seasonal_amplitude: 6.0,
            seasonal_lon: 1.2,
            seasonal_lat: -0.6,
            seasonal_lon_lat: 0.3,
        }
    }
}

/// A planted warp of the projected plane: a smoothed step along s1 through
/// the centre of the network, `s1 + strength · w · tanh((s1 − mid) / w)`
/// with `w` a tenth of the east–west extent, and s2 multiplied by
/// `north_scale` (geometric anisotropy), interpolated by a thin-plate spline
/// through a `knots × knots` lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedDeformation {
    pub strength: f64,
    #[serde(default = "unit_scale")]
    pub north_scale: f64,
    pub knots: usize,
}

fn unit_scale() -> f64 {
    1.0
}

impl Default for PlantedDeformation {
    fn default() -> Self {
        Self {
            strength: 3.0,
            north_scale: 1.0,
            knots: 7,
        }
    }
}

/// Exponential correlation in the (possibly deformed) plane. Standard
/// deviations rise from `sd_west` to `sd_east` across the network, linearly
/// in s1 or, with `sd_step_km` set, as a `tanh` step of that half-width at
/// the east–west midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedCovariance {
    pub range_km: f64,
    /// Share of each site's variance that is spatially uncorrelated.
    pub nugget_fraction: f64,
    pub sd_west: f64,
    pub sd_east: f64,
    pub sd_step_km: Option<f64>,
}

impl Default for PlantedCovariance {
    fn default() -> Self {
        Self {
            range_km: 150.0,
            nugget_fraction: 0.05,
            sd_west: 2.0,
            sd_east: 4.5,
            sd_step_km: None,
        }
    }
}

/// Longitude/latitude box the stations are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl Default for Region {
    fn default() -> Self {
        Self {
            lon_min: -124.5,
            lon_max: -116.5,
            lat_min: 42.0,
            lat_max: 49.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// All sites.
    pub p: usize,
    /// Gauged (training) sites; the other `p − g` are held out.
    pub g: usize,
    /// Days.
    pub n: usize,
    pub start: NaiveDate,
    /// Inverse-Wishart degrees of freedom; must exceed `p + 1`.
    pub delta: f64,
    /// F⁻¹ = c·(ZᵀZ)⁻¹.
    pub c: f64,
    pub trend: PlantedTrend,
    pub deformation: Option<PlantedDeformation>,
    pub covariance: PlantedCovariance,
    pub region: Region,
    /// Minimum distance between stations, km.
    pub min_separation_km: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            p: 97,
            g: 64,
            n: 182,
            start: NaiveDate::from_ymd_opt(2000, 4, 1).expect("valid date"),
            delta: 117.0,
            c: 0.1,
            trend: PlantedTrend::default(),
            deformation: Some(PlantedDeformation::default()),
            covariance: PlantedCovariance::default(),
            region: Region::default(),
            min_separation_km: 5.0,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.g == 0 || self.g >= self.p {
            return Err(Error::InvalidInput(format!(
                "need 0 < g < p, got g = {}, p = {}",
                self.g, self.p
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("need at least one day".into()));
        }
        if !(self.delta > self.p as f64 + 1.0) {
            return Err(Error::InvalidInput(format!(
                "δ = {} must exceed p + 1 = {} for a finite prior mean of Σ",
                self.delta,
                self.p + 1
            )));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "c = {} must be finite and nonnegative",
                self.c
            )));
        }
        let cov = &self.covariance;
        if !(cov.range_km > 0.0
            && (0.0..1.0).contains(&cov.nugget_fraction)
            && cov.sd_west > 0.0
            && cov.sd_east > 0.0
            && cov.sd_step_km.is_none_or(|w| w > 0.0))
        {
            return Err(Error::InvalidInput("planted covariance parameters out of range".into()));
        }
        let r = &self.region;
        if !(r.lon_min < r.lon_max && r.lat_min < r.lat_max) {
            return Err(Error::InvalidInput("empty region".into()));
        }
        if let Some(d) = &self.deformation {
            if d.knots < 3
                || !d.strength.is_finite()
                || d.strength <= -1.0
                || !(d.north_scale > 0.0 && d.north_scale.is_finite())
            {
                return Err(Error::InvalidInput(
                    "planted deformation needs ≥ 3 knots, strength > −1 and a positive north scale".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Every latent quantity of one synthetic world.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth<T: Real> {
    pub lcc: LccParams<T>,
    pub split: SplitSpec,
    pub gauged_idx: Vec<usize>,
    pub ungauged_idx: Vec<usize>,
    /// Interaction trend standardized on all stations.
    pub trend_spec: TrendSpec<T>,
    pub trend_coeffs: Vec<T>,
    /// n × k time covariates.
    pub z: DMatrix<T>,
    pub b0: DMatrix<T>,
    pub f_inv: DMatrix<T>,
    /// Scale with `Ψ / (δ − p − 1)` equal to `target_cov`.
    pub psi: DMatrix<T>,
    pub target_cov: DMatrix<T>,
    pub sd: Vec<T>,
    /// Coordinates the planted correlation is isotropic in.
    pub d_coords: Vec<ProjPoint<T>>,
    pub map: Option<TpsMap<T>>,
    pub delta: T,
    pub sigma: DMatrix<T>,
    pub b: DMatrix<T>,
    /// n × p draws of `Y − Z B`.
    pub errors: DMatrix<T>,
}

impl<T: Real> SynthTruth<T> {
    /// Hyperparameters the data were generated from.
    pub fn hyperparams(&self) -> BspHyperparams<T> {
        BspHyperparams {
            b0: self.b0.clone(),
            f_inv: self.f_inv.clone(),
            psi: self.psi.clone(),
            delta: self.delta,
            gauged_idx: self.gauged_idx.clone(),
            ungauged_idx: self.ungauged_idx.clone(),
        }
    }
}

/// Interaction coefficients in [`TrendSpec::column_labels`] order.
pub fn planted_coefficients(trend: &PlantedTrend, months: &[u32]) -> Vec<f64> {
    let m = months.len().saturating_sub(1);
    let shape: Vec<f64> = months
        .iter()
        .skip(1)
        .map(|&mo| (std::f64::consts::TAU * (mo as f64 - months[0] as f64) / 12.0).sin())
        .collect();
    let mut out = trend.base.to_vec();
    out.extend(shape.iter().map(|s| trend.seasonal_amplitude * s));
    out.extend(shape.iter().map(|s| trend.seasonal_lon * s));
    out.extend(shape.iter().map(|s| trend.seasonal_lat * s));
    out.extend(shape.iter().map(|s| trend.seasonal_lon_lat * s));
    debug_assert_eq!(out.len(), 6 + 4 * m);
    out
}

fn elevation(lon: f64, lat: f64, region: &Region) -> f64 {
    // A north–south ridge a third of the way in from the west edge.
    let ridge = region.lon_min + (region.lon_max - region.lon_min) / 3.0;
    let rise = (lat - region.lat_min) / (region.lat_max - region.lat_min);
    100.0 + 1400.0 * (-((lon - ridge) / 0.8).powi(2)).exp() + 300.0 * rise
}

fn planted_map<T: Real>(points: &[ProjPoint<T>], spec: &PlantedDeformation) -> Result<TpsMap<T>> {
    let xs = points.iter().map(|p| p.s1.as_f64());
    let ys = points.iter().map(|p| p.s2.as_f64());
    let (x0, x1) = (
        xs.clone().fold(f64::INFINITY, f64::min),
        xs.fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = (
        ys.clone().fold(f64::INFINITY, f64::min),
        ys.fold(f64::NEG_INFINITY, f64::max),
    );
    let mid = 0.5 * (x0 + x1);
    let w = 0.1 * (x1 - x0);
    let k = spec.knots;
    let mut source = Vec::with_capacity(k * k);
    let mut target = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let x = x0 + (x1 - x0) * i as f64 / (k - 1) as f64;
            let y = y0 + (y1 - y0) * j as f64 / (k - 1) as f64;
            source.push(ProjPoint::new(T::lit(x), T::lit(y)));
            target.push(ProjPoint::new(
                T::lit(x + spec.strength * w * ((x - mid) / w).tanh()),
                T::lit(y * spec.north_scale),
            ));
        }
    }
    fit_tps(&source, &target, T::zero())
}

/// Draws one synthetic world: stations, complete observations, and the
/// latent record.
///
/// Stations are uniform in the region (rejecting pairs closer than
/// `min_separation_km`). Days run from `start`; the month factor covers the
/// months those days touch. Then Σ ~ IW(Ψ, δ), B ~ MN(B₀, c(ZᵀZ)⁻¹, Σ) and
/// `Y = Z B + E` with rows of E ~ N(0, Σ). Deterministic given the seed.
pub fn synth_generate<T: Real>(cfg: &SynthConfig) -> Result<(StationTable<T>, ObservationMatrix<T>, SynthTruth<T>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = &cfg.region;

    let mut geo: Vec<GeoPoint<T>> = Vec::with_capacity(cfg.p);
    let mut records: Vec<StationRecord<T>> = Vec::with_capacity(cfg.p);
    let approx_km = |a: &GeoPoint<T>, b: &GeoPoint<T>| {
        let lat = 0.5 * (a.lat_deg.as_f64() + b.lat_deg.as_f64());
        let dx = (a.lon_deg.as_f64() - b.lon_deg.as_f64()) * 111.2 * lat.to_radians().cos();
        let dy = (a.lat_deg.as_f64() - b.lat_deg.as_f64()) * 111.2;
        dx.hypot(dy)
    };
    let mut attempts = 0usize;
    while geo.len() < cfg.p {
        attempts += 1;
        if attempts > 1000 * cfg.p {
            return Err(Error::InvalidInput(format!(
                "cannot place {} stations {} km apart in the region",
                cfg.p, cfg.min_separation_km
            )));
        }
        let lon: f64 = rng.random_range(r.lon_min..r.lon_max);
        let lat: f64 = rng.random_range(r.lat_min..r.lat_max);
        let pt = GeoPoint::new(T::lit(lon), T::lit(lat))?;
        if geo.iter().any(|q| approx_km(q, &pt) < cfg.min_separation_km) {
            continue;
        }
        records.push(StationRecord {
            id: format!("S{:03}", geo.len() + 1),
            geo: pt,
            elev_m: T::lit(elevation(lon, lat, r)),
        });
        geo.push(pt);
    }
    let lcc = LccParams::centered_on(&geo)?;
    let stations = StationTable::from_records(&records, &lcc)?;
    let split = split_train_validation(&stations, cfg.g, cfg.seed ^ 0x5eed_5eed)?;
    let (gauged_idx, ungauged_idx) = split.indices(&stations)?;

    let times: Vec<NaiveDate> = (0..cfg.n).map(|t| cfg.start + Duration::days(t as i64)).collect();
    let trend_spec = TrendSpec::interaction(&stations, &times)?;
    let coeffs: Vec<T> = planted_coefficients(&cfg.trend, &trend_spec.months)
        .into_iter()
        .map(T::lit)
        .collect();
    let z: DMatrix<T> = time_design(&times, &trend_spec.months)?;
    let k = z.ncols();
    let b0 = prior_mean(&stations, &trend_spec, &coeffs, cfg.start.year())?;

    let proj = stations.proj_points();
    let map = cfg.deformation.as_ref().map(|d| planted_map(&proj, d)).transpose()?;
    let d_coords: Vec<ProjPoint<T>> = match &map {
        Some(m) => proj.iter().map(|p| m.apply_one(p)).collect(),
        None => proj.clone(),
    };
    let s1 = proj.iter().map(|p| p.s1.as_f64());
    let (w, e) = (
        s1.clone().fold(f64::INFINITY, f64::min),
        s1.fold(f64::NEG_INFINITY, f64::max),
    );
    let pc = &cfg.covariance;
    let sd: Vec<T> = proj
        .iter()
        .map(|p| {
            let x = p.s1.as_f64();
            let share = match pc.sd_step_km {
                Some(hw) => 0.5 * (1.0 + ((x - 0.5 * (w + e)) / hw).tanh()),
                None => (x - w) / (e - w).max(1e-12),
            };
            T::lit(pc.sd_west + (pc.sd_east - pc.sd_west) * share)
        })
        .collect();
    let p = cfg.p;
    let mut target_cov = DMatrix::from_fn(p, p, |i, j| {
        let rho = if i == j {
            T::one()
        } else {
            T::lit(1.0 - pc.nugget_fraction)
                * (-euclidean_distance(&d_coords[i], &d_coords[j]) / T::lit(pc.range_km)).exp()
        };
        rho * sd[i] * sd[j]
    });
    symmetrize(&mut target_cov);
    let delta = T::lit(cfg.delta);
    let psi = &target_cov * (delta - T::from_usize_lossy(p) - T::one());

    let ztz_inv = cholesky(&(z.transpose() * &z), "ZᵀZ")?.inverse();
    let f_inv = &ztz_inv * T::lit(cfg.c);
    let (sigma, factor) = sample_inverse_wishart(&psi, delta, &mut rng)?;
    let b = sample_matrix_normal(&b0, &f_inv, &factor, &mut rng)?;
    let std_normal: DMatrix<T> = DMatrix::from_fn(cfg.n, p, |_, _| {
        T::lit(rand_distr::Distribution::<f64>::sample(
            &rand_distr::StandardNormal,
            &mut rng,
        ))
    });
    let errors = std_normal * factor.transpose();
    let y = &z * &b + &errors;
    let obs = ObservationMatrix::complete(y, times, stations.ids())?;

    let truth = SynthTruth {
        lcc,
        split,
        gauged_idx,
        ungauged_idx,
        trend_spec,
        trend_coeffs: coeffs,
        z,
        b0,
        f_inv,
        psi,
        target_cov,
        sd,
        d_coords,
        map,
        delta,
        sigma,
        b,
        errors,
    };
    debug_assert_eq!(truth.b0.nrows(), k);
    Ok((stations, obs, truth))
}

/// B₀ from trend coefficients by direct evaluation: row 0 is the mean in the
/// baseline month, row r the difference between month r and the baseline.
pub fn prior_mean<T: Real>(
    stations: &StationTable<T>,
    spec: &TrendSpec<T>,
    coeffs: &[T],
    year: i32,
) -> Result<DMatrix<T>> {
    let months = if spec.months.is_empty() {
        vec![1]
    } else {
        spec.months.clone()
    };
    let k = months.len();
    let mut b0 = DMatrix::zeros(k, stations.len());
    let mut base = vec![T::zero(); stations.len()];
    for (r, &mo) in months.iter().enumerate() {
        let day = NaiveDate::from_ymd_opt(year, mo, 1)
            .ok_or_else(|| Error::InvalidInput(format!("month {mo} out of range")))?;
        let design = design_rows(stations, &[day], spec)?;
        if design.x.ncols() != coeffs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} design columns",
                coeffs.len(),
                design.x.ncols()
            )));
        }
        for j in 0..stations.len() {
            let mean = (0..coeffs.len()).fold(T::zero(), |a, c| a + design.x[(j, c)] * coeffs[c]);
            if r == 0 {
                base[j] = mean;
                b0[(0, j)] = mean;
            } else {
                b0[(r, j)] = mean - base[j];
            }
        }
    }
    Ok(b0)
}
