//! Mean-function designs, least-squares trend fits, anomalies and the
//! per-day effect series.
//!
//! Rows of every stacked design are day-major: row `t * p + j` belongs to day
//! `t` and site `j`, matching `vec` of the n × p observation matrix taken row
//! by row.

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::ingest::{normal_at, ClimateGrid, ObservationMatrix, StationTable};
use crate::linalg::least_squares;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendMode {
    /// Second-order polynomial in projected coordinates.
    QuadraticSurface,
    /// long·lat·month and long·elev interaction model in standardized
    /// geographic covariates with categorical month.
    Interaction,
    /// Intercept and month indicators, fitted to anomalies from climate normals.
    PrismAnomaly,
}

/// Centering and scaling constants for longitude, latitude and elevation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterScale<T> {
    pub lon_mean: T,
    pub lon_sd: T,
    pub lat_mean: T,
    pub lat_sd: T,
    pub elev_mean: T,
    pub elev_sd: T,
}

impl<T: Real> CenterScale<T> {
    pub fn identity() -> Self {
        Self {
            lon_mean: T::zero(),
            lon_sd: T::one(),
            lat_mean: T::zero(),
            lat_sd: T::one(),
            elev_mean: T::zero(),
            elev_sd: T::one(),
        }
    }

    /// Mean and standard deviation over the given stations. A covariate that
    /// does not vary keeps unit scale.
    pub fn from_stations(stations: &StationTable<T>) -> Result<Self> {
        if stations.is_empty() {
            return Err(Error::InsufficientData("no stations to standardize".into()));
        }
        let stats = |f: &dyn Fn(usize) -> T| {
            let n = T::from_usize_lossy(stations.len());
            let mean = (0..stations.len()).fold(T::zero(), |a, i| a + f(i)) / n;
            let ss = (0..stations.len()).fold(T::zero(), |a, i| a + (f(i) - mean) * (f(i) - mean));
            let sd = if stations.len() > 1 {
                (ss / (n - T::one())).sqrt()
            } else {
                T::zero()
            };
            (mean, if sd > T::zero() { sd } else { T::one() })
        };
        let (lon_mean, lon_sd) = stats(&|i| stations.get(i).geo.lon_deg);
        let (lat_mean, lat_sd) = stats(&|i| stations.get(i).geo.lat_deg);
        let (elev_mean, elev_sd) = stats(&|i| stations.get(i).elev_m);
        Ok(Self {
            lon_mean,
            lon_sd,
            lat_mean,
            lat_sd,
            elev_mean,
            elev_sd,
        })
    }

    /// Standardized (long, lat, elev) of a station.
    pub fn apply(&self, lon: T, lat: T, elev: T) -> [T; 3] {
        [
            (lon - self.lon_mean) / self.lon_sd,
            (lat - self.lat_mean) / self.lat_sd,
            (elev - self.elev_mean) / self.elev_sd,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSpec<T> {
    pub mode: TrendMode,
    /// Calendar months with indicator columns; the first is the baseline.
    /// Unused in quadratic mode.
    pub months: Vec<u32>,
    pub center_scale: CenterScale<T>,
}

impl<T: Real> TrendSpec<T> {
    pub fn quadratic() -> Self {
        Self {
            mode: TrendMode::QuadraticSurface,
            months: Vec::new(),
            center_scale: CenterScale::identity(),
        }
    }

    /// Interaction model standardized on `stations`, with months taken from
    /// `times` in ascending calendar order.
    pub fn interaction(stations: &StationTable<T>, times: &[NaiveDate]) -> Result<Self> {
        Ok(Self {
            mode: TrendMode::Interaction,
            months: months_present(times),
            center_scale: CenterScale::from_stations(stations)?,
        })
    }

    pub fn prism_anomaly(times: &[NaiveDate]) -> Self {
        Self {
            mode: TrendMode::PrismAnomaly,
            months: months_present(times),
            center_scale: CenterScale::identity(),
        }
    }

    pub fn column_labels(&self) -> Vec<String> {
        let extra: Vec<u32> = self.months.iter().skip(1).copied().collect();
        let mut labels: Vec<String> = Vec::new();
        match self.mode {
            TrendMode::QuadraticSurface => {
                for l in ["(intercept)", "s1", "s2", "s1:s2", "s1^2", "s2^2"] {
                    labels.push(l.into());
                }
            }
            TrendMode::Interaction => {
                for l in ["(intercept)", "long", "lat", "elev", "long:lat", "long:elev"] {
                    labels.push(l.into());
                }
                labels.extend(extra.iter().map(|m| format!("month{m}")));
                labels.extend(extra.iter().map(|m| format!("long:month{m}")));
                labels.extend(extra.iter().map(|m| format!("lat:month{m}")));
                labels.extend(extra.iter().map(|m| format!("long:lat:month{m}")));
            }
            TrendMode::PrismAnomaly => {
                labels.push("(intercept)".into());
                labels.extend(extra.iter().map(|m| format!("month{m}")));
            }
        }
        labels
    }

    pub fn n_columns(&self) -> usize {
        let m = self.months.len().saturating_sub(1);
        match self.mode {
            TrendMode::QuadraticSurface => 6,
            TrendMode::Interaction => 6 + 4 * m,
            TrendMode::PrismAnomaly => 1 + m,
        }
    }

    /// Position of `month` among the non-baseline indicators. An empty month
    /// list means no month structure.
    fn month_slot(&self, month: u32) -> Result<Option<usize>> {
        if self.months.is_empty() {
            return Ok(None);
        }
        match self.months.iter().position(|&m| m == month) {
            Some(0) => Ok(None),
            Some(i) => Ok(Some(i - 1)),
            None => Err(Error::InvalidInput(format!(
                "month {month} has no indicator in the trend specification"
            ))),
        }
    }

    fn fill_row(&self, row: &mut [T], station: &crate::ingest::Station<T>, month: u32) -> Result<()> {
        row.iter_mut().for_each(|v| *v = T::zero());
        let m = self.months.len().saturating_sub(1);
        match self.mode {
            TrendMode::QuadraticSurface => {
                let (s1, s2) = (station.proj.s1, station.proj.s2);
                row.copy_from_slice(&[T::one(), s1, s2, s1 * s2, s1 * s1, s2 * s2]);
            }
            TrendMode::Interaction => {
                let [lo, la, el] = self
                    .center_scale
                    .apply(station.geo.lon_deg, station.geo.lat_deg, station.elev_m);
                row[..6].copy_from_slice(&[T::one(), lo, la, el, lo * la, lo * el]);
                if let Some(i) = self.month_slot(month)? {
                    row[6 + i] = T::one();
                    row[6 + m + i] = lo;
                    row[6 + 2 * m + i] = la;
                    row[6 + 3 * m + i] = lo * la;
                }
            }
            TrendMode::PrismAnomaly => {
                row[0] = T::one();
                if let Some(i) = self.month_slot(month)? {
                    row[1 + i] = T::one();
                }
            }
        }
        Ok(())
    }
}

/// Distinct calendar months of `times` in ascending order.
pub fn months_present(times: &[NaiveDate]) -> Vec<u32> {
    let mut m: Vec<u32> = times.iter().map(|d| d.month()).collect();
    m.sort_unstable();
    m.dedup();
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design<T: Real> {
    pub x: DMatrix<T>,
    pub labels: Vec<String>,
}

/// Stacked design for every (day, station) pair, without a rank check.
pub fn design_rows<T: Real>(stations: &StationTable<T>, times: &[NaiveDate], spec: &TrendSpec<T>) -> Result<Design<T>> {
    let p = stations.len();
    let k = spec.n_columns();
    let mut x = DMatrix::zeros(times.len() * p, k);
    let mut row = vec![T::zero(); k];
    for (t, day) in times.iter().enumerate() {
        for (j, st) in stations.iter().enumerate() {
            spec.fill_row(&mut row, st, day.month())?;
            for (c, v) in row.iter().enumerate() {
                x[(t * p + j, c)] = *v;
            }
        }
    }
    Ok(Design {
        x,
        labels: spec.column_labels(),
    })
}

/// Stacked design matrix. When there are at least as many rows as columns the
/// design is checked for full column rank and dependent columns are named.
pub fn build_design<T: Real>(
    stations: &StationTable<T>,
    times: &[NaiveDate],
    spec: &TrendSpec<T>,
) -> Result<Design<T>> {
    let d = design_rows(stations, times, spec)?;
    if d.x.nrows() >= d.x.ncols() {
        let dependent = dependent_columns(&d.x);
        if !dependent.is_empty() {
            return Err(Error::RankDeficient {
                columns: dependent.into_iter().map(|c| d.labels[c].clone()).collect(),
            });
        }
    }
    Ok(d)
}

/// Columns that are (numerically) linear combinations of earlier columns,
/// found by modified Gram–Schmidt.
pub fn dependent_columns<T: Real>(x: &DMatrix<T>) -> Vec<usize> {
    let tol = T::lit(1e-9);
    let mut basis: Vec<DVector<T>> = Vec::new();
    let mut out = Vec::new();
    for c in 0..x.ncols() {
        let mut v: DVector<T> = x.column(c).into_owned();
        let norm0 = v.norm();
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, T::one());
        }
        let norm = v.norm();
        if norm0 == T::zero() || norm <= tol * norm0 {
            out.push(c);
        } else {
            basis.push(v / norm);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendModel<T: Real> {
    pub spec: TrendSpec<T>,
    pub labels: Vec<String>,
    pub coeffs: DVector<T>,
    /// `sigma2_hat · (XᵀX)⁻¹`.
    pub coeff_cov: DMatrix<T>,
    /// n × p, observed minus fitted.
    pub residuals: DMatrix<T>,
    /// Residual sum of squares over `max(N − k, 1)`.
    pub sigma2_hat: T,
}

impl<T: Real> TrendModel<T> {
    /// Fitted mean at arbitrary stations and days (n × p).
    pub fn predict(&self, stations: &StationTable<T>, times: &[NaiveDate]) -> Result<DMatrix<T>> {
        let d = design_rows(stations, times, &self.spec)?;
        let mu = &d.x * &self.coeffs;
        Ok(unstack(&mu, times.len(), stations.len()))
    }

    pub fn coefficient(&self, label: &str) -> Option<T> {
        self.labels.iter().position(|l| l == label).map(|i| self.coeffs[i])
    }
}

fn stack<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    let (n, p) = m.shape();
    DVector::from_fn(n * p, |r, _| m[(r / p, r % p)])
}

fn unstack<T: Real>(v: &DVector<T>, n: usize, p: usize) -> DMatrix<T> {
    DMatrix::from_fn(n, p, |t, j| v[t * p + j])
}

/// Ordinary least squares of the stacked observations on `design`.
pub fn fit_ols<T: Real>(obs: &ObservationMatrix<T>, design: &Design<T>, spec: &TrendSpec<T>) -> Result<TrendModel<T>> {
    if obs.has_missing() {
        return Err(Error::InvalidInput("trend fit requires a complete-case matrix".into()));
    }
    let (n, p) = obs.values.shape();
    if design.x.nrows() != n * p {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, observations have {n} × {p}",
            design.x.nrows()
        )));
    }
    let y = stack(&obs.values);
    let ls = least_squares(&design.x, &y)?;
    let k = design.x.ncols();
    let dof = (n * p).saturating_sub(k).max(1);
    let sigma2_hat = ls.rss / T::from_usize_lossy(dof);
    let mut coeff_cov = ls.xtx_inv * sigma2_hat;
    crate::linalg::symmetrize(&mut coeff_cov);
    Ok(TrendModel {
        spec: spec.clone(),
        labels: design.labels.clone(),
        coeffs: ls.coef,
        coeff_cov,
        residuals: unstack(&ls.residuals, n, p),
        sigma2_hat,
    })
}

/// Builds the design for `spec` and fits it.
pub fn fit_trend<T: Real>(
    obs: &ObservationMatrix<T>,
    stations: &StationTable<T>,
    spec: &TrendSpec<T>,
) -> Result<TrendModel<T>> {
    obs.check_aligned(stations)?;
    let design = build_design(stations, &obs.times, spec)?;
    fit_ols(obs, &design, spec)
}

/// Observation minus the station's climate normal for the month of each day.
/// Missing cells stay missing.
pub fn compute_anomalies<T: Real>(
    obs: &ObservationMatrix<T>,
    grid: &ClimateGrid<T>,
    stations: &StationTable<T>,
) -> Result<ObservationMatrix<T>> {
    obs.check_aligned(stations)?;
    let months = months_present(&obs.times);
    let mut normals = vec![[T::zero(); 12]; stations.len()];
    for (j, st) in stations.iter().enumerate() {
        for &m in &months {
            normals[j][(m - 1) as usize] = normal_at(grid, &st.geo, m)?;
        }
    }
    let mut values = obs.values.clone();
    for (t, day) in obs.times.iter().enumerate() {
        let m = (day.month() - 1) as usize;
        for j in 0..stations.len() {
            if !obs.mask[(t, j)] {
                values[(t, j)] -= normals[j][m];
            }
        }
    }
    ObservationMatrix::with_mask(values, obs.times.clone(), obs.mask.clone(), obs.station_ids.clone())
}

/// Day-by-day longitude and latitude effects of the quadratic surface, in °C
/// per km, with 95% confidence half-widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSeries<T> {
    pub times: Vec<NaiveDate>,
    pub lon_effect: Vec<T>,
    pub lon_half_width: Vec<T>,
    pub lat_effect: Vec<T>,
    pub lat_half_width: Vec<T>,
}

/// Fits the quadratic surface separately for each day using the day's
/// observed stations. Coordinates are centered on the day's station mean, so
/// the linear coefficients are the gradient at the network centre.
pub fn per_time_effects<T: Real>(obs: &ObservationMatrix<T>, stations: &StationTable<T>) -> Result<EffectSeries<T>> {
    obs.check_aligned(stations)?;
    let fits: Vec<Result<[T; 4]>> = (0..obs.n_times())
        .into_par_iter()
        .map(|t| {
            let sites: Vec<usize> = (0..obs.n_sites()).filter(|&j| !obs.mask[(t, j)]).collect();
            let n = sites.len();
            if n < 7 {
                return Err(Error::InsufficientData(format!(
                    "{} has {n} observed stations; the per-day surface needs at least 7",
                    obs.times[t]
                )));
            }
            let nn = T::from_usize_lossy(n);
            let c1 = sites.iter().fold(T::zero(), |a, &j| a + stations.get(j).proj.s1) / nn;
            let c2 = sites.iter().fold(T::zero(), |a, &j| a + stations.get(j).proj.s2) / nn;
            let x = DMatrix::from_fn(n, 6, |r, c| {
                let s1 = stations.get(sites[r]).proj.s1 - c1;
                let s2 = stations.get(sites[r]).proj.s2 - c2;
                [T::one(), s1, s2, s1 * s2, s1 * s1, s2 * s2][c]
            });
            let y = DVector::from_fn(n, |r, _| obs.values[(t, sites[r])]);
            let ls = least_squares(&x, &y)?;
            let dof = n - 6;
            let s2 = ls.rss / T::from_usize_lossy(dof);
            let tq = T::lit(
                StudentsT::new(0.0, 1.0, dof as f64)
                    .map_err(|e| Error::InvalidInput(e.to_string()))?
                    .inverse_cdf(0.975),
            );
            let se = |i: usize| (s2 * ls.xtx_inv[(i, i)]).max(T::zero()).sqrt();
            Ok([ls.coef[1], tq * se(1), ls.coef[2], tq * se(2)])
        })
        .collect();
    let mut out = EffectSeries {
        times: obs.times.clone(),
        lon_effect: Vec::with_capacity(fits.len()),
        lon_half_width: Vec::with_capacity(fits.len()),
        lat_effect: Vec::with_capacity(fits.len()),
        lat_half_width: Vec::with_capacity(fits.len()),
    };
    for f in fits {
        let [a, b, c, d] = f?;
        out.lon_effect.push(a);
        out.lon_half_width.push(b);
        out.lat_effect.push(c);
        out.lat_half_width.push(d);
    }
    Ok(out)
}

/// Sorted residuals paired with standard-normal quantiles `Φ⁻¹((i − 0.5)/N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqData<T> {
    pub theoretical: Vec<T>,
    pub sample: Vec<T>,
}

pub fn qq_data<T: Real>(model: &TrendModel<T>) -> QqData<T> {
    qq_pairs(model.residuals.iter().copied().collect())
}

pub fn qq_pairs<T: Real>(mut sample: Vec<T>) -> QqData<T> {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sample.len() as f64;
    let std_normal = Normal::standard();
    let theoretical = (0..sample.len())
        .map(|i| T::lit(std_normal.inverse_cdf((i as f64 + 0.5) / n)))
        .collect();
    QqData { theoretical, sample }
}

/// k × p prior mean of the regression coefficients: column j is the fitted
/// trend evaluated at site j, split into a baseline row and one row per
/// non-baseline month, so that `time_design · B₀` reproduces the fitted mean.
pub fn build_b0<T: Real>(model: &TrendModel<T>, stations: &StationTable<T>) -> Result<DMatrix<T>> {
    let spec = &model.spec;
    let k = spec.months.len().max(1);
    let m = k - 1;
    let b = &model.coeffs;
    match spec.mode {
        TrendMode::QuadraticSurface => Err(Error::InvalidInput(
            "the quadratic surface has no month structure; use the interaction or anomaly trend".into(),
        )),
        TrendMode::PrismAnomaly => Ok(DMatrix::from_fn(k, stations.len(), |r, _| b[r])),
        TrendMode::Interaction => {
            let mut out = DMatrix::zeros(k, stations.len());
            for (j, st) in stations.iter().enumerate() {
                if !st.elev_m.finite() {
                    return Err(Error::InvalidInput(format!("station '{}' lacks elevation", st.id)));
                }
                let [lo, la, el] = spec.center_scale.apply(st.geo.lon_deg, st.geo.lat_deg, st.elev_m);
                out[(0, j)] = b[0] + b[1] * lo + b[2] * la + b[3] * el + b[4] * lo * la + b[5] * lo * el;
                for i in 0..m {
                    out[(1 + i, j)] = b[6 + i] + b[6 + m + i] * lo + b[6 + 2 * m + i] * la + b[6 + 3 * m + i] * lo * la;
                }
            }
            Ok(out)
        }
    }
}

/// n × k time covariates matching [`build_b0`]: a leading one and an
/// indicator for each non-baseline month.
pub fn time_design<T: Real>(times: &[NaiveDate], months: &[u32]) -> Result<DMatrix<T>> {
    let k = months.len().max(1);
    let mut z = DMatrix::zeros(times.len(), k);
    for (t, day) in times.iter().enumerate() {
        z[(t, 0)] = T::one();
        match months.iter().position(|&m| m == day.month()) {
            Some(0) => {}
            Some(i) => z[(t, i)] = T::one(),
            None if months.is_empty() => {}
            None => {
                return Err(Error::InvalidInput(format!(
                    "{day} falls in a month without an indicator"
                )))
            }
        }
    }
    Ok(z)
}
