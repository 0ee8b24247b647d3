//! Loading station metadata, daily observations and monthly climate-normal
//! grids from local files, plus complete-case filtering and the random
//! train/validation split.
//!
//! File formats:
//!
//! * stations CSV, header `id,lon,lat,elev_m`
//! * observations CSV (long format), header `station_id,date,tmax_c`, ISO-8601
//!   dates; an empty `tmax_c` is an explicit missing value
//! * climate grid: first line `ncols nrows origin_lon origin_lat cell_deg nodata`,
//!   then 12 blocks (January first) of `nrows` lines with `ncols` values each.
//!   The first value of each block is the cell centred on
//!   (`origin_lon`, `origin_lat`); columns step east and rows step south by
//!   `cell_deg`.
//!
//! Lines starting with `#` are comments in all three formats.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, LccParams, ProjPoint};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station<T> {
    pub id: String,
    pub geo: GeoPoint<T>,
    pub proj: ProjPoint<T>,
    pub elev_m: T,
}

/// Ordered station list. The order defines the column order of every
/// observation matrix built from it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StationTable<T> {
    stations: Vec<Station<T>>,
}

impl<T: Real> StationTable<T> {
    pub fn new(stations: Vec<Station<T>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &stations {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateStation(s.id.clone()));
            }
            if !s.elev_m.finite() {
                return Err(Error::InvalidInput(format!(
                    "station '{}' has non-finite elevation",
                    s.id
                )));
            }
        }
        Ok(Self { stations })
    }

    /// Projects raw records with `lcc`, keeping record order.
    pub fn from_records(records: &[StationRecord<T>], lcc: &LccParams<T>) -> Result<Self> {
        let proj = lcc.projection()?;
        let stations = records
            .iter()
            .map(|r| {
                Ok(Station {
                    id: r.id.clone(),
                    geo: r.geo,
                    proj: proj.project(&r.geo)?,
                    elev_m: r.elev_m,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(stations)
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Station<T>> {
        self.stations.iter()
    }

    pub fn get(&self, i: usize) -> &Station<T> {
        &self.stations[i]
    }

    pub fn stations(&self) -> &[Station<T>] {
        &self.stations
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.stations.iter().map(|s| s.id.clone()).collect()
    }

    pub fn proj_points(&self) -> Vec<ProjPoint<T>> {
        self.stations.iter().map(|s| s.proj).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            stations: idx.iter().map(|&i| self.stations[i].clone()).collect(),
        }
    }
}

/// One unprojected row of the stations file.
#[derive(Debug, Clone, PartialEq)]
pub struct StationRecord<T> {
    pub id: String,
    pub geo: GeoPoint<T>,
    pub elev_m: T,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn header_index(path: &Path, headers: &csv::StringRecord, expected: &[&str]) -> Result<Vec<usize>> {
    expected
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == *name).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("missing column '{name}' (expected header {})", expected.join(",")),
            })
        })
        .collect()
}

fn parse_real<T: Real>(path: &Path, line: u64, field: &str, what: &str) -> Result<T> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(T::lit)
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("cannot parse {what} from '{field}'"),
        })
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

pub fn read_station_records<T: Real>(path: &Path) -> Result<Vec<StationRecord<T>>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let idx = header_index(path, &headers, &["id", "lon", "lat", "elev_m"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&rec);
        let id = rec.get(idx[0]).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "empty station id".into(),
            });
        }
        let lon = parse_real(path, line, rec.get(idx[1]).unwrap_or(""), "longitude")?;
        let lat = parse_real(path, line, rec.get(idx[2]).unwrap_or(""), "latitude")?;
        let elev_m = parse_real(path, line, rec.get(idx[3]).unwrap_or(""), "elevation")?;
        let geo = GeoPoint::new(lon, lat).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        out.push(StationRecord { id, geo, elev_m });
    }
    Ok(out)
}

/// Loads and projects the stations file. An empty file yields an empty table
/// and a logged warning.
pub fn load_stations<T: Real>(path: &Path, lcc: &LccParams<T>) -> Result<StationTable<T>> {
    let records = read_station_records(path)?;
    if records.is_empty() {
        log::warn!("{}: no stations found", path.display());
    }
    StationTable::from_records(&records, lcc)
}

/// Inclusive calendar-day range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidInput(format!(
                "date range ends ({end}) before it starts ({start})"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn days(&self) -> Vec<NaiveDate> {
        self.start.iter_days().take_while(|d| *d <= self.end).collect()
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        d >= self.start && d <= self.end
    }
}

/// n × p responses over days × sites with a missingness mask (`true` =
/// missing). Masked cells hold zero and must not be read as data.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix<T: Real> {
    pub values: DMatrix<T>,
    pub times: Vec<NaiveDate>,
    pub mask: DMatrix<bool>,
    pub station_ids: Vec<String>,
}

impl<T: Real> ObservationMatrix<T> {
    /// Fully observed matrix.
    pub fn complete(values: DMatrix<T>, times: Vec<NaiveDate>, station_ids: Vec<String>) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), false);
        Self::with_mask(values, times, mask, station_ids)
    }

    pub fn with_mask(
        mut values: DMatrix<T>,
        times: Vec<NaiveDate>,
        mask: DMatrix<bool>,
        station_ids: Vec<String>,
    ) -> Result<Self> {
        if values.nrows() != times.len() || values.ncols() != station_ids.len() || mask.shape() != values.shape() {
            return Err(Error::DimensionMismatch(format!(
                "values {:?}, mask {:?}, {} times, {} stations",
                values.shape(),
                mask.shape(),
                times.len(),
                station_ids.len()
            )));
        }
        for (v, m) in values.iter_mut().zip(mask.iter()) {
            if *m {
                *v = T::zero();
            }
        }
        Ok(Self {
            values,
            times,
            mask,
            station_ids,
        })
    }

    pub fn n_times(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_sites(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, t: usize, j: usize) -> Option<T> {
        (!self.mask[(t, j)]).then(|| self.values[(t, j)])
    }

    pub fn has_missing(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }

    pub fn missing_fraction(&self, j: usize) -> f64 {
        if self.n_times() == 0 {
            return 0.0;
        }
        self.mask.column(j).iter().filter(|&&m| m).count() as f64 / self.n_times() as f64
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        Self {
            values: self.values.select_columns(idx),
            times: self.times.clone(),
            mask: self.mask.select_columns(idx),
            station_ids: idx.iter().map(|&j| self.station_ids[j].clone()).collect(),
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(idx),
            times: idx.iter().map(|&t| self.times[t]).collect(),
            mask: self.mask.select_rows(idx),
            station_ids: self.station_ids.clone(),
        }
    }

    /// Checks that column j carries the id of station j.
    pub fn check_aligned(&self, stations: &StationTable<T>) -> Result<()> {
        if self.station_ids.len() != stations.len()
            || self.station_ids.iter().zip(stations.iter()).any(|(a, s)| *a != s.id)
        {
            return Err(Error::DimensionMismatch(
                "observation columns are not aligned with the station table".into(),
            ));
        }
        Ok(())
    }
}

/// Loads long-format observations into a matrix aligned with `stations` and
/// with every calendar day of `range`. Rows dated outside the range are
/// skipped; absent cells are masked.
pub fn load_observations<T: Real>(
    path: &Path,
    stations: &StationTable<T>,
    range: DateRange,
) -> Result<ObservationMatrix<T>> {
    let times = range.days();
    let n = times.len();
    let p = stations.len();
    let col_of: HashMap<&str, usize> = stations.iter().enumerate().map(|(j, s)| (s.id.as_str(), j)).collect();
    let mut values = DMatrix::zeros(n, p);
    let mut mask = DMatrix::from_element(n, p, true);
    let mut seen = DMatrix::from_element(n, p, false);

    let mut rdr = csv_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let idx = header_index(path, &headers, &["station_id", "date", "tmax_c"])?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&rec);
        let id = rec.get(idx[0]).unwrap_or("");
        let date_s = rec.get(idx[1]).unwrap_or("");
        let date = NaiveDate::parse_from_str(date_s, "%Y-%m-%d").map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("cannot parse date '{date_s}'"),
        })?;
        let j = *col_of.get(id).ok_or_else(|| Error::UnknownStation {
            id: id.to_string(),
            line,
        })?;
        if !range.contains(date) {
            continue;
        }
        let t = (date - range.start).num_days() as usize;
        if seen[(t, j)] {
            return Err(Error::DuplicateObservation {
                id: id.to_string(),
                date: date.to_string(),
                line,
            });
        }
        seen[(t, j)] = true;
        let field = rec.get(idx[2]).unwrap_or("");
        if field.is_empty() || field.eq_ignore_ascii_case("na") {
            continue;
        }
        values[(t, j)] = parse_real(path, line, field, "temperature")?;
        mask[(t, j)] = false;
    }
    ObservationMatrix::with_mask(values, times, mask, stations.ids())
}

/// Drops stations whose missing fraction exceeds `max_missing_frac`, then
/// drops every day that still has a missing cell. Returns the retained
/// station (column) indices alongside the filtered matrix.
pub fn complete_cases_with_index<T: Real>(
    obs: &ObservationMatrix<T>,
    max_missing_frac: f64,
) -> Result<(ObservationMatrix<T>, Vec<usize>)> {
    if !(0.0..1.0).contains(&max_missing_frac) {
        return Err(Error::InvalidInput(format!(
            "max_missing_frac {max_missing_frac} not in [0, 1)"
        )));
    }
    let keep_cols: Vec<usize> = (0..obs.n_sites())
        .filter(|&j| obs.missing_fraction(j) <= max_missing_frac)
        .collect();
    if keep_cols.is_empty() {
        return Err(Error::NoCompleteCases(
            "every station exceeds the missing-data threshold".into(),
        ));
    }
    let cols = obs.select_columns(&keep_cols);
    let keep_rows: Vec<usize> = (0..cols.n_times())
        .filter(|&t| !cols.mask.row(t).iter().any(|&m| m))
        .collect();
    if keep_rows.is_empty() {
        return Err(Error::NoCompleteCases(
            "every day has a missing value among retained stations".into(),
        ));
    }
    Ok((cols.select_rows(&keep_rows), keep_cols))
}

pub fn complete_cases<T: Real>(obs: &ObservationMatrix<T>, max_missing_frac: f64) -> Result<ObservationMatrix<T>> {
    complete_cases_with_index(obs, max_missing_frac).map(|(m, _)| m)
}

/// Twelve monthly layers of climate normals on a regular lon/lat grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ClimateGrid<T: Real> {
    /// Centre of the first (north-west) cell.
    pub origin: GeoPoint<T>,
    pub cell_deg: T,
    pub nrows: usize,
    pub ncols: usize,
    /// January first; row 0 is the northernmost row.
    pub layers: Vec<DMatrix<T>>,
    pub nodata: T,
}

impl<T: Real> ClimateGrid<T> {
    pub fn new(origin: GeoPoint<T>, cell_deg: T, layers: Vec<DMatrix<T>>, nodata: T) -> Result<Self> {
        if cell_deg <= T::zero() {
            return Err(Error::InvalidInput("cell size must be positive".into()));
        }
        if layers.len() != 12 {
            return Err(Error::InvalidInput(format!(
                "expected 12 monthly layers, found {}",
                layers.len()
            )));
        }
        let (nrows, ncols) = layers[0].shape();
        if nrows == 0 || ncols == 0 || layers.iter().any(|l| l.shape() != (nrows, ncols)) {
            return Err(Error::InvalidInput("layers must share a non-empty shape".into()));
        }
        Ok(Self {
            origin,
            cell_deg,
            nrows,
            ncols,
            layers,
            nodata,
        })
    }

    pub fn is_nodata(&self, month: u32, row: usize, col: usize) -> bool {
        self.layers[(month - 1) as usize][(row, col)] == self.nodata
    }

    /// Geographic centre of a cell.
    pub fn cell_center(&self, row: usize, col: usize) -> GeoPoint<T> {
        GeoPoint {
            lon_deg: self.origin.lon_deg + self.cell_deg * T::from_usize_lossy(col),
            lat_deg: self.origin.lat_deg - self.cell_deg * T::from_usize_lossy(row),
        }
    }

    /// Serializes in the documented ASCII format.
    pub fn to_ascii(&self) -> String {
        let mut s = format!(
            "{} {} {} {} {} {}\n",
            self.ncols, self.nrows, self.origin.lon_deg, self.origin.lat_deg, self.cell_deg, self.nodata
        );
        for layer in &self.layers {
            for r in 0..self.nrows {
                let row: Vec<String> = (0..self.ncols).map(|c| layer[(r, c)].to_string()).collect();
                s.push_str(&row.join(" "));
                s.push('\n');
            }
        }
        s
    }
}

pub fn load_climate_grid<T: Real>(path: &Path) -> Result<ClimateGrid<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_climate_grid(&text, path)
}

pub fn parse_climate_grid<T: Real>(text: &str, path: &Path) -> Result<ClimateGrid<T>> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or_else(|| perr(1, "empty grid file".into()))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 6 {
        return Err(perr(
            hline,
            "header must be 'ncols nrows origin_lon origin_lat cell_deg nodata'".into(),
        ));
    }
    let ncols: usize = h[0].parse().map_err(|_| perr(hline, format!("bad ncols '{}'", h[0])))?;
    let nrows: usize = h[1].parse().map_err(|_| perr(hline, format!("bad nrows '{}'", h[1])))?;
    let lon: T = parse_real(path, hline as u64, h[2], "origin longitude")?;
    let lat: T = parse_real(path, hline as u64, h[3], "origin latitude")?;
    let cell: T = parse_real(path, hline as u64, h[4], "cell size")?;
    let nodata: T = parse_real(path, hline as u64, h[5], "nodata value")?;
    if ncols == 0 || nrows == 0 {
        return Err(perr(hline, "grid dimensions must be positive".into()));
    }
    let body: Vec<(usize, &str)> = lines.collect();
    if !body.len().is_multiple_of(nrows) || body.len() / nrows != 12 {
        return Err(perr(
            body.last().map(|b| b.0).unwrap_or(hline),
            format!(
                "expected 12 monthly layers of {nrows} rows ({} lines), found {} lines ({} layers)",
                12 * nrows,
                body.len(),
                body.len() as f64 / nrows as f64
            ),
        ));
    }
    let mut layers = Vec::with_capacity(12);
    for block in body.chunks(nrows) {
        let mut m = DMatrix::zeros(nrows, ncols);
        for (r, (ln, row)) in block.iter().enumerate() {
            let vals: Vec<&str> = row.split_whitespace().collect();
            if vals.len() != ncols {
                return Err(perr(
                    *ln,
                    format!("ragged row: expected {ncols} values, found {}", vals.len()),
                ));
            }
            for (c, v) in vals.iter().enumerate() {
                m[(r, c)] = parse_real(path, *ln as u64, v, "grid value")?;
            }
        }
        layers.push(m);
    }
    let origin = GeoPoint::new(lon, lat).map_err(|e| perr(hline, e.to_string()))?;
    ClimateGrid::new(origin, cell, layers, nodata).map_err(|e| perr(hline, e.to_string()))
}

/// Bilinear interpolation of the month layer between the four surrounding
/// cell centres. Cells that receive zero weight may be nodata.
pub fn normal_at<T: Real>(grid: &ClimateGrid<T>, p: &GeoPoint<T>, month: u32) -> Result<T> {
    if !(1..=12).contains(&month) {
        return Err(Error::InvalidInput(format!("month {month} not in 1..=12")));
    }
    let outside = || Error::OutsideGrid {
        lon: p.lon_deg.as_f64(),
        lat: p.lat_deg.as_f64(),
    };
    let tol = T::lit(1e-9);
    let fc = (p.lon_deg - grid.origin.lon_deg) / grid.cell_deg;
    let fr = (grid.origin.lat_deg - p.lat_deg) / grid.cell_deg;
    let max_c = T::from_usize_lossy(grid.ncols - 1);
    let max_r = T::from_usize_lossy(grid.nrows - 1);
    if fc < -tol || fr < -tol || fc > max_c + tol || fr > max_r + tol {
        return Err(outside());
    }
    let fc = fc.max(T::zero()).min(max_c);
    let fr = fr.max(T::zero()).min(max_r);
    let c0 = (fc.as_f64().floor() as usize).min(grid.ncols.saturating_sub(2));
    let r0 = (fr.as_f64().floor() as usize).min(grid.nrows.saturating_sub(2));
    let wc = fc - T::from_usize_lossy(c0);
    let wr = fr - T::from_usize_lossy(r0);
    let layer = &grid.layers[(month - 1) as usize];
    let corners = [
        (r0, c0, (T::one() - wr) * (T::one() - wc)),
        (r0, c0 + 1, (T::one() - wr) * wc),
        (r0 + 1, c0, wr * (T::one() - wc)),
        (r0 + 1, c0 + 1, wr * wc),
    ];
    let mut acc = T::zero();
    for (r, c, w) in corners {
        if w == T::zero() {
            continue;
        }
        if r >= grid.nrows || c >= grid.ncols || layer[(r, c)] == grid.nodata {
            return Err(Error::NormalUnavailable {
                lon: p.lon_deg.as_f64(),
                lat: p.lat_deg.as_f64(),
                month,
            });
        }
        acc += w * layer[(r, c)];
    }
    Ok(acc)
}

/// Disjoint train/validation station ids, each listed in table order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ids: Vec<String>,
    pub valid_ids: Vec<String>,
    pub seed: u64,
}

impl SplitSpec {
    /// Table indices of the training and validation stations.
    pub fn indices<T: Real>(&self, stations: &StationTable<T>) -> Result<(Vec<usize>, Vec<usize>)> {
        let find = |ids: &[String]| {
            ids.iter()
                .map(|id| {
                    stations
                        .index_of(id)
                        .ok_or_else(|| Error::InvalidInput(format!("split names unknown station '{id}'")))
                })
                .collect::<Result<Vec<_>>>()
        };
        Ok((find(&self.train_ids)?, find(&self.valid_ids)?))
    }
}

/// Uniform random subset of `n_train` stations without replacement.
pub fn split_train_validation<T: Real>(stations: &StationTable<T>, n_train: usize, seed: u64) -> Result<SplitSpec> {
    let p = stations.len();
    if n_train == 0 || n_train >= p {
        return Err(Error::InvalidInput(format!(
            "n_train = {n_train} must satisfy 0 < n_train < {p}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, p, n_train).into_vec();
    chosen.sort_unstable();
    let mut is_train = vec![false; p];
    for &i in &chosen {
        is_train[i] = true;
    }
    let (train, valid): (Vec<_>, Vec<_>) = stations.iter().zip(is_train).partition(|(_, t)| *t);
    Ok(SplitSpec {
        train_ids: train.into_iter().map(|(s, _)| s.id.clone()).collect(),
        valid_ids: valid.into_iter().map(|(s, _)| s.id.clone()).collect(),
        seed,
    })
}

/// Calendar month of each day.
pub fn months_of(times: &[NaiveDate]) -> Vec<u32> {
    times.iter().map(|d| d.month()).collect()
}
