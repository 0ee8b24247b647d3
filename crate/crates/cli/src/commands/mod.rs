//! The five subcommands and the input/output plumbing they share.

mod diagnostics;
mod evaluate;
mod krige;
mod pipeline;
mod simulate;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use tempfield::deform::{ProbeGrid, TpsMap};
use tempfield::eval::{compare_methods, MetricsReport, PredictionRecord};
use tempfield::geo::ProjPoint;
use tempfield::ingest::{
    load_climate_grid, load_observations, read_station_records, ClimateGrid, DateRange, ObservationMatrix, SplitSpec,
    StationTable,
};
use tempfield::kriging::DayKriging;
use tempfield::pipeline::{Stage, StageError};
use tempfield::variogram::ExpVariogramFit;
use tempfield::Error;

use crate::artifacts::{num, CsvDoc, Provenance, Staging};
use crate::config::LoadedConfig;
use crate::error::CliError;

pub use diagnostics::{stretch_svg, DIAGNOSTICS_DIR};
pub use evaluate::PredictionSource;

pub(crate) use diagnostics::run as diagnostics;
pub(crate) use evaluate::run as evaluate;
pub(crate) use krige::run as krige;
pub(crate) use pipeline::run as pipeline;
pub(crate) use simulate::run as simulate;

pub const STATE_FILE: &str = "state.json";

/// What `pipeline` leaves behind for `diagnostics`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub config_sha256: String,
    pub split: SplitSpec,
    /// Gauged station ids in the order of `mds_coords`.
    pub gauged_ids: Vec<String>,
    pub lambda: f64,
    pub mds_coords: Vec<ProjPoint<f64>>,
    pub map: TpsMap<f64>,
    pub probe: ProbeGrid<f64>,
    pub variogram: ExpVariogramFit<f64>,
}

pub(crate) struct Inputs {
    pub stations: StationTable<f64>,
    pub observations: ObservationMatrix<f64>,
    pub climate: Option<ClimateGrid<f64>>,
}

fn ingest_error(source: Error) -> CliError {
    CliError::Stage(StageError {
        stage: Stage::Ingest,
        source,
    })
}

/// Loads stations, observations and (if configured) the climate grid.
pub(crate) fn load_inputs(lc: &LoadedConfig) -> Result<Inputs, CliError> {
    let data = &lc.config.data;
    let stations_path = lc.resolve(&data.stations);
    let records = read_station_records::<f64>(&stations_path).map_err(ingest_error)?;
    if records.is_empty() {
        return Err(ingest_error(Error::InsufficientData(format!(
            "{}: no stations",
            stations_path.display()
        ))));
    }
    let geo: Vec<_> = records.iter().map(|r| r.geo).collect();
    let lcc = lc.config.lcc(&geo).map_err(ingest_error)?;
    let stations = StationTable::from_records(&records, &lcc).map_err(ingest_error)?;
    let obs_path = lc.resolve(&data.observations);
    let range = match (data.start, data.end) {
        (Some(s), Some(e)) => DateRange::new(s, e),
        (s, e) => {
            let (first, last) = date_span(&obs_path).map_err(ingest_error)?;
            DateRange::new(s.unwrap_or(first), e.unwrap_or(last))
        }
    }
    .map_err(ingest_error)?;
    let observations = load_observations(&obs_path, &stations, range).map_err(ingest_error)?;
    let climate = data
        .climate_grid
        .as_ref()
        .map(|p| load_climate_grid(&lc.resolve(p)))
        .transpose()
        .map_err(ingest_error)?;
    log::info!(
        "loaded {} stations and {} days ({} to {})",
        stations.len(),
        observations.n_times(),
        range.start,
        range.end
    );
    Ok(Inputs {
        stations,
        observations,
        climate,
    })
}

/// First and last date in a long-format observations file.
fn date_span(path: &Path) -> tempfield::Result<(NaiveDate, NaiveDate)> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let col = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .position(|h| h == "date")
        .ok_or_else(|| parse_err(1, "missing column 'date'".into()))?;
    let mut span: Option<(NaiveDate, NaiveDate)> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = rec.get(col).unwrap_or("");
        let d = NaiveDate::parse_from_str(field, "%Y-%m-%d")
            .map_err(|_| parse_err(line, format!("cannot parse date from '{field}'")))?;
        span = Some(span.map_or((d, d), |(a, b)| (a.min(d), b.max(d))));
    }
    span.ok_or_else(|| Error::InsufficientData(format!("{}: no observations", path.display())))
}

pub(crate) fn predictions_csv(prov: &Provenance, records: &[PredictionRecord<f64>], dof: Option<&[f64]>) -> String {
    let mut cols = vec!["station_id", "date", "point", "low", "high"];
    if dof.is_some() {
        cols.push("dof");
    }
    let mut doc = CsvDoc::new(prov, &cols);
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![
            r.station_id.clone(),
            r.date.to_string(),
            num(r.point),
            num(r.low),
            num(r.high),
        ];
        if let Some(d) = dof {
            row.push(num(d[i]));
        }
        doc.row(&row);
    }
    doc.finish()
}

pub(crate) fn ok_fits_csv(prov: &Provenance, times: &[NaiveDate], days: &[DayKriging<f64>]) -> String {
    let mut doc = CsvDoc::new(
        prov,
        &[
            "date",
            "sigma2",
            "phi_km",
            "tau2",
            "loglik",
            "converged",
            "phi_at_bound",
            "weak_structure",
        ],
    );
    for (d, day) in times.iter().zip(days) {
        let f = &day.fit;
        doc.row(&[
            d.to_string(),
            num(f.sigma2),
            num(f.phi),
            num(f.tau2),
            num(f.loglik),
            f.converged.to_string(),
            f.phi_at_bound.to_string(),
            f.weak_structure.to_string(),
        ]);
    }
    doc.finish()
}

/// Summary, per-station, per-date and JSON forms of the reports, plus a
/// comparison table when there are at least two.
pub(crate) fn write_metrics(
    staging: &mut Staging,
    prov: &Provenance,
    prefix: &str,
    comparison: &str,
    reports: &[MetricsReport],
) -> Result<(), CliError> {
    let se_note = format!("mspe_se={}", tempfield::eval::MSPE_SE_DEFINITION);
    let mut summary = CsvDoc::new(
        prov,
        &[
            "method",
            "level",
            "coverage",
            "overall_mspe",
            "overall_mspe_se",
            "n_events",
        ],
    )
    .note(&se_note);
    let mut by_station = CsvDoc::new(prov, &["method", "station_id", "mspe", "n"]);
    let mut by_date = CsvDoc::new(prov, &["method", "date", "mspe", "n"]);
    for r in reports {
        summary.row(&[
            r.method_label.clone(),
            num(r.level),
            num(r.coverage),
            num(r.overall_mspe),
            num(r.overall_mspe_se),
            r.n_events.to_string(),
        ]);
        for s in &r.mspe_by_station {
            by_station.row(&[
                r.method_label.clone(),
                s.station_id.clone(),
                num(s.mspe),
                s.n.to_string(),
            ]);
        }
        for t in &r.mspe_by_time {
            by_date.row(&[r.method_label.clone(), t.date.to_string(), num(t.mspe), t.n.to_string()]);
        }
    }
    staging.write(&format!("{prefix}_summary.csv"), summary.finish())?;
    staging.write(&format!("{prefix}_by_station.csv"), by_station.finish())?;
    staging.write(&format!("{prefix}_by_date.csv"), by_date.finish())?;
    staging.write(&format!("{prefix}.json"), prov.json("reports", &reports))?;
    if reports.len() >= 2 {
        let table = compare_methods(reports).map_err(CliError::step("evaluate"))?;
        let csv = table.to_csv().map_err(CliError::step("evaluate"))?;
        staging.write(&format!("{comparison}.csv"), prov.comment() + &csv)?;
        staging.write(&format!("{comparison}.txt"), prov.comment() + &table.to_text())?;
    }
    Ok(())
}

/// Plain `key=value` run log; no timestamps so reruns compare equal.
pub(crate) struct RunLog {
    text: String,
}

impl RunLog {
    pub fn new(prov: &Provenance, command: &str) -> Self {
        let mut text = prov.comment();
        let _ = writeln!(text, "command={command}");
        Self { text }
    }

    pub fn line(&mut self, key: &str, fields: &[(&str, String)]) {
        let _ = write!(self.text, "{key}");
        for (k, v) in fields {
            let _ = write!(self.text, " {k}={v}");
        }
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

pub(crate) fn metrics_fields(r: &MetricsReport) -> Vec<(&'static str, String)> {
    vec![
        ("coverage", r.coverage.to_string()),
        ("overall_mspe", r.overall_mspe.to_string()),
        ("overall_mspe_se", r.overall_mspe_se.to_string()),
        ("n_events", r.n_events.to_string()),
    ]
}

/// Moves staged files into place and logs where they went.
pub(crate) fn commit(staging: Staging) -> Result<Vec<PathBuf>, CliError> {
    let target = staging.target().to_path_buf();
    let files = staging.commit()?;
    log::info!("wrote {} files to {}", files.len(), target.display());
    Ok(files)
}

/// Per-station mean of each calendar month present in `obs`, month order.
pub(crate) fn monthly_means(obs: &ObservationMatrix<f64>) -> BTreeMap<u32, Vec<f64>> {
    use chrono::Datelike;
    let mut sums: BTreeMap<u32, (Vec<f64>, Vec<usize>)> = BTreeMap::new();
    for (t, d) in obs.times.iter().enumerate() {
        let entry = sums
            .entry(d.month())
            .or_insert_with(|| (vec![0.0; obs.n_sites()], vec![0; obs.n_sites()]));
        for j in 0..obs.n_sites() {
            if !obs.mask[(t, j)] {
                entry.0[j] += obs.values[(t, j)];
                entry.1[j] += 1;
            }
        }
    }
    sums.into_iter()
        .map(|(m, (s, c))| {
            let means = s
                .iter()
                .zip(&c)
                .map(|(&s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
                .collect();
            (m, means)
        })
        .collect()
}
