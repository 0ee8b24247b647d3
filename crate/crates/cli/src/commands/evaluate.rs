use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nalgebra::DMatrix;

use tempfield::eval::{evaluate, MetricsReport, PredictionRecord};
use tempfield::ingest::ObservationMatrix;
use tempfield::Error;

use super::{commit, load_inputs, metrics_fields, RunLog};
use crate::artifacts::{Provenance, Staging};
use crate::config::LoadedConfig;
use crate::error::CliError;

/// A predictions file and the method label it is reported under.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSource {
    pub label: String,
    pub path: PathBuf,
}

impl std::str::FromStr for PredictionSource {
    type Err = String;

    /// `LABEL=PATH`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (label, path) = s
            .split_once('=')
            .ok_or_else(|| format!("expected LABEL=PATH, got '{s}'"))?;
        if label.is_empty() || path.is_empty() {
            return Err(format!("expected LABEL=PATH, got '{s}'"));
        }
        Ok(Self {
            label: label.into(),
            path: path.into(),
        })
    }
}

/// Scores prediction files against the observations named in the config.
/// Without explicit sources, the pipeline's prediction files in the output
/// directory are used.
pub(crate) fn run(lc: &LoadedConfig, sources: &[PredictionSource]) -> Result<(), CliError> {
    let out_dir = lc.output_dir();
    let sources = if sources.is_empty() {
        let found: Vec<PredictionSource> = [
            ("BSP", "predictions_bsp.csv"),
            ("Ordinary kriging", "predictions_ok.csv"),
        ]
        .iter()
        .map(|(label, file)| PredictionSource {
            label: label.to_string(),
            path: out_dir.join(file),
        })
        .filter(|s| s.path.exists())
        .collect();
        if found.is_empty() {
            return Err(CliError::Config(format!(
                "no --predictions given and no prediction files in {}",
                out_dir.display()
            )));
        }
        found
    } else {
        sources.to_vec()
    };
    let inputs = load_inputs(lc)?;
    let level = lc.config.model.level;
    let mut reports = Vec::with_capacity(sources.len());
    for src in &sources {
        let records = read_predictions(&src.path).map_err(CliError::step("evaluate"))?;
        let truth = truth_for(&inputs.observations, &records).map_err(CliError::step("evaluate"))?;
        let report: MetricsReport =
            evaluate(&records, &truth, level, &src.label).map_err(CliError::step("evaluate"))?;
        log::info!(
            "{}: coverage {:.3}, MSPE {:.3} over {} events",
            src.label,
            report.coverage,
            report.overall_mspe,
            report.n_events
        );
        reports.push(report);
    }
    let prov = Provenance::new(&lc.config);
    let mut staging = Staging::new(&out_dir)?;
    super::write_metrics(&mut staging, &prov, "evaluation", "evaluation_comparison", &reports)?;
    let mut log = RunLog::new(&prov, "evaluate");
    for (src, r) in sources.iter().zip(&reports) {
        let mut fields = vec![("file", src.path.display().to_string())];
        fields.extend(metrics_fields(r));
        log.line(&format!("method[{}]", src.label), &fields);
    }
    staging.write("evaluate.log", log.finish())?;
    commit(staging)?;
    Ok(())
}

/// Reads `station_id,date,point,low,high[,dof]` records.
pub(crate) fn read_predictions(path: &Path) -> tempfield::Result<Vec<PredictionRecord<f64>>> {
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
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let cols: Vec<usize> = ["station_id", "date", "point", "low", "high"]
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| parse_err(1, format!("missing column '{name}'")))
        })
        .collect::<tempfield::Result<_>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |k: usize| rec.get(cols[k]).unwrap_or("");
        let real = |k: usize| {
            field(k)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("cannot parse a number from '{}'", field(k))))
        };
        let date = NaiveDate::parse_from_str(field(1), "%Y-%m-%d")
            .map_err(|_| parse_err(line, format!("cannot parse date from '{}'", field(1))))?;
        out.push(PredictionRecord {
            station_id: field(0).to_string(),
            date,
            point: real(2)?,
            low: real(3)?,
            high: real(4)?,
        });
    }
    Ok(out)
}

/// Observations at the predicted stations and dates. Cells without a
/// prediction are masked so they are not scored.
pub(crate) fn truth_for(
    obs: &ObservationMatrix<f64>,
    records: &[PredictionRecord<f64>],
) -> tempfield::Result<ObservationMatrix<f64>> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no predictions to score".into()));
    }
    let col_of: HashMap<&str, usize> = obs
        .station_ids
        .iter()
        .enumerate()
        .map(|(j, s)| (s.as_str(), j))
        .collect();
    let row_of: HashMap<NaiveDate, usize> = obs.times.iter().enumerate().map(|(t, d)| (*d, t)).collect();
    let mut cols: Vec<usize> = Vec::new();
    let mut rows: Vec<usize> = Vec::new();
    let mut predicted = HashSet::new();
    for r in records {
        let j = *col_of
            .get(r.station_id.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("prediction for unknown station '{}'", r.station_id)))?;
        let t = *row_of
            .get(&r.date)
            .ok_or_else(|| Error::InvalidInput(format!("prediction for {} lies outside the observed dates", r.date)))?;
        cols.push(j);
        rows.push(t);
        predicted.insert((t, j));
    }
    cols.sort_unstable();
    cols.dedup();
    rows.sort_unstable();
    rows.dedup();
    let values = DMatrix::from_fn(rows.len(), cols.len(), |a, b| obs.values[(rows[a], cols[b])]);
    let mask = DMatrix::from_fn(rows.len(), cols.len(), |a, b| {
        obs.mask[(rows[a], cols[b])] || !predicted.contains(&(rows[a], cols[b]))
    });
    ObservationMatrix::with_mask(
        values,
        rows.iter().map(|&t| obs.times[t]).collect(),
        mask,
        cols.iter().map(|&j| obs.station_ids[j].clone()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_parsing() {
        let s: PredictionSource = "BSP=out/p.csv".parse().unwrap();
        assert_eq!(s.label, "BSP");
        assert_eq!(s.path, PathBuf::from("out/p.csv"));
        assert!("nolabel".parse::<PredictionSource>().is_err());
        assert!("=x".parse::<PredictionSource>().is_err());
    }

    #[test]
    fn truth_masks_unpredicted_cells() {
        let d = |k: u32| NaiveDate::from_ymd_opt(2000, 4, k).unwrap();
        let obs = ObservationMatrix::complete(
            DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            vec![d(1), d(2)],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let rec = |id: &str, day: u32, v: f64| PredictionRecord {
            station_id: id.into(),
            date: d(day),
            point: v,
            low: v - 1.0,
            high: v + 1.0,
        };
        let records = vec![rec("c", 1, 3.0), rec("a", 2, 4.0), rec("c", 2, 6.5)];
        let truth = truth_for(&obs, &records).unwrap();
        assert_eq!(truth.station_ids, vec!["a", "c"]);
        assert!(truth.mask[(0, 0)]);
        assert!(!truth.mask[(1, 0)] && !truth.mask[(0, 1)] && !truth.mask[(1, 1)]);
        let r = evaluate(&records, &truth, 0.95, "m").unwrap();
        assert_eq!(r.n_events, 3);
        assert!((r.overall_mspe - 0.25 / 3.0).abs() < 1e-12);
        assert!(truth_for(&obs, &[rec("zz", 1, 0.0)]).is_err());
    }
}
