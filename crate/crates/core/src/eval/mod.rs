//! Validation metrics, method comparison, synthetic data and gridded
//! surfaces for plotting.

pub mod surface;
pub mod synth;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ObservationMatrix;
use crate::scalar::Real;

pub use surface::{grid_surface, GriddedField, SurfaceGrid};
pub use synth::{synth_generate, PlantedCovariance, PlantedDeformation, PlantedTrend, Region, SynthConfig, SynthTruth};

/// How `overall_mspe_se` is computed; written next to every report.
pub const MSPE_SE_DEFINITION: &str = "standard deviation of per-station MSPE divided by sqrt(number of stations)";

/// Point prediction and interval for one station-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord<T> {
    pub station_id: String,
    pub date: NaiveDate,
    pub point: T,
    pub low: T,
    pub high: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMspe {
    pub station_id: String,
    pub mspe: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeMspe {
    pub date: NaiveDate,
    pub mspe: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method_label: String,
    /// Nominal interval level the coverage refers to.
    pub level: f64,
    /// In the column order of the truth matrix.
    pub mspe_by_station: Vec<StationMspe>,
    /// In date order.
    pub mspe_by_time: Vec<TimeMspe>,
    pub overall_mspe: f64,
    pub overall_mspe_se: f64,
    pub coverage: f64,
    pub n_events: usize,
    pub se_definition: String,
}

impl MetricsReport {
    /// A report carrying only the summary numbers.
    pub fn summary(label: &str, level: f64, coverage: f64, overall_mspe: f64, overall_mspe_se: f64) -> Self {
        Self {
            method_label: label.to_string(),
            level,
            mspe_by_station: Vec::new(),
            mspe_by_time: Vec::new(),
            overall_mspe,
            overall_mspe_se,
            coverage,
            n_events: 0,
            se_definition: MSPE_SE_DEFINITION.to_string(),
        }
    }
}

/// Scores `predictions` against `truth` (validation stations × days).
///
/// Every observed cell of `truth` needs exactly one prediction. Records for
/// missing cells are ignored; records for stations or dates outside `truth`
/// are an error. The result does not depend on record order.
pub fn evaluate<T: Real>(
    predictions: &[PredictionRecord<T>],
    truth: &ObservationMatrix<T>,
    level: f64,
    label: &str,
) -> Result<MetricsReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "interval level must lie in (0, 1), got {level}"
        )));
    }
    let col: HashMap<&str, usize> = truth
        .station_ids
        .iter()
        .enumerate()
        .map(|(j, s)| (s.as_str(), j))
        .collect();
    let row: HashMap<NaiveDate, usize> = truth.times.iter().enumerate().map(|(t, d)| (*d, t)).collect();
    let mut cells: BTreeMap<(usize, usize), (f64, bool)> = BTreeMap::new();
    for rec in predictions {
        let j = *col.get(rec.station_id.as_str()).ok_or_else(|| {
            Error::DimensionMismatch(format!(
                "prediction for station '{}' not in the validation set",
                rec.station_id
            ))
        })?;
        let t = *row.get(&rec.date).ok_or_else(|| {
            Error::DimensionMismatch(format!("prediction for {} outside the validation days", rec.date))
        })?;
        let Some(y) = truth.get(t, j) else { continue };
        if [rec.point, rec.low, rec.high].iter().any(|v| !v.finite()) {
            return Err(Error::NonFinite(format!(
                "prediction for '{}' on {}",
                rec.station_id, rec.date
            )));
        }
        let err = (rec.point - y).as_f64();
        let covered = rec.low <= y && y <= rec.high;
        if cells.insert((j, t), (err * err, covered)).is_some() {
            return Err(Error::DimensionMismatch(format!(
                "two predictions for '{}' on {}",
                rec.station_id, rec.date
            )));
        }
    }
    let observed = (0..truth.n_sites())
        .flat_map(|j| (0..truth.n_times()).map(move |t| (j, t)))
        .filter(|&(j, t)| !truth.mask[(t, j)])
        .count();
    if cells.len() != observed {
        return Err(Error::DimensionMismatch(format!(
            "{} of {observed} observed validation cells have predictions",
            cells.len()
        )));
    }
    if cells.is_empty() {
        return Err(Error::InsufficientData("no validation cells to score".into()));
    }

    let mut by_station = vec![(0.0, 0usize); truth.n_sites()];
    let mut by_time = vec![(0.0, 0usize); truth.n_times()];
    let (mut total, mut hits) = (0.0, 0usize);
    for (&(j, t), &(se, covered)) in &cells {
        by_station[j].0 += se;
        by_station[j].1 += 1;
        by_time[t].0 += se;
        by_time[t].1 += 1;
        total += se;
        hits += covered as usize;
    }
    let mspe_by_station: Vec<StationMspe> = by_station
        .iter()
        .enumerate()
        .filter(|(_, s)| s.1 > 0)
        .map(|(j, &(s, n))| StationMspe {
            station_id: truth.station_ids[j].clone(),
            mspe: s / n as f64,
            n,
        })
        .collect();
    let mspe_by_time = by_time
        .iter()
        .enumerate()
        .filter(|(_, s)| s.1 > 0)
        .map(|(t, &(s, n))| TimeMspe {
            date: truth.times[t],
            mspe: s / n as f64,
            n,
        })
        .collect();
    let n_events = cells.len();
    let overall_mspe = total / n_events as f64;
    let ns = mspe_by_station.len() as f64;
    let overall_mspe_se = if mspe_by_station.len() > 1 {
        let mean = mspe_by_station.iter().map(|s| s.mspe).sum::<f64>() / ns;
        let var = mspe_by_station.iter().map(|s| (s.mspe - mean).powi(2)).sum::<f64>() / (ns - 1.0);
        var.sqrt() / ns.sqrt()
    } else {
        0.0
    };
    Ok(MetricsReport {
        method_label: label.to_string(),
        level,
        mspe_by_station,
        mspe_by_time,
        overall_mspe,
        overall_mspe_se,
        coverage: hits as f64 / n_events as f64,
        n_events,
        se_definition: MSPE_SE_DEFINITION.to_string(),
    })
}

/// Coverage, overall MSPE and its standard error side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub labels: Vec<String>,
    pub coverage: Vec<f64>,
    pub overall_mspe: Vec<f64>,
    pub overall_mspe_se: Vec<f64>,
    /// Column with the smallest overall MSPE (first on ties).
    pub best_mspe: usize,
}

const ROW_NAMES: [&str; 3] = ["Coverage", "Overall MSPE", "MSPE std. error"];

impl ComparisonTable {
    fn rows(&self) -> [&[f64]; 3] {
        [&self.coverage, &self.overall_mspe, &self.overall_mspe_se]
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv encoding: {e}"));
        let mut header = vec!["metric".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (name, vals) in ["coverage", "overall_mspe", "mspe_se"].iter().zip(self.rows()) {
            let mut rec = vec![name.to_string()];
            rec.extend(vals.iter().map(|v| format!("{v:.3}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidInput(format!("csv encoding: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Right-aligned columns, three decimals, followed by a line naming the
    /// method with the lowest overall MSPE.
    pub fn to_text(&self) -> String {
        let name_w = ROW_NAMES.iter().map(|s| s.chars().count()).max().unwrap_or(0);
        let widths: Vec<usize> = self.labels.iter().map(|l| l.chars().count().max(8)).collect();
        let mut out = String::new();
        let _ = write!(out, "{:name_w$}", "");
        for (l, w) in self.labels.iter().zip(&widths) {
            let _ = write!(out, "  {l:>w$}");
        }
        out.push('\n');
        for (name, vals) in ROW_NAMES.iter().zip(self.rows()) {
            let _ = write!(out, "{name:<name_w$}");
            for (v, w) in vals.iter().zip(&widths) {
                let _ = write!(out, "  {:>w$}", format!("{v:.3}"));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "Lowest overall MSPE: {}", self.labels[self.best_mspe]);
        out
    }
}

pub fn compare_methods(reports: &[MetricsReport]) -> Result<ComparisonTable> {
    if reports.len() < 2 {
        return Err(Error::InvalidInput("a comparison needs at least two reports".into()));
    }
    let overall_mspe: Vec<f64> = reports.iter().map(|r| r.overall_mspe).collect();
    let best_mspe = overall_mspe
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v < overall_mspe[best] { i } else { best });
    Ok(ComparisonTable {
        labels: reports.iter().map(|r| r.method_label.clone()).collect(),
        coverage: reports.iter().map(|r| r.coverage).collect(),
        overall_mspe,
        overall_mspe_se: reports.iter().map(|r| r.overall_mspe_se).collect(),
        best_mspe,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Datelike;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2000, 7, d).unwrap()
    }

    fn truth() -> ObservationMatrix<f64> {
        let values = DMatrix::from_row_slice(2, 2, &[10.0, 20.0, 11.0, 21.0]);
        ObservationMatrix::complete(values, vec![day(1), day(2)], vec!["A".into(), "B".into()]).unwrap()
    }

    fn rec(id: &str, d: u32, point: f64, half: f64) -> PredictionRecord<f64> {
        PredictionRecord {
            station_id: id.into(),
            date: day(d),
            point,
            low: point - half,
            high: point + half,
        }
    }

    #[test]
    fn hand_two_by_two() {
        // errors: A day1 = 1, B day1 = 2, A day2 = 3, B day2 = 4
        let preds = vec![
            rec("A", 1, 11.0, 0.5),
            rec("B", 1, 22.0, 3.0),
            rec("A", 2, 14.0, 3.0),
            rec("B", 2, 25.0, 1.0),
        ];
        let r = evaluate(&preds, &truth(), 0.95, "m").unwrap();
        assert_eq!(r.overall_mspe, 7.5);
        assert_eq!(r.mspe_by_station[0].mspe, 5.0);
        assert_eq!(r.mspe_by_station[1].mspe, 10.0);
        assert_eq!(r.mspe_by_time[0].mspe, 2.5);
        assert_eq!(r.mspe_by_time[1].mspe, 12.5);
        // per-station MSPEs 5 and 10: sd = 5/√2, se = sd/√2 = 2.5
        assert!((r.overall_mspe_se - 2.5).abs() < 1e-12);
        assert_eq!(r.coverage, 0.5);
        assert_eq!(r.n_events, 4);
    }

    #[test]
    fn perfect_and_offset_predictions() {
        let t = truth();
        let perfect: Vec<_> = [("A", 1, 10.0), ("B", 1, 20.0), ("A", 2, 11.0), ("B", 2, 21.0)]
            .iter()
            .map(|&(s, d, v)| rec(s, d, v, 0.1))
            .collect();
        let r = evaluate(&perfect, &t, 0.95, "m").unwrap();
        assert_eq!(r.overall_mspe, 0.0);
        assert_eq!(r.coverage, 1.0);
        let shifted: Vec<_> = perfect
            .iter()
            .map(|p| rec(&p.station_id, p.date.day(), p.point + 2.0, 0.1))
            .collect();
        assert_eq!(evaluate(&shifted, &t, 0.95, "m").unwrap().overall_mspe, 4.0);
    }

    #[test]
    fn misaligned_records() {
        let t = truth();
        let mut preds = vec![rec("A", 1, 10.0, 1.0), rec("B", 1, 20.0, 1.0), rec("A", 2, 11.0, 1.0)];
        assert!(matches!(
            evaluate(&preds, &t, 0.95, "m"),
            Err(Error::DimensionMismatch(_))
        ));
        preds.push(rec("C", 2, 0.0, 1.0));
        assert!(matches!(
            evaluate(&preds, &t, 0.95, "m"),
            Err(Error::DimensionMismatch(_))
        ));
        preds.pop();
        preds.push(rec("A", 2, 0.0, 1.0));
        assert!(matches!(
            evaluate(&preds, &t, 0.95, "m"),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn paper_layout() {
        let reports = [
            MetricsReport::summary("BSP", 0.95, 0.918, 5.396, 2.362),
            MetricsReport::summary("BSP with PRISM", 0.95, 0.921, 7.000, 3.733),
            MetricsReport::summary("Ordinary kriging", 0.95, 0.529, 14.032, 5.823),
        ];
        let table = compare_methods(&reports).unwrap();
        assert_eq!(table.best_mspe, 0);
        let text = table.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].trim_start().starts_with("BSP"));
        assert!(lines[0].trim_end().ends_with("Ordinary kriging"));
        let cells = |i: usize| lines[i].split_whitespace().rev().take(3).collect::<Vec<_>>();
        assert!(lines[1].starts_with("Coverage"));
        assert_eq!(cells(1), ["0.529", "0.921", "0.918"]);
        assert!(lines[2].starts_with("Overall MSPE"));
        assert_eq!(cells(2), ["14.032", "7.000", "5.396"]);
        assert!(lines[3].starts_with("MSPE std. error"));
        assert_eq!(cells(3), ["5.823", "3.733", "2.362"]);
        assert_eq!(lines[4], "Lowest overall MSPE: BSP");
        // columns line up on their right edge
        let ends: Vec<usize> = lines[..4].iter().map(|l| l.trim_end().len()).collect();
        assert!(ends.windows(2).all(|w| w[0] == w[1]));
        let csv = table.to_csv().unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "metric,BSP,BSP with PRISM,Ordinary kriging"
        );
        assert_eq!(csv.lines().nth(2).unwrap(), "overall_mspe,5.396,7.000,14.032");
    }

    #[test]
    fn identical_reports_identical_columns() {
        let r = MetricsReport::summary("x", 0.95, 0.9, 3.0, 1.0);
        let t = compare_methods(&[r.clone(), r]).unwrap();
        assert_eq!(t.coverage[0], t.coverage[1]);
        assert_eq!(t.overall_mspe[0], t.overall_mspe[1]);
        assert_eq!(t.overall_mspe_se[0], t.overall_mspe_se[1]);
        assert!(compare_methods(&[MetricsReport::summary("x", 0.95, 0.9, 3.0, 1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn overall_is_weighted_station_mean_and_order_free(
            errs in proptest::collection::vec(-5.0f64..5.0, 12),
            missing in proptest::collection::vec(any::<bool>(), 12),
            rot in 0usize..12,
        ) {
            let n = 4;
            let p = 3;
            let values = DMatrix::from_fn(n, p, |t, j| (t * 10 + j) as f64);
            let mut mask = DMatrix::from_fn(n, p, |t, j| missing[t * p + j]);
            mask[(0, 0)] = false;
            let times: Vec<NaiveDate> = (1..=n as u32).map(day).collect();
            let ids: Vec<String> = ["s0", "s1", "s2"].iter().map(|s| s.to_string()).collect();
            let truth = ObservationMatrix::with_mask(values.clone(), times.clone(), mask.clone(), ids.clone()).unwrap();
            let mut preds = Vec::new();
            for t in 0..n {
                for j in 0..p {
                    preds.push(PredictionRecord {
                        station_id: ids[j].clone(),
                        date: times[t],
                        point: values[(t, j)] + errs[t * p + j],
                        low: values[(t, j)] - 1.0,
                        high: values[(t, j)] + 1.0,
                    });
                }
            }
            let a = evaluate(&preds, &truth, 0.9, "m").unwrap();
            let weighted: f64 = a.mspe_by_station.iter().map(|s| s.mspe * s.n as f64).sum::<f64>() / a.n_events as f64;
            prop_assert!((weighted - a.overall_mspe).abs() < 1e-12);
            prop_assert!(a.coverage >= 0.0 && a.coverage <= 1.0);
            preds.rotate_left(rot);
            preds.reverse();
            let b = evaluate(&preds, &truth, 0.9, "m").unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
