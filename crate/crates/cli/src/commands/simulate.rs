use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use tempfield::eval::{synth_generate, SynthConfig};
use tempfield::geo::{LccParams, ProjPoint};
use tempfield::ingest::{ObservationMatrix, SplitSpec, StationTable};

use super::{commit, RunLog};
use crate::artifacts::{num, CsvDoc, Provenance, Staging};
use crate::config::LoadedConfig;
use crate::error::CliError;

pub const TRUTH_FILE: &str = "truth.json";

/// Latent quantities of a simulated world, row-major matrices.
#[derive(Debug, Serialize)]
struct TruthRecord<'a> {
    synth: &'a SynthConfig,
    lcc: LccParams<f64>,
    split: &'a SplitSpec,
    station_ids: Vec<String>,
    delta: f64,
    sd: &'a [f64],
    d_coords: &'a [ProjPoint<f64>],
    /// n × k time covariates.
    z: Vec<Vec<f64>>,
    b0: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    /// n × p, `Y − Z B`.
    errors: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn run(lc: &LoadedConfig) -> Result<(), CliError> {
    let cfg = lc.config.synth_config();
    cfg.validate()
        .map_err(|e| CliError::Config(format!("[simulate]: {e}")))?;
    let prov = Provenance::new(&lc.config);
    let (stations, obs, truth) = synth_generate::<f64>(&cfg).map_err(CliError::step("simulate"))?;
    log::info!(
        "simulated {} stations ({} gauged) over {} days from {}",
        cfg.p,
        cfg.g,
        cfg.n,
        cfg.start
    );

    let stations_path = lc.resolve(&lc.config.data.stations);
    let obs_path = lc.resolve(&lc.config.data.observations);
    write_atomic(&stations_path, &stations_csv(&prov, &stations))?;
    write_atomic(&obs_path, &observations_csv(&prov, &obs))?;

    let mut staging = Staging::new(&lc.output_dir())?;
    let record = TruthRecord {
        synth: &cfg,
        lcc: truth.lcc,
        split: &truth.split,
        station_ids: stations.ids(),
        delta: truth.delta,
        sd: &truth.sd,
        d_coords: &truth.d_coords,
        z: rows(&truth.z),
        b0: rows(&truth.b0),
        b: rows(&truth.b),
        errors: rows(&truth.errors),
    };
    staging.write(TRUTH_FILE, prov.json("truth", &record))?;
    let mut log = RunLog::new(&prov, "simulate");
    log.line(
        "world",
        &[
            ("p", cfg.p.to_string()),
            ("g", cfg.g.to_string()),
            ("n", cfg.n.to_string()),
            ("delta", cfg.delta.to_string()),
            ("c", cfg.c.to_string()),
            ("seed", cfg.seed.to_string()),
        ],
    );
    log.line(
        "files",
        &[
            ("stations", stations_path.display().to_string()),
            ("observations", obs_path.display().to_string()),
        ],
    );
    staging.write("simulate.log", log.finish())?;
    commit(staging)?;
    Ok(())
}

fn stations_csv(prov: &Provenance, stations: &StationTable<f64>) -> String {
    let mut doc = CsvDoc::new(prov, &["id", "lon", "lat", "elev_m"]);
    for s in stations.iter() {
        doc.row(&[s.id.clone(), num(s.geo.lon_deg), num(s.geo.lat_deg), num(s.elev_m)]);
    }
    doc.finish()
}

fn observations_csv(prov: &Provenance, obs: &ObservationMatrix<f64>) -> String {
    let mut doc = CsvDoc::new(prov, &["station_id", "date", "tmax_c"]);
    for (j, id) in obs.station_ids.iter().enumerate() {
        for (t, d) in obs.times.iter().enumerate() {
            let v = if obs.mask[(t, j)] {
                "na".to_string()
            } else {
                num(obs.values[(t, j)])
            };
            doc.row(&[id.clone(), d.to_string(), v]);
        }
    }
    doc.finish()
}

/// Writes through a temporary file in the same directory, so a failed run
/// never leaves a truncated data file.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(CliError::output(dir))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = fs::write(&tmp, contents).and_then(|_| fs::rename(&tmp, path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(CliError::output(path))
}
