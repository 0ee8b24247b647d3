//! Run configuration: one TOML file, with a few command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tempfield::bsp::{DFormula, HyperOptions, DEFAULT_C_GRID, DEFAULT_DELTA_OFFSETS};
use tempfield::deform::{DeformOptions, SdInterpolation, DEFAULT_LAMBDAS};
use tempfield::eval::{PlantedCovariance, PlantedDeformation, PlantedTrend, Region, SynthConfig};
use tempfield::geo::{GeoPoint, LccParams};
use tempfield::kriging::Likelihood;
use tempfield::pipeline::{PipelineOptions, SplitChoice};
use tempfield::trend::TrendMode;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionSection>,
    pub model: ModelSection,
    pub split: SplitSection,
    pub kriging: KrigingSection,
    pub diagnostics: DiagnosticsSection,
    pub simulate: SimulateSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub stations: PathBuf,
    pub observations: PathBuf,
    /// Monthly normals; needed by the anomaly trend only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub climate_grid: Option<PathBuf>,
    /// Defaults to the first date in the observations file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<NaiveDate>,
    /// Defaults to the last date in the observations file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<NaiveDate>,
    pub max_missing_frac: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            stations: "stations.csv".into(),
            observations: "observations.csv".into(),
            climate_grid: None,
            start: None,
            end: None,
            max_missing_frac: 0.1,
        }
    }
}

/// Lambert conformal conic parameters. Without this section the projection
/// is centred on the station centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionSection {
    pub ref_lon: f64,
    pub ref_lat: f64,
    #[serde(default = "default_parallel_1")]
    pub std_parallel_1: f64,
    #[serde(default = "default_parallel_2")]
    pub std_parallel_2: f64,
    #[serde(default = "default_radius")]
    pub earth_radius_km: f64,
}

fn default_parallel_1() -> f64 {
    LccParams::<f64>::DEFAULT_PARALLELS.0
}

fn default_parallel_2() -> f64 {
    LccParams::<f64>::DEFAULT_PARALLELS.1
}

fn default_radius() -> f64 {
    LccParams::<f64>::DEFAULT_RADIUS_KM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub trend: TrendMode,
    pub lambdas: Vec<f64>,
    /// Fixed spline smoothing; skips the fold-based selection.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub probe_cells: usize,
    pub delta_offsets: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub grid_search: bool,
    pub match_trace: bool,
    pub d_formula: DFormula,
    pub level: f64,
    pub sd_power: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd_neighbours: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let deform = DeformOptions::<f64>::default();
        let hyper = HyperOptions::default();
        let sd = SdInterpolation::default();
        Self {
            trend: TrendMode::Interaction,
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            lambda: None,
            probe_cells: deform.probe_cells,
            delta_offsets: DEFAULT_DELTA_OFFSETS.to_vec(),
            c_grid: DEFAULT_C_GRID.to_vec(),
            grid_search: hyper.grid_search,
            match_trace: hyper.match_trace,
            d_formula: DFormula::Corrected,
            level: 0.95,
            sd_power: sd.power,
            sd_neighbours: sd.neighbours,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub n_train: usize,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { n_train: 64, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrigingSection {
    pub enabled: bool,
    pub likelihood: Likelihood,
}

impl Default for KrigingSection {
    fn default() -> Self {
        Self {
            enabled: true,
            likelihood: Likelihood::Restricted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub variogram_bins: usize,
    /// Largest binned distance, km; half the largest station separation if unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_dist_km: Option<f64>,
    pub permutations: usize,
    pub permutation_seed: u64,
    /// One D-space plot per value; the model candidates if unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    pub surface_nx: usize,
    pub surface_ny: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            variogram_bins: 15,
            max_dist_km: None,
            permutations: 99,
            permutation_seed: 7,
            lambdas: None,
            surface_nx: 60,
            surface_ny: 60,
        }
    }
}

/// Synthetic world written by `simulate` to the `[data]` paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub p: usize,
    pub g: usize,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<NaiveDate>,
    /// Defaults to p + 20.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub c: f64,
    pub range_km: f64,
    pub nugget_fraction: f64,
    pub sd_west: f64,
    pub sd_east: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd_step_km: Option<f64>,
    pub deform: bool,
    pub strength: f64,
    pub north_scale: f64,
    pub knots: usize,
    pub min_separation_km: f64,
    pub seed: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        let d = PlantedDeformation::default();
        Self {
            p: s.p,
            g: s.g,
            n: s.n,
            start: None,
            delta: None,
            c: s.c,
            range_km: s.covariance.range_km,
            nugget_fraction: s.covariance.nugget_fraction,
            sd_west: s.covariance.sd_west,
            sd_east: s.covariance.sd_east,
            sd_step_km: s.covariance.sd_step_km,
            deform: s.deformation.is_some(),
            strength: d.strength,
            north_scale: d.north_scale,
            knots: d.knots,
            min_separation_km: s.min_separation_km,
            seed: s.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub split_seed: Option<u64>,
    pub n_train: Option<usize>,
    pub level: Option<f64>,
    pub trend: Option<TrendMode>,
    pub lambda: Option<f64>,
    pub simulate_seed: Option<u64>,
    pub no_kriging: bool,
}

/// A parsed config together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    /// Applies overrides; an overridden output directory is taken relative to
    /// the working directory rather than the config file.
    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        let c = &mut self.config;
        if let Some(dir) = &o.output {
            let cwd = std::env::current_dir().map_err(|e| CliError::Config(format!("working directory: {e}")))?;
            c.output.dir = cwd.join(dir);
        }
        if let Some(s) = o.split_seed {
            c.split.seed = s;
        }
        if let Some(n) = o.n_train {
            c.split.n_train = n;
        }
        if let Some(l) = o.level {
            c.model.level = l;
        }
        if let Some(t) = o.trend {
            c.model.trend = t;
        }
        if o.lambda.is_some() {
            c.model.lambda = o.lambda;
        }
        if let Some(s) = o.simulate_seed {
            c.simulate.seed = s;
        }
        if o.no_kriging {
            c.kriging.enabled = false;
        }
        c.validate()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output.dir)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let m = &self.model;
        if !(m.level > 0.0 && m.level < 1.0) {
            return bad(format!("model.level = {} must lie in (0, 1)", m.level));
        }
        if m.lambdas.is_empty() || m.lambdas.iter().chain(&m.lambda).any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("model.lambdas must be a nonempty list of finite nonnegative values".into());
        }
        if m.delta_offsets.is_empty() || m.c_grid.is_empty() {
            return bad("model.delta_offsets and model.c_grid must be nonempty".into());
        }
        if m.probe_cells == 0 {
            return bad("model.probe_cells must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.data.max_missing_frac) {
            return bad(format!(
                "data.max_missing_frac = {} must lie in [0, 1]",
                self.data.max_missing_frac
            ));
        }
        if let (Some(s), Some(e)) = (self.data.start, self.data.end) {
            if e < s {
                return bad(format!("data.end {e} precedes data.start {s}"));
            }
        }
        if self.model.trend == TrendMode::PrismAnomaly && self.data.climate_grid.is_none() {
            return bad("the prism_anomaly trend needs data.climate_grid".into());
        }
        let d = &self.diagnostics;
        if d.variogram_bins == 0 || d.surface_nx < 2 || d.surface_ny < 2 {
            return bad("diagnostics needs at least one variogram bin and a 2 × 2 surface grid".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML form, output location excluded so the
    /// same analysis hashes the same wherever it is written.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = OutputSection::default();
        let text = toml::to_string(&canon).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn lcc(&self, geo: &[GeoPoint<f64>]) -> tempfield::Result<LccParams<f64>> {
        match &self.projection {
            Some(p) => LccParams::new(
                p.ref_lon,
                p.ref_lat,
                p.std_parallel_1,
                p.std_parallel_2,
                p.earth_radius_km,
            ),
            None => LccParams::centered_on(geo),
        }
    }

    pub fn pipeline_options(&self) -> PipelineOptions<f64> {
        let m = &self.model;
        PipelineOptions {
            trend_mode: m.trend,
            max_missing_frac: self.data.max_missing_frac,
            split: SplitChoice::Random {
                n_train: self.split.n_train,
                seed: self.split.seed,
            },
            deform: DeformOptions {
                lambdas: m.lambdas.clone(),
                lambda: m.lambda,
                probe_cells: m.probe_cells,
                ..DeformOptions::default()
            },
            sd_interpolation: SdInterpolation {
                power: m.sd_power,
                neighbours: m.sd_neighbours,
            },
            hyper: HyperOptions {
                delta_offsets: m.delta_offsets.clone(),
                c_grid: m.c_grid.clone(),
                grid_search: m.grid_search,
                match_trace: m.match_trace,
            },
            d_formula: m.d_formula,
            level: m.level,
            run_kriging: self.kriging.enabled,
            kriging_likelihood: self.kriging.likelihood,
            ..PipelineOptions::default()
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.simulate;
        let defaults = SynthConfig::default();
        SynthConfig {
            p: s.p,
            g: s.g,
            n: s.n,
            start: s.start.or(self.data.start).unwrap_or(defaults.start),
            delta: s.delta.unwrap_or(s.p as f64 + 20.0),
            c: s.c,
            trend: PlantedTrend::default(),
            deformation: s.deform.then_some(PlantedDeformation {
                strength: s.strength,
                north_scale: s.north_scale,
                knots: s.knots,
            }),
            covariance: PlantedCovariance {
                range_km: s.range_km,
                nugget_fraction: s.nugget_fraction,
                sd_west: s.sd_west,
                sd_east: s.sd_east,
                sd_step_km: s.sd_step_km,
            },
            region: Region::default(),
            min_separation_km: s.min_separation_km,
            seed: s.seed,
        }
    }

    /// The D-space plots to draw.
    pub fn diagnostic_lambdas(&self) -> Vec<f64> {
        self.diagnostics
            .lambdas
            .clone()
            .unwrap_or_else(|| self.model.lambdas.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(toml::from_str::<RunConfig>("[model]\nlamdas = [1.0]\n").is_err());
    }

    #[test]
    fn hash_tracks_content_not_output() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output.dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.split.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn round_trip_through_toml() {
        let mut c = RunConfig::default();
        c.data.start = NaiveDate::from_ymd_opt(2000, 4, 1);
        c.model.trend = TrendMode::PrismAnomaly;
        c.data.climate_grid = Some("normals.txt".into());
        c.projection = Some(ProjectionSection {
            ref_lon: -120.0,
            ref_lat: 45.5,
            std_parallel_1: 45.0,
            std_parallel_2: 49.0,
            earth_radius_km: 6371.0,
        });
        let text = toml::to_string(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_win() {
        let mut lc = LoadedConfig {
            config: RunConfig::default(),
            base_dir: PathBuf::from("/cfg"),
        };
        lc.apply(&Overrides {
            split_seed: Some(9),
            level: Some(0.9),
            no_kriging: true,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(lc.config.split.seed, 9);
        assert_eq!(lc.config.model.level, 0.9);
        assert!(!lc.config.kriging.enabled);
        assert_eq!(lc.output_dir(), PathBuf::from("/cfg/out"));
        let err = lc.apply(&Overrides {
            level: Some(1.5),
            ..Default::default()
        });
        assert!(matches!(err, Err(CliError::Config(_))));
    }
}
