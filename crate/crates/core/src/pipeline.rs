//! The end-to-end chain: complete cases, split, trend, deformation,
//! hyperparameters, predictive laws at the held-out stations, the kriging
//! baseline and the validation metrics.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bsp::{
    assemble_hyperparams, predict_interval, BspHyperparams, BspPredictor, DFormula, HyperOptions, HyperReport,
    PredictiveT,
};
use crate::deform::{
    extend_covariance, fit_deformation, DeformOptions, Deformation, ExtendedCovariance, SdInterpolation,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport, PredictionRecord};
use crate::ingest::{
    complete_cases_with_index, split_train_validation, ClimateGrid, ObservationMatrix, SplitSpec, StationTable,
};
use crate::kriging::{krige_days, DayKriging, Likelihood};
use crate::scalar::Real;
use crate::trend::{build_b0, compute_anomalies, fit_trend, time_design, TrendMode, TrendModel, TrendSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Split,
    Trend,
    Deform,
    Covariance,
    Hyperparameters,
    Predict,
    Kriging,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Ingest => "ingest",
            Stage::Split => "split",
            Stage::Trend => "trend",
            Stage::Deform => "deform",
            Stage::Covariance => "covariance",
            Stage::Hyperparameters => "hyperparameters",
            Stage::Predict => "predict",
            Stage::Kriging => "kriging",
            Stage::Evaluate => "evaluate",
        };
        f.write_str(s)
    }
}

/// A pipeline failure tagged with the stage it happened in.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage}: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<V> {
    fn at(self, stage: Stage) -> std::result::Result<V, StageError>;
}

impl<V> AtStage<V> for Result<V> {
    fn at(self, stage: Stage) -> std::result::Result<V, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitChoice {
    Random { n_train: usize, seed: u64 },
    Fixed(SplitSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions<T> {
    /// `Interaction` or `PrismAnomaly`.
    pub trend_mode: TrendMode,
    pub max_missing_frac: f64,
    pub split: SplitChoice,
    pub deform: DeformOptions<T>,
    pub sd_interpolation: SdInterpolation,
    pub hyper: HyperOptions,
    pub d_formula: DFormula,
    /// Interval level for both methods.
    pub level: f64,
    pub run_kriging: bool,
    pub kriging_likelihood: Likelihood,
    pub bsp_label: String,
    pub ok_label: String,
}

impl<T: Real> Default for PipelineOptions<T> {
    fn default() -> Self {
        Self {
            trend_mode: TrendMode::Interaction,
            max_missing_frac: 0.1,
            split: SplitChoice::Random { n_train: 64, seed: 1 },
            deform: DeformOptions::default(),
            sd_interpolation: SdInterpolation::default(),
            hyper: HyperOptions::default(),
            d_formula: DFormula::Corrected,
            level: 0.95,
            run_kriging: true,
            kriging_likelihood: Likelihood::Restricted,
            bsp_label: "BSP".into(),
            ok_label: "Ordinary kriging".into(),
        }
    }
}

pub struct PipelineInput<'a, T: Real> {
    pub stations: &'a StationTable<T>,
    pub observations: &'a ObservationMatrix<T>,
    /// Required by the anomaly trend.
    pub climate: Option<&'a ClimateGrid<T>>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput<T: Real> {
    /// Stations that survived the completion rule, in file order.
    pub stations: StationTable<T>,
    /// Complete-case observations on those stations.
    pub observations: ObservationMatrix<T>,
    pub split: SplitSpec,
    pub gauged_idx: Vec<usize>,
    pub ungauged_idx: Vec<usize>,
    pub trend: TrendModel<T>,
    pub deformation: Deformation<T>,
    pub covariance: ExtendedCovariance<T>,
    pub hyperparams: BspHyperparams<T>,
    pub hyper_report: HyperReport,
    /// One predictive law per day over the held-out stations, on the
    /// modelling scale (anomalies in the anomaly mode).
    pub laws: Vec<PredictiveT<T>>,
    pub bsp_predictions: Vec<PredictionRecord<T>>,
    pub bsp_metrics: MetricsReport,
    pub kriging: Option<Vec<DayKriging<T>>>,
    pub ok_predictions: Vec<PredictionRecord<T>>,
    pub ok_metrics: Option<MetricsReport>,
    /// Observed values at the held-out stations.
    pub validation_truth: ObservationMatrix<T>,
}

/// Complete cases, split, response and fitted trend: everything both
/// methods share.
#[derive(Debug, Clone)]
pub struct Prepared<T: Real> {
    pub stations: StationTable<T>,
    pub obs: ObservationMatrix<T>,
    pub split: SplitSpec,
    pub gauged_idx: Vec<usize>,
    pub ungauged_idx: Vec<usize>,
    /// Observations, or anomalies in the anomaly mode.
    pub response: ObservationMatrix<T>,
    /// Added back to modelling-scale predictions to return to °C.
    pub offset: DMatrix<T>,
    pub trend: TrendModel<T>,
}

pub fn prepare<T: Real>(
    input: &PipelineInput<'_, T>,
    opts: &PipelineOptions<T>,
) -> std::result::Result<Prepared<T>, StageError> {
    input.observations.check_aligned(input.stations).at(Stage::Ingest)?;
    let (obs, kept) = complete_cases_with_index(input.observations, opts.max_missing_frac).at(Stage::Ingest)?;
    let stations = input.stations.subset(&kept);
    log::info!("complete cases: {} stations × {} days", obs.n_sites(), obs.n_times());

    let split = match &opts.split {
        SplitChoice::Random { n_train, seed } => split_train_validation(&stations, *n_train, *seed).at(Stage::Split)?,
        SplitChoice::Fixed(s) => s.clone(),
    };
    let (gauged_idx, ungauged_idx) = split.indices(&stations).at(Stage::Split)?;
    if gauged_idx.len() + ungauged_idx.len() != stations.len() {
        return Err(StageError {
            stage: Stage::Split,
            source: Error::InvalidInput("the split must name every retained station exactly once".into()),
        });
    }
    log::info!("split: {} gauged, {} held out", gauged_idx.len(), ungauged_idx.len());

    let (response, offset) = match opts.trend_mode {
        TrendMode::PrismAnomaly => {
            let grid = input.climate.ok_or_else(|| StageError {
                stage: Stage::Trend,
                source: Error::InvalidInput("the anomaly trend needs a climate-normal grid".into()),
            })?;
            let anomalies = compute_anomalies(&obs, grid, &stations).at(Stage::Trend)?;
            let offset = &obs.values - &anomalies.values;
            (anomalies, offset)
        }
        TrendMode::Interaction => {
            let zeros = DMatrix::zeros(obs.n_times(), obs.n_sites());
            (obs.clone(), zeros)
        }
        TrendMode::QuadraticSurface => {
            return Err(StageError {
                stage: Stage::Trend,
                source: Error::InvalidInput("the pipeline needs the interaction or anomaly trend".into()),
            })
        }
    };
    let train_stations = stations.subset(&gauged_idx);
    let train = response.select_columns(&gauged_idx);
    let spec = match opts.trend_mode {
        TrendMode::PrismAnomaly => TrendSpec::prism_anomaly(&obs.times),
        _ => TrendSpec::interaction(&train_stations, &obs.times).at(Stage::Trend)?,
    };
    let trend = fit_trend(&train, &train_stations, &spec).at(Stage::Trend)?;
    Ok(Prepared {
        stations,
        obs,
        split,
        gauged_idx,
        ungauged_idx,
        response,
        offset,
        trend,
    })
}

type KrigingStage<T> = (Vec<DayKriging<T>>, Vec<PredictionRecord<T>>, MetricsReport);

/// Per-day kriging of the trend residuals at the held-out stations, mapped
/// back to °C and scored.
fn kriging_stage<T: Real>(
    prep: &Prepared<T>,
    opts: &PipelineOptions<T>,
    validation_truth: &ObservationMatrix<T>,
) -> std::result::Result<KrigingStage<T>, StageError> {
    let Prepared {
        stations,
        obs,
        gauged_idx,
        ungauged_idx,
        offset,
        trend,
        ..
    } = prep;
    let train_locs = stations.subset(gauged_idx).proj_points();
    let valid_stations = stations.subset(ungauged_idx);
    let targets = valid_stations.proj_points();
    let days = krige_days(&trend.residuals, &train_locs, &targets, opts.kriging_likelihood).at(Stage::Kriging)?;
    let trend_valid = trend.predict(&valid_stations, &obs.times).at(Stage::Kriging)?;
    let mut records = Vec::with_capacity(days.len() * targets.len());
    for (t, day) in days.iter().enumerate() {
        for (i, pred) in day.predictions.iter().enumerate() {
            let shift = trend_valid[(t, i)] + offset[(t, ungauged_idx[i])];
            let (lo, hi) = pred.interval(opts.level).at(Stage::Kriging)?;
            records.push(PredictionRecord {
                station_id: valid_stations.get(i).id.clone(),
                date: obs.times[t],
                point: pred.value + shift,
                low: lo + shift,
                high: hi + shift,
            });
        }
    }
    let metrics = evaluate(&records, validation_truth, opts.level, &opts.ok_label).at(Stage::Evaluate)?;
    Ok((days, records, metrics))
}

/// The kriging baseline on its own.
#[derive(Debug, Clone)]
pub struct KrigingOutput<T: Real> {
    pub stations: StationTable<T>,
    pub split: SplitSpec,
    pub ungauged_idx: Vec<usize>,
    pub trend: TrendModel<T>,
    pub kriging: Vec<DayKriging<T>>,
    pub ok_predictions: Vec<PredictionRecord<T>>,
    pub ok_metrics: MetricsReport,
    pub validation_truth: ObservationMatrix<T>,
}

pub fn run_kriging_baseline<T: Real>(
    input: &PipelineInput<'_, T>,
    opts: &PipelineOptions<T>,
) -> std::result::Result<KrigingOutput<T>, StageError> {
    let prep = prepare(input, opts)?;
    let validation_truth = prep.obs.select_columns(&prep.ungauged_idx);
    let (kriging, ok_predictions, ok_metrics) = kriging_stage(&prep, opts, &validation_truth)?;
    Ok(KrigingOutput {
        stations: prep.stations,
        split: prep.split,
        ungauged_idx: prep.ungauged_idx,
        trend: prep.trend,
        kriging,
        ok_predictions,
        ok_metrics,
        validation_truth,
    })
}

pub fn run_pipeline<T: Real>(
    input: &PipelineInput<'_, T>,
    opts: &PipelineOptions<T>,
) -> std::result::Result<PipelineOutput<T>, StageError> {
    let prep = prepare(input, opts)?;
    let Prepared {
        stations,
        obs,
        gauged_idx,
        ungauged_idx,
        response,
        offset,
        trend,
        ..
    } = &prep;
    let train_stations = stations.subset(gauged_idx);
    let train_locs = train_stations.proj_points();
    let deformation = fit_deformation(&trend.residuals, &train_locs, &opts.deform).at(Stage::Deform)?;
    log::info!(
        "deformation: λ = {}, stress = {}, variogram φ = {}",
        deformation.selection.lambda,
        deformation.config.stress,
        deformation.variogram.range_phi
    );
    let covariance = extend_covariance(
        stations,
        gauged_idx,
        &deformation.map,
        &deformation.variogram,
        &deformation.dispersion.sd,
        opts.sd_interpolation,
    )
    .at(Stage::Covariance)?;

    let b0 = build_b0(trend, stations).at(Stage::Hyperparameters)?;
    let z: DMatrix<T> = time_design(&obs.times, &trend.spec.months).at(Stage::Hyperparameters)?;
    let y_g = response.values.select_columns(gauged_idx);
    let (hyperparams, hyper_report) =
        assemble_hyperparams(&y_g, &z, &b0, &covariance.cov, gauged_idx, ungauged_idx, &opts.hyper)
            .at(Stage::Hyperparameters)?;
    log::info!(
        "hyperparameters: δ = {}, c = {}, Ψ scale = {}, predictive dof = {}",
        hyper_report.delta,
        hyper_report.c,
        hyper_report.psi_scale,
        hyper_report.predictive_dof
    );

    let predictor = BspPredictor::new(hyperparams.clone(), opts.d_formula).at(Stage::Predict)?;
    let laws = predictor.predict_all(&y_g, &z).at(Stage::Predict)?;
    let level = T::lit(opts.level);
    let mut bsp_predictions = Vec::with_capacity(laws.len() * ungauged_idx.len());
    for (t, law) in laws.iter().enumerate() {
        let intervals = predict_interval(law, level).at(Stage::Predict)?;
        for (i, (&j, &(lo, hi))) in ungauged_idx.iter().zip(&intervals).enumerate() {
            let shift = offset[(t, j)];
            bsp_predictions.push(PredictionRecord {
                station_id: stations.get(j).id.clone(),
                date: obs.times[t],
                point: law.mu[i] + shift,
                low: lo + shift,
                high: hi + shift,
            });
        }
    }
    let validation_truth = obs.select_columns(ungauged_idx);
    let bsp_metrics = evaluate(&bsp_predictions, &validation_truth, opts.level, &opts.bsp_label).at(Stage::Evaluate)?;

    let (kriging, ok_predictions, ok_metrics) = if opts.run_kriging {
        let (days, records, metrics) = kriging_stage(&prep, opts, &validation_truth)?;
        (Some(days), records, Some(metrics))
    } else {
        (None, Vec::new(), None)
    };

    Ok(PipelineOutput {
        stations: prep.stations,
        observations: prep.obs,
        split: prep.split,
        gauged_idx: prep.gauged_idx,
        ungauged_idx: prep.ungauged_idx,
        trend: prep.trend,
        deformation,
        covariance,
        hyperparams,
        hyper_report,
        laws,
        bsp_predictions,
        bsp_metrics,
        kriging,
        ok_predictions,
        ok_metrics,
        validation_truth,
    })
}
