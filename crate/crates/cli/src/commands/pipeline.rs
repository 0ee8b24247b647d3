use serde::Serialize;

use tempfield::bsp::{DFormula, HyperReport};
use tempfield::deform::LambdaSelection;
use tempfield::pipeline::{run_pipeline, PipelineInput, PipelineOutput};
use tempfield::trend::TrendMode;
use tempfield::variogram::ExpVariogramFit;

use super::{
    commit, load_inputs, metrics_fields, ok_fits_csv, predictions_csv, write_metrics, PipelineState, RunLog, STATE_FILE,
};
use crate::artifacts::{num, CsvDoc, Provenance, Staging};
use crate::config::LoadedConfig;
use crate::error::CliError;

#[derive(Debug, Serialize)]
struct TrendSummary<'a> {
    mode: TrendMode,
    labels: &'a [String],
    coefficients: Vec<f64>,
    sigma2_hat: f64,
}

#[derive(Debug, Serialize)]
struct DeformSummary<'a> {
    mds_stress: f64,
    mds_iterations: usize,
    mds_converged: bool,
    procrustes_residual: f64,
    selection: &'a LambdaSelection<f64>,
    dspace_variogram: &'a ExpVariogramFit<f64>,
    eigen_floor_applied: bool,
}

#[derive(Debug, Serialize)]
struct Hyperparameters<'a> {
    trend: TrendSummary<'a>,
    deformation: DeformSummary<'a>,
    bsp: &'a HyperReport,
    d_formula: DFormula,
    level: f64,
}

pub(crate) fn run(lc: &LoadedConfig) -> Result<(), CliError> {
    let inputs = load_inputs(lc)?;
    let opts = lc.config.pipeline_options();
    let prov = Provenance::new(&lc.config);
    // Staging first: an unwritable output directory fails before the fit.
    let mut staging = Staging::new(&lc.output_dir())?;
    let out = run_pipeline(
        &PipelineInput {
            stations: &inputs.stations,
            observations: &inputs.observations,
            climate: inputs.climate.as_ref(),
        },
        &opts,
    )?;

    let dof: Vec<f64> = out
        .laws
        .iter()
        .flat_map(|law| std::iter::repeat_n(law.dof, law.dim()))
        .collect();
    staging.write(
        "predictions_bsp.csv",
        predictions_csv(&prov, &out.bsp_predictions, Some(&dof)),
    )?;
    let mut reports = vec![out.bsp_metrics.clone()];
    if let (Some(days), Some(metrics)) = (&out.kriging, &out.ok_metrics) {
        staging.write("predictions_ok.csv", predictions_csv(&prov, &out.ok_predictions, None))?;
        staging.write("ok_fits.csv", ok_fits_csv(&prov, &out.observations.times, days))?;
        reports.push(metrics.clone());
    }
    write_metrics(&mut staging, &prov, "metrics", "comparison", &reports)?;
    staging.write("split.csv", split_csv(&prov, &out))?;
    staging.write("lambda_selection.csv", lambda_csv(&prov, &out.deformation.selection))?;
    staging.write(
        "hyperparams.json",
        prov.json("hyperparameters", &hyperparameters(lc, &out)),
    )?;
    staging.write(STATE_FILE, prov.json("state", &state(&prov, &out)))?;
    staging.write("run.log", run_log(lc, &prov, &out))?;
    commit(staging)?;
    log::info!(
        "BSP coverage {:.3}, MSPE {:.3}",
        out.bsp_metrics.coverage,
        out.bsp_metrics.overall_mspe
    );
    if let Some(m) = &out.ok_metrics {
        log::info!("kriging coverage {:.3}, MSPE {:.3}", m.coverage, m.overall_mspe);
    }
    Ok(())
}

fn hyperparameters<'a>(lc: &LoadedConfig, out: &'a PipelineOutput<f64>) -> Hyperparameters<'a> {
    let d = &out.deformation;
    Hyperparameters {
        trend: TrendSummary {
            mode: out.trend.spec.mode,
            labels: &out.trend.labels,
            coefficients: out.trend.coeffs.iter().copied().collect(),
            sigma2_hat: out.trend.sigma2_hat,
        },
        deformation: DeformSummary {
            mds_stress: d.config.stress,
            mds_iterations: d.config.iterations,
            mds_converged: d.config.converged,
            procrustes_residual: d.config.procrustes_residual,
            selection: &d.selection,
            dspace_variogram: &d.variogram,
            eigen_floor_applied: out.covariance.floored,
        },
        bsp: &out.hyper_report,
        d_formula: lc.config.model.d_formula,
        level: lc.config.model.level,
    }
}

pub(super) fn state(prov: &Provenance, out: &PipelineOutput<f64>) -> PipelineState {
    PipelineState {
        config_sha256: prov.config_sha256.clone(),
        split: out.split.clone(),
        gauged_ids: out.gauged_idx.iter().map(|&i| out.stations.get(i).id.clone()).collect(),
        lambda: out.deformation.selection.lambda,
        mds_coords: out.deformation.config.coords.clone(),
        map: out.deformation.map.clone(),
        probe: out.deformation.probe,
        variogram: out.deformation.variogram,
    }
}

fn split_csv(prov: &Provenance, out: &PipelineOutput<f64>) -> String {
    let mut doc = CsvDoc::new(prov, &["station_id", "role", "s1_km", "s2_km", "d1_km", "d2_km"]);
    let mapped = &out.covariance.d_coords;
    for (i, s) in out.stations.iter().enumerate() {
        let role = if out.gauged_idx.contains(&i) {
            "train"
        } else {
            "validation"
        };
        doc.row(&[
            s.id.clone(),
            role.to_string(),
            num(s.proj.s1),
            num(s.proj.s2),
            num(mapped[i].s1),
            num(mapped[i].s2),
        ]);
    }
    doc.finish()
}

fn lambda_csv(prov: &Provenance, sel: &LambdaSelection<f64>) -> String {
    let mut doc = CsvDoc::new(prov, &["lambda", "fold_fraction", "knot_rms_km", "stress", "selected"])
        .note(&format!("all_candidates_folded={}", sel.all_folded));
    for r in &sel.table {
        doc.row(&[
            num(r.lambda),
            num(r.fold_fraction),
            num(r.knot_rms),
            num(r.stress),
            (r.lambda == sel.lambda).to_string(),
        ]);
    }
    doc.finish()
}

fn run_log(lc: &LoadedConfig, prov: &Provenance, out: &PipelineOutput<f64>) -> String {
    let c = &lc.config;
    let mut log = RunLog::new(prov, "pipeline");
    log.line(
        "data",
        &[
            ("stations_retained", out.stations.len().to_string()),
            ("days", out.observations.n_times().to_string()),
            (
                "first_day",
                out.observations
                    .times
                    .first()
                    .map(|d| d.to_string())
                    .unwrap_or_default(),
            ),
            ("trend", format!("{:?}", c.model.trend)),
        ],
    );
    log.line(
        "split",
        &[
            ("seed", out.split.seed.to_string()),
            ("n_train", out.gauged_idx.len().to_string()),
            ("n_validation", out.ungauged_idx.len().to_string()),
        ],
    );
    let d = &out.deformation;
    log.line(
        "mds",
        &[
            ("stress", d.config.stress.to_string()),
            ("iterations", d.config.iterations.to_string()),
            ("converged", d.config.converged.to_string()),
        ],
    );
    log.line(
        "lambda",
        &[
            ("candidates", format!("{:?}", c.model.lambdas)),
            ("fixed", format!("{:?}", c.model.lambda)),
            ("selected", d.selection.lambda.to_string()),
            ("all_folded", d.selection.all_folded.to_string()),
        ],
    );
    log.line(
        "dspace_variogram",
        &[
            ("nugget", d.variogram.nugget.to_string()),
            ("sill", d.variogram.sill.to_string()),
            ("range_phi", d.variogram.range_phi.to_string()),
            ("flagged", d.variogram.any_flag().to_string()),
        ],
    );
    let h = &out.hyper_report;
    log.line(
        "hyperparameters",
        &[
            ("delta", h.delta.to_string()),
            ("c", h.c.to_string()),
            ("psi_scale", h.psi_scale.to_string()),
            ("predictive_dof", h.predictive_dof.to_string()),
            ("d_formula", format!("{:?}", c.model.d_formula)),
        ],
    );
    log.line("bsp", &metrics_fields(&out.bsp_metrics));
    if let (Some(days), Some(m)) = (&out.kriging, &out.ok_metrics) {
        let weak = days.iter().filter(|d| d.fit.weak_structure).count();
        let mut fields = vec![
            ("likelihood", format!("{:?}", c.kriging.likelihood)),
            ("weak_structure_days", weak.to_string()),
        ];
        fields.extend(metrics_fields(m));
        log.line("kriging", &fields);
    }
    log.finish()
}
