use tempfield::pipeline::{run_kriging_baseline, PipelineInput};

use super::{commit, load_inputs, metrics_fields, ok_fits_csv, predictions_csv, write_metrics, RunLog};
use crate::artifacts::{Provenance, Staging};
use crate::config::LoadedConfig;
use crate::error::CliError;

/// The kriging baseline alone, on the same split and trend as `pipeline`.
pub(crate) fn run(lc: &LoadedConfig) -> Result<(), CliError> {
    let inputs = load_inputs(lc)?;
    let opts = lc.config.pipeline_options();
    let prov = Provenance::new(&lc.config);
    let mut staging = Staging::new(&lc.output_dir())?;
    let out = run_kriging_baseline(
        &PipelineInput {
            stations: &inputs.stations,
            observations: &inputs.observations,
            climate: inputs.climate.as_ref(),
        },
        &opts,
    )?;
    staging.write("predictions_ok.csv", predictions_csv(&prov, &out.ok_predictions, None))?;
    staging.write(
        "ok_fits.csv",
        ok_fits_csv(&prov, &out.validation_truth.times, &out.kriging),
    )?;
    write_metrics(
        &mut staging,
        &prov,
        "kriging_metrics",
        "kriging_comparison",
        std::slice::from_ref(&out.ok_metrics),
    )?;

    let mut log = RunLog::new(&prov, "krige");
    log.line(
        "split",
        &[
            ("seed", out.split.seed.to_string()),
            ("n_train", out.split.train_ids.len().to_string()),
            ("n_validation", out.split.valid_ids.len().to_string()),
        ],
    );
    let weak = out.kriging.iter().filter(|d| d.fit.weak_structure).count();
    let mut fields = vec![
        ("likelihood", format!("{:?}", lc.config.kriging.likelihood)),
        ("days", out.kriging.len().to_string()),
        ("weak_structure_days", weak.to_string()),
    ];
    fields.extend(metrics_fields(&out.ok_metrics));
    log.line("kriging", &fields);
    staging.write("krige.log", log.finish())?;
    commit(staging)?;
    log::info!(
        "kriging coverage {:.3}, MSPE {:.3}",
        out.ok_metrics.coverage,
        out.ok_metrics.overall_mspe
    );
    Ok(())
}
