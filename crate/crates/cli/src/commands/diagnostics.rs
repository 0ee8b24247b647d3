//! Plot data for the fitted model: variogram with envelope, D-space
//! configurations per λ, stretch grid, residual QQ, per-day effects and
//! monthly surfaces. Each family is written as CSV plus SVG.

use std::fs;

use serde::Deserialize;

use tempfield::deform::{apply_tps, fit_tps, fold_check, CellStretch, DeformDiagnostics, ProbeGrid, TpsMap};
use tempfield::eval::{grid_surface, SurfaceGrid};
use tempfield::geo::ProjPoint;
use tempfield::pipeline::{prepare, PipelineInput, SplitChoice, Stage, StageError};
use tempfield::trend::{per_time_effects, qq_data};
use tempfield::variogram::{fit_binned, semivariogram_with_envelope};

use super::{commit, load_inputs, monthly_means, PipelineState, RunLog, STATE_FILE};
use crate::artifacts::{num, CsvDoc, Provenance, Staging};
use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::svg::{diverging, extent, square_extent, Figure, Stroke};

pub const DIAGNOSTICS_DIR: &str = "diagnostics";

/// A principal stretch within this relative distance of 1 counts as neutral.
pub const NEUTRAL_STRETCH: f64 = 0.05;

/// More QQ points than this are thinned evenly in the SVG (never the CSV).
const QQ_SVG_POINTS: usize = 2000;

#[derive(Deserialize)]
struct StateFile {
    state: PipelineState,
}

fn read_state(lc: &LoadedConfig) -> Result<PipelineState, CliError> {
    let path = lc.output_dir().join(STATE_FILE);
    let text = fs::read_to_string(&path).map_err(|_| CliError::MissingState(path.clone()))?;
    let file: StateFile = serde_json::from_str(&text).map_err(|e| CliError::Step {
        step: "diagnostics",
        source: tempfield::Error::Parse {
            path: path.clone(),
            line: e.line() as u64,
            message: e.to_string(),
        },
    })?;
    Ok(file.state)
}

fn diag_error(source: tempfield::Error) -> CliError {
    CliError::Step {
        step: "diagnostics",
        source,
    }
}

pub(crate) fn run(lc: &LoadedConfig) -> Result<(), CliError> {
    let state = read_state(lc)?;
    let prov = Provenance::new(&lc.config);
    if state.config_sha256 != prov.config_sha256 {
        log::warn!("the config changed since the pipeline run that wrote {STATE_FILE}");
    }
    let inputs = load_inputs(lc)?;
    let mut opts = lc.config.pipeline_options();
    opts.split = SplitChoice::Fixed(state.split.clone());
    let prep = prepare(
        &PipelineInput {
            stations: &inputs.stations,
            observations: &inputs.observations,
            climate: inputs.climate.as_ref(),
        },
        &opts,
    )?;
    let gauged = prep.stations.subset(&prep.gauged_idx);
    if gauged.ids() != state.gauged_ids {
        return Err(CliError::Stage(StageError {
            stage: Stage::Split,
            source: tempfield::Error::InvalidInput(format!(
                "the gauged stations no longer match {STATE_FILE}; rerun the pipeline"
            )),
        }));
    }
    let locs = gauged.proj_points();
    let ids = gauged.ids();
    let d = &lc.config.diagnostics;
    let mut staging = Staging::new(&lc.output_dir())?;
    let mut write = |name: &str, body: String| staging.write(&format!("{DIAGNOSTICS_DIR}/{name}"), body);

    // binned variogram of the trend residuals with its permutation envelope
    let binned = semivariogram_with_envelope(
        &prep.trend.residuals,
        &locs,
        d.variogram_bins,
        d.max_dist_km,
        d.permutations,
        d.permutation_seed,
    )
    .map_err(diag_error)?;
    let fit = fit_binned(&binned).map_err(diag_error)?;
    {
        let mut doc = CsvDoc::new(
            &prov,
            &[
                "bin_low_km",
                "bin_high_km",
                "midpoint_km",
                "gamma",
                "pairs",
                "envelope_low",
                "envelope_high",
                "fitted",
            ],
        )
        .note(&format!(
            "exponential fit nugget={} sill={} range_phi_km={} permutations={}",
            num(fit.nugget),
            num(fit.sill),
            num(fit.range_phi),
            d.permutations
        ));
        let lo = binned.envelope_low.clone().unwrap_or_default();
        let hi = binned.envelope_high.clone().unwrap_or_default();
        for i in 0..binned.n_bins() {
            doc.row(&[
                num(binned.bin_edges[i]),
                num(binned.bin_edges[i + 1]),
                num(binned.bin_midpoints[i]),
                num(binned.gamma_hat[i]),
                binned.pair_counts[i].to_string(),
                num(lo[i]),
                num(hi[i]),
                num(fit.gamma(binned.bin_midpoints[i])),
            ]);
        }
        write("variogram.csv", doc.finish())?;
        let occupied: Vec<usize> = (0..binned.n_bins()).filter(|&i| binned.pair_counts[i] > 0).collect();
        let pts: Vec<(f64, f64)> = occupied
            .iter()
            .map(|&i| (binned.bin_midpoints[i], binned.gamma_hat[i]))
            .collect();
        let band =
            |v: &[f64]| -> Vec<(f64, f64)> { occupied.iter().map(|&i| (binned.bin_midpoints[i], v[i])).collect() };
        let hmax = binned.max_dist();
        let curve: Vec<(f64, f64)> = (1..=100)
            .map(|k| hmax * k as f64 / 100.0)
            .map(|h| (h, fit.gamma(h)))
            .collect();
        let upper = band(&hi);
        let ys = pts.iter().chain(&upper).chain(&curve).map(|p| p.1).chain([0.0]);
        let mut fig = Figure::new(
            "Binned semivariogram of trend residuals",
            "distance (km)",
            "semivariance",
            (0.0, hmax),
            extent(ys),
        );
        fig.polyline(&band(&lo), Stroke::dashed("grey", 1.0, "4 3"));
        fig.polyline(&upper, Stroke::dashed("grey", 1.0, "4 3"));
        fig.polyline(&curve, Stroke::solid("firebrick", 1.5));
        fig.points(&pts, "black", 3.0);
        fig.legend("black", "binned estimate");
        fig.legend("grey", "permutation envelope");
        fig.legend("firebrick", "exponential fit");
        write("variogram.svg", fig.finish(&prov.xml_comment()))?;
    }

    // mapped configuration for each λ
    for &lambda in &lc.config.diagnostic_lambdas() {
        let map = fit_tps(&locs, &state.mds_coords, lambda).map_err(diag_error)?;
        let folds = fold_check(&map, &state.probe);
        let mapped = apply_tps(&map, &locs);
        let tag = lambda_tag(lambda);
        let mut doc = CsvDoc::new(
            &prov,
            &["station_id", "g1_km", "g2_km", "mds1_km", "mds2_km", "d1_km", "d2_km"],
        )
        .note(&format!(
            "lambda={} fold_fraction={}",
            num(lambda),
            num(folds.fold_fraction)
        ));
        for (i, id) in ids.iter().enumerate() {
            doc.row(&[
                id.clone(),
                num(locs[i].s1),
                num(locs[i].s2),
                num(state.mds_coords[i].s1),
                num(state.mds_coords[i].s2),
                num(mapped[i].s1),
                num(mapped[i].s2),
            ]);
        }
        write(&format!("dspace_lambda_{tag}.csv"), doc.finish())?;
        write(
            &format!("dspace_lambda_{tag}.svg"),
            dspace_svg(
                &prov,
                &map,
                &state.probe,
                &ids,
                &mapped,
                &state.mds_coords,
                folds.fold_fraction,
            ),
        )?;
    }

    // local stretch of the fitted map
    let stretch = fold_check(&state.map, &state.probe);
    {
        let mut doc = CsvDoc::new(
            &prov,
            &[
                "ix",
                "iy",
                "centre1_km",
                "centre2_km",
                "det",
                "sv_max",
                "sv_min",
                "major_angle_rad",
                "major_class",
                "minor_class",
            ],
        )
        .note(&format!(
            "lambda={} fold_fraction={} neutral_band={}",
            num(state.lambda),
            num(stretch.fold_fraction),
            NEUTRAL_STRETCH
        ));
        for c in &stretch.cells {
            doc.row(&[
                c.ix.to_string(),
                c.iy.to_string(),
                num(c.centre.s1),
                num(c.centre.s2),
                num(c.det),
                num(c.sv_max),
                num(c.sv_min),
                num(c.major_angle),
                stretch_class(c.sv_max).to_string(),
                stretch_class(c.sv_min).to_string(),
            ]);
        }
        write("stretch_grid.csv", doc.finish())?;
        write("stretch_grid.svg", stretch_svg(&prov.xml_comment(), &stretch, &locs))?;
    }

    // residual QQ
    {
        let qq = qq_data(&prep.trend);
        let mut doc = CsvDoc::new(&prov, &["theoretical", "sample"]);
        for (a, b) in qq.theoretical.iter().zip(&qq.sample) {
            doc.row(&[num(*a), num(*b)]);
        }
        write("qq.csv", doc.finish())?;
        let n = qq.sample.len();
        let step = n.div_ceil(QQ_SVG_POINTS).max(1);
        let pts: Vec<(f64, f64)> = (0..n)
            .step_by(step)
            .map(|i| (qq.theoretical[i], qq.sample[i]))
            .collect();
        let sd = prep.trend.sigma2_hat.sqrt();
        let xr = extent(qq.theoretical.iter().copied());
        let mut fig = Figure::new(
            "Normal QQ plot of trend residuals",
            "standard normal quantile",
            "residual (°C)",
            xr,
            extent(qq.sample.iter().copied()),
        );
        fig.polyline(&[(xr.0, xr.0 * sd), (xr.1, xr.1 * sd)], Stroke::solid("firebrick", 1.0));
        fig.points(&pts, "black", 1.5);
        write("qq.svg", fig.finish(&prov.xml_comment()))?;
    }

    // per-day longitude and latitude effects
    {
        let eff = per_time_effects(&prep.obs, &prep.stations).map_err(diag_error)?;
        let mut doc = CsvDoc::new(
            &prov,
            &[
                "date",
                "lon_effect_c_per_km",
                "lon_half_width",
                "lat_effect_c_per_km",
                "lat_half_width",
            ],
        );
        for t in 0..eff.times.len() {
            doc.row(&[
                eff.times[t].to_string(),
                num(eff.lon_effect[t]),
                num(eff.lon_half_width[t]),
                num(eff.lat_effect[t]),
                num(eff.lat_half_width[t]),
            ]);
        }
        write("effects.csv", doc.finish())?;
        for (name, effect, half) in [
            ("lon", &eff.lon_effect, &eff.lon_half_width),
            ("lat", &eff.lat_effect, &eff.lat_half_width),
        ] {
            let line = |sign: f64| -> Vec<(f64, f64)> {
                effect
                    .iter()
                    .zip(half.iter())
                    .enumerate()
                    .map(|(t, (e, h))| (t as f64, e + sign * h))
                    .collect()
            };
            let (lo, mid, hi) = (line(-1.0), line(0.0), line(1.0));
            let ys = lo.iter().chain(&hi).map(|p| p.1).chain([0.0]);
            let label = if name == "lon" { "Longitude" } else { "Latitude" };
            let mut fig = Figure::new(
                &format!("{label} effect by day with 95% band"),
                &format!(
                    "day from {}",
                    eff.times.first().map(|d| d.to_string()).unwrap_or_default()
                ),
                "°C per km",
                extent([0.0, eff.times.len().saturating_sub(1) as f64]),
                extent(ys),
            );
            let n = eff.times.len() as f64;
            fig.polyline(&[(0.0, 0.0), (n, 0.0)], Stroke::solid("grey", 0.5));
            fig.polyline(&lo, Stroke::dashed("steelblue", 1.0, "3 2"));
            fig.polyline(&hi, Stroke::dashed("steelblue", 1.0, "3 2"));
            fig.polyline(&mid, Stroke::solid("black", 1.2));
            write(&format!("effects_{name}.svg"), fig.finish(&prov.xml_comment()))?;
        }
    }

    // monthly mean surfaces
    let all_locs = prep.stations.proj_points();
    let grid = SurfaceGrid::covering(&all_locs, d.surface_nx, d.surface_ny);
    for (month, means) in monthly_means(&prep.obs) {
        let field = grid_surface(&means, &all_locs, &grid).map_err(diag_error)?;
        let mut doc = CsvDoc::new(&prov, &["s1_km", "s2_km", "tmax_c"]).note(&format!("month={month}"));
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.node(i, j);
                let v = field.values[(j, i)].map(num).unwrap_or_default();
                doc.row(&[num(x), num(y), v]);
            }
        }
        write(&format!("surface_month_{month:02}.csv"), doc.finish())?;
        let (lo, hi) = extent(means.iter().copied());
        let (xr, yr) = square_extent(extent([grid.x_min, grid.x_max]), extent([grid.y_min, grid.y_max]));
        let mut fig = Figure::new(
            &format!("Mean Tmax, month {month} (°C {:.1} to {:.1})", lo, hi),
            "s1 (km)",
            "s2 (km)",
            xr,
            yr,
        );
        let dx = (grid.x_max - grid.x_min) / (grid.nx - 1) as f64;
        let dy = (grid.y_max - grid.y_min) / (grid.ny - 1) as f64;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if let Some(v) = field.values[(j, i)] {
                    let (x, y) = grid.node(i, j);
                    let colour = diverging((v - lo) / (hi - lo));
                    fig.cell((x - dx / 2.0, y - dy / 2.0), (x + dx / 2.0, y + dy / 2.0), &colour);
                }
            }
        }
        let pts: Vec<(f64, f64)> = all_locs.iter().map(|p| (p.s1, p.s2)).collect();
        fig.points(&pts, "black", 1.5);
        write(
            &format!("surface_month_{month:02}.svg"),
            fig.finish(&prov.xml_comment()),
        )?;
    }

    let mut log = RunLog::new(&prov, "diagnostics");
    log.line(
        "variogram",
        &[
            ("bins", d.variogram_bins.to_string()),
            ("permutations", d.permutations.to_string()),
            ("permutation_seed", d.permutation_seed.to_string()),
            ("range_phi", fit.range_phi.to_string()),
        ],
    );
    log.line(
        "dspace",
        &[
            ("lambdas", format!("{:?}", lc.config.diagnostic_lambdas())),
            ("fitted_lambda", state.lambda.to_string()),
        ],
    );
    staging.write(&format!("{DIAGNOSTICS_DIR}/diagnostics.log"), log.finish())?;
    commit(staging)?;
    Ok(())
}

/// `5`, `0.5`, `1e-06` style tag for file names.
fn lambda_tag(lambda: f64) -> String {
    format!("{lambda}")
}

pub fn stretch_class(sv: f64) -> &'static str {
    if sv > 1.0 + NEUTRAL_STRETCH {
        "expansion"
    } else if sv < 1.0 - NEUTRAL_STRETCH {
        "contraction"
    } else {
        "neutral"
    }
}

/// The probe grid pushed through the map, with mapped stations and their
/// MDS targets.
fn dspace_svg(
    prov: &Provenance,
    map: &TpsMap<f64>,
    probe: &ProbeGrid<f64>,
    ids: &[String],
    mapped: &[ProjPoint<f64>],
    targets: &[ProjPoint<f64>],
    fold_fraction: f64,
) -> String {
    const STEPS: usize = 40;
    let mut lines: Vec<Vec<(f64, f64)>> = Vec::new();
    for i in 0..=probe.nx {
        lines.push(
            (0..=STEPS)
                .map(|k| {
                    let a = probe.node(i, 0);
                    let y = probe.y_min + (probe.y_max - probe.y_min) * k as f64 / STEPS as f64;
                    let p = map.apply_one(&ProjPoint::new(a.s1, y));
                    (p.s1, p.s2)
                })
                .collect(),
        );
    }
    for j in 0..=probe.ny {
        lines.push(
            (0..=STEPS)
                .map(|k| {
                    let a = probe.node(0, j);
                    let x = probe.x_min + (probe.x_max - probe.x_min) * k as f64 / STEPS as f64;
                    let p = map.apply_one(&ProjPoint::new(x, a.s2));
                    (p.s1, p.s2)
                })
                .collect(),
        );
    }
    let all = lines
        .iter()
        .flatten()
        .copied()
        .chain(targets.iter().map(|p| (p.s1, p.s2)));
    let (xs, ys): (Vec<f64>, Vec<f64>) = all.unzip();
    let (xr, yr) = square_extent(extent(xs), extent(ys));
    let mut fig = Figure::new(
        &format!("D-space, lambda = {} (fold fraction {:.3})", map.lambda, fold_fraction),
        "d1 (km)",
        "d2 (km)",
        xr,
        yr,
    );
    for l in &lines {
        fig.polyline(l, Stroke::solid("#bbbbbb", 0.6));
    }
    for (m, t) in mapped.iter().zip(targets) {
        fig.segment((m.s1, m.s2), (t.s1, t.s2), Stroke::solid("steelblue", 0.6));
    }
    fig.points(
        &targets.iter().map(|p| (p.s1, p.s2)).collect::<Vec<_>>(),
        "steelblue",
        2.0,
    );
    fig.points(&mapped.iter().map(|p| (p.s1, p.s2)).collect::<Vec<_>>(), "black", 2.0);
    for (id, m) in ids.iter().zip(mapped) {
        fig.label((m.s1, m.s2), id);
    }
    fig.legend("black", "mapped stations");
    fig.legend("steelblue", "MDS configuration");
    fig.finish(&prov.xml_comment())
}

/// Principal axes of the map's Jacobian on each probe cell. Solid strokes
/// mark expansion, dashed contraction, dotted grey neutral; each axis is
/// drawn with length proportional to its stretch.
pub fn stretch_svg(header: &str, diag: &DeformDiagnostics<f64>, stations: &[ProjPoint<f64>]) -> String {
    let g = &diag.grid;
    let cell_w = (g.x_max - g.x_min) / g.nx as f64;
    let cell_h = (g.y_max - g.y_min) / g.ny as f64;
    let max_sv = diag.cells.iter().map(|c| c.sv_max).fold(1.0, f64::max);
    let half = 0.45 * cell_w.min(cell_h) / max_sv;
    let (xr, yr) = square_extent((g.x_min, g.x_max), (g.y_min, g.y_max));
    let mut fig = Figure::new(
        &format!("Principal stretches (fold fraction {:.3})", diag.fold_fraction),
        "s1 (km)",
        "s2 (km)",
        xr,
        yr,
    );
    let axis = |fig: &mut Figure, c: &CellStretch<f64>, angle: f64, sv: f64| {
        let (dx, dy) = (angle.cos() * sv * half, angle.sin() * sv * half);
        let a = (c.centre.s1 - dx, c.centre.s2 - dy);
        let b = (c.centre.s1 + dx, c.centre.s2 + dy);
        let stroke = match stretch_class(sv) {
            "expansion" => Stroke::solid("firebrick", 1.2),
            "contraction" => Stroke::dashed("steelblue", 1.2, "3 2"),
            _ => Stroke::dashed("grey", 0.8, "1 2"),
        };
        fig.segment(a, b, stroke);
    };
    for c in &diag.cells {
        if c.det <= 0.0 {
            let d = 0.3 * cell_w.min(cell_h);
            fig.cell(
                (c.centre.s1 - d, c.centre.s2 - d),
                (c.centre.s1 + d, c.centre.s2 + d),
                "#222222",
            );
        }
        axis(&mut fig, c, c.major_angle, c.sv_max);
        axis(&mut fig, c, c.major_angle + std::f64::consts::FRAC_PI_2, c.sv_min);
    }
    fig.points(&stations.iter().map(|p| (p.s1, p.s2)).collect::<Vec<_>>(), "black", 1.5);
    fig.legend("firebrick", "expansion (solid)");
    fig.legend("steelblue", "contraction (dashed)");
    fig.legend("grey", "neutral (dotted)");
    fig.finish(header)
}
