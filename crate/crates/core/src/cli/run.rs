//! Subcommand implementations. Each run writes its files and a manifest to
//! the configured output directory.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{Command, RunConfig};
use super::output::{
    bn_csv, collect_files, svg_plot, time_series_csv, ArtifactWriter, RunManifest, RunStatus, MANIFEST_NAME,
};
use crate::dynamics::{
    evolve_quadrature, evolve_with, first_revival, ground_prob, ground_prob_detuned, ground_prob_jcm, EvolveOptions,
    HamiltonianForm, Integrator, TimeSeries,
};
use crate::error::{Error, Result};
use crate::states::{build_series, AmplitudeSeries};
use crate::validate::run_suite;

/// Exit status and manifest of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub manifest: RunManifest,
}

/// Runs the configured command, writes `manifest.json` and returns the exit
/// status. The manifest is written on failure as well.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    let started = Instant::now();
    let mut writer = ArtifactWriter::new(&cfg.output_dir)?;
    let mut diagnostics = json!({});
    let result = match cfg.command {
        Command::Bn => run_bn(cfg, &mut writer, &mut diagnostics),
        Command::Revival => run_revival(cfg, &mut writer, &mut diagnostics),
        Command::Evolve => run_evolve(cfg, &mut writer, &mut diagnostics),
        Command::Validate => run_validate(cfg, &mut writer, &mut diagnostics),
        Command::Sweep => run_sweep(cfg, &mut writer, &mut diagnostics),
    };
    let status = match &result {
        Ok(code) => RunStatus {
            ok: *code == 0,
            exit_code: *code,
            error: None,
        },
        Err(e) => RunStatus {
            ok: false,
            exit_code: e.exit_code(),
            error: Some(e.to_string()),
        },
    };
    if let Err(Error::Io(e)) = result {
        return Err(Error::Io(e));
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        command: cfg.command.name().to_owned(),
        config: serde_json::to_value(cfg)?,
        status,
        artifacts: writer.into_artifacts(),
        diagnostics,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(cfg.output_dir.join(MANIFEST_NAME), text)?;
    Ok(RunOutcome {
        exit_code: manifest.status.exit_code,
        manifest,
    })
}

fn series_diagnostics(series: &AmplitudeSeries) -> Value {
    json!({
        "n_max": series.n_max,
        "sum_abs2": series.retained_mass(),
        "tail_mass": series.tail_mass,
        "source": series.source,
    })
}

fn mean_photon_number(series: &AmplitudeSeries) -> f64 {
    series.probabilities().iter().enumerate().map(|(n, w)| n as f64 * w).sum()
}

fn curve_diagnostics(curve: &TimeSeries, mean_n: f64, lambda: f64) -> Value {
    let features = first_revival(curve, mean_n, lambda);
    json!({
        "p_initial": curve.values[0],
        "p_min": curve.values.iter().copied().fold(f64::INFINITY, f64::min),
        "p_max": curve.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "mean_photon_number": mean_n,
        "first_revival": features,
    })
}

fn write_curve(cfg: &RunConfig, writer: &mut ArtifactWriter, stem: &str, title: &str, curve: &TimeSeries) -> Result<()> {
    writer.write(&format!("{stem}.csv"), time_series_csv(curve).as_bytes())?;
    if cfg.emit_svg {
        writer.write(&format!("{stem}.svg"), svg_plot(title, &[(stem, curve)]).as_bytes())?;
    }
    Ok(())
}

fn param_title(cfg: &RunConfig) -> String {
    let p = &cfg.params;
    format!("|α| = {}, |β| = {}, |ζ| = {}", p.a(), p.b(), p.r())
}

/// Writes `bn.csv` with the expansion coefficients.
pub fn run_bn(cfg: &RunConfig, writer: &mut ArtifactWriter, diag: &mut Value) -> Result<i32> {
    let series = build_series(&cfg.params, cfg.tail_target)?;
    diag["series"] = series_diagnostics(&series);
    writer.write("bn.csv", bn_csv(&series).as_bytes())?;
    Ok(0)
}

/// Writes `p_scoh.csv` (and `p_coh.csv` with the coherent comparison).
pub fn run_revival(cfg: &RunConfig, writer: &mut ArtifactWriter, diag: &mut Value) -> Result<i32> {
    let p = &cfg.params;
    let grid = cfg.time_grid()?;
    let series = build_series(p, cfg.tail_target)?;
    diag["series"] = series_diagnostics(&series);
    let curve = if p.delta() == 0.0 {
        ground_prob(&series, p.lambda(), &grid, *p)?
    } else {
        ground_prob_detuned(&series, p.lambda(), p.delta(), &grid, *p)?
    };
    diag["p_scoh"] = curve_diagnostics(&curve, mean_photon_number(&series), p.lambda());
    write_curve(cfg, writer, "p_scoh", &param_title(cfg), &curve)?;
    if cfg.compare_jcm {
        let jcm = ground_prob_jcm(p.b(), p.lambda(), &grid)?;
        diag["p_coh"] = curve_diagnostics(&jcm, p.b() * p.b(), p.lambda());
        diag["max_abs_difference"] = json!(curve.max_abs_diff(&jcm));
        write_curve(cfg, writer, "p_coh", &format!("coherent field, |β| = {}", p.b()), &jcm)?;
    }
    Ok(0)
}

/// Writes `p_evolve.csv` from direct integration.
pub fn run_evolve(cfg: &RunConfig, writer: &mut ArtifactWriter, diag: &mut Value) -> Result<i32> {
    let p = &cfg.params;
    let grid = cfg.time_grid()?;
    diag["hamiltonian"] = json!(cfg.hamiltonian);
    let curve = match cfg.hamiltonian {
        HamiltonianForm::Full => {
            let opts = EvolveOptions {
                integrator: cfg.rk4_dt.map_or(Integrator::Chebyshev, |dt| Integrator::Rk4 { dt }),
                ..EvolveOptions::default()
            };
            diag["integrator"] = json!(opts.integrator);
            let report = match evolve_with(p, cfg.truncation, &grid, &opts) {
                Ok(r) => r,
                Err(e) => {
                    diag["truncation"] = json!({ "requested_retained": cfg.truncation.retained(), "max_retained": opts.max_retained });
                    return Err(e);
                }
            };
            diag["truncation"] = json!({
                "requested_retained": cfg.truncation.retained(),
                "retained": report.retained,
                "escalated": !report.escalations.is_empty(),
                "abandoned_dimensions": report.escalations,
                "max_edge_population": report.max_edge_population,
            });
            diag["max_norm_drift_per_unit_time"] = json!(report.max_norm_drift);
            report.series
        }
        HamiltonianForm::Ultrastrong => {
            if p.a() != 0.0 || (p.phi() - PI).abs() > 1e-12 {
                return Err(Error::config(
                    "hamiltonian: the ultrastrong form is defined for a = 0 and phi = pi",
                ));
            }
            diag["route"] = json!("quadrature");
            evolve_quadrature(p, &grid)?
        }
    };
    diag["p_evolve"] = curve_diagnostics(&curve, p.b() * p.b(), p.lambda());
    write_curve(cfg, writer, "p_evolve", &param_title(cfg), &curve)?;
    Ok(0)
}

/// Writes `validation.json`; fails when any check fails.
pub fn run_validate(cfg: &RunConfig, writer: &mut ArtifactWriter, diag: &mut Value) -> Result<i32> {
    let report = run_suite(cfg.suite, cfg.mutation);
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    writer.write("validation.json", text.as_bytes())?;
    println!("{}", text.trim_end());
    diag["suite"] = json!(cfg.suite);
    diag["checks"] = json!(report.checks.len());
    diag["failed"] = json!(report.failures());
    if let Some(m) = cfg.mutation {
        diag["mutation"] = json!(m);
    }
    if report.all_pass() {
        Ok(0)
    } else {
        Err(Error::Validation(report.failures().join(", ")))
    }
}

/// Directory name of a sweep point, such as `r=0.1_b=2`.
pub fn point_name(assignment: &[(String, f64)]) -> String {
    assignment.iter().map(|(f, v)| format!("{f}={v}")).collect::<Vec<_>>().join("_")
}

/// Cartesian product of the sweep axes, last axis varying fastest.
pub fn sweep_points(cfg: &RunConfig) -> Vec<Vec<(String, f64)>> {
    let axes = cfg.sweep_axes.as_deref().unwrap_or(&[]);
    let mut points = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|prefix: Vec<(String, f64)>| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((axis.field.clone(), *v));
                    p
                })
            })
            .collect();
    }
    points
}

fn run_point(cfg: &RunConfig, assignment: &[(String, f64)], root: &Path) -> (i32, Option<String>) {
    let mut point = cfg.clone();
    point.command = cfg.sweep_command;
    point.sweep_axes = None;
    point.output_dir = root.join(point_name(assignment));
    for (field, value) in assignment {
        match point.with_param(field, *value) {
            Ok(p) => point = p,
            Err(e) => return (Error::config(e.to_string()).exit_code(), Some(e.to_string())),
        }
    }
    match execute(&point) {
        Ok(o) => (o.exit_code, o.manifest.status.error),
        Err(e) => (e.exit_code(), Some(e.to_string())),
    }
}

/// Runs the sweep command once per grid point, each in its own
/// subdirectory, with up to `jobs` points in flight.
pub fn run_sweep(cfg: &RunConfig, writer: &mut ArtifactWriter, diag: &mut Value) -> Result<i32> {
    let points = sweep_points(cfg);
    if points.is_empty() || cfg.sweep_axes.as_ref().is_none_or(|a| a.is_empty()) {
        return Err(Error::config("sweep_axes: a sweep needs at least one axis"));
    }
    let root = writer.root().to_path_buf();
    let jobs = cfg.jobs.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("jobs: {e}")))?;
    let results: Vec<(i32, Option<String>)> =
        pool.install(|| points.par_iter().map(|a| run_point(cfg, a, &root)).collect());

    let mut files = Vec::new();
    collect_files(&root, &root, &mut files)?;
    for rel in files.iter().filter(|f| f.as_str() != MANIFEST_NAME) {
        let bytes = std::fs::read(root.join(rel))?;
        writer.record(rel, &bytes);
    }
    let index: Vec<Value> = points
        .iter()
        .zip(&results)
        .map(|(a, (code, err))| {
            json!({
                "dir": point_name(a),
                "params": a.iter().map(|(f, v)| (f.clone(), json!(v))).collect::<serde_json::Map<_, _>>(),
                "exit_code": code,
                "error": err,
            })
        })
        .collect();
    let failed = results.iter().filter(|(c, _)| *c != 0).count();
    diag["points"] = json!(index);
    diag["failed_points"] = json!(failed);
    diag["jobs"] = json!(jobs);
    Ok(results.iter().map(|(c, _)| *c).find(|c| *c != 0).unwrap_or(0))
}
