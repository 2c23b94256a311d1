//! Experiment pipelines behind each subcommand.

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Experiment, LoadedConfig};
use super::manifest::{Manifest, OutputDir};
use crate::analysis::{
    check_argmin_coincidence, check_asymptotic_relation, classify_simultaneity, fit_rate, predicted_rates, FitOptions,
    GapRange, RateModel, Simultaneity,
};
use crate::error::{Error, Result};
use crate::integrator::{integrate, monitor_key_inequality, RecordMode, Verdict};
use crate::model::Component;
use crate::stationary::{
    dichotomy_probe, map_region, nodewise_monotonicity_violations, rectangle_violations, solution_bound_violations,
    unit_box_violations, within_bounds, Probe,
};
use crate::sweep::{check_t_delta_continuity, parameter_scan, scan_to_csv, shooting_sweep, ShootingLabel};

/// Tolerance for the nodewise ordering of stationary solutions in region
/// reports.
pub const REGION_ORDER_TOLERANCE: f64 = 1e-9;

/// How a pipeline ended after writing its outputs.
#[derive(Debug)]
pub enum Completion {
    Ok,
    /// Outputs are complete but the result is not a decision.
    Indeterminate(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INDETERMINATE: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Configuration(_) | Error::Resolution(_) | Error::Regime(_) | Error::Precondition(_) => EXIT_CONFIG,
        Error::Indeterminate { .. } => EXIT_INDETERMINATE,
        _ => EXIT_NUMERICAL,
    }
}

fn summary_of_error(e: &Error) -> Value {
    json!({ "kind": e.kind(), "message": e.to_string() })
}

fn fit_entry<T: Serialize>(r: Result<T>) -> Value {
    match r {
        Ok(v) => json!({ "ok": v }),
        Err(e) => json!({ "error": summary_of_error(&e) }),
    }
}

fn run(cfg: &LoadedConfig, out: &mut OutputDir) -> Result<Completion> {
    let c = &cfg.config;
    let (traj, report) = integrate(&cfg.u0, &cfg.v0, &c.params, &cfg.operator, &c.controls)?;
    out.write("trajectory.csv", traj.to_csv().as_bytes())?;
    let simultaneity = match report.verdict {
        Verdict::Quench => Some(classify_simultaneity(&report, c.analysis.delta_class)?),
        Verdict::NoQuenchWithinHorizon => None,
    };
    let monitor = (traj.mode() == RecordMode::Full).then(|| {
        fit_entry(monitor_key_inequality(&traj, &c.params).map(
            |m| json!({ "final_sup": m.final_sup, "first_quartile_sup": m.first_quartile_sup, "bounded": m.bounded }),
        ))
    });
    out.write_json("report.json", &json!({ "report": report, "simultaneity": simultaneity, "monitor": monitor }))?;
    Ok(Completion::Ok)
}

fn stationary(cfg: &LoadedConfig, out: &mut OutputDir) -> Result<Completion> {
    let c = &cfg.config;
    match dichotomy_probe(&c.params, &cfg.operator, &cfg.probe_controls(), &cfg.probe_options())? {
        Probe::StationaryReached(r) => {
            out.write("stationary.csv", r.to_csv().as_bytes())?;
            let min_w = r.w.iter().copied().fold(f64::INFINITY, f64::min);
            let min_z = r.z.iter().copied().fold(f64::INFINITY, f64::min);
            out.write_json(
                "report.json",
                &json!({
                    "outcome": "stationary",
                    "converged": r.converged,
                    "residual_norm": r.residual_norm,
                    "iterations": r.iterations,
                    "reason": r.reason,
                    "min_w": min_w,
                    "min_z": min_z,
                    "within_bounds": within_bounds(&r.w, &r.z, &c.params),
                }),
            )?;
            if !r.converged {
                return Err(Error::NumericalFailure {
                    reason: format!("stationary solve did not converge: {}", r.reason.unwrap_or_default()),
                    last_state: None,
                });
            }
        }
        Probe::Quench(report) => out.write_json("report.json", &json!({ "outcome": "quench", "report": report }))?,
    }
    Ok(Completion::Ok)
}

fn region(cfg: &LoadedConfig, out: &mut OutputDir) -> Result<Completion> {
    let spec = cfg.region_spec()?;
    let map = map_region(&spec, &cfg.operator, &cfg.probe_controls(), &cfg.probe_options())?;
    out.write("region.csv", map.to_csv().as_bytes())?;
    let validation = json!({
        "rectangle_violations": rectangle_violations(&map),
        "unit_box_violations": unit_box_violations(&map),
        "solution_bound_violations": solution_bound_violations(&map),
        "nodewise_monotonicity_violations": nodewise_monotonicity_violations(&map, REGION_ORDER_TOLERANCE).len(),
    });
    out.write_json(
        "report.json",
        &json!({
            "lambdas": map.lambdas,
            "mus": map.mus,
            "rays": map.rays,
            "continuation_max_diff": map.continuation_max_diff,
            "validation": validation,
        }),
    )?;
    Ok(Completion::Ok)
}

fn shoot(cfg: &LoadedConfig, out: &mut OutputDir) -> Result<Completion> {
    let sc = cfg.shooting_config()?;
    let result = shooting_sweep(&sc, &cfg.operator)?;
    out.write("shooting.csv", result.to_csv().as_bytes())?;
    out.write_json(
        "report.json",
        &json!({
            "label_intervals": result.label_intervals(),
            "brackets": result.brackets,
            "has_a_plus": result.has(ShootingLabel::APlus),
            "has_a_minus": result.has(ShootingLabel::AMinus),
            "continuity": fit_entry(check_t_delta_continuity(&result)),
        }),
    )?;
    Ok(Completion::Ok)
}

fn scan(cfg: &LoadedConfig, out: &mut OutputDir) -> Result<Completion> {
    let c = &cfg.config;
    let axes = &c.scan.as_ref().expect("validated scan section").axes;
    let rows = parameter_scan(axes, &c.params, &cfg.u0, &cfg.v0, &cfg.operator, &c.controls, c.analysis.delta_class);
    out.write("scan.csv", scan_to_csv(&rows).as_bytes())?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    out.write_json("report.json", &json!({ "rows": rows.len(), "failures": failures }))?;
    Ok(Completion::Ok)
}

fn rates(cfg: &LoadedConfig, out: &mut OutputDir) -> Result<Completion> {
    let c = &cfg.config;
    let a = &c.analysis;
    let (traj, report) = integrate(&cfg.u0, &cfg.v0, &c.params, &cfg.operator, &c.controls)?;
    out.write("trajectory.csv", traj.to_csv().as_bytes())?;
    if report.verdict != Verdict::Quench {
        out.write_json("report.json", &json!({ "report": report }))?;
        return Ok(Completion::Indeterminate(format!("no quenching by t = {}", report.final_time)));
    }
    let verdict = classify_simultaneity(&report, a.delta_class)?;
    let qt = report.quench_time.expect("quench report carries a time estimate");
    let gaps = GapRange::from(&qt);
    let components: &[Component] = match verdict.kind {
        Simultaneity::Simultaneous => &[Component::U, Component::V],
        Simultaneity::OnlyU => &[Component::U],
        Simultaneity::OnlyV => &[Component::V],
        Simultaneity::Indeterminate => &[],
    };
    let mut fits = serde_json::Map::new();
    for &comp in components {
        let window = match comp {
            Component::U => a.window_u,
            Component::V => a.window_v,
        };
        let opts = FitOptions { window, min_samples: a.min_samples, refine: true };
        fits.insert(
            comp.to_string(),
            json!({
                "power_law": fit_entry(fit_rate(&traj, comp, gaps, RateModel::PowerLaw, &opts)),
                "log_corrected": fit_entry(fit_rate(&traj, comp, gaps, RateModel::LogCorrected, &opts)),
            }),
        );
    }
    let coincidence = check_argmin_coincidence(&traj);
    let predicted = fit_entry(predicted_rates(&c.params, verdict.kind, coincidence.coincide));
    let relation = if verdict.kind == Simultaneity::Simultaneous {
        match check_asymptotic_relation(&traj, &c.params, a.relation_window) {
            Ok(r) => {
                out.write("relation.csv", r.to_csv().as_bytes())?;
                json!({ "ok": { "case": r.case, "spread": r.spread, "bounded": r.bounded, "spread_limit": r.spread_limit } })
            }
            Err(e) => json!({ "error": summary_of_error(&e) }),
        }
    } else {
        Value::Null
    };
    out.write_json(
        "report.json",
        &json!({
            "report": report,
            "simultaneity": verdict,
            "fits": fits,
            "predicted": predicted,
            "argmin_coincidence": coincidence,
            "relation": relation,
        }),
    )?;
    if verdict.kind == Simultaneity::Indeterminate {
        return Ok(Completion::Indeterminate("terminal minima fall in the classification dead band".into()));
    }
    Ok(Completion::Ok)
}

/// Runs the pipeline for `cfg` into `out` and writes the manifest. Returns the
/// manifest and the process exit code.
pub fn execute(cfg: &LoadedConfig, mut out: OutputDir, dump_operator: bool) -> Result<(Manifest, i32)> {
    let name = cfg.kind.name();
    let body = (|| -> Result<Completion> {
        out.write_json("config.json", &cfg.config)?;
        if dump_operator {
            out.write("operator.csv", cfg.operator.to_csv().as_bytes())?;
        }
        match cfg.kind {
            Experiment::Run => run(cfg, &mut out),
            Experiment::Stationary => stationary(cfg, &mut out),
            Experiment::Region => region(cfg, &mut out),
            Experiment::Shoot => shoot(cfg, &mut out),
            Experiment::Scan => scan(cfg, &mut out),
            Experiment::Rates => rates(cfg, &mut out),
        }
    })();
    match body {
        Ok(Completion::Ok) => Ok((out.finish(name, false, "ok", None)?, EXIT_OK)),
        Ok(Completion::Indeterminate(why)) => {
            Ok((out.finish(name, false, "indeterminate", Some(why))?, EXIT_INDETERMINATE))
        }
        Err(e) => {
            let code = exit_code(&e);
            let m = out.finish(name, true, e.kind(), Some(e.to_string()))?;
            Ok((m, code))
        }
    }
}
