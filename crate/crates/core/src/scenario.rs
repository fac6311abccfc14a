//! Scenario-driven command layer: validated JSON scenarios in, CSV/JSON
//! artifacts out. All randomness is seeded and outputs are byte-identical
//! for identical scenarios and seeds.
//!
//! Exit codes: 0 success, 2 invalid scenario or bundle, 3 assertion failure
//! (a monitor or verification criterion was violated), 4 numeric
//! termination (step underflow).

use crate::bundle::BundleSpec;
use crate::circle::{CircleState, CircleSystem};
use crate::diagnostics::{
    circle_states, loglog_slope, ricci, scalar_curvature_forms, torus_states, type_one_product,
    volume_proxy, TypeOneClock,
};
use crate::error::{Error, Result};
use crate::integrator::{
    circle_monitors, fmt_f, integrate_tau, integrate_u, CaptureConfig, FlowOptions, Termination,
};
use crate::shooting::{classify_backward_limit, trace_gamma, trace_unstable};
use crate::spectral::{vtheta_spectrum, xi_spectrum};
use crate::torus::{integrate_torus, torus_monitors, TorusFlowOptions, TorusState,
    TorusTermination};
use crate::verify::{run_suite, VerifyOptions};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Deserialize;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_ASSERTION: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum BundleSource {
    Path { path: String },
    Inline(BundleSpec),
}

/// A fully validated scenario; unknown keys anywhere are rejected before any
/// computation starts.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub bundle: Option<BundleSource>,
    pub seed: Option<u64>,
    pub fixed_points: Option<FixedPointsParams>,
    pub spectrum: Option<SpectrumParams>,
    pub flow: Option<FlowParams>,
    pub torus_flow: Option<TorusFlowParams>,
    pub shoot: Option<ShootParams>,
    pub diagnose: Option<DiagnoseParams>,
    pub portrait: Option<PortraitParams>,
    pub verify: Option<VerifyParams>,
}

fn default_subset_cap() -> usize {
    1 << 10
}
fn default_tol() -> f64 {
    1e-9
}
fn default_a0() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}
fn default_horizon() -> f64 {
    100.0
}
fn default_portrait_tol() -> f64 {
    1e-7
}
fn default_slack() -> f64 {
    1.0
}
fn default_c0_scale() -> f64 {
    1.0
}
fn default_base_curvature() -> Option<Vec<f64>> {
    None
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointsParams {
    #[serde(default = "default_subset_cap")]
    pub subset_cap: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumParams {
    /// Subsets (1-based factor indices) whose partial fixed-point spectra
    /// are reported in addition to the interior one.
    #[serde(default)]
    pub thetas: Vec<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowParams {
    /// "u" (rescaled clock, needs `y0`) or "tau" (needs `b0`).
    pub clock: String,
    pub span: [f64; 2],
    pub y0: Option<Vec<f64>>,
    #[serde(default = "default_a0")]
    pub a0: f64,
    pub b0: Option<Vec<f64>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    #[serde(default = "default_true")]
    pub capture: bool,
    #[serde(default = "default_true")]
    pub region_events: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusFlowParams {
    pub h0: Vec<Vec<f64>>,
    pub b0: Vec<f64>,
    pub span: [f64; 2],
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub checkpoints: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootParams {
    /// "unstable", "gamma", or "classify".
    pub kind: String,
    pub k: Option<usize>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub y0: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseParams {
    pub clock: String,
    pub span: [f64; 2],
    pub y0: Option<Vec<f64>>,
    #[serde(default = "default_a0")]
    pub a0: f64,
    pub b0: Option<Vec<f64>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Per-factor curvature bounds for the type-I surrogate (default 1).
    #[serde(default = "default_base_curvature")]
    pub base_curvature: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortraitParams {
    pub ymax: f64,
    pub resolution: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_portrait_tol")]
    pub tol: f64,
    #[serde(default = "default_true")]
    pub basin: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {
    #[serde(default)]
    pub criteria: Option<Vec<u32>>,
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default = "default_c0_scale")]
    pub c0_scale: f64,
}

#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
}

#[derive(Debug)]
pub struct CmdOutcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let scenario: Scenario =
            serde_json::from_str(text).map_err(|e| Error::Scenario(format!("parse: {e}")))?;
        Ok(scenario)
    }

    pub fn bundle(&self) -> Result<BundleSpec> {
        let spec = match &self.bundle {
            Some(BundleSource::Inline(spec)) => spec.clone(),
            Some(BundleSource::Path { path }) => BundleSpec::from_path(Path::new(path))?,
            None => return Err(Error::Scenario("scenario has no bundle".into())),
        };
        spec.ensure_valid()?;
        Ok(spec)
    }
}

fn write_file(ctx: &RunContext, name: &str, contents: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(&ctx.out_dir)?;
    let path = ctx.out_dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

fn write_json(ctx: &RunContext, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(ctx, name, text.as_bytes())
}

/// Companion schema document for a CSV artifact.
fn write_schema(ctx: &RunContext, csv_name: &str, columns: &[(String, String)]) -> Result<PathBuf> {
    let value = serde_json::json!({
        "file": csv_name,
        "columns": columns
            .iter()
            .map(|(name, desc)| serde_json::json!({"name": name, "description": desc}))
            .collect::<Vec<_>>(),
    });
    write_json(ctx, &format!("{csv_name}.schema.json"), &value)
}

fn circle_csv_schema(m: usize) -> Vec<(String, String)> {
    let mut cols = vec![
        ("u".to_string(), "rescaled clock".to_string()),
        ("tau".to_string(), "backwards time".to_string()),
        ("a".to_string(), "fibre metric coefficient".to_string()),
    ];
    for i in 1..=m {
        cols.push((format!("b_{i}"), format!("base coefficient of factor {i}")));
    }
    for i in 1..=m {
        cols.push((format!("Y_{i}"), format!("phase ratio a/b_{i}")));
    }
    cols.push(("E".to_string(), "energy sum n_i q_i^2 Y_i^2".to_string()));
    for i in 1..=m {
        cols.push((format!("F_{i}"), format!("deficit of factor {i}")));
    }
    cols.push(("lambda_bar".to_string(), "scale-invariant monotone quantity".to_string()));
    cols.push(("region_flags".to_string(), "deficit signs, one of +0- per factor".to_string()));
    cols
}

pub fn cmd_fixed_points(scenario: &Scenario, ctx: &RunContext) -> Result<CmdOutcome> {
    let spec = scenario.bundle()?;
    let sys = CircleSystem::new(&spec)?;
    let cap = scenario
        .fixed_points
        .as_ref()
        .map(|p| p.subset_cap)
        .unwrap_or_else(default_subset_cap);
    let set = sys.fixed_points(cap)?;
    let mut points = Vec::new();
    for (tag, point) in set.tagged_points() {
        let residual = sys.g_norm_inf(point);
        let region = sys.classify_region(point);
        let coords = point
            .iter()
            .map(|v| format!("{v:.12}"))
            .collect::<Vec<_>>()
            .join(", ");
        println!("{tag:12} ({coords})  residual {residual:.2e}  regions {}", region.flags());
        points.push(serde_json::json!({
            "tag": tag,
            "point": point,
            "residual": residual,
            "region_flags": region.flags(),
            "in_omega_plus": region.in_omega_plus(),
            "in_omega_minus": region.in_omega_minus(),
        }));
    }
    if set.truncated {
        println!("warning: subset cap {cap} exceeded; partial enumeration");
    }
    let summary = serde_json::json!({
        "bundle": spec,
        "points": points,
        "subset_cap": cap,
        "subset_cap_exceeded": set.truncated,
    });
    let file = write_json(ctx, "fixed_points.json", &summary)?;
    Ok(CmdOutcome {
        exit_code: EXIT_OK,
        files: vec![file],
        summary,
    })
}

pub fn cmd_spectrum(scenario: &Scenario, ctx: &RunContext) -> Result<CmdOutcome> {
    let spec = scenario.bundle()?;
    let sys = CircleSystem::new(&spec)?;
    let xi = sys.find_xi()?;
    let xi_spec = xi_spectrum(&sys, &xi)?;
    let mut thetas = Vec::new();
    if let Some(params) = &scenario.spectrum {
        for theta_1based in &params.thetas {
            let theta: Vec<usize> = theta_1based
                .iter()
                .map(|&i| {
                    i.checked_sub(1)
                        .ok_or_else(|| Error::Scenario("subset indices are 1-based".into()))
                })
                .collect::<Result<_>>()?;
            let report = vtheta_spectrum(&sys, &theta)?;
            thetas.push(serde_json::json!({
                "theta": theta_1based,
                "report": report,
            }));
        }
    }
    let summary = serde_json::json!({
        "xi": xi,
        "xi_spectrum": xi_spec,
        "vtheta_spectra": thetas,
    });
    let file = write_json(ctx, "spectrum.json", &summary)?;
    Ok(CmdOutcome {
        exit_code: EXIT_OK,
        files: vec![file],
        summary,
    })
}

fn flow_exit(termination: &Termination, monitors_pass: bool) -> i32 {
    match termination {
        Termination::StepUnderflow => EXIT_NUMERIC,
        _ if !monitors_pass => EXIT_ASSERTION,
        _ => EXIT_OK,
    }
}

pub fn cmd_flow(scenario: &Scenario, ctx: &RunContext) -> Result<CmdOutcome> {
    let spec = scenario.bundle()?;
    let sys = CircleSystem::new(&spec)?;
    let params = scenario
        .flow
        .as_ref()
        .ok_or_else(|| Error::Scenario("scenario has no flow section".into()))?;
    let mut opts = FlowOptions::with_tol(params.tol);
    opts.checkpoints = params.checkpoints.clone();
    opts.region_events = params.region_events;
    if params.capture {
        opts.capture = Some(CaptureConfig::new(sys.fixed_points(64)?));
    }
    let traj = match params.clock.as_str() {
        "u" => {
            let y0 = params
                .y0
                .as_ref()
                .ok_or_else(|| Error::Scenario("u-clock flow needs y0".into()))?;
            integrate_u(&sys, y0, params.a0, (params.span[0], params.span[1]), &opts)?
        }
        "tau" => {
            let b0 = params
                .b0
                .as_ref()
                .ok_or_else(|| Error::Scenario("tau-clock flow needs b0".into()))?;
            let state0 = CircleState::new(params.a0, b0.clone());
            integrate_tau(&sys, &state0, (params.span[0], params.span[1]), &opts)?
        }
        other => {
            return Err(Error::Scenario(format!(
                "unknown clock {other:?}; expected \"u\" or \"tau\""
            )))
        }
    };
    let mut csv = Vec::new();
    traj.write_csv(&mut csv, sys.m)?;
    let csv_file = write_file(ctx, "flow.csv", &csv)?;
    let schema_file = write_schema(ctx, "flow.csv", &circle_csv_schema(sys.m))?;
    let monitors = circle_monitors(&traj);
    let summary = serde_json::json!({
        "run": traj.run_record(),
        "monitors": monitors,
    });
    let json_file = write_json(ctx, "flow.json", &summary)?;
    Ok(CmdOutcome {
        exit_code: flow_exit(&traj.termination, monitors.all_pass()),
        files: vec![csv_file, schema_file, json_file],
        summary,
    })
}

pub fn cmd_torus_flow(scenario: &Scenario, ctx: &RunContext) -> Result<CmdOutcome> {
    let spec = scenario.bundle()?;
    let params = scenario
        .torus_flow
        .as_ref()
        .ok_or_else(|| Error::Scenario("scenario has no torus_flow section".into()))?;
    let r = spec.r;
    if params.h0.len() != r || params.h0.iter().any(|row| row.len() != r) {
        return Err(Error::Scenario(format!("h0 must be {r}x{r}")));
    }
    let h0 = DMatrix::from_fn(r, r, |i, j| params.h0[i][j]);
    let state0 = TorusState::new(h0, params.b0.clone());
    let mut opts = TorusFlowOptions::with_tol(params.tol);
    opts.checkpoints = params.checkpoints.clone();
    let traj = integrate_torus(&spec, &state0, (params.span[0], params.span[1]), &opts)?;
    let consts = spec.coupling_constants()?;
    let report = torus_monitors(&spec, &consts, &traj);

    let mut csv = Vec::new();
    traj.write_csv(&mut csv, spec.r, spec.m)?;
    let csv_file = write_file(ctx, "torus_flow.csv", &csv)?;
    let mut cols: Vec<(String, String)> = Vec::new();
    for (name, desc) in [
        ("tau", "backwards time"),
        ("u_hat", "hat clock"),
    ] {
        cols.push((name.to_string(), desc.to_string()));
    }
    for i in 0..r {
        for j in i..r {
            cols.push((
                format!("h_{}{}", i + 1, j + 1),
                "fibre metric entry (upper triangle)".to_string(),
            ));
        }
    }
    for i in 1..=spec.m {
        cols.push((format!("b_{i}"), format!("base coefficient of factor {i}")));
    }
    cols.push(("a_hat".to_string(), "trace of the fibre metric".to_string()));
    for i in 1..=spec.m {
        cols.push((format!("Y_hat_{i}"), "hat phase ratio".to_string()));
    }
    cols.push(("E_hat".to_string(), "sum of hat phase ratios".to_string()));
    cols.push(("detH".to_string(), "fibre metric determinant".to_string()));
    cols.push(("trHinv".to_string(), "trace of the inverse fibre metric".to_string()));
    cols.push(("monitor_flags".to_string(), "positive-definiteness and Ricci signs".to_string()));
    let schema_file = write_schema(ctx, "torus_flow.csv", &cols)?;

    let summary = serde_json::json!({
        "run": traj.run_record(),
        "monitors": report,
        "admissible_start": traj.admissible_start,
    });
    let json_file = write_json(ctx, "torus_flow.json", &summary)?;
    let exit_code = match traj.termination {
        TorusTermination::StepUnderflow => EXIT_NUMERIC,
        _ if !report.all_pass() => EXIT_ASSERTION,
        _ => EXIT_OK,
    };
    Ok(CmdOutcome {
        exit_code,
        files: vec![csv_file, schema_file, json_file],
        summary,
    })
}

pub fn cmd_shoot(scenario: &Scenario, ctx: &RunContext) -> Result<CmdOutcome> {
    let spec = scenario.bundle()?;
    let sys = CircleSystem::new(&spec)?;
    let params = scenario
        .shoot
        .as_ref()
        .ok_or_else(|| Error::Scenario("scenario has no shoot section".into()))?;
    match params.kind.as_str() {
        "unstable" => {
            let report = trace_unstable(&sys, params.eps, params.tol)?;
            let assertions = serde_json::json!({
                "a_rate_within_1pc": report.a_rate.rel_err < 0.01,
                "b_rates_within_1pc": report
                    .b_rates
                    .iter()
                    .flatten()
                    .all(|b| b.rel_err < 0.01),
                "einstein_residual_below_1e6": report.einstein_residual_rescaled < 1e-6,
                "opposite_branch_escapes": report.opposite_branch_blowup_u.is_some(),
                "monotone_quantity_nonincreasing": report.lambda_monotone,
            });
            let all = assertions
                .as_object()
                .unwrap()
                .values()
                .all(|v| v.as_bool().unwrap_or(false));
            // trajectory reference: the forward half of the branch
            let xi = sys.find_xi()?;
            let sp = xi_spectrum(&sys, &xi)?;
            let zmax = sp.negative_eigenvector.iter().cloned().fold(0.0f64, f64::max);
            let scale = xi.iter().cloned().fold(0.0f64, f64::max);
            let start: Vec<f64> = (0..sys.m)
                .map(|i| xi[i] - report.eps_used * scale * sp.negative_eigenvector[i] / zmax)
                .collect();
            let mut opts = FlowOptions::with_tol(params.tol);
            opts.capture = Some(CaptureConfig::new(sys.fixed_points(64)?));
            opts.region_events = false;
            let traj = integrate_u(&sys, &start, 1.0, (0.0, 5e6), &opts)?;
            let mut csv = Vec::new();
            traj.write_csv(&mut csv, sys.m)?;
            let csv_file = write_file(ctx, "shoot_trajectory.csv", &csv)?;
            let schema_file = write_schema(ctx, "shoot_trajectory.csv", &circle_csv_schema(sys.m))?;
            let summary = serde_json::json!({
                "report": report,
                "assertions": assertions,
                "trajectory_csv": "shoot_trajectory.csv",
            });
            let json_file = write_json(ctx, "shoot.json", &summary)?;
            Ok(CmdOutcome {
                exit_code: if all { EXIT_OK } else { EXIT_ASSERTION },
                files: vec![csv_file, schema_file, json_file],
                summary,
            })
        }
        "gamma" => {
            let k = params
                .k
                .ok_or_else(|| Error::Scenario("gamma shoot needs k".into()))?;
            let report = trace_gamma(&sys, k, params.eps, params.tol)?;
            let assertions = serde_json::json!({
                "a_rate_within_1pc": report.a_rate.rel_err < 0.01,
                "b_rate_within_1pc": report.b_rates[k - 1]
                    .as_ref()
                    .map(|b| b.rel_err < 0.01)
                    .unwrap_or(false),
                "bounded_coefficient_positive": report.b_constants[2 - k].unwrap_or(0.0) > 0.0,
                "sub_bundle_einstein_residual": report.einstein_residual_rescaled < 1e-10,
            });
            let all = assertions
                .as_object()
                .unwrap()
                .values()
                .all(|v| v.as_bool().unwrap_or(false));
            // trajectory reference: the branch re-shot with the step the
            // trace settled on, run forward over a bounded window
            let xi = sys.find_xi()?;
            let w = crate::spectral::xi_eigenvector_for_alpha_index(&sys, &xi, 1)?;
            let wmax = w.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
            let scale = xi.iter().cloned().fold(0.0f64, f64::max);
            let kk = k - 1;
            let mut start: Vec<f64> = (0..2)
                .map(|i| xi[i] + report.eps_used * scale * w[i] / wmax)
                .collect();
            if !sys.classify_region(&start).in_omega_theta(&[kk]) {
                start = (0..2)
                    .map(|i| xi[i] - report.eps_used * scale * w[i] / wmax)
                    .collect();
            }
            let mut opts = FlowOptions::with_tol(params.tol);
            opts.region_events = false;
            let traj = integrate_u(&sys, &start, 1.0, (0.0, 40.0), &opts)?;
            let mut csv = Vec::new();
            traj.write_csv(&mut csv, sys.m)?;
            let csv_file = write_file(ctx, "shoot_trajectory.csv", &csv)?;
            let schema_file =
                write_schema(ctx, "shoot_trajectory.csv", &circle_csv_schema(sys.m))?;
            let summary = serde_json::json!({
                "report": report,
                "assertions": assertions,
                "trajectory_csv": "shoot_trajectory.csv",
            });
            let json_file = write_json(ctx, "shoot.json", &summary)?;
            Ok(CmdOutcome {
                exit_code: if all { EXIT_OK } else { EXIT_ASSERTION },
                files: vec![csv_file, schema_file, json_file],
                summary,
            })
        }
        "classify" => {
            let y0 = params
                .y0
                .as_ref()
                .ok_or_else(|| Error::Scenario("classify shoot needs y0".into()))?;
            let tag = classify_backward_limit(&sys, y0, params.tol)?;
            // trajectory reference: the backward run over a bounded window
            let mut opts = FlowOptions::with_tol(params.tol);
            opts.region_events = false;
            opts.blowup = false;
            let traj = integrate_u(&sys, y0, 1.0, (0.0, -30.0), &opts)?;
            let mut csv = Vec::new();
            traj.write_csv(&mut csv, sys.m)?;
            let csv_file = write_file(ctx, "shoot_trajectory.csv", &csv)?;
            let schema_file =
                write_schema(ctx, "shoot_trajectory.csv", &circle_csv_schema(sys.m))?;
            let summary = serde_json::json!({
                "y0": y0,
                "backward_limit": tag,
                "trajectory_csv": "shoot_trajectory.csv",
            });
            let json_file = write_json(ctx, "shoot.json", &summary)?;
            Ok(CmdOutcome {
                exit_code: EXIT_OK,
                files: vec![csv_file, schema_file, json_file],
                summary,
            })
        }
        other => Err(Error::Scenario(format!(
            "unknown shoot kind {other:?}; expected unstable, gamma, or classify"
        ))),
    }
}

pub fn cmd_diagnose(scenario: &Scenario, ctx: &RunContext) -> Result<CmdOutcome> {
    let spec = scenario.bundle()?;
    let params = scenario
        .diagnose
        .as_ref()
        .ok_or_else(|| Error::Scenario("scenario has no diagnose section".into()))?;
    let k = params
        .base_curvature
        .clone()
        .unwrap_or_else(|| vec![1.0; spec.m]);
    if k.len() != spec.m {
        return Err(Error::Scenario("base_curvature must have one entry per factor".into()));
    }

    let states: Vec<(f64, TorusState)> = match params.clock.as_str() {
        "tau" if spec.r == 1 => {
            let sys = CircleSystem::new(&spec)?;
            let b0 = params
                .b0
                .as_ref()
                .ok_or_else(|| Error::Scenario("tau-clock diagnose needs b0".into()))?;
            let mut opts = FlowOptions::with_tol(params.tol);
            opts.region_events = false;
            let traj = integrate_tau(
                &sys,
                &CircleState::new(params.a0, b0.clone()),
                (params.span[0], params.span[1]),
                &opts,
            )?;
            circle_states(&traj)
        }
        "tau" => {
            let b0 = params
                .b0
                .as_ref()
                .ok_or_else(|| Error::Scenario("tau-clock diagnose needs b0".into()))?;
            // rank r > 1: scalar initial fibre metric a0 * I
            let h0 = DMatrix::from_diagonal_element(spec.r, spec.r, params.a0);
            let traj = integrate_torus(
                &spec,
                &TorusState::new(h0, b0.clone()),
                (params.span[0], params.span[1]),
                &TorusFlowOptions::with_tol(params.tol),
            )?;
            torus_states(&traj, spec.r)
        }
        other => {
            return Err(Error::Scenario(format!(
                "diagnose supports the \"tau\" clock, got {other:?}"
            )))
        }
    };

    let type_one = type_one_product(&spec, &states, &k, TypeOneClock::ForwardTau);
    let volume = volume_proxy(&spec, &states);
    let slope = loglog_slope(&volume, 1.0);
    let mut min_ricci = f64::MAX;
    let mut running_max: f64 = 0.0;
    let mut rows = Vec::new();
    for ((tau, state), (_, tk)) in states.iter().zip(&type_one) {
        let snap = ricci(&spec, state, &k);
        min_ricci = min_ricci.min(snap.min_ricci());
        running_max = running_max.max(*tk);
        let (scalar, _) = scalar_curvature_forms(&spec, state);
        rows.push(vec![*tau, scalar, snap.min_ricci(), snap.max_ricci_abs(), *tk]);
    }
    let mut csv = Vec::new();
    writeln!(csv, "tau,scalar,min_ricci,max_ricci_abs,type_one_product")?;
    for row in &rows {
        let line: Vec<String> = row.iter().map(|&v| fmt_f(v)).collect();
        writeln!(csv, "{}", line.join(","))?;
    }
    let csv_file = write_file(ctx, "diagnose.csv", &csv)?;
    let schema_file = write_schema(
        ctx,
        "diagnose.csv",
        &[
            ("tau".to_string(), "backwards time".to_string()),
            ("scalar".to_string(), "scalar curvature".to_string()),
            ("min_ricci".to_string(), "smallest Ricci eigenvalue".to_string()),
            ("max_ricci_abs".to_string(), "largest Ricci magnitude".to_string()),
            ("type_one_product".to_string(), "time-curvature surrogate product".to_string()),
        ],
    )?;
    let summary = serde_json::json!({
        "min_ricci_eigenvalue": min_ricci,
        "type_one_running_max": running_max,
        "volume_slope_last_decade": slope,
        "samples": rows.len(),
    });
    let json_file = write_json(ctx, "diagnose.json", &summary)?;
    Ok(CmdOutcome {
        exit_code: EXIT_OK,
        files: vec![csv_file, schema_file, json_file],
        summary,
    })
}

pub fn cmd_portrait(scenario: &Scenario, ctx: &RunContext) -> Result<CmdOutcome> {
    let spec = scenario.bundle()?;
    let sys = CircleSystem::new(&spec)?;
    let params = scenario
        .portrait
        .as_ref()
        .ok_or_else(|| Error::Scenario("scenario has no portrait section".into()))?;
    if !(sys.m == 2 || sys.m == 3) {
        return Err(Error::Scenario("portrait grids support m = 2 or 3".into()));
    }
    let total = params.resolution.pow(sys.m as u32);
    if total > 1_000_000 {
        return Err(Error::Scenario(format!(
            "grid of {total} points exceeds the 1e6 cap"
        )));
    }
    let fps = sys.fixed_points(64)?;

    // grid in row-major order over [0, ymax]^m
    let coords: Vec<Vec<f64>> = (0..total)
        .map(|flat| {
            let mut idx = flat;
            let mut y = vec![0.0; sys.m];
            for slot in (0..sys.m).rev() {
                let i = idx % params.resolution;
                idx /= params.resolution;
                y[slot] = params.ymax * i as f64 / (params.resolution - 1).max(1) as f64;
            }
            y
        })
        .collect();

    // a short forward run cannot wait for strict capture (the origin is
    // approached algebraically), so the tag is the nearest fixed point at
    // the horizon when one is close
    let basin_tag = |y0: &[f64]| -> String {
        if !params.basin {
            return "-".into();
        }
        let mut opts = FlowOptions::with_tol(params.tol);
        opts.region_events = false;
        match integrate_u(&sys, y0, 1.0, (0.0, params.horizon), &opts) {
            Ok(traj) => match traj.termination {
                Termination::BlowUp => "blowup".into(),
                _ => {
                    let end = &traj.last().y;
                    let (tag, dist) = fps.nearest(end);
                    let scale = 1.0 + end.iter().cloned().fold(0.0f64, f64::max);
                    if dist < 0.05 * scale {
                        tag
                    } else {
                        "none".into()
                    }
                }
            },
            Err(_) => "error".into(),
        }
    };
    let rows: Vec<String> = coords
        .par_iter()
        .map(|y| {
            let f = sys.deficit(y);
            let g = sys.g_norm_inf(y);
            let lambda = if y.iter().all(|&v| v > 0.0) {
                sys.lambda_bar(y).unwrap_or(f64::NAN)
            } else {
                f64::NAN
            };
            let region = sys.classify_region(y);
            let tag = basin_tag(y);
            let mut fields: Vec<String> = y.iter().map(|&v| fmt_f(v)).collect();
            fields.extend(f.iter().map(|&v| fmt_f(v)));
            fields.push(fmt_f(g));
            fields.push(fmt_f(lambda));
            fields.push(region.flags());
            fields.push(tag);
            fields.join(",")
        })
        .collect();

    let mut header: Vec<String> = (1..=sys.m).map(|i| format!("Y_{i}")).collect();
    header.extend((1..=sys.m).map(|i| format!("F_{i}")));
    header.push("g_norm".into());
    header.push("lambda_bar".into());
    header.push("region_flags".into());
    header.push("basin".into());
    let mut csv = Vec::new();
    writeln!(csv, "{}", header.join(","))?;
    for row in rows {
        writeln!(csv, "{row}")?;
    }
    let csv_file = write_file(ctx, "portrait.csv", &csv)?;
    let cols: Vec<(String, String)> = header
        .iter()
        .map(|h| (h.clone(), "portrait grid column".to_string()))
        .collect();
    let schema_file = write_schema(ctx, "portrait.csv", &cols)?;
    let summary = serde_json::json!({
        "points": total,
        "resolution": params.resolution,
        "ymax": params.ymax,
    });
    Ok(CmdOutcome {
        exit_code: EXIT_OK,
        files: vec![csv_file, schema_file],
        summary,
    })
}

pub fn cmd_verify(scenario: &Scenario, ctx: &RunContext) -> Result<CmdOutcome> {
    let params = scenario.verify.as_ref();
    let opts = VerifyOptions {
        criteria: params.and_then(|p| p.criteria.clone()),
        seed: ctx.seed,
        slack: params.map(|p| p.slack).unwrap_or(1.0),
        c0_scale: params.map(|p| p.c0_scale).unwrap_or(1.0),
    };
    let results = run_suite(&opts);
    for r in &results {
        println!(
            "criterion {:2} {:32} {} ({:.2}s/{:.1}s) {}",
            r.id,
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.runtime_s,
            r.runtime_limit_s,
            r.details
        );
    }
    let all_pass = results.iter().all(|r| r.passed);
    // wall times stay off the artifact so reruns are byte-identical
    let report: Vec<serde_json::Value> = results
        .iter()
        .map(|r| {
            serde_json::json!({
                "id": r.id,
                "name": r.name,
                "passed": r.checks_passed,
                "details": r.details,
            })
        })
        .collect();
    let summary = serde_json::json!({
        "criteria": report,
        "all_pass": all_pass,
        "seed": opts.seed,
        "slack": opts.slack,
    });
    let file = write_json(ctx, "verify_report.json", &summary)?;
    Ok(CmdOutcome {
        exit_code: if all_pass { EXIT_OK } else { EXIT_ASSERTION },
        files: vec![file],
        summary,
    })
}

/// Dispatch a named command; unknown names are scenario errors.
pub fn run_command(name: &str, scenario: &Scenario, ctx: &RunContext) -> Result<CmdOutcome> {
    let exec = || match name {
        "fixed-points" => cmd_fixed_points(scenario, ctx),
        "spectrum" => cmd_spectrum(scenario, ctx),
        "flow" => cmd_flow(scenario, ctx),
        "torus-flow" => cmd_torus_flow(scenario, ctx),
        "shoot" => cmd_shoot(scenario, ctx),
        "diagnose" => cmd_diagnose(scenario, ctx),
        "portrait" => cmd_portrait(scenario, ctx),
        "verify" => cmd_verify(scenario, ctx),
        other => Err(Error::Scenario(format!("unknown command {other:?}"))),
    };
    match ctx.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Scenario(format!("thread pool: {e}")))?
            .install(exec),
        None => exec(),
    }
}

/// Exit code for an error that prevented a command from running.
pub fn error_exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidSpec(_) | Error::Scenario(_) | Error::Domain(_) => EXIT_INVALID,
        _ => EXIT_ASSERTION,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn ctx() -> (tempfile_like::TempDir, RunContext) {
        let dir = tempfile_like::TempDir::new("aflab-scenario-test");
        let ctx = RunContext {
            out_dir: dir.path.clone(),
            seed: 0,
            threads: None,
        };
        (dir, ctx)
    }

    // minimal scoped temp dir to keep the test deps lean
    mod tempfile_like {
        use std::path::PathBuf;
        pub struct TempDir {
            pub path: PathBuf,
        }
        impl TempDir {
            pub fn new(prefix: &str) -> Self {
                let path = std::env::temp_dir().join(format!(
                    "{prefix}-{}-{:?}",
                    std::process::id(),
                    std::thread::current().id()
                ));
                std::fs::create_dir_all(&path).unwrap();
                TempDir { path }
            }
        }
        impl Drop for TempDir {
            fn drop(&mut self) {
                let _ = std::fs::remove_dir_all(&self.path);
            }
        }
    }

    fn sym2_scenario(extra: &str) -> Scenario {
        let spec = serde_json::to_string(&presets::sym2()).unwrap();
        let text = format!(r#"{{"bundle": {spec}{extra}}}"#);
        Scenario::from_json(&text).unwrap()
    }

    #[test]
    fn scenario_rejects_unknown_keys() {
        let spec = serde_json::to_string(&presets::sym2()).unwrap();
        let bad = format!(r#"{{"bundle": {spec}, "unexpected": 1}}"#);
        assert!(Scenario::from_json(&bad).is_err());
        let bad_nested = format!(
            r#"{{"bundle": {spec}, "flow": {{"clock": "u", "span": [0, 1], "bogus": 2}}}}"#
        );
        assert!(Scenario::from_json(&bad_nested).is_err());
    }

    #[test]
    fn fixed_points_command_writes_report() {
        let (_dir, ctx) = ctx();
        let scenario = sym2_scenario("");
        let outcome = cmd_fixed_points(&scenario, &ctx).unwrap();
        assert_eq!(outcome.exit_code, EXIT_OK);
        assert!(outcome.files[0].exists());
        let points = outcome.summary["points"].as_array().unwrap();
        assert_eq!(points.len(), 4); // origin, two singletons, interior
    }

    #[test]
    fn bundle_can_be_loaded_from_a_path() {
        let (_dir, ctx) = ctx();
        let bundle_path = ctx.out_dir.join("bundle.json");
        std::fs::write(
            &bundle_path,
            serde_json::to_string(&presets::sym2()).unwrap(),
        )
        .unwrap();
        let text = format!(
            r#"{{"bundle": {{"path": {}}}}}"#,
            serde_json::to_string(bundle_path.to_str().unwrap()).unwrap()
        );
        let scenario = Scenario::from_json(&text).unwrap();
        assert_eq!(scenario.bundle().unwrap(), presets::sym2());
    }

    #[test]
    fn single_factor_fixed_points_have_no_proper_subsets() {
        let (_dir, ctx) = ctx();
        let spec = serde_json::to_string(&BundleSpec::new(1, 1, vec![1], vec![2], vec![vec![1]]))
            .unwrap();
        let scenario = Scenario::from_json(&format!(r#"{{"bundle": {spec}}}"#)).unwrap();
        let outcome = cmd_fixed_points(&scenario, &ctx).unwrap();
        let points = outcome.summary["points"].as_array().unwrap();
        assert_eq!(points.len(), 2); // origin and the interior point only
        assert!(points.iter().any(|p| p["tag"] == "xi"));
    }

    #[test]
    fn flow_command_emits_csv_and_schema() {
        let (_dir, ctx) = ctx();
        let scenario =
            sym2_scenario(r#", "flow": {"clock": "u", "span": [0, 5], "y0": [0.5, 0.5]}"#);
        let outcome = cmd_flow(&scenario, &ctx).unwrap();
        assert_eq!(outcome.exit_code, EXIT_OK);
        let csv = std::fs::read_to_string(&outcome.files[0]).unwrap();
        assert!(csv.starts_with("u,tau,a,b_1,b_2"));
        let schema = std::fs::read_to_string(&outcome.files[1]).unwrap();
        assert!(schema.contains("lambda_bar"));
    }

    #[test]
    fn flow_outputs_are_byte_identical() {
        let (_dir1, ctx1) = ctx();
        let scenario =
            sym2_scenario(r#", "flow": {"clock": "tau", "span": [0, 10], "a0": 0.1, "b0": [1.0, 1.0]}"#);
        let out1 = cmd_flow(&scenario, &ctx1).unwrap();
        let bytes1 = std::fs::read(&out1.files[0]).unwrap();
        let dir2 = tempfile_like::TempDir::new("aflab-scenario-test2");
        let ctx2 = RunContext {
            out_dir: dir2.path.clone(),
            seed: 0,
            threads: None,
        };
        let out2 = cmd_flow(&scenario, &ctx2).unwrap();
        let bytes2 = std::fs::read(&out2.files[0]).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn portrait_rejects_oversized_grids() {
        let (_dir, ctx) = ctx();
        let scenario =
            sym2_scenario(r#", "portrait": {"ymax": 3.0, "resolution": 1001}"#);
        let err = cmd_portrait(&scenario, &ctx).unwrap_err();
        assert_eq!(error_exit_code(&err), EXIT_INVALID);
    }

    #[test]
    fn portrait_small_grid() {
        let (_dir, ctx) = ctx();
        let scenario = sym2_scenario(
            r#", "portrait": {"ymax": 3.0, "resolution": 9, "horizon": 50.0, "tol": 1e-6}"#,
        );
        let outcome = cmd_portrait(&scenario, &ctx).unwrap();
        assert_eq!(outcome.exit_code, EXIT_OK);
        let csv = std::fs::read_to_string(&outcome.files[0]).unwrap();
        assert_eq!(csv.lines().count(), 1 + 81);
        // interior points of the nonnegative-deficit region reach the
        // origin, and by convexity each grid row meets the region in one
        // contiguous run of columns
        let mut rows: Vec<Vec<&str>> = Vec::new();
        let lines: Vec<&str> = csv.lines().skip(1).collect();
        for chunk in lines.chunks(9) {
            rows.push(chunk.to_vec());
        }
        for row in &rows {
            let mut pattern = String::new();
            for line in row {
                let fields: Vec<&str> = line.split(',').collect();
                let flags = fields[fields.len() - 2];
                let basin = fields[fields.len() - 1];
                let inside = !flags.contains('-');
                pattern.push(if inside { '1' } else { '0' });
                if flags == "++" {
                    assert_eq!(basin, "origin", "line: {line}");
                }
            }
            let trimmed = pattern.trim_matches('0');
            assert!(
                !trimmed.contains('0'),
                "row membership is not an interval: {pattern}"
            );
        }
    }

    #[test]
    fn torus_flow_command_runs_monitors() {
        let (_dir, ctx) = ctx();
        let spec = serde_json::to_string(&presets::tor()).unwrap();
        let text = format!(
            r#"{{"bundle": {spec}, "torus_flow": {{"h0": [[0.001, 0.0],[0.0, 0.001]], "b0": [1.0,1.0,1.0], "span": [0, 50]}}}}"#
        );
        let scenario = Scenario::from_json(&text).unwrap();
        let outcome = cmd_torus_flow(&scenario, &ctx).unwrap();
        assert_eq!(outcome.exit_code, EXIT_OK);
        assert_eq!(outcome.summary["admissible_start"], true);
    }

    #[test]
    fn verify_subset_runs() {
        let (_dir, ctx) = ctx();
        let scenario = Scenario::from_json(r#"{"verify": {"criteria": [1]}}"#).unwrap();
        let outcome = cmd_verify(&scenario, &ctx).unwrap();
        assert_eq!(outcome.exit_code, EXIT_OK);
        assert_eq!(outcome.summary["all_pass"], true);
    }

    #[test]
    fn verify_negative_control_fails() {
        let (_dir, ctx) = ctx();
        let scenario =
            Scenario::from_json(r#"{"verify": {"criteria": [0], "c0_scale": 0.5}}"#).unwrap();
        let outcome = cmd_verify(&scenario, &ctx).unwrap();
        assert_eq!(outcome.exit_code, EXIT_ASSERTION);
    }
}
