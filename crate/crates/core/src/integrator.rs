//! Adaptive integration of the rank-one system in both clocks, with event
//! detection and dual-clock reconstruction.
//!
//! The rescaled clock `u` evolves `(Y, ln a, tau)` jointly and the backwards
//! clock `tau` evolves `(a, b, u)` jointly, so each run carries the other
//! clock at the stepper's order and no post-hoc quadrature is needed.

use crate::circle::{CircleState, CircleSystem, FixedPointSet, RegionTag};
use crate::error::{Error, Result};
use crate::ode::{self, DenseStep, RunEnd, StepControl, StepperOptions};
use serde::Serialize;
use std::io::Write;

/// One accepted integration sample with its diagnostics snapshot.
#[derive(Debug, Clone, Serialize)]
pub struct Sample {
    pub u: f64,
    pub tau: f64,
    pub a: f64,
    /// Base coefficients `a / Y_i`; NaN where the phase point has `Y_i = 0`.
    pub b: Vec<f64>,
    pub y: Vec<f64>,
    pub energy: f64,
    pub deficit: Vec<f64>,
    pub lambda_bar: Option<f64>,
    pub region: RegionTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    FixedPointCapture,
    BlowUp,
    RegionChange,
    HyperplaneApproach,
}

#[derive(Debug, Clone, Serialize)]
pub struct Event {
    pub kind: EventKind,
    pub u: f64,
    pub tau: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Termination {
    ReachedSpan,
    FixedPointCapture { target: String },
    BlowUp,
    RegionExit,
    StepUnderflow,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub termination: Termination,
}

/// Fixed-point capture test: both the field norm and the distance to a known
/// fixed point must be small, since the field norm alone cannot distinguish
/// slow transit near a saddle from capture.
#[derive(Debug, Clone)]
pub struct CaptureConfig {
    pub g_tol: f64,
    pub dist_tol: f64,
    pub targets: FixedPointSet,
}

impl CaptureConfig {
    pub fn new(targets: FixedPointSet) -> Self {
        CaptureConfig {
            g_tol: 1e-10,
            dist_tol: 1e-6,
            targets,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowOptions {
    pub tol: f64,
    pub capture: Option<CaptureConfig>,
    /// Blow-up triggers when some `Y_i` exceeds its threshold by this factor;
    /// the margin avoids false positives from transients.
    pub blowup_factor: f64,
    pub blowup: bool,
    pub region_events: bool,
    pub region_exit_terminates: bool,
    /// Times (in the clock being integrated) that must appear as samples.
    pub checkpoints: Vec<f64>,
    pub max_steps: usize,
}

impl FlowOptions {
    pub fn with_tol(tol: f64) -> Self {
        FlowOptions {
            tol,
            capture: None,
            blowup_factor: 10.0,
            blowup: true,
            region_events: true,
            region_exit_terminates: false,
            checkpoints: Vec::new(),
            max_steps: 50_000_000,
        }
    }
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has samples")
    }

    pub fn first_event(&self, kind: EventKind) -> Option<&Event> {
        self.events.iter().find(|e| e.kind == kind)
    }

    /// Sample whose `tau` is closest to the requested time.
    pub fn sample_at_tau(&self, tau: f64) -> Option<&Sample> {
        self.samples
            .iter()
            .min_by(|a, b| (a.tau - tau).abs().total_cmp(&(b.tau - tau).abs()))
    }

    pub fn csv_header(m: usize) -> Vec<String> {
        let mut cols = vec!["u".to_string(), "tau".to_string(), "a".to_string()];
        cols.extend((1..=m).map(|i| format!("b_{i}")));
        cols.extend((1..=m).map(|i| format!("Y_{i}")));
        cols.push("E".to_string());
        cols.extend((1..=m).map(|i| format!("F_{i}")));
        cols.push("lambda_bar".to_string());
        cols.push("region_flags".to_string());
        cols
    }

    /// CSV with one row per sample; numbers carry 17 significant digits so
    /// they round-trip exactly.
    pub fn write_csv<W: Write>(&self, mut w: W, m: usize) -> Result<()> {
        writeln!(w, "{}", Self::csv_header(m).join(","))?;
        for s in &self.samples {
            let mut fields = vec![fmt_f(s.u), fmt_f(s.tau), fmt_f(s.a)];
            fields.extend(s.b.iter().map(|&v| fmt_f(v)));
            fields.extend(s.y.iter().map(|&v| fmt_f(v)));
            fields.push(fmt_f(s.energy));
            fields.extend(s.deficit.iter().map(|&v| fmt_f(v)));
            fields.push(fmt_f(s.lambda_bar.unwrap_or(f64::NAN)));
            fields.push(s.region.flags());
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn run_record(&self) -> serde_json::Value {
        serde_json::json!({
            "samples": self.samples.len(),
            "termination": self.termination,
            "events": self.events,
            "final": self.samples.last(),
        })
    }
}

pub fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn make_sample(sys: &CircleSystem, u: f64, tau: f64, a: f64, y: &[f64]) -> Sample {
    let b: Vec<f64> = y
        .iter()
        .map(|&yi| if yi > 0.0 { a / yi } else { f64::NAN })
        .collect();
    let lambda_bar = if y.iter().all(|&v| v > 0.0) {
        sys.lambda_bar(y).ok()
    } else {
        None
    };
    Sample {
        u,
        tau,
        a,
        b,
        y: y.to_vec(),
        energy: sys.energy(y),
        deficit: sys.deficit(y),
        lambda_bar,
        region: sys.classify_region(y),
    }
}

/// Integrate `dY_i/du = -Y_i F_i(Y)` jointly with `d(ln a)/du = E(Y)` and
/// `dtau/du = a`, forward or backward in `u`.
pub fn integrate_u(
    sys: &CircleSystem,
    y0: &[f64],
    a0: f64,
    u_span: (f64, f64),
    opts: &FlowOptions,
) -> Result<Trajectory> {
    if y0.len() != sys.m {
        return Err(Error::Domain("initial phase point has wrong dimension".into()));
    }
    if y0.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain("initial phase point must be nonnegative".into()));
    }
    if a0 <= 0.0 {
        return Err(Error::Domain("initial fibre coefficient must be positive".into()));
    }
    if opts.tol <= 0.0 {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let m = sys.m;
    let dim = m + 2;
    let mut state0 = vec![0.0; dim];
    state0[..m].copy_from_slice(y0);
    state0[m] = a0.ln();
    state0[m + 1] = 0.0;

    let thresholds = sys.blowup_threshold();
    let cap: f64 = opts.blowup_factor * thresholds.iter().cloned().fold(0.0, f64::max);
    let initially_positive: Vec<bool> = y0.iter().map(|&v| v > 0.0).collect();
    let hyper_tol = 1e-12 * (1.0 + y0.iter().cloned().fold(0.0, f64::max));

    let mut samples = vec![make_sample(sys, u_span.0, 0.0, a0, y0)];
    let mut events: Vec<Event> = Vec::new();
    let mut termination = Termination::ReachedSpan;
    let mut hyper_flagged = vec![false; m];
    let mut prev_region = sys.classify_region(y0);

    let mut stepper_opts = StepperOptions::with_tol(opts.tol);
    stepper_opts.max_steps = opts.max_steps;

    let f = |_t: f64, s: &[f64], ds: &mut [f64]| {
        let (y, rest) = s.split_at(m);
        let a = rest[0].exp();
        sys.field_into(y, &mut ds[..m]);
        ds[m] = sys.energy(y);
        ds[m + 1] = a;
    };
    let guard = |s: &[f64]| s[..m].iter().all(|&v| v >= 0.0) && s[m].is_finite();

    let run = ode::integrate(
        f,
        u_span.0,
        &state0,
        u_span.1,
        &stepper_opts,
        guard,
        &opts.checkpoints,
        |step: &DenseStep| {
            let u1 = step.t1;
            let y1 = &step.y1[..m];
            let a1 = step.y1[m].exp();
            let tau1 = step.y1[m + 1];
            let mut control = StepControl::Continue;
            let mut sample_time = u1;
            let mut sample_state: Option<Vec<f64>> = None;

            // blow-up: localize the first threshold crossing inside the step
            if opts.blowup {
                let trigger = |y: &[f64]| -> f64 {
                    let mut worst = f64::MIN;
                    for i in 0..m {
                        worst = worst.max(y[i] / (opts.blowup_factor * thresholds[i]) - 1.0);
                        worst = worst.max(y[i] / cap - 1.0);
                    }
                    worst
                };
                if trigger(y1) >= 0.0 {
                    let t_hit = if trigger(&step.y0[..m]) < 0.0 {
                        step.locate_root(|_t, s| trigger(&s[..m]), 1e-10)
                    } else {
                        step.t0
                    };
                    let hit = step.eval(t_hit);
                    events.push(Event {
                        kind: EventKind::BlowUp,
                        u: t_hit,
                        tau: hit[m + 1],
                        detail: format!(
                            "phase point exceeded {} x threshold",
                            opts.blowup_factor
                        ),
                    });
                    termination = Termination::BlowUp;
                    control = StepControl::Stop;
                    sample_time = t_hit;
                    sample_state = Some(hit);
                }
            }

            // region flag changes
            if control == StepControl::Continue && opts.region_events {
                let region1 = sys.classify_region(y1);
                if region1.signs != prev_region.signs {
                    let f0 = sys.deficit(&step.y0[..m]);
                    let f1 = sys.deficit(y1);
                    let mut earliest = u1;
                    for i in 0..m {
                        if (f0[i] <= 0.0) != (f1[i] <= 0.0) {
                            let t_hit =
                                step.locate_root(|_t, s| sys.deficit(&s[..m])[i], 1e-10);
                            if (t_hit - step.t0).abs() < (earliest - step.t0).abs() {
                                earliest = t_hit;
                            }
                        }
                    }
                    let at = step.eval(earliest);
                    events.push(Event {
                        kind: EventKind::RegionChange,
                        u: earliest,
                        tau: at[m + 1],
                        detail: format!("flags {} -> {}", prev_region.flags(), region1.flags()),
                    });
                    if opts.region_exit_terminates {
                        termination = Termination::RegionExit;
                        control = StepControl::Stop;
                    }
                    prev_region = region1;
                }
            }

            // hyperplane approach (recorded once per component)
            for i in 0..m {
                if initially_positive[i] && !hyper_flagged[i] && y1[i] < hyper_tol {
                    hyper_flagged[i] = true;
                    events.push(Event {
                        kind: EventKind::HyperplaneApproach,
                        u: u1,
                        tau: tau1,
                        detail: format!("Y_{} fell below {hyper_tol:.1e}", i + 1),
                    });
                }
            }

            // capture at a known fixed point
            if control == StepControl::Continue {
                if let Some(cfg) = &opts.capture {
                    if sys.g_norm_inf(y1) < cfg.g_tol {
                        let (tag, dist) = cfg.targets.nearest(y1);
                        if dist < cfg.dist_tol {
                            events.push(Event {
                                kind: EventKind::FixedPointCapture,
                                u: u1,
                                tau: tau1,
                                detail: format!("{tag} at distance {dist:.3e}"),
                            });
                            termination = Termination::FixedPointCapture { target: tag };
                            control = StepControl::Stop;
                        }
                    }
                }
            }

            match sample_state {
                Some(s) => samples.push(make_sample(
                    sys,
                    sample_time,
                    s[m + 1],
                    s[m].exp(),
                    &s[..m],
                )),
                None => samples.push(make_sample(sys, u1, tau1, a1, y1)),
            }
            control
        },
    );

    if run.end == RunEnd::StepUnderflow || run.end == RunEnd::StepBudgetExhausted {
        termination = Termination::StepUnderflow;
    }
    Ok(Trajectory {
        samples,
        events,
        termination,
    })
}

/// Integrate the metric-coefficient system `da/dtau = sum n_i q_i^2 a^2/b_i^2`,
/// `db_i/dtau = 2 p_i - q_i^2 a/b_i` jointly with `du/dtau = 1/a`. The
/// genuine singularity where some `b_i` reaches zero terminates with a
/// blow-up event before the step underflows.
pub fn integrate_tau(
    sys: &CircleSystem,
    state0: &CircleState,
    tau_span: (f64, f64),
    opts: &FlowOptions,
) -> Result<Trajectory> {
    if state0.a <= 0.0 || state0.b.iter().any(|&v| v <= 0.0) {
        return Err(Error::Domain("metric coefficients must be positive".into()));
    }
    if state0.b.len() != sys.m {
        return Err(Error::Domain("state has wrong dimension".into()));
    }
    let m = sys.m;
    let dim = m + 2;
    let mut packed0 = vec![0.0; dim];
    packed0[0] = state0.a;
    packed0[1..=m].copy_from_slice(&state0.b);
    packed0[m + 1] = 0.0; // u

    let b_floor = 1e-8 * state0.b.iter().cloned().fold(f64::MAX, f64::min);
    let thresholds = sys.blowup_threshold();

    let tau_sample = |s: &[f64], tau: f64| -> Sample {
        let a = s[0];
        let y: Vec<f64> = (1..=m).map(|i| a / s[i]).collect();
        let mut sample = make_sample(sys, s[m + 1], tau, a, &y);
        sample.b = s[1..=m].to_vec();
        sample
    };

    let mut samples = vec![tau_sample(&packed0, tau_span.0)];
    let mut events: Vec<Event> = Vec::new();
    let mut termination = Termination::ReachedSpan;
    let mut prev_region = sys.classify_region(&samples[0].y);

    let mut stepper_opts = StepperOptions::with_tol(opts.tol);
    stepper_opts.max_steps = opts.max_steps;

    let f = |_t: f64, s: &[f64], ds: &mut [f64]| {
        let a = s[0];
        let mut da = 0.0;
        for i in 0..m {
            let b = s[1 + i];
            da += sys.nq2[i] * a * a / (b * b);
            ds[1 + i] = 2.0 * sys.p[i] - sys.q2[i] * a / b;
        }
        ds[0] = da;
        ds[m + 1] = 1.0 / a;
    };
    let guard = |s: &[f64]| s[0] > 0.0 && s[1..=m].iter().all(|&v| v > 0.0);

    let run = ode::integrate(
        f,
        tau_span.0,
        &packed0,
        tau_span.1,
        &stepper_opts,
        guard,
        &opts.checkpoints,
        |step: &DenseStep| {
            let tau1 = step.t1;
            let mut control = StepControl::Continue;

            // finite-time singularity: a base coefficient collapsing to its
            // floor, or equivalently a phase ratio far beyond its threshold
            let trigger = |s: &[f64]| -> f64 {
                let mut worst = b_floor / s[1..=m].iter().cloned().fold(f64::MAX, f64::min) - 1.0;
                for i in 0..m {
                    worst = worst
                        .max(s[0] / s[1 + i] / (opts.blowup_factor * thresholds[i]) - 1.0);
                }
                worst
            };
            if opts.blowup && trigger(step.y1) >= 0.0 {
                let t_hit = if trigger(step.y0) < 0.0 {
                    step.locate_root(|_t, s| trigger(s), 1e-10)
                } else {
                    step.t0
                };
                let hit = step.eval(t_hit);
                events.push(Event {
                    kind: EventKind::BlowUp,
                    u: hit[m + 1],
                    tau: t_hit,
                    detail: "metric approached the finite-time singularity".into(),
                });
                termination = Termination::BlowUp;
                samples.push(tau_sample(&hit, t_hit));
                return StepControl::Stop;
            }

            if opts.region_events {
                let a1 = step.y1[0];
                let y1: Vec<f64> = (1..=m).map(|i| a1 / step.y1[i]).collect();
                let region1 = sys.classify_region(&y1);
                if region1.signs != prev_region.signs {
                    events.push(Event {
                        kind: EventKind::RegionChange,
                        u: step.y1[m + 1],
                        tau: tau1,
                        detail: format!("flags {} -> {}", prev_region.flags(), region1.flags()),
                    });
                    if opts.region_exit_terminates {
                        termination = Termination::RegionExit;
                        control = StepControl::Stop;
                    }
                    prev_region = region1;
                }
            }

            samples.push(tau_sample(step.y1, tau1));
            control
        },
    );

    if run.end == RunEnd::StepUnderflow || run.end == RunEnd::StepBudgetExhausted {
        termination = Termination::StepUnderflow;
    }
    Ok(Trajectory {
        samples,
        events,
        termination,
    })
}

/// Agreement between the two parametrizations started from the same data.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub max_rel_dev: f64,
    pub compared_points: usize,
    pub horizon: f64,
    pub tol: f64,
}

impl ConsistencyReport {
    pub fn passes(&self) -> bool {
        self.max_rel_dev < 100.0 * self.tol
    }
}

/// Run both parametrizations from the same initial data, map the `u`-run
/// samples to their `tau` values, and report the worst relative deviation of
/// the metric coefficients between the runs.
pub fn crosscheck_clocks(
    sys: &CircleSystem,
    state0: &CircleState,
    horizon: f64,
    tol: f64,
) -> Result<ConsistencyReport> {
    if horizon < 0.0 {
        return Err(Error::Domain("horizon must be nonnegative".into()));
    }
    if horizon == 0.0 {
        return Ok(ConsistencyReport {
            max_rel_dev: 0.0,
            compared_points: 1,
            horizon,
            tol,
        });
    }
    let y0 = state0.y();
    let m = sys.m;

    // u-clock run in log variables (the phase components stay positive for
    // metric initial data, and log form keeps their error control relative),
    // stopped exactly on the tau horizon via the interpolant
    let mut u_samples: Vec<(f64, f64, Vec<f64>)> = Vec::new(); // (tau, a, b)
    {
        let stepper_opts = StepperOptions::with_tol(tol);
        let mut state = vec![0.0; m + 2];
        for i in 0..m {
            state[i] = y0[i].ln();
        }
        state[m] = state0.a.ln();
        let u_end = 1.05 * horizon / state0.a + 1.0;
        let mut ybuf = vec![0.0; m];
        let f = |_t: f64, s: &[f64], ds: &mut [f64]| {
            let mut y = vec![0.0; m];
            for i in 0..m {
                y[i] = s[i].exp();
            }
            let deficit = sys.deficit(&y);
            for i in 0..m {
                ds[i] = -deficit[i];
            }
            ds[m] = sys.energy(&y);
            ds[m + 1] = s[m].exp();
        };
        ode::integrate(
            f,
            0.0,
            &state,
            u_end,
            &stepper_opts,
            |s| s.iter().all(|v| v.is_finite()),
            &[],
            |step| {
                let mut emit = |s: &[f64], tau: f64, out: &mut Vec<(f64, f64, Vec<f64>)>| {
                    let a = s[m].exp();
                    for i in 0..m {
                        ybuf[i] = s[i].exp();
                    }
                    let b: Vec<f64> = (0..m).map(|i| a / ybuf[i]).collect();
                    out.push((tau, a, b));
                };
                let tau1 = step.y1[m + 1];
                if tau1 >= horizon {
                    let t_hit = step.locate_root(|_t, s| s[m + 1] - horizon, 1e-12);
                    let hit = step.eval(t_hit);
                    emit(&hit, horizon, &mut u_samples);
                    return StepControl::Stop;
                }
                emit(step.y1, tau1, &mut u_samples);
                StepControl::Continue
            },
        );
    }
    if u_samples.is_empty() {
        return Err(Error::Domain("u-clock run produced no samples".into()));
    }

    // tau-clock run with the u-run times as forced checkpoints
    let mut checkpoints: Vec<f64> = u_samples.iter().map(|s| s.0).collect();
    checkpoints.dedup();
    let mut t_opts = FlowOptions::with_tol(tol);
    t_opts.blowup = false;
    t_opts.region_events = false;
    t_opts.checkpoints = checkpoints;
    let t_traj = integrate_tau(sys, state0, (0.0, horizon), &t_opts)?;

    let mut max_rel_dev: f64 = 0.0;
    let mut compared = 0;
    for (tau, a_u, b_u) in &u_samples {
        let Some(s) = t_traj.sample_at_tau(*tau) else {
            continue;
        };
        if (s.tau - tau).abs() > 1e-9 * (1.0 + tau.abs()) {
            continue;
        }
        compared += 1;
        max_rel_dev = max_rel_dev.max((s.a - a_u).abs() / s.a.abs().max(1e-300));
        for i in 0..m {
            max_rel_dev = max_rel_dev.max((s.b[i] - b_u[i]).abs() / s.b[i].abs().max(1e-300));
        }
    }
    Ok(ConsistencyReport {
        max_rel_dev,
        compared_points: compared,
        horizon,
        tol,
    })
}

/// Post-run checks of the structural monotonicities along a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct CircleMonitors {
    pub lambda_nonincreasing: bool,
    pub lambda_worst_slack: f64,
    pub a_nondecreasing: bool,
    pub positivity_preserved: bool,
    pub omega_plus_preserved: Option<bool>,
    pub omega_minus_preserved: Option<bool>,
}

impl CircleMonitors {
    pub fn all_pass(&self) -> bool {
        self.lambda_nonincreasing
            && self.a_nondecreasing
            && self.positivity_preserved
            && self.omega_plus_preserved.unwrap_or(true)
            && self.omega_minus_preserved.unwrap_or(true)
    }
}

pub fn circle_monitors(traj: &Trajectory) -> CircleMonitors {
    let mut lambda_ok = true;
    let mut worst: f64 = 0.0;
    let mut a_ok = true;
    let mut positive = true;
    let forward = traj
        .samples
        .last()
        .map(|s| s.u >= traj.samples[0].u)
        .unwrap_or(true);
    for pair in traj.samples.windows(2) {
        let (s0, s1) = (&pair[0], &pair[1]);
        if let (Some(l0), Some(l1)) = (s0.lambda_bar, s1.lambda_bar) {
            let (prev, next) = if forward { (l0, l1) } else { (l1, l0) };
            let slack = next - prev - 1e-9 * prev.abs();
            if slack > 0.0 {
                lambda_ok = false;
                worst = worst.max(slack);
            }
        }
        let (a_prev, a_next) = if forward { (s0.a, s1.a) } else { (s1.a, s0.a) };
        if a_next < a_prev * (1.0 - 1e-12) {
            a_ok = false;
        }
        if s1.y.iter().any(|&v| v < 0.0) {
            positive = false;
        }
    }
    let start = &traj.samples[0].region;
    let omega_plus_preserved = if start.in_omega_plus() {
        Some(traj.samples.iter().all(|s| s.region.in_omega_plus()))
    } else {
        None
    };
    let omega_minus_preserved = if start.in_omega_minus() {
        Some(traj.samples.iter().all(|s| s.region.in_omega_minus()))
    } else {
        None
    };
    CircleMonitors {
        lambda_nonincreasing: lambda_ok,
        lambda_worst_slack: worst,
        a_nondecreasing: a_ok,
        positivity_preserved: positive,
        omega_plus_preserved,
        omega_minus_preserved,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;

    fn sym2() -> CircleSystem {
        CircleSystem::new(&presets::sym2()).unwrap()
    }

    #[test]
    fn basin_start_captures_at_origin() {
        let sys = sym2();
        let mut opts = FlowOptions::with_tol(1e-9);
        opts.capture = Some(CaptureConfig::new(sys.fixed_points(64).unwrap()));
        let traj = integrate_u(&sys, &[0.1, 0.1], 1.0, (0.0, 2e6), &opts).unwrap();
        assert_eq!(
            traj.termination,
            Termination::FixedPointCapture { target: "origin".into() }
        );
        // sum of components decreases monotonically along the samples
        let mut prev = f64::MAX;
        for s in &traj.samples {
            let sum: f64 = s.y.iter().sum();
            assert!(sum <= prev + 1e-12);
            prev = sum;
        }
        let mon = circle_monitors(&traj);
        assert!(mon.all_pass(), "monitors: {mon:?}");
    }

    #[test]
    fn beyond_threshold_blows_up_within_comparison_bound() {
        let sys = sym2();
        let opts = FlowOptions::with_tol(1e-10);
        let traj = integrate_u(&sys, &[2.5, 2.5], 1.0, (0.0, 10.0), &opts).unwrap();
        assert_eq!(traj.termination, Termination::BlowUp);
        let u_star = traj.first_event(EventKind::BlowUp).unwrap().u;
        // closed-form singular time of dz/du = z^2 (a z - b) from z(0)=2.5
        let (a, b, z) = (2.0, 4.0, 2.5);
        let c = -(1.0 / (b * z) + a / (b * b) * (1.0_f64 - b / (a * z)).ln());
        assert!(u_star <= c, "detected {u_star} vs bound {c}");
        assert!(u_star > 0.0);
    }

    #[test]
    fn fixed_point_start_is_stationary() {
        let sys = sym2();
        let xi = sys.find_xi().unwrap();
        let mut opts = FlowOptions::with_tol(1e-9);
        opts.region_events = false;
        let traj = integrate_u(&sys, &xi, 1.0, (0.0, 50.0), &opts).unwrap();
        assert_eq!(traj.termination, Termination::ReachedSpan);
        let end = traj.last();
        for i in 0..2 {
            assert_relative_eq!(end.y[i], xi[i], epsilon = 1e-7);
        }
    }

    #[test]
    fn zero_component_stays_zero() {
        let sys = sym2();
        let opts = FlowOptions::with_tol(1e-9);
        let traj = integrate_u(&sys, &[1.0, 0.0], 1.0, (0.0, 5.0), &opts).unwrap();
        for s in &traj.samples {
            assert_eq!(s.y[1], 0.0);
            assert!(s.y[0] > 0.0);
        }
    }

    #[test]
    fn tau_run_bounds_and_limits() {
        let sys = sym2();
        let state0 = CircleState::new(0.1, vec![1.0, 1.0]);
        let mut opts = FlowOptions::with_tol(1e-9);
        opts.checkpoints = vec![100.0];
        let traj = integrate_tau(&sys, &state0, (0.0, 100.0), &opts).unwrap();
        assert_eq!(traj.termination, Termination::ReachedSpan);
        for s in &traj.samples {
            for i in 0..2 {
                let lo = 2.0 * s.tau + 1.0 - 1e-6 * (1.0 + s.tau);
                let hi = 4.0 * s.tau + 1.0 + 1e-6 * (1.0 + s.tau);
                assert!(s.b[i] >= lo && s.b[i] <= hi, "b out of bounds at tau={}", s.tau);
            }
        }
        let mon = circle_monitors(&traj);
        assert!(mon.a_nondecreasing && mon.lambda_nonincreasing);
    }

    #[test]
    fn tau_run_detects_singularity() {
        let sys = sym2();
        // in the all-negative-deficit region the metric collapses in finite time
        let state0 = CircleState::new(2.5, vec![1.0, 1.0]);
        let opts = FlowOptions::with_tol(1e-9);
        let traj = integrate_tau(&sys, &state0, (0.0, 100.0), &opts).unwrap();
        assert_eq!(traj.termination, Termination::BlowUp);
        assert!(traj.last().tau < 100.0);
    }

    #[test]
    fn crosscheck_clocks_agreement() {
        let sys = sym2();
        let state0 = CircleState::new(0.1, vec![1.0, 1.0]);
        let rep = crosscheck_clocks(&sys, &state0, 50.0, 1e-9).unwrap();
        assert!(rep.compared_points > 10);
        assert!(rep.passes(), "deviation {:.3e}", rep.max_rel_dev);
    }

    #[test]
    fn crosscheck_einstein_ray_exact() {
        let sys = sym2();
        let xi = sys.find_xi().unwrap();
        let a0 = 1.0;
        let b0: Vec<f64> = xi.iter().map(|&x| a0 / x).collect();
        let state0 = CircleState::new(a0, b0);
        let rep = crosscheck_clocks(&sys, &state0, 100.0, 1e-9).unwrap();
        assert!(rep.max_rel_dev < 1e-7);
        // on the ray the growth rate of a is exactly the fixed-point energy
        let mut opts = FlowOptions::with_tol(1e-10);
        opts.region_events = false;
        let traj = integrate_tau(&sys, &state0, (0.0, 1000.0), &opts).unwrap();
        let end = traj.last();
        assert_relative_eq!(
            (end.a - a0) / end.tau,
            sys.energy(&xi),
            max_relative = 1e-7
        );
    }

    #[test]
    fn crosscheck_zero_horizon() {
        let sys = sym2();
        let state0 = CircleState::new(0.1, vec![1.0, 1.0]);
        let rep = crosscheck_clocks(&sys, &state0, 0.0, 1e-9).unwrap();
        assert_eq!(rep.max_rel_dev, 0.0);
    }

    #[test]
    fn convergence_order_of_crosscheck() {
        let sys = sym2();
        let state0 = CircleState::new(0.1, vec![1.0, 1.0]);
        let coarse = crosscheck_clocks(&sys, &state0, 50.0, 1e-6).unwrap();
        let fine = crosscheck_clocks(&sys, &state0, 50.0, 1e-9).unwrap();
        assert!(
            coarse.max_rel_dev > 20.0 * fine.max_rel_dev,
            "coarse {:.3e} fine {:.3e}",
            coarse.max_rel_dev,
            fine.max_rel_dev
        );
    }

    #[test]
    fn omega_plus_is_forward_invariant() {
        let sys = sym2();
        let mut opts = FlowOptions::with_tol(1e-9);
        opts.capture = Some(CaptureConfig::new(sys.fixed_points(64).unwrap()));
        for y0 in [[0.5, 0.5], [1.0, 0.8], [1.2, 1.2]] {
            assert!(sys.classify_region(&y0).in_omega_plus());
            let traj = integrate_u(&sys, &y0, 1.0, (0.0, 2e6), &opts).unwrap();
            let mon = circle_monitors(&traj);
            assert_eq!(mon.omega_plus_preserved, Some(true));
        }
    }

    #[test]
    fn omega_minus_invariance_and_blowup() {
        let sys = sym2();
        let opts = FlowOptions::with_tol(1e-9);
        for y0 in [[1.6, 1.6], [2.2, 1.9], [1.45, 1.8]] {
            assert!(sys.classify_region(&y0).in_omega_minus(), "start {y0:?}");
            let traj = integrate_u(&sys, &y0, 1.0, (0.0, 100.0), &opts).unwrap();
            assert_eq!(traj.termination, Termination::BlowUp);
            let mon = circle_monitors(&traj);
            assert_eq!(mon.omega_minus_preserved, Some(true));
        }
    }

    #[test]
    fn csv_round_trip_header() {
        let sys = sym2();
        let opts = FlowOptions::with_tol(1e-9);
        let traj = integrate_u(&sys, &[0.5, 0.5], 1.0, (0.0, 1.0), &opts).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "u,tau,a,b_1,b_2,Y_1,Y_2,E,F_1,F_2,lambda_bar,region_flags"
        );
        assert!(text.lines().count() > 2);
    }
}
