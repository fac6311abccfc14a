//! Shooting along the distinguished ancient solutions: the one-dimensional
//! unstable-manifold solution through the interior fixed point, the stable
//! curves into the partial fixed points for two factors, and backward-limit
//! classification for three factors.

use crate::circle::{dist_inf, theta_tag, CircleSystem};
use crate::diagnostics::einstein_residual;
use crate::error::{Error, Result};
use crate::integrator::{
    circle_monitors, integrate_u, CaptureConfig, FlowOptions, Sample, Termination, Trajectory,
};
use crate::ode::{self, StepControl, StepperOptions};
use crate::spectral::{xi_eigenvector_for_alpha_index, xi_spectrum};
use crate::torus::TorusState;
use serde::Serialize;

/// Measured time-rescaled limit against its analytic target.
#[derive(Debug, Clone, Serialize)]
pub struct LimitEstimate {
    pub target: f64,
    pub measured: f64,
    pub rel_err: f64,
}

impl LimitEstimate {
    fn new(target: f64, measured: f64) -> Self {
        LimitEstimate {
            target,
            measured,
            rel_err: (measured - target).abs() / target.abs().max(1e-300),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AncientSolutionReport {
    /// Which eigen-direction and sign was shot.
    pub branch: String,
    pub eps_used: f64,
    /// Backward singular time `T` (the metric lives on `(-T, infinity)`),
    /// in the report's normalization.
    pub t_singular: f64,
    pub t_singular_uncertainty: f64,
    /// Measured `a/(T+tau)` near the singular time.
    pub a_rate: LimitEstimate,
    /// Measured `b_i/(T+tau)` for the factors with an analytic target.
    pub b_rates: Vec<Option<LimitEstimate>>,
    /// Positive limits of the factors whose coefficient stays bounded.
    pub b_constants: Vec<Option<f64>>,
    pub backward_limit_point: String,
    pub forward_limit_point: String,
    /// Einstein residual of the time-rescaled state near the singular time
    /// (for the stable curves: of the exact sub-bundle limit metric).
    pub einstein_residual_rescaled: f64,
    pub lambda_monotone: bool,
    /// For the unstable branch: finite escape time of the opposite side.
    pub opposite_branch_blowup_u: Option<f64>,
    pub tol: f64,
}

/// Cubic Hermite value interpolation on one bracketing interval.
fn hermite(u0: f64, f0: f64, d0: f64, u1: f64, f1: f64, d1: f64, u: f64) -> f64 {
    let h = u1 - u0;
    let s = (u - u0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    f0 * (2.0 * s3 - 3.0 * s2 + 1.0)
        + d0 * h * (s3 - 2.0 * s2 + s)
        + f1 * (-2.0 * s3 + 3.0 * s2)
        + d1 * h * (s3 - s2)
}

/// Root of a monotone cubic Hermite segment for `f(u) = target`.
fn hermite_root(u0: f64, f0: f64, d0: f64, u1: f64, f1: f64, d1: f64, target: f64) -> f64 {
    let mut lo = u0;
    let mut hi = u1;
    let increasing = f1 > f0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let v = hermite(u0, f0, d0, u1, f1, d1, mid);
        if (v < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct BackwardSample {
    u: f64,
    /// Backwards time measured from the switch point (leg-two clock).
    tau2: f64,
    a: f64,
    y: Vec<f64>,
}

struct BackwardRun {
    /// Deep-leg samples only (recorded once within the switch radius).
    samples: Vec<BackwardSample>,
    /// Fitted exponential decay rate of `a` over the last decade.
    #[allow(dead_code)]
    rate: f64,
    /// Remaining `tau` increment past the last sample, `a_end / rate`.
    tail: f64,
    /// Raw singular time in the run's own normalization (`a = 1, tau = 0`
    /// at the start point).
    t_raw: f64,
    t_uncertainty: f64,
}

impl BackwardRun {
    /// Distance to the singular time at a deep-leg sample,
    /// `(T + tau)` evaluated without cancellation against the total time.
    fn remaining(&self, s: &BackwardSample) -> f64 {
        let tau2_end = self.samples.last().unwrap().tau2;
        (s.tau2 - tau2_end) + self.tail
    }
}

/// Integrate backward in `u` from a point near an invariant curve that
/// converges to `target` with energy `e_target`.
///
/// The run has two legs. The approach leg accumulates backwards time until
/// the phase point enters `switch_radius` of the target; the deep leg then
/// restarts the time accumulator so that distances to the singular time can
/// be formed at full relative precision, and continues until `a` has fallen
/// seven decades below its switch value (the geometric tail is then a
/// negligible share of everything measured).
fn run_backward(
    sys: &CircleSystem,
    y_start: &[f64],
    target: &[f64],
    e_target: f64,
    tol: f64,
    drift_radius: f64,
    switch_radius: f64,
) -> Result<BackwardRun> {
    let m = sys.m;
    let span = 400.0 / e_target + 100.0;
    let opts = StepperOptions::with_tol(tol);
    let f = |_t: f64, s: &[f64], ds: &mut [f64]| {
        let (y, rest) = s.split_at(m);
        sys.field_into(y, &mut ds[..m]);
        ds[m] = sys.energy(y);
        ds[m + 1] = rest[0].exp();
    };
    let guard = |s: &[f64]| s[..m].iter().all(|&v| v >= 0.0) && s[m].is_finite();

    // approach leg (skipped when the start is already inside the radius)
    let mut tau_switch = 0.0;
    let mut u_switch = 0.0;
    let mut switch_state: Vec<f64> = {
        let mut s = vec![0.0; m + 2];
        s[..m].copy_from_slice(y_start);
        s
    };
    if dist_inf(y_start, target) > switch_radius {
        let mut drifted: Option<String> = None;
        let mut reached = false;
        let mut state = switch_state.clone();
        let run = ode::integrate(
            f,
            0.0,
            &state,
            -span,
            &opts,
            guard,
            &[],
            |step| {
                let y1 = &step.y1[..m];
                let dist = dist_inf(y1, target);
                if dist > drift_radius {
                    drifted = Some(format!(
                        "backward trajectory left the convergence funnel (distance {dist:.3e})"
                    ));
                    return StepControl::Stop;
                }
                if dist <= switch_radius {
                    reached = true;
                    return StepControl::Stop;
                }
                StepControl::Continue
            },
        );
        if let Some(msg) = drifted {
            return Err(Error::ShootingDrift(msg));
        }
        if !reached {
            return Err(Error::ShootingDrift(format!(
                "backward approach did not reach the target (ended {:?})",
                run.end
            )));
        }
        state = run.y;
        u_switch = run.t;
        tau_switch = state[m + 1];
        state[m + 1] = 0.0;
        switch_state = state;
    }

    // deep leg with a fresh backwards-time accumulator
    let a_switch = switch_state[m].exp();
    let a_floor = 1e-7 * a_switch;
    let deep_drift = if switch_radius.is_finite() && switch_radius < drift_radius {
        3.0 * switch_radius
    } else {
        drift_radius
    };
    let mut samples: Vec<BackwardSample> = vec![BackwardSample {
        u: u_switch,
        tau2: 0.0,
        a: a_switch,
        y: switch_state[..m].to_vec(),
    }];
    let mut drifted: Option<String> = None;
    let run = ode::integrate(
        f,
        u_switch,
        &switch_state,
        u_switch - span,
        &opts,
        guard,
        &[],
        |step| {
            let y1 = &step.y1[..m];
            let a1 = step.y1[m].exp();
            samples.push(BackwardSample {
                u: step.t1,
                tau2: step.y1[m + 1],
                a: a1,
                y: y1.to_vec(),
            });
            let dist = dist_inf(y1, target);
            if dist > deep_drift {
                drifted = Some(format!(
                    "deep backward leg left the convergence ball (distance {dist:.3e})"
                ));
                return StepControl::Stop;
            }
            if a1 <= a_floor {
                return StepControl::Stop;
            }
            StepControl::Continue
        },
    );
    if let Some(msg) = drifted {
        return Err(Error::ShootingDrift(msg));
    }
    if run.end == ode::RunEnd::ReachedEnd {
        return Err(Error::ShootingDrift(
            "backward run exhausted its span before the tail converged".into(),
        ));
    }

    // geometric-tail fit over the last decade of samples: ln a against u
    let a_end = samples.last().unwrap().a;
    let fit: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.a <= 10.0 * a_end)
        .map(|s| (s.u, s.a.ln()))
        .collect();
    let rate = if fit.len() >= 2 {
        let n = fit.len() as f64;
        let sx: f64 = fit.iter().map(|p| p.0).sum();
        let sy: f64 = fit.iter().map(|p| p.1).sum();
        let sxx: f64 = fit.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = fit.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        e_target
    };
    if !(rate > 0.0) {
        return Err(Error::ShootingDrift(format!(
            "tail rate fit failed (rate {rate:.3e})"
        )));
    }
    let tau2_end = samples.last().unwrap().tau2;
    let tail = a_end / rate;
    let t_raw = -(tau_switch + tau2_end) + tail;
    let t_uncertainty = tail * ((rate - e_target).abs() / e_target + 1e-3);
    Ok(BackwardRun {
        samples,
        rate,
        tail,
        t_raw,
        t_uncertainty,
    })
}

/// Time-rescaled limits measured over the window
/// `(T + tau) in [1e-4, 3e-2] T`; falls back to the nearest samples when the
/// stepper strode across the window.
fn measure_window(run: &BackwardRun, m: usize) -> (f64, Vec<f64>, BackwardSample) {
    let t_raw = run.t_raw;
    let in_window = |s: &BackwardSample| {
        let rem = run.remaining(s);
        rem >= 1e-4 * t_raw && rem <= 3e-2 * t_raw
    };
    let mut chosen: Vec<&BackwardSample> = run.samples.iter().filter(|s| in_window(s)).collect();
    if chosen.len() < 2 {
        let center = 1e-3 * t_raw;
        let mut sorted: Vec<&BackwardSample> = run
            .samples
            .iter()
            .filter(|s| run.remaining(s) > 0.0)
            .collect();
        sorted.sort_by(|x, y| {
            (run.remaining(x) - center)
                .abs()
                .total_cmp(&(run.remaining(y) - center).abs())
        });
        chosen = sorted.into_iter().take(4).collect();
    }
    average_rates(run, &chosen, m)
}

/// Time-rescaled limits measured over the deepest two decades of the run
/// (for targets reached only after a long transit, where the singular time
/// is overwhelmingly spent away from the limit point).
fn measure_deep(run: &BackwardRun, m: usize) -> (f64, Vec<f64>, BackwardSample) {
    let a_end = run.samples.last().unwrap().a;
    let chosen: Vec<&BackwardSample> = run
        .samples
        .iter()
        .filter(|s| s.a <= 100.0 * a_end && run.remaining(s) > 0.0)
        .collect();
    average_rates(run, &chosen, m)
}

fn average_rates(
    run: &BackwardRun,
    chosen: &[&BackwardSample],
    m: usize,
) -> (f64, Vec<f64>, BackwardSample) {
    let mut a_rate = 0.0;
    let mut b_rate = vec![0.0; m];
    for s in chosen {
        let rem = run.remaining(s);
        a_rate += s.a / rem;
        for i in 0..m {
            b_rate[i] += s.a / s.y[i] / rem;
        }
    }
    let n = chosen.len() as f64;
    a_rate /= n;
    for v in &mut b_rate {
        *v /= n;
    }
    let deepest = chosen
        .iter()
        .min_by(|x, y| run.remaining(x).total_cmp(&run.remaining(y)))
        .expect("nonempty measurement window");
    let snapshot = BackwardSample {
        u: deepest.u,
        tau2: deepest.tau2,
        a: deepest.a,
        y: deepest.y.clone(),
    };
    (a_rate, b_rate, snapshot)
}

fn lambda_monotone_backward(sys: &CircleSystem, run: &BackwardRun) -> bool {
    // along decreasing u the monotone quantity must be nondecreasing
    let mut ok = true;
    let mut prev: Option<f64> = None;
    for s in &run.samples {
        if s.y.iter().all(|&v| v > 0.0) {
            if let Ok(l) = sys.lambda_bar(&s.y) {
                if let Some(p) = prev {
                    if l > p + 1e-9 * p.abs() {
                        ok = false;
                    }
                }
                prev = Some(l);
            }
        }
    }
    ok
}

/// Forward half of the unstable branch: capture at the origin, the
/// section-crossing anchor, and the late-time coefficient growth rates.
struct ForwardUnstable {
    traj: Trajectory,
    /// `(tau_s, a_s)` at the canonical section where the component sum
    /// crosses half its fixed-point value.
    anchor: (f64, f64),
    b_over_tau_late: Option<Vec<f64>>,
}

fn run_forward_unstable(
    sys: &CircleSystem,
    y_start: &[f64],
    tol: f64,
    section_value: f64,
) -> Result<ForwardUnstable> {
    let mut opts = FlowOptions::with_tol(tol);
    opts.capture = Some(CaptureConfig::new(sys.fixed_points(64)?));
    opts.region_events = false;
    let traj = integrate_u(sys, y_start, 1.0, (0.0, 5e6), &opts)?;
    match &traj.termination {
        Termination::FixedPointCapture { target } if target == "origin" => {}
        other => {
            return Err(Error::ShootingDrift(format!(
                "forward branch terminated with {other:?} instead of origin capture"
            )));
        }
    }
    let mon = circle_monitors(&traj);
    if mon.omega_plus_preserved != Some(true) {
        return Err(Error::ShootingDrift(
            "forward branch left the all-nonnegative-deficit region".into(),
        ));
    }

    // canonical anchor: Hermite-refined crossing of sum(Y) = section_value
    let sum = |s: &Sample| s.y.iter().sum::<f64>();
    let dsum = |s: &Sample| -s.y.iter().zip(&s.deficit).map(|(y, f)| y * f).sum::<f64>();
    let mut anchor = None;
    for pair in traj.samples.windows(2) {
        let (s0, s1) = (&pair[0], &pair[1]);
        if (sum(s0) - section_value) * (sum(s1) - section_value) <= 0.0 {
            let u_s = hermite_root(
                s0.u,
                sum(s0),
                dsum(s0),
                s1.u,
                sum(s1),
                dsum(s1),
                section_value,
            );
            let tau_s = hermite(s0.u, s0.tau, s0.a, s1.u, s1.tau, s1.a, u_s);
            let ln_a = hermite(
                s0.u,
                s0.a.ln(),
                s0.energy,
                s1.u,
                s1.a.ln(),
                s1.energy,
                u_s,
            );
            anchor = Some((tau_s, ln_a.exp()));
            break;
        }
    }
    let anchor = anchor.ok_or_else(|| {
        Error::ShootingDrift("forward branch never crossed the canonical section".into())
    })?;

    // coefficient growth rate late in backwards time
    let b_over_tau_late = traj
        .samples
        .iter()
        .rev()
        .find(|s| s.tau >= 1e4 && s.b.iter().all(|v| v.is_finite()))
        .map(|s| s.b.iter().map(|&b| b / s.tau).collect());
    Ok(ForwardUnstable {
        traj,
        anchor,
        b_over_tau_late,
    })
}

/// Trace the distinguished solution whose backward limit is the interior
/// fixed point: start a small step along the positive eigenvector of the
/// negative eigenvalue, on the side contained in the all-nonnegative-deficit
/// region. Retries with a smaller step on drift, up to three times.
pub fn trace_unstable(sys: &CircleSystem, eps_rel: f64, tol: f64) -> Result<AncientSolutionReport> {
    if !(eps_rel > 0.0 && eps_rel <= 1e-3) {
        return Err(Error::Domain("eps must lie in (0, 1e-3]".into()));
    }
    let mut eps = eps_rel;
    let mut last_err = None;
    for _ in 0..4 {
        match attempt_unstable(sys, eps, tol) {
            Ok(report) => return Ok(report),
            Err(Error::ShootingDrift(msg)) => {
                last_err = Some(Error::ShootingDrift(msg));
                eps /= 10.0;
            }
            Err(other) => return Err(other),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::ShootingDrift("no attempt succeeded".into())))
}

fn attempt_unstable(sys: &CircleSystem, eps: f64, tol: f64) -> Result<AncientSolutionReport> {
    let m = sys.m;
    let xi = sys.find_xi()?;
    let spectrum = xi_spectrum(sys, &xi)?;
    let zmax = spectrum
        .negative_eigenvector
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let z_hat: Vec<f64> = spectrum
        .negative_eigenvector
        .iter()
        .map(|v| v / zmax)
        .collect();
    let scale = xi.iter().cloned().fold(0.0f64, f64::max);
    let offset = eps * scale;

    let start_minus: Vec<f64> = (0..m).map(|i| xi[i] - offset * z_hat[i]).collect();
    if start_minus.iter().any(|&v| v <= 0.0)
        || !sys.classify_region(&start_minus).in_omega_plus()
    {
        return Err(Error::ShootingDrift(
            "inner start point is not inside the nonnegative-deficit region".into(),
        ));
    }
    let start_plus: Vec<f64> = (0..m).map(|i| xi[i] + offset * z_hat[i]).collect();
    if !sys.classify_region(&start_plus).in_omega_minus() {
        return Err(Error::ShootingDrift(
            "outer start point is not inside the nonpositive-deficit region".into(),
        ));
    }

    let section_value = 0.5 * xi.iter().sum::<f64>();
    let forward = run_forward_unstable(sys, &start_minus, tol, section_value)?;

    let e_xi = spectrum.energy;
    let drift_radius = 20.0 * offset + 1e-9;
    let backward = run_backward(sys, &start_minus, &xi, e_xi, tol, drift_radius, f64::MAX)?;
    let (a_rate, b_rate, deepest) = measure_window(&backward, m);

    // canonical normalization: a = 1, tau = 0 at the section crossing
    let (tau_s, a_s) = forward.anchor;
    let t_canonical = (backward.t_raw + tau_s) / a_s;
    let t_unc = backward.t_uncertainty / a_s;

    // Einstein residual of the time-rescaled state nearest the singular time
    let rem = backward.remaining(&deepest);
    let rescaled = TorusState::from_circle(
        deepest.a / rem,
        deepest.y.iter().map(|&yi| deepest.a / yi / rem).collect(),
    );
    let resid = einstein_residual(&sys.spec, &rescaled);

    // opposite branch must escape in finite u through the other region
    let mut op_opts = FlowOptions::with_tol(tol);
    op_opts.region_events = false;
    let op_traj = integrate_u(sys, &start_plus, 1.0, (0.0, 1e4), &op_opts)?;
    if op_traj.termination != Termination::BlowUp {
        return Err(Error::ShootingDrift(format!(
            "opposite branch ended with {:?} instead of finite-time escape",
            op_traj.termination
        )));
    }
    let op_mon = circle_monitors(&op_traj);
    if op_mon.omega_minus_preserved != Some(true) {
        return Err(Error::ShootingDrift(
            "opposite branch left the nonpositive-deficit region".into(),
        ));
    }
    let blowup_u = op_traj
        .first_event(crate::integrator::EventKind::BlowUp)
        .map(|e| e.u);

    let lambda_ok =
        lambda_monotone_backward(sys, &backward) && circle_monitors(&forward.traj).lambda_nonincreasing;

    let b_rates = (0..m)
        .map(|i| Some(LimitEstimate::new(e_xi / xi[i], b_rate[i])))
        .collect();
    Ok(AncientSolutionReport {
        branch: "unstable".into(),
        eps_used: eps,
        t_singular: t_canonical,
        t_singular_uncertainty: t_unc,
        a_rate: LimitEstimate::new(e_xi, a_rate),
        b_rates,
        b_constants: vec![None; m],
        backward_limit_point: "xi".into(),
        forward_limit_point: "origin".into(),
        einstein_residual_rescaled: resid,
        lambda_monotone: lambda_ok,
        opposite_branch_blowup_u: blowup_u,
        tol,
    })
}

/// Late-time coefficient growth rates `b_i(tau)/tau` of the forward half of
/// the unstable branch (measured at the latest sample past `tau = 1e4`).
pub fn unstable_forward_b_rates(sys: &CircleSystem, eps_rel: f64, tol: f64) -> Result<Vec<f64>> {
    let xi = sys.find_xi()?;
    let spectrum = xi_spectrum(sys, &xi)?;
    let zmax = spectrum
        .negative_eigenvector
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let scale = xi.iter().cloned().fold(0.0f64, f64::max);
    let start: Vec<f64> = (0..sys.m)
        .map(|i| xi[i] - eps_rel * scale * spectrum.negative_eigenvector[i] / zmax)
        .collect();
    let forward = run_forward_unstable(sys, &start, tol, 0.5 * xi.iter().sum::<f64>())?;
    forward
        .b_over_tau_late
        .ok_or_else(|| Error::Domain("forward run ended before tau = 1e4".into()))
}

/// Trace a branch of the stable curve for a two-factor bundle: backward to
/// the partial fixed point `v_k`, forward to the interior fixed point.
/// `k` is 1-based.
pub fn trace_gamma(
    sys: &CircleSystem,
    k: usize,
    eps_rel: f64,
    tol: f64,
) -> Result<AncientSolutionReport> {
    if sys.m != 2 {
        return Err(Error::Domain("stable-curve tracing requires m = 2".into()));
    }
    if !(k == 1 || k == 2) {
        return Err(Error::Domain("branch index must be 1 or 2".into()));
    }
    if !(eps_rel > 0.0) {
        return Err(Error::Domain("eps must be positive".into()));
    }
    let mut eps = eps_rel.min(1e-3);
    let mut last_err = None;
    for _ in 0..4 {
        match attempt_gamma(sys, k, eps, tol) {
            Ok(report) => return Ok(report),
            Err(Error::ShootingDrift(msg)) => {
                last_err = Some(Error::ShootingDrift(msg));
                eps /= 10.0;
            }
            Err(other) => return Err(other),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::ShootingDrift("no attempt succeeded".into())))
}

fn attempt_gamma(sys: &CircleSystem, k: usize, eps: f64, tol: f64) -> Result<AncientSolutionReport> {
    let kk = k - 1; // internal 0-based
    let other = 1 - kk;
    let xi = sys.find_xi()?;
    // stable direction of the flow: eigenvector of the positive eigenvalue
    let w = xi_eigenvector_for_alpha_index(sys, &xi, 1)?;
    let wmax = w.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let w_hat: Vec<f64> = w.iter().map(|v| v / wmax).collect();
    let scale = xi.iter().cloned().fold(0.0f64, f64::max);
    let offset = eps * scale;

    let in_omega_k = |y: &[f64]| -> bool {
        let tag = sys.classify_region(y);
        tag.in_omega_theta(&[kk]) && y.iter().all(|&v| v > 0.0)
    };
    let cand_plus: Vec<f64> = (0..2).map(|i| xi[i] + offset * w_hat[i]).collect();
    let cand_minus: Vec<f64> = (0..2).map(|i| xi[i] - offset * w_hat[i]).collect();
    let start = if in_omega_k(&cand_plus) {
        cand_plus
    } else if in_omega_k(&cand_minus) {
        cand_minus
    } else {
        return Err(Error::ShootingDrift(
            "neither sign of the stable direction lands in the mixed-sign region".into(),
        ));
    };

    let v_k = sys.find_v(&[kk])?;
    let e_vk = sys.energy(&v_k);

    // backward to the partial fixed point; the singular time is spent almost
    // entirely on the approach, so measurements use the deep leg
    let drift_radius = 2.0 * (scale + v_k.iter().cloned().fold(0.0f64, f64::max));
    let switch_radius = 0.05 * (1.0 + v_k[kk]);
    let backward = run_backward(sys, &start, &v_k, e_vk, tol, drift_radius, switch_radius)?;
    let end = backward.samples.last().unwrap();
    if dist_inf(&end.y, &v_k) > 1e-3 * (1.0 + v_k[kk]) {
        return Err(Error::ShootingDrift(format!(
            "backward branch did not converge to the partial fixed point (distance {:.3e})",
            dist_inf(&end.y, &v_k)
        )));
    }
    let (a_rate, b_rate, _deepest) = measure_deep(&backward, 2);

    // measured bounded coefficient, reported in the normalization `a = 1`
    // at the switch point near the backward limit (the statement is
    // scale-covariant, and this anchor makes the positive limit visible)
    let a_switch = backward.samples[0].a;
    let a_end = backward.samples.last().unwrap().a;
    let deep: Vec<f64> = backward
        .samples
        .iter()
        .filter(|s| s.a <= 100.0 * a_end)
        .map(|s| s.a / s.y[other] / a_switch)
        .collect();
    let b_other_limit = deep.iter().sum::<f64>() / deep.len() as f64;
    let spread = deep.iter().cloned().fold(f64::MIN, f64::max)
        - deep.iter().cloned().fold(f64::MAX, f64::min);
    if !(b_other_limit > 0.0) || spread > 1e-2 * b_other_limit {
        return Err(Error::ShootingDrift(format!(
            "bounded coefficient did not settle (limit {b_other_limit:.3e}, spread {spread:.3e})"
        )));
    }

    // forward to the interior fixed point
    let mut fwd_opts = FlowOptions::with_tol(tol);
    fwd_opts.blowup = true;
    fwd_opts.region_events = false;
    let capture_radius = 1e-6 * (1.0 + scale);
    let mut reached_xi = false;
    {
        let m = sys.m;
        let mut state0 = vec![0.0; m + 2];
        state0[..m].copy_from_slice(&start);
        let opts = StepperOptions::with_tol(tol);
        let f = |_t: f64, s: &[f64], ds: &mut [f64]| {
            let (y, rest) = s.split_at(m);
            sys.field_into(y, &mut ds[..m]);
            ds[m] = sys.energy(y);
            ds[m + 1] = rest[0].exp();
        };
        ode::integrate(
            f,
            0.0,
            &state0,
            1e4,
            &opts,
            |s| s[..m].iter().all(|&v| v >= 0.0),
            &[],
            |step| {
                if dist_inf(&step.y1[..m], &xi) < capture_radius {
                    reached_xi = true;
                    return StepControl::Stop;
                }
                StepControl::Continue
            },
        );
    }
    if !reached_xi {
        return Err(Error::ShootingDrift(
            "forward branch did not return to the interior fixed point".into(),
        ));
    }

    // the exact limit metric lives on the sub-bundle over factor k
    let sub = sys.sub_system(&[kk])?;
    let b_limit = (sub.n[0] + 1.0) * sub.q2[0] / (2.0 * sub.p[0]);
    let limit_state = TorusState::from_circle(1.0, vec![b_limit]);
    let resid = einstein_residual(&sub.spec, &limit_state);

    let b_target_k = (sys.n[kk] + 1.0) * sys.q2[kk] / (2.0 * sys.p[kk]) * e_vk;
    let mut b_rates = vec![None, None];
    b_rates[kk] = Some(LimitEstimate::new(b_target_k, b_rate[kk]));
    let mut b_constants = vec![None, None];
    b_constants[other] = Some(b_other_limit);

    Ok(AncientSolutionReport {
        branch: format!("gamma{k}"),
        eps_used: eps,
        t_singular: backward.t_raw,
        t_singular_uncertainty: backward.t_uncertainty,
        a_rate: LimitEstimate::new(e_vk, a_rate),
        b_rates,
        b_constants,
        backward_limit_point: theta_tag(&[kk]),
        forward_limit_point: "xi".into(),
        einstein_residual_rescaled: resid,
        lambda_monotone: lambda_monotone_backward(sys, &backward),
        opposite_branch_blowup_u: None,
        tol,
    })
}

/// One-sided derivative signs along the stable curve: one component rises
/// while the other falls at every backward sample, from the fixed-point
/// neighbourhood all the way through the transit.
pub fn gamma_derivative_signs_hold(
    sys: &CircleSystem,
    k: usize,
    eps_rel: f64,
    tol: f64,
) -> Result<bool> {
    if sys.m != 2 {
        return Err(Error::Domain("requires m = 2".into()));
    }
    let xi = sys.find_xi()?;
    let w = xi_eigenvector_for_alpha_index(sys, &xi, 1)?;
    let wmax = w.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let scale = xi.iter().cloned().fold(0.0f64, f64::max);
    let kk = k - 1;
    let mut start: Vec<f64> = (0..2)
        .map(|i| xi[i] + eps_rel * scale * w[i] / wmax)
        .collect();
    if !sys.classify_region(&start).in_omega_theta(&[kk]) {
        start = (0..2)
            .map(|i| xi[i] - eps_rel * scale * w[i] / wmax)
            .collect();
    }
    let mut ok = true;
    let opts = StepperOptions::with_tol(tol);
    let f = |_t: f64, y: &[f64], dy: &mut [f64]| sys.field_into(y, dy);
    ode::integrate(
        f,
        0.0,
        &start,
        -30.0,
        &opts,
        |y| y.iter().all(|&v| v >= 0.0),
        &[],
        |step| {
            let field = sys.vector_field(step.y1);
            let band = 1e-12 * (1.0 + step.y1.iter().map(|v| v * v).sum::<f64>());
            if !((field[0] >= -band && field[1] <= band)
                || (field[0] <= band && field[1] >= -band))
            {
                ok = false;
            }
            StepControl::Continue
        },
    );
    Ok(ok)
}

/// Classify the backward limit of a positive trajectory for a three-factor
/// bundle: backward integration until confirmed capture at one of the six
/// partial fixed points. The origin and the interior fixed point are not
/// admissible backward limits and are never returned.
pub fn classify_backward_limit(sys: &CircleSystem, y0: &[f64], tol: f64) -> Result<String> {
    if sys.m != 3 {
        return Err(Error::Domain("backward-limit classification requires m = 3".into()));
    }
    if y0.len() != 3 || y0.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain("start must be a nonnegative 3-vector".into()));
    }
    if sys.g_norm_inf(y0) < 1e-12 {
        return Err(Error::Domain("start is a fixed point".into()));
    }
    let fps = sys.fixed_points(64)?;
    let targets: Vec<(String, Vec<f64>)> = fps
        .v
        .iter()
        .map(|(theta, v)| (theta_tag(theta), v.clone()))
        .collect();

    let opts = StepperOptions::with_tol(tol);
    let escape = 10.0
        * sys
            .blowup_threshold()
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);

    let mut candidate: Option<usize> = None;
    let mut confirm = 0usize;
    let mut result: Option<String> = None;
    let mut closest = (String::new(), f64::MAX);

    let f = |_t: f64, y: &[f64], dy: &mut [f64]| sys.field_into(y, dy);
    ode::integrate(
        f,
        0.0,
        y0,
        -1e5,
        &opts,
        |y| y.iter().all(|&v| v >= 0.0),
        &[],
        |step| {
            let y1 = step.y1;
            for (tag, point) in &targets {
                let d = dist_inf(y1, point);
                if d < closest.1 {
                    closest = (tag.clone(), d);
                }
            }
            if y1.iter().cloned().fold(0.0f64, f64::max) > escape {
                return StepControl::Stop;
            }
            let hit = targets.iter().enumerate().find(|(_, (_, point))| {
                let radius = 1e-4 * (1.0 + point.iter().cloned().fold(0.0f64, f64::max));
                dist_inf(y1, point) < radius
            });
            match hit {
                Some((idx, (tag, _))) => {
                    if candidate == Some(idx) {
                        confirm += 1;
                        // saddle connections can shadow several fixed points,
                        // so capture needs a confirmation window
                        if confirm >= 100 {
                            result = Some(tag.clone());
                            return StepControl::Stop;
                        }
                    } else {
                        candidate = Some(idx);
                        confirm = 1;
                    }
                }
                None => {
                    candidate = None;
                    confirm = 0;
                }
            }
            StepControl::Continue
        },
    );
    result.ok_or(Error::NoCapture {
        closest: closest.0,
        distance: closest.1,
    })
}
