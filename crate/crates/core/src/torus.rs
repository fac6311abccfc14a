//! The rank `r > 1` matrix flow `dH/dtau = H V(b) H` coupled with the base
//! coefficients, hat variables, and the monitors that certify the
//! admissible-start guarantees.

use crate::bundle::{BundleSpec, CouplingConstants};
use crate::error::{Error, Result};
use crate::ode::{self, RunEnd, StepControl, StepperOptions};
use nalgebra::DMatrix;
use serde::Serialize;
use std::io::Write;

/// Fibre metric `H` (symmetric positive definite, r x r) and positive base
/// coefficients `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusState {
    pub h: DMatrix<f64>,
    pub b: Vec<f64>,
}

impl TorusState {
    pub fn new(h: DMatrix<f64>, b: Vec<f64>) -> Self {
        TorusState { h, b }
    }

    /// Embed a rank-one metric state as a 1x1 fibre metric.
    pub fn from_circle(a: f64, b: Vec<f64>) -> Self {
        TorusState {
            h: DMatrix::from_element(1, 1, a),
            b,
        }
    }

    pub fn validate(&self, r: usize, m: usize) -> Result<()> {
        if self.h.nrows() != r || self.h.ncols() != r {
            return Err(Error::Domain(format!(
                "fibre metric must be {r}x{r}, got {}x{}",
                self.h.nrows(),
                self.h.ncols()
            )));
        }
        if self.b.len() != m {
            return Err(Error::Domain(format!(
                "base coefficients must have length {m}, got {}",
                self.b.len()
            )));
        }
        let scale = self.h.abs().max();
        if (&self.h - self.h.transpose()).abs().max() > 1e-13 * (1.0 + scale) {
            return Err(Error::Domain("fibre metric is not symmetric".into()));
        }
        if self.h.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        if self.b.iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain("base coefficients must be positive".into()));
        }
        Ok(())
    }
}

/// Trace-based hat variables: `a_hat = tr H`, `Y_hat_i = a_hat / b_i`,
/// `E_hat = sum Y_hat_i`, and the hat-clock value.
#[derive(Debug, Clone, Serialize)]
pub struct HatVariables {
    pub a_hat: f64,
    pub y_hat: Vec<f64>,
    pub e_hat: f64,
    pub u_hat: f64,
}

pub fn hat_variables(state: &TorusState, u_hat: f64) -> HatVariables {
    let a_hat = state.h.trace();
    let y_hat: Vec<f64> = state.b.iter().map(|&b| a_hat / b).collect();
    let e_hat = y_hat.iter().sum();
    HatVariables {
        a_hat,
        y_hat,
        e_hat,
        u_hat,
    }
}

/// `V_{ab} = sum_i q_{ai} q_{bi} n_i / b_i^2`; positive definite for
/// non-degenerate bundles.
pub fn v_matrix(spec: &BundleSpec, b: &[f64]) -> DMatrix<f64> {
    let r = spec.r;
    DMatrix::from_fn(r, r, |alpha, beta| {
        (0..spec.m)
            .map(|i| {
                (spec.q[alpha][i] * spec.q[beta][i]) as f64 * spec.n[i] as f64 / (b[i] * b[i])
            })
            .sum()
    })
}

/// `h(Q^(i), Q^(i)) = (Q^(i))^T H Q^(i)` for the i-th column of `Q`.
pub fn h_qq(spec: &BundleSpec, h: &DMatrix<f64>, i: usize) -> f64 {
    let mut acc = 0.0;
    for alpha in 0..spec.r {
        for beta in 0..spec.r {
            acc += (spec.q[alpha][i] * spec.q[beta][i]) as f64 * h[(alpha, beta)];
        }
    }
    acc
}

/// Right-hand side `(dH/dtau, db/dtau) = (H V(b) H, 2 p_i - h(Q^i,Q^i)/b_i)`.
/// The matrix product is symmetrized; the exact flow preserves symmetry so
/// the correction removes pure roundoff drift.
pub fn torus_field(spec: &BundleSpec, state: &TorusState) -> (DMatrix<f64>, Vec<f64>) {
    let v = v_matrix(spec, &state.b);
    let hvh = &state.h * &v * &state.h;
    let dh = 0.5 * (&hvh + hvh.transpose());
    let db: Vec<f64> = (0..spec.m)
        .map(|i| 2.0 * spec.p[i] as f64 - h_qq(spec, &state.h, i) / state.b[i])
        .collect();
    (dh, db)
}

/// `tr(HVH)` computed by the summation route
/// `(1/a_hat^2) sum_i sum_a n_i Y_hat_i^2 ((HQ)_{ai})^2`, kept separate from
/// the direct matrix product for the dual-formula consistency check.
pub fn tr_hvh_sum_form(spec: &BundleSpec, state: &TorusState) -> f64 {
    let a_hat = state.h.trace();
    let mut acc = 0.0;
    for i in 0..spec.m {
        let y_hat = a_hat / state.b[i];
        let mut col = 0.0;
        for alpha in 0..spec.r {
            let mut hq = 0.0;
            for beta in 0..spec.r {
                hq += state.h[(alpha, beta)] * spec.q[beta][i] as f64;
            }
            col += hq * hq;
        }
        acc += spec.n[i] as f64 * y_hat * y_hat * col;
    }
    acc / (a_hat * a_hat)
}

#[derive(Debug, Clone, Serialize)]
pub struct TorusSample {
    pub tau: f64,
    pub u_hat: f64,
    /// Upper triangle of `H`, row-major.
    pub h_upper: Vec<f64>,
    pub b: Vec<f64>,
    pub a_hat: f64,
    pub y_hat: Vec<f64>,
    pub e_hat: f64,
    pub det_h: f64,
    pub tr_h_inv: f64,
    /// Smallest base Ricci value `p_i - h(Q^i,Q^i)/(2 b_i)` (in units of the
    /// unscaled base metrics).
    pub ricci_base_min: f64,
    /// Relative disagreement of the two `tr(HVH)` routes.
    pub hvh_dual_dev: f64,
    pub spd_ok: bool,
}

impl TorusSample {
    pub fn h_matrix(&self, r: usize) -> DMatrix<f64> {
        unpack_sym(&self.h_upper, r)
    }

    pub fn state(&self, r: usize) -> TorusState {
        TorusState::new(self.h_matrix(r), self.b.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TorusTermination {
    ReachedSpan,
    StepUnderflow,
    BlowUp,
}

#[derive(Debug, Clone, Serialize)]
pub struct TorusTrajectory {
    pub samples: Vec<TorusSample>,
    pub termination: TorusTermination,
    pub admissible_start: bool,
}

impl TorusTrajectory {
    pub fn last(&self) -> &TorusSample {
        self.samples.last().expect("trajectory has samples")
    }

    pub fn sample_at_tau(&self, tau: f64) -> Option<&TorusSample> {
        self.samples
            .iter()
            .min_by(|a, b| (a.tau - tau).abs().total_cmp(&(b.tau - tau).abs()))
    }

    pub fn csv_header(r: usize, m: usize) -> Vec<String> {
        let mut cols = vec!["tau".to_string(), "u_hat".to_string()];
        for i in 0..r {
            for j in i..r {
                cols.push(format!("h_{}{}", i + 1, j + 1));
            }
        }
        cols.extend((1..=m).map(|i| format!("b_{i}")));
        cols.push("a_hat".to_string());
        cols.extend((1..=m).map(|i| format!("Y_hat_{i}")));
        cols.push("E_hat".to_string());
        cols.push("detH".to_string());
        cols.push("trHinv".to_string());
        cols.push("monitor_flags".to_string());
        cols
    }

    pub fn write_csv<W: Write>(&self, mut w: W, r: usize, m: usize) -> Result<()> {
        use crate::integrator::fmt_f;
        writeln!(w, "{}", Self::csv_header(r, m).join(","))?;
        for s in &self.samples {
            let mut fields = vec![fmt_f(s.tau), fmt_f(s.u_hat)];
            fields.extend(s.h_upper.iter().map(|&v| fmt_f(v)));
            fields.extend(s.b.iter().map(|&v| fmt_f(v)));
            fields.push(fmt_f(s.a_hat));
            fields.extend(s.y_hat.iter().map(|&v| fmt_f(v)));
            fields.push(fmt_f(s.e_hat));
            fields.push(fmt_f(s.det_h));
            fields.push(fmt_f(s.tr_h_inv));
            fields.push(format!(
                "spd{}ric{}",
                if s.spd_ok { '+' } else { '-' },
                if s.ricci_base_min > 0.0 { '+' } else { '-' }
            ));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn run_record(&self) -> serde_json::Value {
        serde_json::json!({
            "samples": self.samples.len(),
            "termination": self.termination,
            "admissible_start": self.admissible_start,
            "final": self.samples.last(),
            // the rank-one fixed-point and monotonicity theory has no
            // analogue here; only the rank-r monitors are asserted
            "fixed_point_structure": "no theory",
        })
    }
}

#[derive(Debug, Clone)]
pub struct TorusFlowOptions {
    pub tol: f64,
    pub checkpoints: Vec<f64>,
    pub max_steps: usize,
}

impl TorusFlowOptions {
    pub fn with_tol(tol: f64) -> Self {
        TorusFlowOptions {
            tol,
            checkpoints: Vec::new(),
            max_steps: 50_000_000,
        }
    }
}

fn pack_dim(r: usize) -> usize {
    r * (r + 1) / 2
}

fn pack_sym(h: &DMatrix<f64>, out: &mut [f64]) {
    let r = h.nrows();
    let mut k = 0;
    for i in 0..r {
        for j in i..r {
            out[k] = h[(i, j)];
            k += 1;
        }
    }
}

fn unpack_sym(upper: &[f64], r: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(r, r);
    let mut k = 0;
    for i in 0..r {
        for j in i..r {
            h[(i, j)] = upper[k];
            h[(j, i)] = upper[k];
            k += 1;
        }
    }
    h
}

/// Integrate `(H, b, u_hat)` adaptively, recording the per-sample monitors.
/// The hat clock accumulates inside the stepper (`du_hat/dtau = 1/tr H`).
pub fn integrate_torus(
    spec: &BundleSpec,
    state0: &TorusState,
    tau_span: (f64, f64),
    opts: &TorusFlowOptions,
) -> Result<TorusTrajectory> {
    spec.ensure_valid()?;
    state0.validate(spec.r, spec.m)?;
    let r = spec.r;
    let m = spec.m;
    let nh = pack_dim(r);
    let dim = nh + m + 1;

    let admissible = spec.admissible_initial(&state0.h, &state0.b)?;

    let mut packed0 = vec![0.0; dim];
    pack_sym(&state0.h, &mut packed0[..nh]);
    packed0[nh..nh + m].copy_from_slice(&state0.b);
    packed0[nh + m] = 0.0;

    let b_floor = 1e-8 * state0.b.iter().cloned().fold(f64::MAX, f64::min);
    let a_cap = 1e12 * state0.h.trace().max(1.0);

    let make_sample = |s: &[f64], tau: f64| -> TorusSample {
        let h = unpack_sym(&s[..nh], r);
        let b = s[nh..nh + m].to_vec();
        let state = TorusState::new(h.clone(), b.clone());
        let hat = hat_variables(&state, s[nh + m]);
        let chol = h.clone().cholesky();
        let (det_h, tr_h_inv, spd_ok) = match &chol {
            Some(c) => (c.determinant(), c.inverse().trace(), true),
            None => (h.determinant(), f64::NAN, false),
        };
        let ricci_base_min = (0..m)
            .map(|i| spec.p[i] as f64 - h_qq(spec, &h, i) / (2.0 * b[i]))
            .fold(f64::MAX, f64::min);
        let direct = {
            let v = v_matrix(spec, &b);
            (&h * &v * &h).trace()
        };
        let summed = tr_hvh_sum_form(spec, &state);
        let hvh_dual_dev = (direct - summed).abs() / direct.abs().max(1e-300);
        TorusSample {
            tau,
            u_hat: s[nh + m],
            h_upper: s[..nh].to_vec(),
            b,
            a_hat: hat.a_hat,
            y_hat: hat.y_hat,
            e_hat: hat.e_hat,
            det_h,
            tr_h_inv,
            ricci_base_min,
            hvh_dual_dev,
            spd_ok,
        }
    };

    let mut samples = vec![make_sample(&packed0, tau_span.0)];
    let mut termination = TorusTermination::ReachedSpan;

    let mut stepper_opts = StepperOptions::with_tol(opts.tol);
    stepper_opts.max_steps = opts.max_steps;

    let f = |_t: f64, s: &[f64], ds: &mut [f64]| {
        let h = unpack_sym(&s[..nh], r);
        let b = &s[nh..nh + m];
        let state = TorusState::new(h, b.to_vec());
        let (dh, db) = torus_field(spec, &state);
        pack_sym(&dh, &mut ds[..nh]);
        ds[nh..nh + m].copy_from_slice(&db);
        ds[nh + m] = 1.0 / state.h.trace();
    };
    let guard = |s: &[f64]| {
        if s[nh..nh + m].iter().any(|&v| v <= 0.0) {
            return false;
        }
        let h = unpack_sym(&s[..nh], r);
        h.trace() > 0.0 && h.cholesky().is_some()
    };

    let run = ode::integrate(
        f,
        tau_span.0,
        &packed0,
        tau_span.1,
        &stepper_opts,
        guard,
        &opts.checkpoints,
        |step| {
            let bmin = step.y1[nh..nh + m].iter().cloned().fold(f64::MAX, f64::min);
            let trace = unpack_sym(&step.y1[..nh], r).trace();
            samples.push(make_sample(step.y1, step.t1));
            if bmin <= b_floor || trace >= a_cap {
                termination = TorusTermination::BlowUp;
                return StepControl::Stop;
            }
            StepControl::Continue
        },
    );
    if run.end == RunEnd::StepUnderflow || run.end == RunEnd::StepBudgetExhausted {
        termination = TorusTermination::StepUnderflow;
    }
    Ok(TorusTrajectory {
        samples,
        termination,
        admissible_start: admissible,
    })
}

/// Post-run evaluation of the structural monitors. Universal monitors hold
/// for every start; the bracketed coefficient bounds and the hat-variable
/// decay are asserted only for admissible starts.
#[derive(Debug, Clone, Serialize)]
pub struct TorusMonitorReport {
    pub det_nondecreasing: bool,
    pub tr_h_inv_nonincreasing: bool,
    pub spd_everywhere: bool,
    pub b_upper_bound: bool,
    pub hvh_dual_max_dev: f64,
    pub hvh_dual_ok: bool,
    /// Admissible-start monitors; `None` when the start was not admissible.
    pub b_lower_bound: Option<bool>,
    pub e_hat_strictly_decreasing: Option<bool>,
    pub e_hat_hyperbolic_bound: Option<bool>,
    pub ricci_positive: Option<bool>,
}

impl TorusMonitorReport {
    pub fn all_pass(&self) -> bool {
        self.det_nondecreasing
            && self.tr_h_inv_nonincreasing
            && self.spd_everywhere
            && self.b_upper_bound
            && self.hvh_dual_ok
            && self.b_lower_bound.unwrap_or(true)
            && self.e_hat_strictly_decreasing.unwrap_or(true)
            && self.e_hat_hyperbolic_bound.unwrap_or(true)
            && self.ricci_positive.unwrap_or(true)
    }
}

pub fn torus_monitors(
    spec: &BundleSpec,
    consts: &CouplingConstants,
    traj: &TorusTrajectory,
) -> TorusMonitorReport {
    let m = spec.m as f64;
    let first = &traj.samples[0];
    let b0 = first.b.clone();
    let e0 = first.e_hat;
    let _ = consts;

    let mut det_ok = true;
    let mut trinv_ok = true;
    let mut spd_ok = true;
    let mut upper_ok = true;
    let mut lower_ok = true;
    let mut e_dec_ok = true;
    let mut e_bound_ok = true;
    let mut ricci_ok = true;
    let mut dual_dev: f64 = 0.0;

    for pair in traj.samples.windows(2) {
        let (s0, s1) = (&pair[0], &pair[1]);
        if s1.det_h < s0.det_h * (1.0 - 1e-9) {
            det_ok = false;
        }
        if s1.tr_h_inv > s0.tr_h_inv * (1.0 + 1e-9) {
            trinv_ok = false;
        }
        if s1.e_hat >= s0.e_hat * (1.0 + 1e-12) {
            e_dec_ok = false;
        }
    }
    for s in &traj.samples {
        if !s.spd_ok {
            spd_ok = false;
        }
        dual_dev = dual_dev.max(s.hvh_dual_dev);
        for i in 0..spec.m {
            let slack = 1e-6 * (1.0 + s.b[i].abs());
            let upper = 2.0 * spec.p[i] as f64 * s.tau + b0[i];
            if s.b[i] > upper + slack {
                upper_ok = false;
            }
            let lower = (2.0 * spec.p[i] as f64 - 1.0 / m) * s.tau + b0[i];
            if s.b[i] < lower - slack {
                lower_ok = false;
            }
        }
        if s.u_hat > 0.0 {
            let bound = (m / (s.u_hat + m / e0)).min(m / s.u_hat);
            if s.e_hat > bound * (1.0 + 1e-9) {
                e_bound_ok = false;
            }
        }
        if s.ricci_base_min <= 0.0 {
            ricci_ok = false;
        }
    }

    let admissible = traj.admissible_start;
    TorusMonitorReport {
        det_nondecreasing: det_ok,
        tr_h_inv_nonincreasing: trinv_ok,
        spd_everywhere: spd_ok,
        b_upper_bound: upper_ok,
        hvh_dual_max_dev: dual_dev,
        hvh_dual_ok: dual_dev < 1e-10,
        b_lower_bound: admissible.then_some(lower_ok),
        e_hat_strictly_decreasing: admissible.then_some(e_dec_ok),
        e_hat_hyperbolic_bound: admissible.then_some(e_bound_ok),
        ricci_positive: admissible.then_some(ricci_ok),
    }
}

/// Limit fibre metric by Richardson extrapolation over geometrically spaced
/// horizons (T, 2T, 4T). The flow guarantees convergence but no rate, so an
/// extrapolation uncertainty is reported instead of a claimed rate.
pub fn limit_metric(
    spec: &BundleSpec,
    state0: &TorusState,
    horizon: f64,
    tol: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let mut opts = TorusFlowOptions::with_tol(tol);
    opts.checkpoints = vec![horizon, 2.0 * horizon];
    let traj = integrate_torus(spec, state0, (0.0, 4.0 * horizon), &opts)?;
    if traj.termination != TorusTermination::ReachedSpan {
        return Err(Error::Domain(
            "limit metric requires the run to reach its horizon".into(),
        ));
    }
    let r = spec.r;
    let h1 = traj
        .sample_at_tau(horizon)
        .ok_or_else(|| Error::Domain("missing checkpoint sample".into()))?
        .h_matrix(r);
    let h2 = traj
        .sample_at_tau(2.0 * horizon)
        .ok_or_else(|| Error::Domain("missing checkpoint sample".into()))?
        .h_matrix(r);
    let h4 = traj.last().h_matrix(r);
    let d12 = (&h2 - &h1).abs().max();
    let d24 = (&h4 - &h2).abs().max();
    if d24 <= 0.0 {
        return Ok((h4, 0.0));
    }
    let ratio = d12 / d24;
    if ratio <= 1.05 {
        // no clear contraction between doublings; refuse to extrapolate
        return Ok((h4.clone(), 10.0 * d24));
    }
    let correction = (&h4 - &h2) / (ratio - 1.0);
    let uncertainty = correction.abs().max();
    Ok((h4 + correction, uncertainty))
}
