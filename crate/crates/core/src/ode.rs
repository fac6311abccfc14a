//! Embedded adaptive Runge-Kutta 5(4) stepper with dense output.
//!
//! The polynomial systems integrated here are nonstiff, so an explicit pair
//! with local extrapolation is the right tool. The stepper supports both
//! integration directions, a positivity guard that rejects invalid trial
//! states, checkpoint clamping so requested times are hit exactly, and the
//! pair's quartic interpolant for event localization between accepted steps.

/// Butcher tableau of the 5(4) pair (nodes, stage weights, 5th-order weights,
/// embedded error weights, dense-output weights).
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A21: f64 = 0.2;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone)]
pub struct StepperOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
    /// Steps below `min_step_rel * |span|` terminate with `StepUnderflow`.
    pub min_step_rel: f64,
}

impl StepperOptions {
    pub fn with_tol(tol: f64) -> Self {
        StepperOptions {
            rtol: tol,
            atol: tol,
            h_init: None,
            h_max: None,
            max_steps: 50_000_000,
            min_step_rel: 1e-14,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunEnd {
    ReachedEnd,
    StoppedByCallback,
    StepUnderflow,
    StepBudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepControl {
    Continue,
    Stop,
}

/// An accepted step with its dense interpolant.
pub struct DenseStep<'a> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a [f64],
    pub y1: &'a [f64],
    cont: &'a [Vec<f64>; 5],
}

impl<'a> DenseStep<'a> {
    pub fn h(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Evaluate the interpolant at `t` inside `[t0, t1]` (either direction).
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let h = self.t1 - self.t0;
        let s = if h == 0.0 { 0.0 } else { (t - self.t0) / h };
        let s1 = 1.0 - s;
        for i in 0..out.len() {
            out[i] = self.cont[0][i]
                + s * (self.cont[1][i]
                    + s1 * (self.cont[2][i] + s * (self.cont[3][i] + s1 * self.cont[4][i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.y0.len()];
        self.eval_into(t, &mut out);
        out
    }

    /// Locate a sign change of `g` inside the step by bisection on the
    /// interpolant, to absolute time tolerance `t_tol`. Requires
    /// `g(t0) * g(t1) <= 0`.
    pub fn locate_root(&self, g: impl Fn(f64, &[f64]) -> f64, t_tol: f64) -> f64 {
        let mut lo = self.t0;
        let mut hi = self.t1;
        let mut buf = vec![0.0; self.y0.len()];
        let mut g_lo = g(lo, self.y0);
        for _ in 0..200 {
            if (hi - lo).abs() <= t_tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            self.eval_into(mid, &mut buf);
            let g_mid = g(mid, &buf);
            if (g_lo <= 0.0) == (g_mid <= 0.0) {
                lo = mid;
                g_lo = g_mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

pub struct Integration {
    pub t: f64,
    pub y: Vec<f64>,
    pub end: RunEnd,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

/// Integrate `dy/dt = f(t, y)` from `t0` to `t_end` (either direction).
///
/// `guard` vets trial states before error control; a failing guard halves
/// the step. `checkpoints` must be sorted in the direction of integration;
/// steps are clamped so each checkpoint is the endpoint of some accepted
/// step. `on_step` sees every accepted step and may stop the run.
pub fn integrate<F, G, S>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &StepperOptions,
    guard: G,
    checkpoints: &[f64],
    mut on_step: S,
) -> Integration
where
    F: FnMut(f64, &[f64], &mut [f64]),
    G: Fn(&[f64]) -> bool,
    S: FnMut(&DenseStep) -> StepControl,
{
    let dim = y0.len();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();
    let min_h = opts.min_step_rel * span;

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; dim]).collect();
    let mut y_stage = vec![0.0; dim];
    let mut y_next = vec![0.0; dim];
    let mut cont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; dim]);

    let mut eval = |t: f64, y: &[f64], out: &mut [f64]| f(t, y, out);
    eval(t, &y, &mut k[0]);

    // initial step heuristic: balance state scale against derivative scale
    let sc = |yv: &[f64], i: usize| opts.atol + opts.rtol * yv[i].abs();
    let mut h = opts.h_init.unwrap_or_else(|| {
        let dy: f64 = (0..dim).map(|i| (k[0][i] / sc(&y, i)).powi(2)).sum::<f64>().sqrt();
        let d0: f64 = (0..dim).map(|i| (y[i] / sc(&y, i)).powi(2)).sum::<f64>().sqrt();
        let guess = if dy > 1e-10 { 0.01 * (d0.max(1e-6)) / dy } else { 1e-6 * span };
        guess.min(span).max(span * 1e-12)
    }) * dir;
    let h_cap = opts.h_max.unwrap_or(span);

    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut cp_idx = 0usize;
    let mut steps = 0usize;

    loop {
        if dir * (t_end - t) <= 0.0 {
            return Integration { t, y, end: RunEnd::ReachedEnd, steps_accepted: accepted, steps_rejected: rejected };
        }
        steps += 1;
        if steps > opts.max_steps {
            return Integration { t, y, end: RunEnd::StepBudgetExhausted, steps_accepted: accepted, steps_rejected: rejected };
        }

        // clamp to the remaining span, the cap, and the next checkpoint
        let mut h_eff = h.abs().min(h_cap).min((t_end - t).abs());
        while cp_idx < checkpoints.len() && dir * (checkpoints[cp_idx] - t) <= 0.0 {
            cp_idx += 1;
        }
        if cp_idx < checkpoints.len() {
            let to_cp = (checkpoints[cp_idx] - t).abs();
            if to_cp > 0.0 {
                h_eff = h_eff.min(to_cp);
            }
        }
        if h_eff < min_h && span > 0.0 {
            return Integration { t, y, end: RunEnd::StepUnderflow, steps_accepted: accepted, steps_rejected: rejected };
        }
        let hs = h_eff * dir;

        // stages
        for i in 0..dim {
            y_stage[i] = y[i] + hs * A21 * k[0][i];
        }
        eval(t + C[1] * hs, &y_stage, &mut k[1]);
        for i in 0..dim {
            y_stage[i] = y[i] + hs * (A31 * k[0][i] + A32 * k[1][i]);
        }
        eval(t + C[2] * hs, &y_stage, &mut k[2]);
        for i in 0..dim {
            y_stage[i] = y[i] + hs * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
        }
        eval(t + C[3] * hs, &y_stage, &mut k[3]);
        for i in 0..dim {
            y_stage[i] =
                y[i] + hs * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
        }
        eval(t + C[4] * hs, &y_stage, &mut k[4]);
        for i in 0..dim {
            y_stage[i] = y[i]
                + hs * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i]
                    + A65 * k[4][i]);
        }
        eval(t + C[5] * hs, &y_stage, &mut k[5]);
        for i in 0..dim {
            y_next[i] = y[i]
                + hs * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
        }
        eval(t + hs, &y_next, &mut k[6]);

        // error estimate against the embedded 4th-order solution
        let mut err_sq = 0.0;
        for i in 0..dim {
            let e = hs
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                    + E7 * k[6][i]);
            let scale = opts.atol + opts.rtol * y[i].abs().max(y_next[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / dim as f64).sqrt();

        let bad = !err.is_finite() || y_next.iter().any(|v| !v.is_finite());
        if bad || !guard(&y_next) {
            h = h.abs() * if bad { 0.3 } else { 0.5 };
            rejected += 1;
            if h < min_h && span > 0.0 {
                return Integration { t, y, end: RunEnd::StepUnderflow, steps_accepted: accepted, steps_rejected: rejected };
            }
            continue;
        }

        if err <= 1.0 {
            // dense output coefficients for this step
            for i in 0..dim {
                let ydiff = y_next[i] - y[i];
                let bspl = hs * k[0][i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - hs * k[6][i] - bspl;
                cont[4][i] = hs
                    * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i]
                        + D7 * k[6][i]);
            }
            let t_new = t + hs;
            let control = on_step(&DenseStep {
                t0: t,
                t1: t_new,
                y0: &y,
                y1: &y_next,
                cont: &cont,
            });
            t = t_new;
            std::mem::swap(&mut y, &mut y_next);
            k.swap(0, 6); // first-same-as-last
            accepted += 1;
            if control == StepControl::Stop {
                return Integration { t, y, end: RunEnd::StoppedByCallback, steps_accepted: accepted, steps_rejected: rejected };
            }
            let factor = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
            h = h.abs() * factor;
        } else {
            rejected += 1;
            let factor = (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
            h = h.abs() * factor;
        }
    }
}
