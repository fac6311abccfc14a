//! Curvature and collapse diagnostics along trajectories: Ricci components,
//! scalar curvature, Einstein residuals, type-I surrogate series, and the
//! normalized volume proxy.
//!
//! The full curvature norm is not computable without the base factors'
//! curvature tensors, so the type-I surrogate uses exactly the component
//! classes that control it: the connection terms (quadratic in the fibre
//! metric over base scales), the base term `K_i/b_i` with user-supplied
//! bounds `K_i`, and the Ricci values themselves.

use crate::bundle::BundleSpec;
use crate::integrator::Trajectory;
use crate::torus::{h_qq, v_matrix, TorusState, TorusTrajectory};
use nalgebra::DMatrix;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureSnapshot {
    /// Fibre block of the Ricci tensor in fibre coordinates: `(1/2) H V H`.
    #[serde(skip)]
    pub ricci_fibre: DMatrix<f64>,
    /// Per-factor Ricci eigenvalue in the evolving orthonormal frame:
    /// `p_i/b_i - h(Q^i,Q^i)/(2 b_i^2)`, multiplicity `2 n_i`.
    pub ricci_base: Vec<f64>,
    /// Fibre Ricci eigenvalues with respect to the fibre metric
    /// (spectrum of `(1/2) V H`).
    pub ricci_fibre_eigenvalues: Vec<f64>,
    pub scalar: f64,
    /// Largest connection-term magnitude
    /// `sqrt(h(Q^i,Q^i) h(Q^j,Q^j)) / (4 b_i b_j)`.
    pub a_tensor_scale: f64,
    /// `K_i / b_i` for the configured base curvature bounds.
    pub base_curv_scale: Vec<f64>,
}

impl CurvatureSnapshot {
    /// Largest Ricci magnitude over all frame slots.
    pub fn max_ricci_abs(&self) -> f64 {
        self.ricci_base
            .iter()
            .chain(self.ricci_fibre_eigenvalues.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn min_ricci(&self) -> f64 {
        self.ricci_base
            .iter()
            .chain(self.ricci_fibre_eigenvalues.iter())
            .fold(f64::MAX, |acc, v| acc.min(*v))
    }
}

/// Fibre Ricci eigenvalues with respect to the fibre metric: the spectrum of
/// `(1/2) V H`, computed on the symmetrized form `(1/2) L^T V L` with
/// `H = L L^T`.
fn fibre_eigenvalues(spec: &BundleSpec, state: &TorusState) -> Vec<f64> {
    let v = v_matrix(spec, &state.b);
    let chol = state
        .h
        .clone()
        .cholesky()
        .expect("fibre metric must be positive definite");
    let l = chol.l();
    let sym = 0.5 * l.transpose() * v * &l;
    let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Curvature snapshot of a metric state; `k` are the per-factor curvature
/// bounds entering the base scale (pass zeros to drop that part).
pub fn ricci(spec: &BundleSpec, state: &TorusState, k: &[f64]) -> CurvatureSnapshot {
    let v = v_matrix(spec, &state.b);
    let hvh = &state.h * &v * &state.h;
    // fibre Ricci block is (1/2) HVH; the average removes roundoff asymmetry
    let ricci_fibre = 0.25 * (&hvh + hvh.transpose());
    let hqq: Vec<f64> = (0..spec.m).map(|i| h_qq(spec, &state.h, i)).collect();
    let ricci_base: Vec<f64> = (0..spec.m)
        .map(|i| spec.p[i] as f64 / state.b[i] - hqq[i] / (2.0 * state.b[i] * state.b[i]))
        .collect();
    let scalar = scalar_curvature(spec, state);
    let mut a_scale = 0.0f64;
    for i in 0..spec.m {
        for j in 0..spec.m {
            a_scale = a_scale
                .max((hqq[i] * hqq[j]).sqrt() / (4.0 * state.b[i] * state.b[j]));
        }
    }
    let base_curv_scale: Vec<f64> = (0..spec.m)
        .map(|i| k.get(i).copied().unwrap_or(0.0) / state.b[i])
        .collect();
    CurvatureSnapshot {
        ricci_fibre,
        ricci_base,
        ricci_fibre_eigenvalues: fibre_eigenvalues(spec, state),
        scalar,
        a_tensor_scale: a_scale,
        base_curv_scale,
    }
}

/// Both printed forms of the scalar curvature: the metric-coefficient form
/// `sum 2 n_i p_i / b_i - (1/2) sum n_i h(Q^i,Q^i)/b_i^2` and the
/// hat-variable form; they agree to roundoff.
pub fn scalar_curvature_forms(spec: &BundleSpec, state: &TorusState) -> (f64, f64) {
    let mut direct = 0.0;
    for i in 0..spec.m {
        let hqq = h_qq(spec, &state.h, i);
        direct += 2.0 * spec.n[i] as f64 * spec.p[i] as f64 / state.b[i]
            - 0.5 * spec.n[i] as f64 * hqq / (state.b[i] * state.b[i]);
    }
    let a_hat = state.h.trace();
    let mut hat = 0.0;
    for i in 0..spec.m {
        let y_hat = a_hat / state.b[i];
        let hqq = h_qq(spec, &state.h, i);
        hat += 2.0 * spec.n[i] as f64 * spec.p[i] as f64 * y_hat
            - 0.5 * spec.n[i] as f64 * (hqq / a_hat) * y_hat * y_hat;
    }
    (direct, hat / a_hat)
}

pub fn scalar_curvature(spec: &BundleSpec, state: &TorusState) -> f64 {
    scalar_curvature_forms(spec, state).0
}

/// Deviation from the Einstein condition: the largest gap between any Ricci
/// eigenvalue slot and the multiplicity-weighted least-squares Einstein
/// constant. Zero (to roundoff) exactly on Einstein states of the ansatz.
pub fn einstein_residual(spec: &BundleSpec, state: &TorusState) -> f64 {
    let snap = ricci(spec, state, &vec![0.0; spec.m]);
    let mut num = 0.0;
    let mut den = 0.0;
    for ev in &snap.ricci_fibre_eigenvalues {
        num += ev;
        den += 1.0;
    }
    for (i, rho) in snap.ricci_base.iter().enumerate() {
        let w = 2.0 * spec.n[i] as f64;
        num += w * rho;
        den += w;
    }
    let lambda = num / den;
    let mut worst = 0.0f64;
    for ev in &snap.ricci_fibre_eigenvalues {
        worst = worst.max((ev - lambda).abs());
    }
    for rho in &snap.ricci_base {
        worst = worst.max((rho - lambda).abs());
    }
    worst
}

/// Least-squares Einstein constant of a state (the `lambda` used by
/// [`einstein_residual`]).
pub fn einstein_constant(spec: &BundleSpec, state: &TorusState) -> f64 {
    let snap = ricci(spec, state, &vec![0.0; spec.m]);
    let mut num = 0.0;
    let mut den = 0.0;
    for ev in &snap.ricci_fibre_eigenvalues {
        num += ev;
        den += 1.0;
    }
    for (i, rho) in snap.ricci_base.iter().enumerate() {
        let w = 2.0 * spec.n[i] as f64;
        num += w * rho;
        den += w;
    }
    num / den
}

/// Time factor for the type-I series: `tau` for the long-time check, or
/// `T + tau` for a finite-time singularity at `tau = -T`.
#[derive(Debug, Clone, Copy)]
pub enum TypeOneClock {
    ForwardTau,
    FiniteTime { t_singular: f64 },
}

/// Curvature surrogate series `(tau, factor * kappa(tau))` with
/// `kappa = max(|Ricci|, connection scale, K_i/b_i)`. Boundedness of the
/// series is the type-I check.
pub fn type_one_product(
    spec: &BundleSpec,
    states: &[(f64, TorusState)],
    k: &[f64],
    clock: TypeOneClock,
) -> Vec<(f64, f64)> {
    states
        .iter()
        .map(|(tau, state)| {
            let snap = ricci(spec, state, k);
            let kappa = snap
                .max_ricci_abs()
                .max(snap.a_tensor_scale)
                .max(snap.base_curv_scale.iter().cloned().fold(0.0, f64::max));
            let factor = match clock {
                TypeOneClock::ForwardTau => *tau,
                TypeOneClock::FiniteTime { t_singular } => t_singular + tau,
            };
            (*tau, factor * kappa)
        })
        .collect()
}

/// Normalized volume series `(tau, sqrt(det H) prod b_i^{n_i} / tau^{n/2})`
/// with `n = r + 2 sum n_i`; samples at `tau <= 0` are skipped.
pub fn volume_proxy(spec: &BundleSpec, states: &[(f64, TorusState)]) -> Vec<(f64, f64)> {
    let n_total = spec.r as f64 + 2.0 * spec.n.iter().sum::<i64>() as f64;
    states
        .iter()
        .filter(|(tau, _)| *tau > 0.0)
        .map(|(tau, state)| {
            let det = state.h.determinant().max(0.0);
            let mut v = det.sqrt();
            for i in 0..spec.m {
                v *= state.b[i].powi(spec.n[i] as i32);
            }
            (*tau, v / tau.powf(0.5 * n_total))
        })
        .collect()
}

/// Least-squares slope of `ln v` against `ln t` over the final `decades`
/// decades of the series.
pub fn loglog_slope(series: &[(f64, f64)], decades: f64) -> f64 {
    let t_max = series
        .iter()
        .map(|(t, _)| *t)
        .fold(f64::MIN, f64::max);
    let t_min = t_max / 10f64.powf(decades);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, v)| *t >= t_min && *v > 0.0)
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Metric states of a rank-one trajectory, for feeding the diagnostics.
/// Samples whose phase point touches a coordinate hyperplane carry no metric
/// and are skipped.
pub fn circle_states(traj: &Trajectory) -> Vec<(f64, TorusState)> {
    traj.samples
        .iter()
        .filter(|s| s.b.iter().all(|v| v.is_finite() && *v > 0.0))
        .map(|s| (s.tau, TorusState::from_circle(s.a, s.b.clone())))
        .collect()
}

pub fn torus_states(traj: &TorusTrajectory, r: usize) -> Vec<(f64, TorusState)> {
    traj.samples.iter().map(|s| (s.tau, s.state(r))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::{CircleState, CircleSystem};
    use crate::integrator::{integrate_tau, FlowOptions};
    use crate::presets;
    use approx::assert_relative_eq;

    fn sym2_sys() -> CircleSystem {
        CircleSystem::new(&presets::sym2()).unwrap()
    }

    #[test]
    fn einstein_state_has_zero_residual() {
        let spec = presets::sym2();
        let sys = sym2_sys();
        let xi = sys.find_xi().unwrap();
        let a = 4.0 / 3.0;
        let b: Vec<f64> = xi.iter().map(|&x| a / x).collect();
        let state = TorusState::from_circle(a, b);
        let resid = einstein_residual(&spec, &state);
        assert!(resid < 1e-10, "residual {resid}");
        // Einstein constant scales like E(xi)/(2a)
        let lambda = einstein_constant(&spec, &state);
        assert_relative_eq!(lambda * a, sys.energy(&xi) / 2.0, max_relative = 1e-12);
        // base eigenvalue from the closed form
        let snap = ricci(&spec, &state, &[0.0, 0.0]);
        assert_relative_eq!(snap.ricci_base[0], 2.0 - (4.0 / 3.0) / 2.0, max_relative = 1e-13);
    }

    #[test]
    fn sub_bundle_limit_metric_is_einstein() {
        // single-factor bundle with the partial fixed point's coefficients
        let spec = crate::bundle::BundleSpec::new(1, 1, vec![1], vec![2], vec![vec![1]]);
        let state = TorusState::from_circle(1.0, vec![0.5]);
        let resid = einstein_residual(&spec, &state);
        assert!(resid < 1e-10, "residual {resid}");
    }

    #[test]
    fn generic_state_is_not_einstein() {
        let spec = presets::sym2();
        let state = TorusState::from_circle(0.7, vec![1.0, 2.3]);
        assert!(einstein_residual(&spec, &state) > 1e-3);
    }

    #[test]
    fn scalar_curvature_values() {
        let spec = presets::sym2();
        let state = TorusState::from_circle(1.0, vec![1.0, 1.0]);
        let (direct, hat) = scalar_curvature_forms(&spec, &state);
        assert_relative_eq!(direct, 7.0, max_relative = 1e-14);
        assert!((direct - hat).abs() <= 1e-12 * direct.abs());
        // coincides with the monotone quantity when the phase prefactor is 1
        let sys = sym2_sys();
        assert_relative_eq!(direct, sys.lambda_bar(&[1.0, 1.0]).unwrap(), max_relative = 1e-13);
    }

    #[test]
    fn scalar_curvature_on_the_einstein_ray() {
        let spec = presets::sym2();
        let sys = sym2_sys();
        let xi = sys.find_xi().unwrap();
        let b: Vec<f64> = xi.iter().map(|&x| 1.0 / x).collect();
        let state = TorusState::from_circle(1.0, b);
        let expected: f64 = 2.0 * (0..2).map(|i| sys.n[i] * sys.p[i] * xi[i]).sum::<f64>()
            - 0.5 * sys.energy(&xi);
        assert_relative_eq!(scalar_curvature(&spec, &state), expected, max_relative = 1e-13);
    }

    #[test]
    fn scalar_curvature_decays_with_large_base() {
        let spec = presets::sym2();
        let state = TorusState::from_circle(1.0, vec![1e9, 1e9]);
        assert!(scalar_curvature(&spec, &state).abs() < 1e-8);
    }

    #[test]
    fn trace_identity() {
        let spec = presets::tor();
        let h = nalgebra::dmatrix![0.3, 0.05; 0.05, 0.2];
        let state = TorusState::new(h.clone(), vec![1.0, 2.0, 0.7]);
        let snap = ricci(&spec, &state, &[0.0; 3]);
        let h_inv = h.try_inverse().unwrap();
        let fibre_trace = (h_inv * &snap.ricci_fibre).trace();
        let base_trace: f64 = (0..3)
            .map(|i| 2.0 * spec.n[i] as f64 * snap.ricci_base[i])
            .sum();
        assert_relative_eq!(snap.scalar, base_trace + fibre_trace, max_relative = 1e-10);
    }

    #[test]
    fn small_fibre_limit() {
        let spec = presets::tor();
        let eps = 1e-6;
        let state = TorusState::new(DMatrix::from_diagonal_element(2, 2, eps), vec![1.0; 3]);
        let snap = ricci(&spec, &state, &[0.0; 3]);
        assert!(snap.ricci_fibre.abs().max() < 10.0 * eps * eps);
        for i in 0..3 {
            assert_relative_eq!(
                snap.ricci_base[i],
                spec.p[i] as f64 / state.b[i],
                max_relative = 1e-4
            );
        }
    }

    #[test]
    fn basin_trajectory_has_positive_ricci() {
        let spec = presets::sym2();
        let sys = sym2_sys();
        let state0 = CircleState::new(0.1, vec![1.0, 1.0]);
        let opts = FlowOptions::with_tol(1e-9);
        let traj = integrate_tau(&sys, &state0, (0.0, 200.0), &opts).unwrap();
        for (_, state) in circle_states(&traj) {
            let snap = ricci(&spec, &state, &[0.0, 0.0]);
            assert!(snap.min_ricci() > 0.0);
        }
    }

    #[test]
    fn einstein_ray_type_one_product_is_constant() {
        let spec = presets::sym2();
        let sys = sym2_sys();
        let xi = sys.find_xi().unwrap();
        let a0 = 1.0;
        let b0: Vec<f64> = xi.iter().map(|&x| a0 / x).collect();
        let state0 = CircleState::new(a0, b0);
        let mut opts = FlowOptions::with_tol(1e-10);
        opts.region_events = false;
        let traj = integrate_tau(&sys, &state0, (0.0, 1000.0), &opts).unwrap();
        let states = circle_states(&traj);
        let series = type_one_product(&spec, &states, &[1.0, 1.0], TypeOneClock::ForwardTau);
        let late: Vec<f64> = series
            .iter()
            .filter(|(t, _)| *t > 100.0)
            .map(|(_, v)| *v)
            .collect();
        let mean: f64 = late.iter().sum::<f64>() / late.len() as f64;
        for v in late {
            // homothety makes the product asymptotically constant; the
            // offset a(0) decays like 1/tau
            assert!((v - mean).abs() < 0.02 * mean);
        }
    }

    #[test]
    fn basin_type_one_product_is_bounded() {
        let spec = presets::sym2();
        let sys = sym2_sys();
        let state0 = CircleState::new(0.1, vec![1.0, 1.0]);
        let mut opts = FlowOptions::with_tol(1e-9);
        opts.region_events = false;
        let traj = integrate_tau(&sys, &state0, (0.0, 10_000.0), &opts).unwrap();
        let states = circle_states(&traj);
        let series = type_one_product(&spec, &states, &[1.0, 1.0], TypeOneClock::ForwardTau);
        let window: Vec<f64> = series
            .iter()
            .filter(|(t, _)| *t >= 100.0)
            .map(|(_, v)| *v)
            .collect();
        let running_max = window.iter().cloned().fold(0.0f64, f64::max);
        assert!(running_max.is_finite() && running_max > 0.0);
        // the product settles: late values stay within 20% of the running max
        let late: Vec<f64> = series
            .iter()
            .filter(|(t, _)| *t >= 1000.0)
            .map(|(_, v)| *v)
            .collect();
        for v in late {
            assert!(v > 0.8 * running_max, "{v} vs running max {running_max}");
        }
    }

    #[test]
    fn zero_base_bounds_reduce_surrogate() {
        let spec = presets::sym2();
        let state = TorusState::from_circle(1.0, vec![1.0, 1.0]);
        let with_k = type_one_product(
            &spec,
            &[(1.0, state.clone())],
            &[100.0, 100.0],
            TypeOneClock::ForwardTau,
        );
        let without_k =
            type_one_product(&spec, &[(1.0, state)], &[0.0, 0.0], TypeOneClock::ForwardTau);
        assert!(with_k[0].1 > without_k[0].1);
    }

    #[test]
    fn einstein_ray_volume_slope_is_zero() {
        let spec = presets::sym2();
        let sys = sym2_sys();
        let xi = sys.find_xi().unwrap();
        let b0: Vec<f64> = xi.iter().map(|&x| 1.0 / x).collect();
        let state0 = CircleState::new(1.0, b0);
        let mut opts = FlowOptions::with_tol(1e-10);
        opts.region_events = false;
        let traj = integrate_tau(&sys, &state0, (0.0, 10_000.0), &opts).unwrap();
        let series = volume_proxy(&spec, &circle_states(&traj));
        let slope = loglog_slope(&series, 1.0);
        assert!(slope.abs() < 0.02, "slope {slope}");
    }

    #[test]
    fn basin_volume_slope_is_minus_half() {
        let spec = presets::sym2();
        let sys = sym2_sys();
        let state0 = CircleState::new(0.1, vec![1.0, 1.0]);
        let mut opts = FlowOptions::with_tol(1e-9);
        opts.region_events = false;
        let traj = integrate_tau(&sys, &state0, (0.0, 10_000.0), &opts).unwrap();
        let series = volume_proxy(&spec, &circle_states(&traj));
        let slope = loglog_slope(&series, 1.0);
        assert!((slope + 0.5).abs() < 0.05, "slope {slope}");
    }
}
