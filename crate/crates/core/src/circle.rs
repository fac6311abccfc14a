//! Rank-one phase-space functions, fixed points, region classification, and
//! the scale-invariant monotone quantity for `dY_i/du = -Y_i F_i(Y)`.

use crate::bundle::BundleSpec;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Phase point `Y` with `Y_i = a/b_i >= 0`. Points with a vanishing
/// component are valid phase points but do not correspond to metrics on the
/// bundle.
pub type YState = Vec<f64>;

/// Metric coefficients of a rank-one connection metric: fibre coefficient
/// `a > 0` and base coefficients `b_i > 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircleState {
    pub a: f64,
    pub b: Vec<f64>,
}

impl CircleState {
    pub fn new(a: f64, b: Vec<f64>) -> Self {
        CircleState { a, b }
    }

    pub fn y(&self) -> YState {
        self.b.iter().map(|&bi| self.a / bi).collect()
    }
}

/// Sign of a deficit component relative to the boundary tolerance band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sign {
    Positive,
    Boundary,
    Negative,
}

/// Sign conditions satisfied at a phase point: one [`Sign`] per deficit
/// component, with `|F_i| <= 1e-9 (1 + |Y|^2)` counted as on the boundary
/// (the deficits are quadratic, so the band must scale).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegionTag {
    pub signs: Vec<Sign>,
}

impl RegionTag {
    /// Member of the compact convex region where all deficits are >= 0.
    pub fn in_omega_plus(&self) -> bool {
        self.signs.iter().all(|s| *s != Sign::Negative)
    }

    pub fn interior_omega_plus(&self) -> bool {
        self.signs.iter().all(|s| *s == Sign::Positive)
    }

    pub fn in_omega_minus(&self) -> bool {
        self.signs.iter().all(|s| *s != Sign::Positive)
    }

    pub fn interior_omega_minus(&self) -> bool {
        self.signs.iter().all(|s| *s == Sign::Negative)
    }

    /// Member of the mixed-sign region: deficits >= 0 on `theta`, <= 0 off it.
    pub fn in_omega_theta(&self, theta: &[usize]) -> bool {
        self.signs.iter().enumerate().all(|(i, s)| {
            if theta.contains(&i) {
                *s != Sign::Negative
            } else {
                *s != Sign::Positive
            }
        })
    }

    pub fn on_boundary(&self) -> bool {
        self.signs.iter().any(|s| *s == Sign::Boundary)
    }

    /// Compact flag string for CSV output, one of `+ 0 -` per component.
    pub fn flags(&self) -> String {
        self.signs
            .iter()
            .map(|s| match s {
                Sign::Positive => '+',
                Sign::Boundary => '0',
                Sign::Negative => '-',
            })
            .collect()
    }
}

/// The constant solutions of the rank-one flow: the origin, the partial
/// fixed points `v_theta` supported on proper subsets, and the interior
/// fixed point `xi` (the Einstein point).
#[derive(Debug, Clone, Serialize)]
pub struct FixedPointSet {
    pub origin: YState,
    /// `(theta, v_theta)` pairs, `theta` sorted ascending, enumerated by
    /// (subset size, bitmask) up to the requested cap.
    pub v: Vec<(Vec<usize>, YState)>,
    pub xi: YState,
    /// True when the subset enumeration was cut off at the cap.
    pub truncated: bool,
}

impl FixedPointSet {
    /// All points with display tags: "origin", "v{..}", "xi".
    pub fn tagged_points(&self) -> Vec<(String, &YState)> {
        let mut out = vec![("origin".to_string(), &self.origin)];
        for (theta, v) in &self.v {
            out.push((theta_tag(theta), v));
        }
        out.push(("xi".to_string(), &self.xi));
        out
    }

    /// Closest point in max-norm, with its tag.
    pub fn nearest(&self, y: &[f64]) -> (String, f64) {
        self.tagged_points()
            .into_iter()
            .map(|(tag, p)| (tag, dist_inf(y, p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("fixed point set is nonempty")
    }
}

pub fn theta_tag(theta: &[usize]) -> String {
    let inner = theta
        .iter()
        .map(|i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join(",");
    format!("v{{{inner}}}")
}

pub fn dist_inf(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Precomputed rank-one system for a validated spec: coefficients of the
/// polynomial field `-Y_i F_i(Y)` with `F_i = 2 p_i Y_i - q_i^2 Y_i^2 - E(Y)`
/// and `E = sum_j n_j q_j^2 Y_j^2`.
#[derive(Debug, Clone)]
pub struct CircleSystem {
    pub spec: BundleSpec,
    pub m: usize,
    pub n: Vec<f64>,
    pub p: Vec<f64>,
    /// q_i^2 per factor.
    pub q2: Vec<f64>,
    /// n_i q_i^2 per factor.
    pub nq2: Vec<f64>,
    /// Homogeneity weight `n = 1 + 2 sum n_i` of the monotone quantity.
    pub total_dim: f64,
}

impl CircleSystem {
    pub fn new(spec: &BundleSpec) -> Result<Self> {
        spec.ensure_valid()?;
        if spec.r != 1 {
            return Err(Error::Domain(format!(
                "circle system requires r=1, got r={}",
                spec.r
            )));
        }
        let n: Vec<f64> = spec.n.iter().map(|&v| v as f64).collect();
        let p: Vec<f64> = spec.p.iter().map(|&v| v as f64).collect();
        let q2: Vec<f64> = (0..spec.m).map(|i| (spec.q[0][i] * spec.q[0][i]) as f64).collect();
        let nq2: Vec<f64> = n.iter().zip(&q2).map(|(ni, qi2)| ni * qi2).collect();
        let total_dim = 1.0 + 2.0 * n.iter().sum::<f64>();
        Ok(CircleSystem {
            spec: spec.clone(),
            m: spec.m,
            n,
            p,
            q2,
            nq2,
            total_dim,
        })
    }

    /// `E(Y) = sum n_i q_i^2 Y_i^2 >= 0`, zero iff `Y = 0`.
    pub fn energy(&self, y: &[f64]) -> f64 {
        y.iter().zip(&self.nq2).map(|(yi, c)| c * yi * yi).sum()
    }

    /// Deficit vector `F_i(Y) = 2 p_i Y_i - q_i^2 Y_i^2 - E(Y)`.
    pub fn deficit(&self, y: &[f64]) -> Vec<f64> {
        let e = self.energy(y);
        (0..self.m)
            .map(|i| 2.0 * self.p[i] * y[i] - self.q2[i] * y[i] * y[i] - e)
            .collect()
    }

    /// Right-hand side of the flow, `-Y_i F_i(Y)`.
    pub fn vector_field(&self, y: &[f64]) -> Vec<f64> {
        let f = self.deficit(y);
        (0..self.m).map(|i| -y[i] * f[i]).collect()
    }

    pub fn field_into(&self, y: &[f64], out: &mut [f64]) {
        let e = self.energy(y);
        for i in 0..self.m {
            let f = 2.0 * self.p[i] * y[i] - self.q2[i] * y[i] * y[i] - e;
            out[i] = -y[i] * f;
        }
    }

    /// `G(Y) = (Y_i F_i)`, the negative of the field.
    pub fn g(&self, y: &[f64]) -> Vec<f64> {
        self.vector_field(y).iter().map(|v| -v).collect()
    }

    pub fn g_norm_inf(&self, y: &[f64]) -> f64 {
        self.vector_field(y).iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Exact Jacobian of `G`: `dG_i/dY_j = delta_ij F_i + Y_i dF_i/dY_j`.
    pub fn jacobian_g(&self, y: &[f64]) -> DMatrix<f64> {
        let f = self.deficit(y);
        let mut jac = DMatrix::zeros(self.m, self.m);
        for i in 0..self.m {
            for j in 0..self.m {
                let mut v = -2.0 * self.nq2[j] * y[j] * y[i];
                if i == j {
                    v += f[i] + y[i] * (2.0 * self.p[i] - 2.0 * self.q2[i] * y[i]);
                }
                jac[(i, j)] = v;
            }
        }
        jac
    }

    /// Scale-invariant monotone quantity
    /// `(prod Y_i^{-2 n_i / n}) * sum (2 n_i p_i Y_i - n_i q_i^2 Y_i^2 / 2)`.
    ///
    /// The prefactor is evaluated through logarithms: the exponents make
    /// direct powers ill-conditioned for tiny `Y_i`.
    pub fn lambda_bar(&self, y: &[f64]) -> Result<f64> {
        self.require_positive(y)?;
        let log_pref: f64 = y
            .iter()
            .zip(&self.n)
            .map(|(yi, ni)| -2.0 * ni / self.total_dim * yi.ln())
            .sum();
        let sum: f64 = (0..self.m)
            .map(|i| 2.0 * self.n[i] * self.p[i] * y[i] - 0.5 * self.nq2[i] * y[i] * y[i])
            .sum();
        if sum > 0.0 {
            Ok((log_pref + sum.ln()).exp())
        } else {
            Ok(log_pref.exp() * sum)
        }
    }

    /// Closed-form derivative of the monotone quantity along the flow:
    /// `(prod Y_i^{-2n_i/n}) [ (2/n)(2 sum n_i p_i Y_i - E/2)^2 - E^2/2
    ///   - sum n_i Y_i^2 (2 p_i - q_i^2 Y_i)^2 ]`, nonpositive with equality
    /// only at the interior fixed point.
    pub fn lambda_bar_rate(&self, y: &[f64]) -> Result<f64> {
        self.require_positive(y)?;
        let log_pref: f64 = y
            .iter()
            .zip(&self.n)
            .map(|(yi, ni)| -2.0 * ni / self.total_dim * yi.ln())
            .sum();
        let e = self.energy(y);
        let npy: f64 = (0..self.m).map(|i| self.n[i] * self.p[i] * y[i]).sum();
        let quad: f64 = (0..self.m)
            .map(|i| {
                let t = 2.0 * self.p[i] - self.q2[i] * y[i];
                self.n[i] * y[i] * y[i] * t * t
            })
            .sum();
        let s = 2.0 * npy - 0.5 * e;
        let bracket = 2.0 / self.total_dim * s * s - 0.5 * e * e - quad;
        Ok(log_pref.exp() * bracket)
    }

    fn require_positive(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.m {
            return Err(Error::Domain(format!(
                "phase point has dimension {}, expected {}",
                y.len(),
                self.m
            )));
        }
        if y.iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain(
                "monotone quantity requires a strictly positive phase point".into(),
            ));
        }
        Ok(())
    }

    /// Sign conditions at `Y` with the scaled boundary tolerance band.
    pub fn classify_region(&self, y: &[f64]) -> RegionTag {
        let band = 1e-9 * (1.0 + y.iter().map(|v| v * v).sum::<f64>());
        let signs = self
            .deficit(y)
            .iter()
            .map(|&f| {
                if f.abs() <= band {
                    Sign::Boundary
                } else if f > 0.0 {
                    Sign::Positive
                } else {
                    Sign::Negative
                }
            })
            .collect();
        RegionTag { signs }
    }

    /// Blow-up thresholds `2 p_i / ((n_i + 1) q_i^2)`: a solution with some
    /// `Y_i` beyond its threshold escapes in finite `u` and is not ancient.
    pub fn blowup_threshold(&self) -> Vec<f64> {
        (0..self.m)
            .map(|i| 2.0 * self.p[i] / ((self.n[i] + 1.0) * self.q2[i]))
            .collect()
    }

    fn residual_scale(&self, y: &[f64]) -> f64 {
        1.0 + self.energy(y)
            + y.iter()
                .zip(&self.p)
                .map(|(yi, pi)| (2.0 * pi * yi).abs())
                .fold(0.0, f64::max)
    }

    pub fn deficit_norm_inf(&self, y: &[f64]) -> f64 {
        self.deficit(y).iter().fold(0.0, |a, f| a.max(f.abs()))
    }

    /// The unique interior fixed point (all deficits zero, all components
    /// positive). Tries damped Newton from the balanced guess, then a
    /// homotopy from the decoupled single-factor solutions, then a scalar
    /// reduction that brackets the common value of `2 p_i Y_i - q_i^2 Y_i^2`.
    pub fn find_xi(&self) -> Result<YState> {
        let guess = self.balanced_guess();
        if let Some(y) = self.newton_positive_from(&guess, 1.0, 120) {
            return Ok(y);
        }
        if let Some(y) = self.homotopy_xi() {
            return Ok(y);
        }
        self.xi_by_scalar_reduction()
    }

    /// Balanced initial guess `p_i / ((n_i+1) q_i^2 + sum_j n_j q_j^2 p_j / p_i)`.
    pub fn balanced_guess(&self) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                let coupling: f64 = (0..self.m)
                    .map(|j| self.nq2[j] * self.p[j] / self.p[i])
                    .sum();
                self.p[i] / ((self.n[i] + 1.0) * self.q2[i] + coupling)
            })
            .collect()
    }

    /// Damped Newton on the deficit at fixed homotopy parameter `t`
    /// (t=1 is the true system). Accepts only strictly positive iterates,
    /// halving the step up to 30 times; returns None on stall or when the
    /// iterate collapses toward the origin.
    fn newton_positive_from(&self, start: &[f64], t: f64, max_iter: usize) -> Option<YState> {
        let mut y = start.to_vec();
        let start_norm = start.iter().cloned().fold(0.0, f64::max);
        let mut res = self.homotopy_deficit_norm(&y, t);
        for _ in 0..max_iter {
            let scale = self.residual_scale(&y);
            if res <= 1e-14 * scale {
                let ymax = y.iter().cloned().fold(0.0, f64::max);
                if y.iter().all(|&v| v > 0.0) && ymax > 1e-6 * start_norm {
                    return Some(y);
                }
                return None;
            }
            let f = self.homotopy_deficit(&y, t);
            let jac = self.homotopy_jacobian(&y, t);
            let rhs = DVector::from_vec(f.clone());
            let step = jac.lu().solve(&rhs)?;
            let mut damping = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = (0..self.m).map(|i| y[i] - damping * step[i]).collect();
                if trial.iter().all(|&v| v > 0.0) {
                    let trial_res = self.homotopy_deficit_norm(&trial, t);
                    if trial_res < res {
                        y = trial;
                        res = trial_res;
                        accepted = true;
                        break;
                    }
                }
                damping *= 0.5;
            }
            if !accepted {
                return None;
            }
        }
        None
    }

    fn homotopy_deficit(&self, y: &[f64], t: f64) -> Vec<f64> {
        let e = self.energy(y);
        (0..self.m)
            .map(|i| {
                2.0 * self.p[i] * y[i]
                    - self.q2[i] * y[i] * y[i]
                    - (1.0 - t) * self.nq2[i] * y[i] * y[i]
                    - t * e
            })
            .collect()
    }

    fn homotopy_deficit_norm(&self, y: &[f64], t: f64) -> f64 {
        self.homotopy_deficit(y, t).iter().fold(0.0, |a, f| a.max(f.abs()))
    }

    fn homotopy_jacobian(&self, y: &[f64], t: f64) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.m, self.m);
        for i in 0..self.m {
            for j in 0..self.m {
                let mut v = -2.0 * t * self.nq2[j] * y[j];
                if i == j {
                    v += 2.0 * self.p[i]
                        - 2.0 * self.q2[i] * y[i]
                        - 2.0 * (1.0 - t) * self.nq2[i] * y[i];
                }
                jac[(i, j)] = v;
            }
        }
        jac
    }

    /// Homotopy from the decoupled system (each factor alone) to the full
    /// coupled deficit, with adaptive parameter steps.
    fn homotopy_xi(&self) -> Option<YState> {
        let mut y: Vec<f64> = (0..self.m)
            .map(|i| 2.0 * self.p[i] / ((self.n[i] + 1.0) * self.q2[i]))
            .collect();
        let mut t: f64 = 0.0;
        let mut dt: f64 = 0.125;
        while t < 1.0 {
            let t_next = (t + dt).min(1.0);
            match self.newton_positive_from(&y, t_next, 60) {
                Some(next) => {
                    y = next;
                    t = t_next;
                    dt = (dt * 2.0).min(0.25);
                }
                None => {
                    dt *= 0.5;
                    if dt < 1e-4 {
                        return None;
                    }
                }
            }
        }
        Some(y)
    }

    /// Reduction to one unknown: at the fixed point every
    /// `2 p_i Y_i - q_i^2 Y_i^2` equals the common value `s = E(Y)`, and the
    /// relevant root is `Y_i(s) = (p_i - sqrt(p_i^2 - q_i^2 s)) / q_i^2`.
    /// Bisect `E(Y(s)) - s` on `(0, min_i p_i^2/q_i^2]`, then polish with
    /// the full Newton step.
    fn xi_by_scalar_reduction(&self) -> Result<YState> {
        let s_max = (0..self.m)
            .map(|i| self.p[i] * self.p[i] / self.q2[i])
            .fold(f64::MAX, f64::min);
        let y_of = |s: f64| -> Vec<f64> {
            (0..self.m)
                .map(|i| {
                    let disc = (self.p[i] * self.p[i] - self.q2[i] * s).max(0.0);
                    (self.p[i] - disc.sqrt()) / self.q2[i]
                })
                .collect()
        };
        let psi = |s: f64| -> f64 { self.energy(&y_of(s)) - s };

        let mut residuals = Vec::new();
        if psi(s_max) <= 0.0 {
            // boundary double-root case (e.g. a single factor of dimension one)
            let y = y_of(s_max);
            return self.polish_root(y, &mut residuals);
        }
        let mut lo = s_max;
        loop {
            lo *= 0.5;
            if psi(lo) < 0.0 {
                break;
            }
            if lo < 1e-300 {
                return Err(Error::NoConvergence {
                    context: "scalar reduction found no sign change".into(),
                    residuals,
                });
            }
        }
        let mut hi = s_max;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if psi(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        self.polish_root(y_of(0.5 * (lo + hi)), &mut residuals)
    }

    fn polish_root(&self, mut y: Vec<f64>, residuals: &mut Vec<f64>) -> Result<YState> {
        for _ in 0..60 {
            let res = self.deficit_norm_inf(&y);
            residuals.push(res);
            if res <= 1e-14 * self.residual_scale(&y) {
                return Ok(y);
            }
            let f = self.deficit(&y);
            let jac = self.homotopy_jacobian(&y, 1.0);
            let rhs = DVector::from_vec(f);
            match jac.lu().solve(&rhs) {
                Some(step) => {
                    let mut damping = 1.0;
                    let mut moved = false;
                    for _ in 0..30 {
                        let trial: Vec<f64> =
                            (0..self.m).map(|i| y[i] - damping * step[i]).collect();
                        if trial.iter().all(|&v| v > 0.0)
                            && self.deficit_norm_inf(&trial) < res
                        {
                            y = trial;
                            moved = true;
                            break;
                        }
                        damping *= 0.5;
                    }
                    if !moved {
                        break;
                    }
                }
                None => break,
            }
        }
        let res = self.deficit_norm_inf(&y);
        if res <= 1e-12 {
            Ok(y)
        } else {
            Err(Error::NoConvergence {
                context: "fixed-point polish stalled".into(),
                residuals: residuals.clone(),
            })
        }
    }

    /// Partial fixed point supported exactly on `theta`: the interior fixed
    /// point of the sub-bundle over the `theta` factors, embedded with zeros.
    /// Singletons use the closed form `2 p_k / ((n_k + 1) q_k^2)`.
    pub fn find_v(&self, theta: &[usize]) -> Result<YState> {
        let mut idx: Vec<usize> = theta.to_vec();
        idx.sort_unstable();
        idx.dedup();
        if idx.len() != theta.len() {
            return Err(Error::Domain("subset contains repeated indices".into()));
        }
        if idx.is_empty() || idx.len() >= self.m {
            return Err(Error::Domain(
                "subset must be nonempty and proper".into(),
            ));
        }
        if idx.iter().any(|&i| i >= self.m) {
            return Err(Error::Domain("subset index out of range".into()));
        }
        let mut out = vec![0.0; self.m];
        if idx.len() == 1 {
            let k = idx[0];
            out[k] = 2.0 * self.p[k] / ((self.n[k] + 1.0) * self.q2[k]);
            return Ok(out);
        }
        let sub = self.sub_system(&idx)?;
        let xi = sub.find_xi()?;
        for (slot, &i) in idx.iter().enumerate() {
            out[i] = xi[slot];
        }
        Ok(out)
    }

    /// Restriction of the system to a subset of factors.
    pub fn sub_system(&self, idx: &[usize]) -> Result<CircleSystem> {
        let spec = BundleSpec::new(
            idx.len(),
            1,
            idx.iter().map(|&i| self.spec.n[i]).collect(),
            idx.iter().map(|&i| self.spec.p[i]).collect(),
            vec![idx.iter().map(|&i| self.spec.q[0][i]).collect()],
        );
        CircleSystem::new(&spec)
    }

    /// Origin, all partial fixed points up to `subset_cap`, and the interior
    /// fixed point. Subsets are enumerated by (size, bitmask).
    pub fn fixed_points(&self, subset_cap: usize) -> Result<FixedPointSet> {
        let xi = self.find_xi()?;
        let mut masks: Vec<u64> = (1..((1u64 << self.m) - 1)).collect();
        masks.sort_by_key(|&mask| (mask.count_ones(), mask));
        let truncated = masks.len() > subset_cap;
        masks.truncate(subset_cap);
        let mut v = Vec::with_capacity(masks.len());
        for mask in masks {
            let theta: Vec<usize> = (0..self.m).filter(|&i| mask & (1 << i) != 0).collect();
            v.push((theta.clone(), self.find_v(&theta)?));
        }
        Ok(FixedPointSet {
            origin: vec![0.0; self.m],
            v,
            xi,
            truncated,
        })
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

    fn asym() -> CircleSystem {
        CircleSystem::new(&presets::asym()).unwrap()
    }

    #[test]
    fn energy_values() {
        let sys = sym2();
        assert_relative_eq!(sys.energy(&[1.0, 1.0]), 2.0);
        assert_eq!(sys.energy(&[0.0, 0.0]), 0.0);
        assert_relative_eq!(sys.energy(&[4.0 / 3.0, 4.0 / 3.0]), 32.0 / 9.0, max_relative = 1e-15);
    }

    #[test]
    fn deficit_values() {
        let sys = sym2();
        let f = sys.deficit(&[1.0, 1.0]);
        assert_relative_eq!(f[0], 1.0);
        assert_relative_eq!(f[1], 1.0);
        let f = sys.deficit(&[4.0 / 3.0, 4.0 / 3.0]);
        assert!(f[0].abs() < 1e-14 && f[1].abs() < 1e-14);
        let f = sys.deficit(&[2.0, 0.0]);
        assert_relative_eq!(f[0], 0.0);
        assert_relative_eq!(f[1], -4.0);
    }

    #[test]
    fn vector_field_values() {
        let sys = sym2();
        let g = sys.vector_field(&[1.0, 1.0]);
        assert_relative_eq!(g[0], -1.0);
        assert_relative_eq!(g[1], -1.0);
        let xi = sys.find_xi().unwrap();
        assert!(sys.g_norm_inf(&xi) < 1e-13);
        assert_eq!(sys.vector_field(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn lambda_bar_values() {
        let sys = sym2();
        assert_relative_eq!(sys.lambda_bar(&[1.0, 1.0]).unwrap(), 7.0, max_relative = 1e-14);
        // evaluation at the interior fixed point, brute-force oracle
        let x: f64 = 4.0 / 3.0;
        let oracle = x.powf(-0.8) * 80.0 / 9.0;
        assert_relative_eq!(
            sys.lambda_bar(&[x, x]).unwrap(),
            oracle,
            max_relative = 1e-13
        );
        // regression pair away from the fixed point
        let oracle2 = 2.0f64.powf(-0.8) * 12.0;
        assert_relative_eq!(
            sys.lambda_bar(&[2.0, 2.0]).unwrap(),
            oracle2,
            max_relative = 1e-13
        );
        assert!(sys.lambda_bar(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn lambda_bar_rate_values() {
        let sys = sym2();
        assert_relative_eq!(
            sys.lambda_bar_rate(&[1.0, 1.0]).unwrap(),
            -0.4,
            epsilon = 1e-14
        );
        let xi = sys.find_xi().unwrap();
        assert!(sys.lambda_bar_rate(&xi).unwrap().abs() < 1e-12);
    }

    #[test]
    fn lambda_bar_rate_matches_finite_differences() {
        for sys in [sym2(), asym()] {
            let pts = [[0.1, 0.2], [0.7, 0.3], [1.5, 0.9], [0.01, 1.9]];
            for y in pts {
                let field = sys.vector_field(&y);
                let h = 1e-6 / (1.0 + field.iter().fold(0.0f64, |a, v| a.max(v.abs())));
                let plus: Vec<f64> = (0..2).map(|i| y[i] + h * field[i]).collect();
                let minus: Vec<f64> = (0..2).map(|i| y[i] - h * field[i]).collect();
                let fd = (sys.lambda_bar(&plus).unwrap() - sys.lambda_bar(&minus).unwrap())
                    / (2.0 * h);
                let rate = sys.lambda_bar_rate(&y).unwrap();
                assert_relative_eq!(rate, fd, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn region_classification() {
        let sys = sym2();
        assert!(sys.classify_region(&[1.0, 1.0]).interior_omega_plus());
        assert!(sys.classify_region(&[2.0, 2.0]).interior_omega_minus());
        let tag = sys.classify_region(&[2.0, 0.0]);
        assert_eq!(tag.signs[0], Sign::Boundary);
        assert_eq!(tag.signs[1], Sign::Negative);
        assert!(tag.in_omega_theta(&[0]));
        assert!(tag.in_omega_minus());
        assert!(!tag.in_omega_plus());
    }

    #[test]
    fn xi_on_every_region_boundary() {
        let sys = sym2();
        let xi = sys.find_xi().unwrap();
        let tag = sys.classify_region(&xi);
        assert!(tag.in_omega_plus());
        assert!(tag.in_omega_minus());
        assert!(tag.in_omega_theta(&[0]));
        assert!(tag.in_omega_theta(&[1]));
    }

    #[test]
    fn find_xi_sym2() {
        let sys = sym2();
        let xi = sys.find_xi().unwrap();
        assert_relative_eq!(xi[0], 4.0 / 3.0, epsilon = 1e-13);
        assert_relative_eq!(xi[1], 4.0 / 3.0, epsilon = 1e-13);
        assert!(sys.deficit_norm_inf(&xi) < 1e-12);
    }

    #[test]
    fn find_xi_single_factor() {
        let spec = BundleSpec::new(1, 1, vec![1], vec![2], vec![vec![1]]);
        let sys = CircleSystem::new(&spec).unwrap();
        let xi = sys.find_xi().unwrap();
        assert_relative_eq!(xi[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn find_xi_asym_positive_root() {
        let sys = asym();
        let xi = sys.find_xi().unwrap();
        assert!(xi.iter().all(|&v| v > 0.0));
        assert!(sys.deficit_norm_inf(&xi) < 1e-12);
    }

    #[test]
    fn find_xi_permutation_invariance() {
        let spec = BundleSpec::new(3, 1, vec![2, 1, 3], vec![3, 2, 5], vec![vec![1, 2, 1]]);
        let sys = CircleSystem::new(&spec).unwrap();
        let xi = sys.find_xi().unwrap();
        let perm = [2usize, 0, 1];
        let pspec = BundleSpec::new(
            3,
            1,
            perm.iter().map(|&i| spec.n[i]).collect(),
            perm.iter().map(|&i| spec.p[i]).collect(),
            vec![perm.iter().map(|&i| spec.q[0][i]).collect()],
        );
        let psys = CircleSystem::new(&pspec).unwrap();
        let pxi = psys.find_xi().unwrap();
        for (slot, &i) in perm.iter().enumerate() {
            assert_relative_eq!(pxi[slot], xi[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn find_v_values() {
        let sys = sym2();
        assert_eq!(sys.find_v(&[0]).unwrap(), vec![2.0, 0.0]);
        assert_eq!(sys.find_v(&[1]).unwrap(), vec![0.0, 2.0]);
        assert!(sys.find_v(&[]).is_err());
        assert!(sys.find_v(&[0, 1]).is_err());

        let m3 = CircleSystem::new(&presets::m3sym()).unwrap();
        let v12 = m3.find_v(&[0, 1]).unwrap();
        assert_relative_eq!(v12[0], 4.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(v12[1], 4.0 / 3.0, epsilon = 1e-12);
        assert_eq!(v12[2], 0.0);
    }

    #[test]
    fn partial_fixed_points_lie_in_omega_minus() {
        let sys = sym2();
        let v1 = sys.find_v(&[0]).unwrap();
        let f = sys.deficit(&v1);
        assert!(f[0].abs() < 1e-12);
        assert!(f[1] < 0.0);
    }

    #[test]
    fn blowup_thresholds() {
        let sys = sym2();
        assert_eq!(sys.blowup_threshold(), vec![2.0, 2.0]);
        let spec = BundleSpec::new(1, 1, vec![3], vec![4], vec![vec![2]]);
        let s1 = CircleSystem::new(&spec).unwrap();
        assert_relative_eq!(s1.blowup_threshold()[0], 0.5);
        // thresholds coincide with the singleton fixed-point entries
        let v1 = sys.find_v(&[0]).unwrap();
        assert_eq!(v1[0], sys.blowup_threshold()[0]);
    }

    #[test]
    fn fixed_point_enumeration_and_cap() {
        let sys = CircleSystem::new(&presets::m3sym()).unwrap();
        let set = sys.fixed_points(1024).unwrap();
        assert_eq!(set.v.len(), 6);
        assert!(!set.truncated);
        let capped = sys.fixed_points(3).unwrap();
        assert_eq!(capped.v.len(), 3);
        assert!(capped.truncated);
        // singletons come first in the enumeration order
        assert!(capped.v.iter().all(|(theta, _)| theta.len() == 1));
    }

    #[test]
    fn balanced_guess_alone_does_not_reach_xi_on_sym2() {
        // The balanced guess lands below the deficit hump on the symmetric
        // bundle, and Newton from there collapses toward the origin; find_xi
        // must recover through its fallbacks.
        let sys = sym2();
        let guess = sys.balanced_guess();
        assert!(guess[0] < 1.0);
        let xi = sys.find_xi().unwrap();
        assert_relative_eq!(xi[0], 4.0 / 3.0, epsilon = 1e-12);
    }
}
