//! Linearizations of the flow at fixed points and the specialized
//! eigensolver for diagonal-plus-rank-one matrices.

pub mod oracle;

use crate::circle::CircleSystem;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::Serialize;

/// The matrix class `A = diag(eps_i a_i) + R` where every row of `R` equals
/// `(a_1, ..., a_m)`, with all `a_i, eps_i > 0`. Its spectrum is real,
/// positive, and computable from the secular function
/// `s(lambda) = 1 + sum_j a_j / (eps_j a_j - lambda)` via the rank-one
/// determinant identity `det(A - lambda I) = prod_j (eps_j a_j - lambda) * s(lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagPlusRankOne {
    pub a: Vec<f64>,
    pub eps: Vec<f64>,
}

/// Eigenvalue report with certificates. Eigenvalues are sorted descending
/// with multiplicities repeated; `brackets[k]` is the isolating interval used
/// for `eigenvalues[k]` (degenerate for multiple eigenvalues); `perron` is
/// the distinguished all-positive eigenvector, unit Euclidean norm.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub eigenvalues: Vec<f64>,
    pub brackets: Vec<(f64, f64)>,
    pub eigenvectors: Option<Vec<Vec<f64>>>,
    pub perron: Vec<f64>,
    pub interlacing_ok: bool,
    pub row_sum_bounds_ok: bool,
}

/// Relative gap below which two diagonal values are treated as one cluster;
/// below this the simple-root brackets are numerically degenerate.
const CLUSTER_GAP: f64 = 1e-9;

impl DiagPlusRankOne {
    pub fn new(a: Vec<f64>, eps: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != eps.len() {
            return Err(Error::Domain(
                "diagonal-plus-rank-one data must be nonempty and of equal length".into(),
            ));
        }
        if a.iter().chain(eps.iter()).any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::NotPositive);
        }
        Ok(DiagPlusRankOne { a, eps })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Diagonal values `eps_i a_i`.
    pub fn diag(&self) -> Vec<f64> {
        self.a.iter().zip(&self.eps).map(|(a, e)| a * e).collect()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let m = self.dim();
        let d = self.diag();
        DMatrix::from_fn(m, m, |i, j| self.a[j] + if i == j { d[i] } else { 0.0 })
    }

    /// Full spectrum with interlacing brackets and the Perron eigenvector.
    ///
    /// Distinct diagonal values: each interior eigenvalue is isolated by the
    /// interlacing bracket `(d_k, d_{k-1})` and the top one by the row-sum
    /// bounds, then refined by safeguarded bisection plus Newton polish on
    /// the secular function. Clustered values `c` of multiplicity `k`
    /// contribute `c` with multiplicity `k-1` plus a reduced system with
    /// `a~ = sum of cluster a_i` and diagonal value `c`.
    pub fn secular_eigen(&self) -> Result<SpectralReport> {
        // revalidate so reports cannot be built from raw structs with bad data
        if self.a.iter().chain(self.eps.iter()).any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::NotPositive);
        }
        let m = self.dim();
        let d = self.diag();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| d[j].total_cmp(&d[i]));
        let dmax = d[order[0]];

        // group sorted indices into clusters of near-equal diagonal values;
        // the gap is measured against the local magnitude so that widely
        // separated small values are never merged by a large top value
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for &idx in &order {
            match clusters.last_mut() {
                Some(cluster)
                    if {
                        let prev = d[*cluster.last().unwrap()];
                        (prev - d[idx]).abs() <= CLUSTER_GAP * prev.abs().max(d[idx].abs())
                    } =>
                {
                    cluster.push(idx)
                }
                _ => clusters.push(vec![idx]),
            }
        }

        let reduced_a: Vec<f64> = clusters
            .iter()
            .map(|c| c.iter().map(|&i| self.a[i]).sum())
            .collect();
        let reduced_d: Vec<f64> = clusters
            .iter()
            .map(|c| c.iter().map(|&i| d[i]).sum::<f64>() / c.len() as f64)
            .collect();

        let roots = solve_distinct(&reduced_a, &reduced_d)?;

        // merge simple roots with cluster multiplicities, descending
        let mut merged: Vec<(f64, (f64, f64), Option<Vec<f64>>)> = Vec::with_capacity(m);
        for (pos, root) in roots.iter().enumerate() {
            merged.push((root.value, root.bracket, {
                // closed-form eigenvector for a simple root
                let v: Vec<f64> = (0..m).map(|i| 1.0 / (root.value - d[i])).collect();
                Some(normalize(v))
            }));
            let cluster = &clusters[pos];
            if cluster.len() > 1 {
                let c = reduced_d[pos];
                let i0 = cluster[0];
                for &il in &cluster[1..] {
                    // basis vector of the cluster eigenspace: a-weighted
                    // difference supported on two cluster slots
                    let mut v = vec![0.0; m];
                    v[i0] = self.a[il];
                    v[il] = -self.a[i0];
                    merged.push((c, (c, c), Some(normalize(v))));
                }
            }
        }
        merged.sort_by(|x, y| y.0.total_cmp(&x.0));

        let eigenvalues: Vec<f64> = merged.iter().map(|e| e.0).collect();
        let brackets: Vec<(f64, f64)> = merged.iter().map(|e| e.1).collect();
        let eigenvectors: Vec<Vec<f64>> = merged.into_iter().map(|e| e.2.unwrap()).collect();

        // Perron vector of the top eigenvalue: 1/(lambda_1 - d_i) > 0
        let top = eigenvalues[0];
        let mut perron = normalize((0..m).map(|i| 1.0 / (top - d[i])).collect());
        if perron[0] < 0.0 {
            perron.iter_mut().for_each(|v| *v = -*v);
        }

        let sum_a: f64 = self.a.iter().sum();
        let scale = dmax + sum_a;
        let tol = 1e-12 * scale;
        let dmin = d[*order.last().unwrap()];
        let row_sum_bounds_ok = top >= dmin + sum_a - tol && top <= dmax + sum_a + tol;
        let mut interlacing_ok = true;
        for k in 1..reduced_d.len() {
            let root = roots[k].value;
            if !(root >= reduced_d[k] - tol && root <= reduced_d[k - 1] + tol) {
                interlacing_ok = false;
            }
        }

        Ok(SpectralReport {
            eigenvalues,
            brackets,
            eigenvectors: Some(eigenvectors),
            perron,
            interlacing_ok,
            row_sum_bounds_ok,
        })
    }
}

struct SecularRoot {
    value: f64,
    bracket: (f64, f64),
}

/// Roots of the secular function for strictly decreasing diagonal values.
fn solve_distinct(a: &[f64], d: &[f64]) -> Result<Vec<SecularRoot>> {
    let l = a.len();
    let sum_a: f64 = a.iter().sum();
    if l == 1 {
        let v = d[0] + a[0];
        return Ok(vec![SecularRoot {
            value: v,
            bracket: (v, v),
        }]);
    }
    let s = |lambda: f64| -> f64 {
        1.0 + a
            .iter()
            .zip(d)
            .map(|(aj, dj)| aj / (dj - lambda))
            .sum::<f64>()
    };
    let sp = |lambda: f64| -> f64 {
        a.iter()
            .zip(d)
            .map(|(aj, dj)| {
                let t = dj - lambda;
                aj / (t * t)
            })
            .sum::<f64>()
    };

    let mut out = Vec::with_capacity(l);
    for k in 0..l {
        let (lo, mut hi, report_bracket) = if k == 0 {
            let hi0 = d[0] + sum_a;
            (d[0], hi0, (d[l - 1] + sum_a, d[0] + sum_a))
        } else {
            (d[k], d[k - 1], (d[k], d[k - 1]))
        };
        if k == 0 {
            // the row-sum upper bound can sit a few ulps below the root
            let mut expand = 0;
            while s(hi) < 0.0 {
                hi += sum_a * 2f64.powi(expand);
                expand += 1;
                if expand > 64 {
                    return Err(Error::BracketFailure(
                        "top eigenvalue not bracketed by expanded row-sum bound".into(),
                    ));
                }
            }
        }
        // open-interval bisection on the strictly increasing secular function
        let mut lo_b = lo;
        let mut hi_b = hi;
        for _ in 0..200 {
            let mid = 0.5 * (lo_b + hi_b);
            if mid <= lo_b || mid >= hi_b {
                break;
            }
            let val = s(mid);
            if !val.is_finite() {
                // pole hit exactly; nudge
                hi_b = mid + 0.25 * (hi_b - mid);
                continue;
            }
            if val < 0.0 {
                lo_b = mid;
            } else {
                hi_b = mid;
            }
            if hi_b - lo_b <= 1e-15 * hi_b.abs().max(lo_b.abs()).max(1e-300) {
                break;
            }
        }
        let mut root = 0.5 * (lo_b + hi_b);
        for _ in 0..2 {
            let f = s(root);
            let df = sp(root);
            if !f.is_finite() || !df.is_finite() || df == 0.0 {
                break;
            }
            let next = root - f / df;
            if next > lo && next < hi {
                root = next;
            }
        }
        out.push(SecularRoot {
            value: root,
            bracket: report_bracket,
        });
    }
    Ok(out)
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Jacobian of `G` at a phase point, with the structured decomposition
/// `L = E(xi) I - beta` available at the interior fixed point, where
/// `alpha = D_xi^{-1} beta D_xi` is diagonal-plus-rank-one with
/// `a_i = 2 n_i q_i^2 xi_i^2` and `eps_i = 1/(2 n_i)`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub matrix: DMatrix<f64>,
    pub at_xi: Option<XiDecomposition>,
}

#[derive(Debug, Clone)]
pub struct XiDecomposition {
    pub energy: f64,
    pub beta: DMatrix<f64>,
    pub alpha: DiagPlusRankOne,
}

pub fn linearize(sys: &CircleSystem, y: &[f64]) -> Linearization {
    let matrix = sys.jacobian_g(y);
    let scale = 1.0 + sys.energy(y);
    let at_xi = if y.iter().all(|&v| v > 0.0) && sys.deficit_norm_inf(y) <= 1e-10 * scale {
        let m = sys.m;
        let beta = DMatrix::from_fn(m, m, |i, j| {
            let mut v = 2.0 * sys.nq2[j] * y[i] * y[j];
            if i == j {
                v += sys.q2[i] * y[i] * y[i];
            }
            v
        });
        let a: Vec<f64> = (0..m).map(|i| 2.0 * sys.nq2[i] * y[i] * y[i]).collect();
        let eps: Vec<f64> = (0..m).map(|i| 0.5 / sys.n[i]).collect();
        DiagPlusRankOne::new(a, eps).ok().map(|alpha| XiDecomposition {
            energy: sys.energy(y),
            beta,
            alpha,
        })
    } else {
        None
    };
    Linearization { matrix, at_xi }
}

/// Spectrum of the linearization at the interior fixed point, computed as
/// `E(xi) - (spectrum of alpha)` through the secular solver. Exactly one
/// eigenvalue is negative, and its eigenvector can be chosen with all
/// positive entries (the Perron vector of alpha conjugated by `D_xi`).
#[derive(Debug, Clone, Serialize)]
pub struct XiSpectrum {
    pub report: SpectralReport,
    pub negative_eigenvalue: f64,
    /// All-positive eigenvector of the negative eigenvalue, unit 2-norm.
    pub negative_eigenvector: Vec<f64>,
    pub energy: f64,
}

pub fn xi_spectrum(sys: &CircleSystem, xi: &[f64]) -> Result<XiSpectrum> {
    let lin = linearize(sys, xi);
    let decomp = lin.at_xi.ok_or_else(|| {
        Error::Domain("xi spectrum requires a converged interior fixed point".into())
    })?;
    let alpha_report = decomp.alpha.secular_eigen()?;
    let e = decomp.energy;

    let mut pairs: Vec<(f64, (f64, f64))> = alpha_report
        .eigenvalues
        .iter()
        .zip(&alpha_report.brackets)
        .map(|(&mu, &(lo, hi))| (e - mu, (e - hi, e - lo)))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let brackets: Vec<(f64, f64)> = pairs.iter().map(|p| p.1).collect();

    let negatives = eigenvalues.iter().filter(|&&v| v < 0.0).count();
    let positives = eigenvalues.iter().filter(|&&v| v > 0.0).count();
    if negatives != 1 || positives != sys.m - 1 {
        return Err(Error::SpectralMismatch(format!(
            "expected 1 negative and {} positive eigenvalues, got {} negative / {} positive",
            sys.m - 1,
            negatives,
            positives
        )));
    }
    let negative_eigenvalue = *eigenvalues.last().unwrap();

    // eigenvector of beta (and of L) for the top alpha eigenvalue
    let mut z: Vec<f64> = alpha_report
        .perron
        .iter()
        .zip(xi)
        .map(|(v, x)| v * x)
        .collect();
    z = normalize(z);
    if z.iter().any(|&v| v <= 0.0) {
        return Err(Error::SpectralMismatch(
            "negative-eigenvalue eigenvector is not positive".into(),
        ));
    }

    let report = SpectralReport {
        eigenvalues,
        brackets,
        eigenvectors: None,
        perron: z.clone(),
        interlacing_ok: alpha_report.interlacing_ok,
        row_sum_bounds_ok: alpha_report.row_sum_bounds_ok,
    };
    Ok(XiSpectrum {
        report,
        negative_eigenvalue,
        negative_eigenvector: z,
        energy: e,
    })
}

/// Eigenvector of `L_xi` for a chosen positive eigenvalue (stable direction
/// of the flow), via the closed-form or cluster-basis eigenvectors of alpha
/// conjugated by `D_xi`. `index` counts the report's descending eigenvalue
/// order of alpha.
pub fn xi_eigenvector_for_alpha_index(
    sys: &CircleSystem,
    xi: &[f64],
    index: usize,
) -> Result<Vec<f64>> {
    let lin = linearize(sys, xi);
    let decomp = lin
        .at_xi
        .ok_or_else(|| Error::Domain("requires the interior fixed point".into()))?;
    let report = decomp.alpha.secular_eigen()?;
    let vecs = report
        .eigenvectors
        .ok_or_else(|| Error::Domain("alpha eigenvectors unavailable".into()))?;
    if index >= vecs.len() {
        return Err(Error::Domain("eigenvector index out of range".into()));
    }
    let _ = sys;
    Ok(normalize(
        vecs[index].iter().zip(xi).map(|(v, x)| v * x).collect(),
    ))
}

/// Spectrum at a partial fixed point: the sub-bundle fixed-point spectrum on
/// the support, united with the off-support deficits (all negative). The
/// counts must be `m - |theta| + 1` negative and `|theta| - 1` positive.
pub fn vtheta_spectrum(sys: &CircleSystem, theta: &[usize]) -> Result<SpectralReport> {
    let v = sys.find_v(theta)?;
    let mut idx: Vec<usize> = theta.to_vec();
    idx.sort_unstable();
    let sub = sys.sub_system(&idx)?;
    let sub_xi: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
    let sub_spec = xi_spectrum(&sub, &sub_xi)?;

    let f = sys.deficit(&v);
    let mut pairs: Vec<(f64, (f64, f64))> = sub_spec
        .report
        .eigenvalues
        .iter()
        .zip(&sub_spec.report.brackets)
        .map(|(&ev, &br)| (ev, br))
        .collect();
    for j in 0..sys.m {
        if !idx.contains(&j) {
            if f[j] >= 0.0 {
                return Err(Error::SpectralMismatch(format!(
                    "off-support deficit F_{j} is not negative at the partial fixed point"
                )));
            }
            pairs.push((f[j], (f[j], f[j])));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let brackets: Vec<(f64, f64)> = pairs.iter().map(|p| p.1).collect();

    let negatives = eigenvalues.iter().filter(|&&x| x < 0.0).count();
    let positives = eigenvalues.iter().filter(|&&x| x > 0.0).count();
    if negatives != sys.m - idx.len() + 1 || positives != idx.len() - 1 {
        return Err(Error::SpectralMismatch(format!(
            "expected {} negative / {} positive eigenvalues, got {} / {}",
            sys.m - idx.len() + 1,
            idx.len() - 1,
            negatives,
            positives
        )));
    }

    // distinguished vector: sub-bundle negative-eigenvector embedded with zeros
    let mut perron = vec![0.0; sys.m];
    for (slot, &i) in idx.iter().enumerate() {
        perron[i] = sub_spec.negative_eigenvector[slot];
    }
    Ok(SpectralReport {
        eigenvalues,
        brackets,
        eigenvectors: None,
        perron,
        interlacing_ok: sub_spec.report.interlacing_ok,
        row_sum_bounds_ok: sub_spec.report.row_sum_bounds_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;

    #[test]
    fn two_by_two_distinct() {
        let a = DiagPlusRankOne::new(vec![2.0, 1.0], vec![1.0, 1.0]).unwrap();
        let rep = a.secular_eigen().unwrap();
        let s3 = 3.0f64.sqrt();
        assert_relative_eq!(rep.eigenvalues[0], 3.0 + s3, epsilon = 1e-12);
        assert_relative_eq!(rep.eigenvalues[1], 3.0 - s3, epsilon = 1e-12);
        assert!(rep.eigenvalues[1] > 1.0 && rep.eigenvalues[1] < 2.0);
        assert!(rep.eigenvalues[0] >= 4.0 && rep.eigenvalues[0] <= 5.0);
        assert!(rep.interlacing_ok && rep.row_sum_bounds_ok);
        assert!(rep.perron.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn two_by_two_cluster() {
        let a = DiagPlusRankOne::new(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let rep = a.secular_eigen().unwrap();
        assert_relative_eq!(rep.eigenvalues[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(rep.eigenvalues[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_nonpositive_input() {
        assert!(matches!(
            DiagPlusRankOne::new(vec![1.0, -1.0], vec![1.0, 1.0]),
            Err(Error::NotPositive)
        ));
        assert!(matches!(
            DiagPlusRankOne::new(vec![1.0, 1.0], vec![0.0, 1.0]),
            Err(Error::NotPositive)
        ));
    }

    #[test]
    fn perron_residual_is_small() {
        let a = DiagPlusRankOne::new(vec![0.3, 2.0, 1.1, 0.7], vec![2.0, 0.5, 1.0, 3.0]).unwrap();
        let rep = a.secular_eigen().unwrap();
        let dense = a.dense();
        let v = nalgebra::DVector::from_vec(rep.perron.clone());
        let resid = (&dense * &v - rep.eigenvalues[0] * &v).abs().max();
        assert!(resid < 1e-10 * rep.eigenvalues[0]);
    }

    #[test]
    fn all_eigenvectors_satisfy_eigen_equation() {
        let a = DiagPlusRankOne::new(vec![1.0, 2.0, 1.0, 0.5], vec![0.5, 0.25, 0.5, 4.0]).unwrap();
        let rep = a.secular_eigen().unwrap();
        let dense = a.dense();
        for (ev, vec) in rep.eigenvalues.iter().zip(rep.eigenvectors.as_ref().unwrap()) {
            let v = nalgebra::DVector::from_vec(vec.clone());
            let resid = (&dense * &v - *ev * &v).abs().max();
            assert!(resid < 1e-8 * (1.0 + ev.abs()), "residual {resid} for eigenvalue {ev}");
        }
    }

    #[test]
    fn matches_dense_oracle_on_mixed_cluster() {
        // two exact clusters plus a simple value
        let a = DiagPlusRankOne::new(
            vec![1.0, 2.0, 0.5, 0.5, 3.0],
            vec![2.0, 1.0, 4.0, 4.0, 1.0 / 3.0],
        )
        .unwrap();
        // diag = [2, 2, 2, 2, 1]
        let rep = a.secular_eigen().unwrap();
        let oracle = oracle::reference_eigenvalues(&a.a, &a.eps);
        assert_eq!(rep.eigenvalues.len(), oracle.len());
        let scale = 1.0 + a.a.iter().sum::<f64>();
        for (x, y) in rep.eigenvalues.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-10 * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn linearize_at_xi_matches_structured_form() {
        let sys = CircleSystem::new(&presets::sym2()).unwrap();
        let xi = sys.find_xi().unwrap();
        let lin = linearize(&sys, &xi);
        let decomp = lin.at_xi.expect("decomposition at xi");
        let m = sys.m;
        let reassembled =
            DMatrix::from_diagonal_element(m, m, decomp.energy) - &decomp.beta;
        assert!((&lin.matrix - &reassembled).abs().max() < 1e-12);
        assert_relative_eq!(decomp.alpha.a[0], 32.0 / 9.0, epsilon = 1e-12);
        assert_relative_eq!(decomp.alpha.eps[0], 0.5);
    }

    #[test]
    fn linearize_matches_finite_differences() {
        let sys = CircleSystem::new(&presets::asym()).unwrap();
        let y = [0.7, 0.4];
        let jac = sys.jacobian_g(&y);
        let h = 1e-6;
        for j in 0..2 {
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[j] += h;
            ym[j] -= h;
            let gp = sys.g(&yp);
            let gm = sys.g(&ym);
            for i in 0..2 {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert_relative_eq!(jac[(i, j)], fd, max_relative = 1e-6, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn linearize_at_partial_fixed_point_is_block_diagonal() {
        let sys = CircleSystem::new(&presets::sym2()).unwrap();
        let v1 = sys.find_v(&[0]).unwrap();
        let lin = linearize(&sys, &v1);
        assert_relative_eq!(lin.matrix[(1, 1)], -4.0, epsilon = 1e-12);
        assert_relative_eq!(lin.matrix[(1, 0)], 0.0);
        assert_relative_eq!(lin.matrix[(0, 1)], 0.0);
    }

    #[test]
    fn linearize_at_origin_is_zero() {
        let sys = CircleSystem::new(&presets::sym2()).unwrap();
        let lin = linearize(&sys, &[0.0, 0.0]);
        assert_eq!(lin.matrix.abs().max(), 0.0);
        assert!(lin.at_xi.is_none());
    }

    #[test]
    fn xi_spectrum_sym2() {
        let sys = CircleSystem::new(&presets::sym2()).unwrap();
        let xi = sys.find_xi().unwrap();
        let spec = xi_spectrum(&sys, &xi).unwrap();
        assert_relative_eq!(spec.report.eigenvalues[0], 16.0 / 9.0, epsilon = 1e-10);
        assert_relative_eq!(spec.report.eigenvalues[1], -16.0 / 3.0, epsilon = 1e-10);
        assert!(spec.negative_eigenvalue < -spec.energy);
        let z = &spec.negative_eigenvector;
        assert_relative_eq!(z[0], z[1], epsilon = 1e-12);
        assert!(z[0] > 0.0);
    }

    #[test]
    fn xi_spectrum_m3_cluster_path() {
        let sys = CircleSystem::new(&presets::m3sym()).unwrap();
        let xi = sys.find_xi().unwrap();
        assert_relative_eq!(xi[0], 1.0, epsilon = 1e-12);
        let spec = xi_spectrum(&sys, &xi).unwrap();
        assert_relative_eq!(spec.report.eigenvalues[0], 2.0, epsilon = 1e-10);
        assert_relative_eq!(spec.report.eigenvalues[1], 2.0, epsilon = 1e-10);
        assert_relative_eq!(spec.report.eigenvalues[2], -4.0, epsilon = 1e-10);
        // validate against the dense oracle on alpha
        let lin = linearize(&sys, &xi);
        let alpha = lin.at_xi.unwrap().alpha;
        let mu = oracle::reference_eigenvalues(&alpha.a, &alpha.eps);
        let mut l_from_oracle: Vec<f64> = mu.iter().map(|m| spec.energy - m).collect();
        l_from_oracle.sort_by(|a, b| b.total_cmp(a));
        for (x, y) in spec.report.eigenvalues.iter().zip(&l_from_oracle) {
            assert_relative_eq!(x, y, epsilon = 1e-10);
        }
    }

    #[test]
    fn xi_spectrum_asym_matches_dense_oracle() {
        let sys = CircleSystem::new(&presets::asym()).unwrap();
        let xi = sys.find_xi().unwrap();
        let spec = xi_spectrum(&sys, &xi).unwrap();
        let alpha = linearize(&sys, &xi).at_xi.unwrap().alpha;
        let mu = oracle::reference_eigenvalues(&alpha.a, &alpha.eps);
        let mut expected: Vec<f64> = mu.iter().map(|m| spec.energy - m).collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        for (x, y) in spec.report.eigenvalues.iter().zip(&expected) {
            assert_relative_eq!(x, y, epsilon = 1e-10);
        }
        let neg = spec.report.eigenvalues.iter().filter(|&&v| v < 0.0).count();
        assert_eq!(neg, 1);
    }

    #[test]
    fn vtheta_spectrum_counts() {
        let sys = CircleSystem::new(&presets::sym2()).unwrap();
        let rep = vtheta_spectrum(&sys, &[0]).unwrap();
        assert_relative_eq!(rep.eigenvalues[0], -4.0, epsilon = 1e-10);
        assert_relative_eq!(rep.eigenvalues[1], -8.0, epsilon = 1e-10);

        let m3 = CircleSystem::new(&presets::m3sym()).unwrap();
        let rep = vtheta_spectrum(&m3, &[0, 1]).unwrap();
        let neg = rep.eigenvalues.iter().filter(|&&v| v < 0.0).count();
        let pos = rep.eigenvalues.iter().filter(|&&v| v > 0.0).count();
        assert_eq!((neg, pos), (2, 1));

        assert!(vtheta_spectrum(&m3, &[0, 1, 2]).is_err());
    }

    #[test]
    fn beta_alpha_similarity() {
        // eigenvectors of alpha conjugated by D_xi are eigenvectors of beta
        let sys = CircleSystem::new(&presets::asym()).unwrap();
        let xi = sys.find_xi().unwrap();
        let lin = linearize(&sys, &xi);
        let decomp = lin.at_xi.unwrap();
        let rep = decomp.alpha.secular_eigen().unwrap();
        for (ev, vec) in rep.eigenvalues.iter().zip(rep.eigenvectors.as_ref().unwrap()) {
            let w: Vec<f64> = vec.iter().zip(&xi).map(|(v, x)| v * x).collect();
            let wv = nalgebra::DVector::from_vec(w);
            let resid = (&decomp.beta * &wv - *ev * &wv).abs().max();
            assert!(resid < 1e-10 * (1.0 + ev.abs()) * (1.0 + wv.abs().max()));
        }
    }
}
