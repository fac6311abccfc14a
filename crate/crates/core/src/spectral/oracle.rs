//! Independent dense reference eigensolver used by the verification suite.
//!
//! A diagonal-plus-rank-one matrix with positive data is similar to the
//! symmetric matrix `diag(eps_i a_i) + u u^T` with `u_i = sqrt(a_i)`
//! (conjugate by `diag(1/sqrt(a_i))`). The symmetric matrix is reduced to
//! tridiagonal form and each eigenvalue is located by bisection on the Sturm
//! sign-count of the characteristic-polynomial sequence. Nothing here
//! touches the secular path.

use nalgebra::DMatrix;

/// Eigenvalues (descending) of `diag(eps_i a_i) + ones-row(a)` via the
/// symmetrized similarity.
pub fn reference_eigenvalues(a: &[f64], eps: &[f64]) -> Vec<f64> {
    let m = a.len();
    let mat = DMatrix::from_fn(m, m, |i, j| {
        let rank_one = (a[i] * a[j]).sqrt();
        rank_one + if i == j { eps[i] * a[i] } else { 0.0 }
    });
    symmetric_eigenvalues(&mat)
}

/// All eigenvalues of a symmetric matrix, descending.
pub fn symmetric_eigenvalues(mat: &DMatrix<f64>) -> Vec<f64> {
    let n = mat.nrows();
    assert_eq!(n, mat.ncols(), "matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![mat[(0, 0)]];
    }
    let tri = nalgebra::linalg::SymmetricTridiagonal::new(mat.clone());
    let d: Vec<f64> = tri.diagonal().iter().cloned().collect();
    let e: Vec<f64> = tri.off_diagonal().iter().cloned().collect();

    // Gershgorin bounds of the tridiagonal form
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for i in 0..n {
        let left = if i > 0 { e[i - 1].abs() } else { 0.0 };
        let right = if i < n - 1 { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - left - right);
        hi = hi.max(d[i] + left + right);
    }
    let scale = hi.abs().max(lo.abs()).max(1e-300);
    lo -= 1e-12 * scale;
    hi += 1e-12 * scale;

    // ascending eigenvalue k = inf { lambda : count_below(lambda) >= k+1 }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut a = lo;
        let mut b = hi;
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if sturm_count_below(&d, &e, mid) >= k + 1 {
                b = mid;
            } else {
                a = mid;
            }
            if b - a <= 1e-15 * (b.abs().max(a.abs()).max(1e-300)) {
                break;
            }
        }
        out.push(0.5 * (a + b));
    }
    out.reverse();
    out
}

/// Number of eigenvalues of the tridiagonal matrix strictly below `lambda`:
/// negative terms of the pivot recurrence (the sign changes of the leading
/// principal minors of `T - lambda I`).
fn sturm_count_below(d: &[f64], e: &[f64], lambda: f64) -> usize {
    let n = d.len();
    let mut count = 0;
    let mut prev = 1.0f64;
    for i in 0..n {
        let mut q = d[i] - lambda;
        if i > 0 {
            let e2 = e[i - 1] * e[i - 1];
            if e2 != 0.0 {
                q -= e2 / prev; // +-inf propagates the correct sign
            }
        }
        if q == 0.0 {
            q = -1e-300;
        }
        if q < 0.0 {
            count += 1;
        }
        prev = q;
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn two_by_two_exact() {
        let m = dmatrix![2.0, 1.0; 1.0, 2.0];
        let ev = symmetric_eigenvalues(&m);
        assert_relative_eq!(ev[0], 3.0, epsilon = 1e-10);
        assert_relative_eq!(ev[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn repeated_eigenvalues_counted() {
        let m = DMatrix::from_diagonal_element(3, 3, 2.0);
        let ev = symmetric_eigenvalues(&m);
        for v in ev {
            assert_relative_eq!(v, 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn rank_one_update_case() {
        // diag(2,1) + sqrt-outer of (2,1): same spectrum as the row form
        let ev = reference_eigenvalues(&[2.0, 1.0], &[1.0, 1.0]);
        let s3 = 3.0f64.sqrt();
        assert_relative_eq!(ev[0], 3.0 + s3, epsilon = 1e-9);
        assert_relative_eq!(ev[1], 3.0 - s3, epsilon = 1e-9);
    }

    #[test]
    fn trace_is_preserved() {
        let a = [0.7, 1.3, 2.2, 0.1];
        let eps = [1.5, 0.3, 2.0, 5.0];
        let ev = reference_eigenvalues(&a, &eps);
        let trace: f64 = a.iter().zip(&eps).map(|(x, e)| x * e + x).sum();
        assert_relative_eq!(ev.iter().sum::<f64>(), trace, max_relative = 1e-9);
    }

    #[test]
    fn wide_dynamic_range() {
        // entries spanning many decades must not lose relative accuracy
        let a = [1e-3, 1e3, 1.0, 5e-2];
        let eps = [1e3, 1e-3, 1e2, 1e-1];
        let ev = reference_eigenvalues(&a, &eps);
        let trace: f64 = a.iter().zip(&eps).map(|(x, e)| x * e + x).sum();
        assert_relative_eq!(ev.iter().sum::<f64>(), trace, max_relative = 1e-9);
        // all eigenvalues of a positive matrix are positive
        assert!(ev.iter().all(|&v| v > 0.0));
    }
}
