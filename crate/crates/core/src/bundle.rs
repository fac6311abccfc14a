//! Combinatorial bundle data and the coupling constants derived from it.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// Combinatorial data of a principal torus bundle over a product of Fano
/// Kähler-Einstein factors: `m` base factors of complex dimension `n_i` with
/// Einstein constants `p_i`, a rank-`r` torus fibre, and the `r x m` integer
/// matrix `Q` of Euler-class coefficients. Rows of `Q` index torus circles,
/// columns index base factors.
///
/// Only these integers enter the flow equations; the underlying manifolds,
/// Kähler forms, and connection forms have no representation here. Whether a
/// given `(n_i, p_i)` pair is geometrically realizable is not policed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleSpec {
    pub m: usize,
    pub r: usize,
    pub n: Vec<i64>,
    pub p: Vec<i64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<i64>>,
}

/// Derived coupling constants: `c_i` is the squared Euclidean norm of the
/// `i`-th column of `Q`; `c0` bounds the cubic term of the hat-variable
/// differential inequality; `rho` is the basin radius for the rank-one flow
/// (absent otherwise).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingConstants {
    pub c: Vec<f64>,
    pub c0: f64,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ValidationFailure {
    /// Field lengths do not match `m`/`r`.
    Shape(String),
    RankExceedsFactors { r: usize, m: usize },
    RankDeficient { rank: usize, r: usize },
    ZeroColumn { column: usize },
    NonPositiveP { index: usize, value: i64 },
    NonPositiveN { index: usize, value: i64 },
}

impl fmt::Display for ValidationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationFailure::Shape(s) => write!(f, "shape: {s}"),
            ValidationFailure::RankExceedsFactors { r, m } => {
                write!(f, "torus rank r={r} exceeds factor count m={m}")
            }
            ValidationFailure::RankDeficient { rank, r } => {
                write!(f, "Q has rank {rank} < r={r}")
            }
            ValidationFailure::ZeroColumn { column } => {
                write!(f, "column {column} of Q is zero")
            }
            ValidationFailure::NonPositiveP { index, value } => {
                write!(f, "p[{index}] = {value} is not positive")
            }
            ValidationFailure::NonPositiveN { index, value } => {
                write!(f, "n[{index}] = {value} is not positive")
            }
        }
    }
}

/// Outcome of [`BundleSpec::validate`]; failures are reported, not thrown.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub failures: Vec<ValidationFailure>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_message(&self) -> String {
        self.failures
            .iter()
            .map(|f| f.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl BundleSpec {
    pub fn new(m: usize, r: usize, n: Vec<i64>, p: Vec<i64>, q: Vec<Vec<i64>>) -> Self {
        BundleSpec { m, r, n, p, q }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks every non-degeneracy condition and lists each failure. The rank
    /// of the integer matrix is computed exactly over the integers
    /// (fraction-free elimination), so non-degeneracy is a crisp predicate.
    pub fn validate(&self) -> ValidationReport {
        let mut failures = Vec::new();
        if self.n.len() != self.m {
            failures.push(ValidationFailure::Shape(format!(
                "n has length {}, expected m={}",
                self.n.len(),
                self.m
            )));
        }
        if self.p.len() != self.m {
            failures.push(ValidationFailure::Shape(format!(
                "p has length {}, expected m={}",
                self.p.len(),
                self.m
            )));
        }
        if self.q.len() != self.r {
            failures.push(ValidationFailure::Shape(format!(
                "Q has {} rows, expected r={}",
                self.q.len(),
                self.r
            )));
        }
        for (alpha, row) in self.q.iter().enumerate() {
            if row.len() != self.m {
                failures.push(ValidationFailure::Shape(format!(
                    "Q row {} has length {}, expected m={}",
                    alpha,
                    row.len(),
                    self.m
                )));
            }
        }
        if self.m == 0 || self.r == 0 {
            failures.push(ValidationFailure::Shape("m and r must be >= 1".into()));
        }
        if !failures.is_empty() {
            return ValidationReport { failures };
        }

        if self.r > self.m {
            failures.push(ValidationFailure::RankExceedsFactors { r: self.r, m: self.m });
        }
        for (i, &v) in self.n.iter().enumerate() {
            if v < 1 {
                failures.push(ValidationFailure::NonPositiveN { index: i, value: v });
            }
        }
        for (i, &v) in self.p.iter().enumerate() {
            if v < 1 {
                failures.push(ValidationFailure::NonPositiveP { index: i, value: v });
            }
        }
        for col in 0..self.m {
            if (0..self.r).all(|row| self.q[row][col] == 0) {
                failures.push(ValidationFailure::ZeroColumn { column: col });
            }
        }
        let rank = exact_rank(&self.q);
        if rank < self.r {
            failures.push(ValidationFailure::RankDeficient { rank, r: self.r });
        }
        ValidationReport { failures }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(report.to_message()))
        }
    }

    /// Column `i` of `Q` as a vector in the fibre algebra.
    pub fn q_column(&self, i: usize) -> Vec<f64> {
        (0..self.r).map(|alpha| self.q[alpha][i] as f64).collect()
    }

    /// `c_i = |Q^(i)|^2`, `c0 = r * sum_j n_j c_j + max_i c_i`, and for r=1
    /// the basin radius `rho = min_i p_i / (max_i q_i^2 + max_i n_i q_i^2)`.
    ///
    /// `c0` is the smallest easily-provable constant for the cubic bound
    /// (via `sum Y_i^3 <= (sum Y_i)(sum Y_i^2)` and Cauchy-Schwarz), and
    /// `rho` is provable the same way; both are certified by sampling in the
    /// test suite.
    pub fn coupling_constants(&self) -> Result<CouplingConstants> {
        self.ensure_valid()?;
        let c: Vec<f64> = (0..self.m)
            .map(|i| (0..self.r).map(|a| (self.q[a][i] * self.q[a][i]) as f64).sum())
            .collect();
        let weighted: f64 = c.iter().zip(&self.n).map(|(ci, &ni)| ci * ni as f64).sum();
        let cmax = c.iter().cloned().fold(f64::MIN, f64::max);
        let c0 = self.r as f64 * weighted + cmax;
        let rho = if self.r == 1 {
            let pmin = self.p.iter().cloned().min().unwrap() as f64;
            let q2max = (0..self.m)
                .map(|i| (self.q[0][i] * self.q[0][i]) as f64)
                .fold(f64::MIN, f64::max);
            let nq2max = (0..self.m)
                .map(|i| self.n[i] as f64 * (self.q[0][i] * self.q[0][i]) as f64)
                .fold(f64::MIN, f64::max);
            Some(pmin / (q2max + nq2max))
        } else {
            None
        };
        Ok(CouplingConstants { c, c0, rho })
    }

    /// Admissibility gate for the rank-r existence guarantees:
    /// `tr(H0) * sum_i 1/b0_i < 1/(c0 m)`.
    pub fn admissible_initial(&self, h0: &DMatrix<f64>, b0: &[f64]) -> Result<bool> {
        let consts = self.coupling_constants()?;
        if h0.nrows() != self.r || h0.ncols() != self.r {
            return Err(Error::Domain(format!(
                "H0 must be {r}x{r}, got {}x{}",
                h0.nrows(),
                h0.ncols(),
                r = self.r
            )));
        }
        if b0.len() != self.m {
            return Err(Error::Domain(format!(
                "b0 must have length m={}, got {}",
                self.m,
                b0.len()
            )));
        }
        let sym_err = (h0 - h0.transpose()).abs().max();
        if sym_err > 1e-12 * (1.0 + h0.abs().max()) {
            return Err(Error::NotPositiveDefinite);
        }
        if h0.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        if b0.iter().any(|&b| b <= 0.0) {
            return Err(Error::Domain("b0 must be componentwise positive".into()));
        }
        let trace = h0.trace();
        let inv_sum: f64 = b0.iter().map(|&b| 1.0 / b).sum();
        Ok(trace * inv_sum < 1.0 / (consts.c0 * self.m as f64))
    }
}

/// Rank of an integer matrix via Bareiss fraction-free elimination over
/// arbitrary-precision integers; divisions are exact by construction.
fn exact_rank(q: &[Vec<i64>]) -> usize {
    let rows = q.len();
    if rows == 0 {
        return 0;
    }
    let cols = q[0].len();
    let mut a: Vec<Vec<BigInt>> = q
        .iter()
        .map(|row| row.iter().map(|&v| BigInt::from(v)).collect())
        .collect();
    let zero = BigInt::from(0);
    let mut prev = BigInt::from(1);
    let mut rank = 0;
    let mut pivot_col = 0;
    while rank < rows && pivot_col < cols {
        // find a pivot in column pivot_col at or below row `rank`
        let pivot_row = (rank..rows).find(|&i| a[i][pivot_col] != zero);
        let Some(pr) = pivot_row else {
            pivot_col += 1;
            continue;
        };
        a.swap(rank, pr);
        for i in rank + 1..rows {
            for j in pivot_col + 1..cols {
                let num = &a[rank][pivot_col] * &a[i][j] - &a[i][pivot_col] * &a[rank][j];
                a[i][j] = num / &prev;
            }
            a[i][pivot_col] = zero.clone();
        }
        prev = a[rank][pivot_col].clone();
        rank += 1;
        pivot_col += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn spec(m: usize, r: usize, n: &[i64], p: &[i64], q: &[&[i64]]) -> BundleSpec {
        BundleSpec::new(
            m,
            r,
            n.to_vec(),
            p.to_vec(),
            q.iter().map(|row| row.to_vec()).collect(),
        )
    }

    #[test]
    fn smallest_circle_bundle_is_valid() {
        let s = spec(2, 1, &[1, 1], &[2, 2], &[&[1, 1]]);
        assert!(s.validate().is_valid());
    }

    #[test]
    fn rank_two_over_three_factors_is_valid() {
        let s = spec(3, 2, &[1, 1, 1], &[2, 2, 2], &[&[1, 1, 0], &[0, 1, 1]]);
        assert!(s.validate().is_valid());
    }

    #[test]
    fn zero_column_and_rank_deficiency_both_reported() {
        let s = spec(2, 2, &[1, 1], &[2, 2], &[&[1, 0], &[2, 0]]);
        let report = s.validate();
        assert!(!report.is_valid());
        assert!(report
            .failures
            .iter()
            .any(|f| matches!(f, ValidationFailure::ZeroColumn { column: 1 })));
        assert!(report
            .failures
            .iter()
            .any(|f| matches!(f, ValidationFailure::RankDeficient { rank: 1, r: 2 })));
    }

    #[test]
    fn validate_is_idempotent() {
        let s = spec(2, 1, &[1, 1], &[2, 2], &[&[1, 1]]);
        let a = s.validate();
        let b = s.validate();
        assert_eq!(a.failures, b.failures);
    }

    #[test]
    fn negative_inputs_reported() {
        let s = spec(2, 1, &[1, 0], &[2, -3], &[&[1, 1]]);
        let report = s.validate();
        assert!(report
            .failures
            .iter()
            .any(|f| matches!(f, ValidationFailure::NonPositiveN { index: 1, .. })));
        assert!(report
            .failures
            .iter()
            .any(|f| matches!(f, ValidationFailure::NonPositiveP { index: 1, .. })));
    }

    #[test]
    fn coupling_constants_rank_two() {
        let s = spec(3, 2, &[1, 1, 1], &[2, 2, 2], &[&[1, 1, 0], &[0, 1, 1]]);
        let cc = s.coupling_constants().unwrap();
        assert_eq!(cc.c, vec![1.0, 2.0, 1.0]);
        assert_eq!(cc.c0, 2.0 * 4.0 + 2.0);
        assert!(cc.rho.is_none());
    }

    #[test]
    fn coupling_constants_circle() {
        let s = spec(2, 1, &[1, 1], &[2, 2], &[&[1, 1]]);
        let cc = s.coupling_constants().unwrap();
        assert_eq!(cc.c, vec![1.0, 1.0]);
        assert_eq!(cc.rho, Some(1.0));
    }

    #[test]
    fn coupling_constants_single_factor() {
        let s = spec(1, 1, &[1], &[2], &[&[3]]);
        let cc = s.coupling_constants().unwrap();
        assert_eq!(cc.c, vec![9.0]);
    }

    #[test]
    fn admissibility_threshold() {
        let s = spec(3, 2, &[1, 1, 1], &[2, 2, 2], &[&[1, 1, 0], &[0, 1, 1]]);
        let small = DMatrix::from_diagonal_element(2, 2, 0.001);
        assert!(s.admissible_initial(&small, &[1.0, 1.0, 1.0]).unwrap());
        let big = DMatrix::identity(2, 2);
        assert!(!s.admissible_initial(&big, &[1.0, 1.0, 1.0]).unwrap());
    }

    #[test]
    fn admissibility_rejects_indefinite() {
        let s = spec(3, 2, &[1, 1, 1], &[2, 2, 2], &[&[1, 1, 0], &[0, 1, 1]]);
        let h0 = dmatrix![1.0, 0.0; 0.0, -0.5];
        assert!(matches!(
            s.admissible_initial(&h0, &[1.0, 1.0, 1.0]),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn json_round_trip_rejects_unknown_keys() {
        let good = r#"{"m":2,"r":1,"n":[1,1],"p":[2,2],"Q":[[1,1]]}"#;
        let s = BundleSpec::from_json(good).unwrap();
        assert!(s.validate().is_valid());
        let bad = r#"{"m":2,"r":1,"n":[1,1],"p":[2,2],"Q":[[1,1]],"extra":1}"#;
        assert!(BundleSpec::from_json(bad).is_err());
    }

    #[test]
    fn exact_rank_handles_wide_entries() {
        // values large enough that naive f64 elimination would be shaky
        let s = spec(
            3,
            2,
            &[1, 1, 1],
            &[1, 1, 1],
            &[&[1_000_003, 2_000_003, 3_000_001], &[999_983, 1_999_993, 2_999_999]],
        );
        assert!(s.validate().is_valid());
        let degenerate = spec(
            3,
            2,
            &[1, 1, 1],
            &[1, 1, 1],
            &[&[1_000_003, 2_000_006, 3_000_009], &[2_000_006, 4_000_012, 6_000_018]],
        );
        assert!(!degenerate.validate().is_valid());
    }
}
