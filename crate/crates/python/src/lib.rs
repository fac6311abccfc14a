//! Python bindings: the bundle type plus the main operations of the
//! laboratory (fixed points, spectra, flows in both clocks, the rank-r
//! matrix flow, shooting, and curvature diagnostics). Structured results
//! cross the boundary as plain dicts and lists.

use aflab_core::bundle::BundleSpec;
use aflab_core::circle::{CircleState, CircleSystem};
use aflab_core::diagnostics;
use aflab_core::integrator::{
    circle_monitors, crosscheck_clocks, integrate_tau, integrate_u, CaptureConfig, FlowOptions,
};
use aflab_core::shooting;
use aflab_core::spectral::{self, DiagPlusRankOne};
use aflab_core::torus::{
    hat_variables, integrate_torus, torus_monitors, TorusFlowOptions, TorusState,
};
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn err(e: aflab_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> Py<PyAny> {
    match value {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => b.into_pyobject(py).unwrap().to_owned().into_any().unbind(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py).unwrap().into_any().unbind()
            } else {
                n.as_f64()
                    .unwrap_or(f64::NAN)
                    .into_pyobject(py)
                    .unwrap()
                    .into_any()
                    .unbind()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py).unwrap().into_any().unbind(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)).unwrap();
            }
            list.into_any().unbind()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)).unwrap();
            }
            dict.into_any().unbind()
        }
    }
}

fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let json = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(json_to_py(py, &json))
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let r = rows.len();
    if rows.iter().any(|row| row.len() != r) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(DMatrix::from_fn(r, r, |i, j| rows[i][j]))
}

/// Combinatorial bundle data; the handle every operation starts from.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Bundle {
    spec: BundleSpec,
}

impl Bundle {
    fn circle(&self) -> PyResult<CircleSystem> {
        CircleSystem::new(&self.spec).map_err(err)
    }
}

#[pymethods]
impl Bundle {
    #[new]
    fn new(m: usize, r: usize, n: Vec<i64>, p: Vec<i64>, q: Vec<Vec<i64>>) -> Self {
        Bundle {
            spec: BundleSpec::new(m, r, n, p, q),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Bundle {
            spec: BundleSpec::from_json(text).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Bundle(m={}, r={}, n={:?}, p={:?}, Q={:?})",
            self.spec.m, self.spec.r, self.spec.n, self.spec.p, self.spec.q
        )
    }

    /// List of validation failures; empty means the bundle is valid.
    fn validate(&self) -> Vec<String> {
        self.spec
            .validate()
            .failures
            .iter()
            .map(|f| f.to_string())
            .collect()
    }

    /// Dict with the column norms `c`, the cubic-bound constant `c0`, and
    /// the rank-one basin radius `rho` (None for higher rank).
    fn coupling_constants(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let consts = self.spec.coupling_constants().map_err(err)?;
        to_py(py, &consts)
    }

    /// Admissibility of rank-r initial data for the existence guarantees.
    fn admissible_initial(&self, h0: Vec<Vec<f64>>, b0: Vec<f64>) -> PyResult<bool> {
        let h = matrix_from_rows(&h0)?;
        self.spec.admissible_initial(&h, &b0).map_err(err)
    }

    fn energy(&self, y: Vec<f64>) -> PyResult<f64> {
        Ok(self.circle()?.energy(&y))
    }

    fn deficit(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.circle()?.deficit(&y))
    }

    fn vector_field(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.circle()?.vector_field(&y))
    }

    fn lambda_bar(&self, y: Vec<f64>) -> PyResult<f64> {
        self.circle()?.lambda_bar(&y).map_err(err)
    }

    fn lambda_bar_rate(&self, y: Vec<f64>) -> PyResult<f64> {
        self.circle()?.lambda_bar_rate(&y).map_err(err)
    }

    /// Deficit sign flags at a phase point, one of `+ 0 -` per factor.
    fn region_flags(&self, y: Vec<f64>) -> PyResult<String> {
        Ok(self.circle()?.classify_region(&y).flags())
    }

    fn find_xi(&self) -> PyResult<Vec<f64>> {
        self.circle()?.find_xi().map_err(err)
    }

    /// Partial fixed point supported on the given 0-based factor subset.
    fn find_v(&self, theta: Vec<usize>) -> PyResult<Vec<f64>> {
        self.circle()?.find_v(&theta).map_err(err)
    }

    fn blowup_threshold(&self) -> PyResult<Vec<f64>> {
        Ok(self.circle()?.blowup_threshold())
    }

    /// Spectrum of the linearization at the interior fixed point.
    fn xi_spectrum(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let sys = self.circle()?;
        let xi = sys.find_xi().map_err(err)?;
        let spec = spectral::xi_spectrum(&sys, &xi).map_err(err)?;
        to_py(py, &spec)
    }

    fn vtheta_spectrum(&self, py: Python<'_>, theta: Vec<usize>) -> PyResult<Py<PyAny>> {
        let sys = self.circle()?;
        let report = spectral::vtheta_spectrum(&sys, &theta).map_err(err)?;
        to_py(py, &report)
    }

    /// Rank-one run in the rescaled clock from phase point `y0`.
    #[pyo3(signature = (y0, a0, u_end, tol=1e-9, capture=true))]
    fn flow_u(
        &self,
        py: Python<'_>,
        y0: Vec<f64>,
        a0: f64,
        u_end: f64,
        tol: f64,
        capture: bool,
    ) -> PyResult<Py<PyAny>> {
        let sys = self.circle()?;
        let mut opts = FlowOptions::with_tol(tol);
        if capture {
            opts.capture = Some(CaptureConfig::new(sys.fixed_points(64).map_err(err)?));
        }
        let traj = integrate_u(&sys, &y0, a0, (0.0, u_end), &opts).map_err(err)?;
        let monitors = circle_monitors(&traj);
        to_py(
            py,
            &serde_json::json!({
                "samples": traj.samples,
                "events": traj.events,
                "termination": traj.termination,
                "monitors": monitors,
            }),
        )
    }

    /// Rank-one run in backwards time from metric coefficients `(a0, b0)`.
    #[pyo3(signature = (a0, b0, tau_end, tol=1e-9))]
    fn flow_tau(
        &self,
        py: Python<'_>,
        a0: f64,
        b0: Vec<f64>,
        tau_end: f64,
        tol: f64,
    ) -> PyResult<Py<PyAny>> {
        let sys = self.circle()?;
        let opts = FlowOptions::with_tol(tol);
        let traj =
            integrate_tau(&sys, &CircleState::new(a0, b0), (0.0, tau_end), &opts).map_err(err)?;
        let monitors = circle_monitors(&traj);
        to_py(
            py,
            &serde_json::json!({
                "samples": traj.samples,
                "events": traj.events,
                "termination": traj.termination,
                "monitors": monitors,
            }),
        )
    }

    /// Worst relative deviation between the two clock parametrizations.
    #[pyo3(signature = (a0, b0, horizon, tol=1e-9))]
    fn crosscheck_clocks(
        &self,
        py: Python<'_>,
        a0: f64,
        b0: Vec<f64>,
        horizon: f64,
        tol: f64,
    ) -> PyResult<Py<PyAny>> {
        let sys = self.circle()?;
        let rep = crosscheck_clocks(&sys, &CircleState::new(a0, b0), horizon, tol).map_err(err)?;
        to_py(py, &rep)
    }

    /// Rank-r matrix flow with its structural monitors.
    #[pyo3(signature = (h0, b0, tau_end, tol=1e-9))]
    fn torus_flow(
        &self,
        py: Python<'_>,
        h0: Vec<Vec<f64>>,
        b0: Vec<f64>,
        tau_end: f64,
        tol: f64,
    ) -> PyResult<Py<PyAny>> {
        let h = matrix_from_rows(&h0)?;
        let state0 = TorusState::new(h, b0);
        let opts = TorusFlowOptions::with_tol(tol);
        let traj = integrate_torus(&self.spec, &state0, (0.0, tau_end), &opts).map_err(err)?;
        let consts = self.spec.coupling_constants().map_err(err)?;
        let monitors = torus_monitors(&self.spec, &consts, &traj);
        to_py(
            py,
            &serde_json::json!({
                "samples": traj.samples,
                "termination": traj.termination,
                "admissible_start": traj.admissible_start,
                "monitors": monitors,
            }),
        )
    }

    /// Hat variables of a rank-r state.
    fn hat_variables(&self, py: Python<'_>, h: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<Py<PyAny>> {
        let state = TorusState::new(matrix_from_rows(&h)?, b);
        to_py(py, &hat_variables(&state, 0.0))
    }

    /// Trace the ancient solution whose backward limit is the interior
    /// fixed point.
    #[pyo3(signature = (eps=1e-6, tol=1e-10))]
    fn trace_unstable(&self, py: Python<'_>, eps: f64, tol: f64) -> PyResult<Py<PyAny>> {
        let sys = self.circle()?;
        let report = shooting::trace_unstable(&sys, eps, tol).map_err(err)?;
        to_py(py, &report)
    }

    /// Trace a stable-curve branch (two factors, `k` is 1-based).
    #[pyo3(signature = (k, eps=1e-6, tol=1e-10))]
    fn trace_gamma(&self, py: Python<'_>, k: usize, eps: f64, tol: f64) -> PyResult<Py<PyAny>> {
        let sys = self.circle()?;
        let report = shooting::trace_gamma(&sys, k, eps, tol).map_err(err)?;
        to_py(py, &report)
    }

    /// Backward-limit tag of a positive trajectory (three factors).
    #[pyo3(signature = (y0, tol=1e-9))]
    fn classify_backward_limit(&self, y0: Vec<f64>, tol: f64) -> PyResult<String> {
        let sys = self.circle()?;
        shooting::classify_backward_limit(&sys, &y0, tol).map_err(err)
    }

    /// Scalar curvature of a metric state (rank-one: pass `[[a]]`).
    fn scalar_curvature(&self, h: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<f64> {
        let state = TorusState::new(matrix_from_rows(&h)?, b);
        Ok(diagnostics::scalar_curvature(&self.spec, &state))
    }

    /// Largest deviation of any Ricci eigenvalue slot from the fitted
    /// Einstein constant.
    fn einstein_residual(&self, h: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<f64> {
        let state = TorusState::new(matrix_from_rows(&h)?, b);
        Ok(diagnostics::einstein_residual(&self.spec, &state))
    }
}

/// Spectrum of `diag(eps_i a_i) + ones-row(a)` with interlacing brackets and
/// the Perron eigenvector.
#[pyfunction]
fn secular_eigen(py: Python<'_>, a: Vec<f64>, eps: Vec<f64>) -> PyResult<Py<PyAny>> {
    let inst = DiagPlusRankOne::new(a, eps).map_err(err)?;
    let report = inst.secular_eigen().map_err(err)?;
    to_py(py, &report)
}

/// Independent dense reference eigenvalues for the same matrix class.
#[pyfunction]
fn reference_eigenvalues(a: Vec<f64>, eps: Vec<f64>) -> Vec<f64> {
    spectral::oracle::reference_eigenvalues(&a, &eps)
}

/// Run the verification suite; returns one dict per criterion.
#[pyfunction]
#[pyo3(signature = (criteria=None, seed=0, slack=1.0))]
fn run_verification(
    py: Python<'_>,
    criteria: Option<Vec<u32>>,
    seed: u64,
    slack: f64,
) -> PyResult<Py<PyAny>> {
    let results = aflab_core::verify::run_suite(&aflab_core::verify::VerifyOptions {
        criteria,
        seed,
        slack,
        c0_scale: 1.0,
    });
    to_py(py, &results)
}

#[pymodule]
fn aflab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Bundle>()?;
    m.add_function(wrap_pyfunction!(secular_eigen, m)?)?;
    m.add_function(wrap_pyfunction!(reference_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(run_verification, m)?)?;
    Ok(())
}
