use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spheregraph::flow::{measure_decay, run_flow as run, FlowConfig, FlowStatus};
use spheregraph::geometry::GraphFunction;
use spheregraph::grid::SphereGrid;
use spheregraph::spherespace::fit_sphere as fit;
use spheregraph::stability::{dg0_analytic, dg0_numeric, predicted_gap, spectrum as eig};
use spheregraph::symfunc::SpeedSpec;
use spheregraph::volumes::volumes_of;
use spheregraph::weights::{xi_sphere_closed_form, zhat_sphere, WeightSpec};
use spheregraph::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Config(_) | Error::Json(_) => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn speed_of(text: &str, n: usize) -> PyResult<SpeedSpec> {
    let speed: SpeedSpec = text.parse().map_err(to_py)?;
    speed.validate(n).map_err(to_py)?;
    Ok(speed)
}

/// Quadrature grid on the unit n-sphere.
#[pyclass(name = "Grid", frozen)]
struct PyGrid {
    inner: SphereGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(n: usize, resolution: usize) -> PyResult<Self> {
        Ok(Self { inner: SphereGrid::build(n, resolution).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn resolution(&self) -> usize {
        self.inner.resolution()
    }

    #[getter]
    fn max_degree(&self) -> usize {
        self.inner.max_degree()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Node angles: `[phi]` on the circle, `[phi, t]` on the 2-sphere.
    fn coords(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|i| self.inner.coords(i).to_vec()).collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    fn project(&self, values: Vec<f64>, max_degree: usize) -> PyResult<Vec<f64>> {
        self.check_len(&values)?;
        Ok(self.inner.project(&values, max_degree))
    }

    fn integrate(&self, values: Vec<f64>) -> PyResult<f64> {
        self.check_len(&values)?;
        Ok(self.inner.integrate_plain(&values))
    }

    /// Volumes `[V_0, ..., V_{n+1}]` and area of the graph of `values` over latitude `theta`.
    fn volumes(&self, theta: f64, values: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
        self.check_len(&values)?;
        let r = volumes_of(&self.inner, &GraphFunction::new(theta, values)).map_err(to_py)?;
        Ok((r.v_a, r.area))
    }

    /// Least-squares geodesic sphere: `(b, max residual)`.
    fn fit_sphere(&self, theta: f64, values: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
        self.check_len(&values)?;
        let f = fit(&self.inner, &GraphFunction::new(theta, values)).map_err(to_py)?;
        Ok((f.b, f.residual))
    }

    fn __repr__(&self) -> String {
        format!("Grid(n={}, resolution={}, nodes={})", self.inner.n(), self.inner.resolution(), self.inner.len())
    }
}

impl PyGrid {
    fn check_len(&self, values: &[f64]) -> PyResult<()> {
        if values.len() != self.inner.len() {
            return Err(PyValueError::new_err(format!("expected {} values, got {}", self.inner.len(), values.len())));
        }
        Ok(())
    }
}

/// `(xi, zhat)` for `a = 0..=n+1` on the geodesic sphere of latitude `theta`.
#[pyfunction]
fn weights(n: usize, theta: f64) -> (Vec<f64>, Vec<f64>) {
    let xi = (0..=n + 1).map(|a| xi_sphere_closed_form(n, theta, a)).collect();
    let z = (0..=n + 1).map(|a| zhat_sphere(n, theta, a)).collect();
    (xi, z)
}

/// Eigenvalues of the linearization at the base sphere, descending.
#[pyfunction]
#[pyo3(signature = (n, theta, speed, resolution, numeric = false, weights = None, eps = 1e-5))]
fn spectrum<'py>(
    py: Python<'py>,
    n: usize,
    theta: f64,
    speed: &str,
    resolution: usize,
    numeric: bool,
    weights: Option<Vec<f64>>,
    eps: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let speed = speed_of(speed, n)?;
    let grid = SphereGrid::build(n, resolution).map_err(to_py)?;
    let op = if numeric {
        let spec = WeightSpec::new(weights.unwrap_or_else(|| WeightSpec::volume(n).c));
        dg0_numeric(&grid, theta, &speed, &spec, eps)
    } else {
        dg0_analytic(&grid, theta, &speed)
    }
    .map_err(to_py)?;
    let s = eig(&op);
    let out = PyDict::new(py);
    out.set_item("eigenvalues", s.eigenvalues)?;
    out.set_item("null_multiplicity", s.null_multiplicity)?;
    out.set_item("null_tol", s.null_tol)?;
    out.set_item("gap", s.gap)?;
    out.set_item("predicted_gap", predicted_gap(n, theta, &speed).map_err(to_py)?)?;
    Ok(out)
}

/// Runs a flow from the JSON of its `flow` section.
#[pyfunction]
fn run_flow<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg: FlowConfig = serde_json::from_str(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    cfg.validate().map_err(to_py)?;
    let outcome = py.detach(|| run(&cfg)).map_err(to_py)?;
    let out = PyDict::new(py);
    let status = match outcome.status {
        FlowStatus::Converged => "converged",
        FlowStatus::ReachedTEnd => "reached_t_end",
    };
    out.set_item("status", status)?;
    let last = outcome.trace.last().expect("trace holds the initial row");
    out.set_item("t", last.t)?;
    out.set_item("vhat", outcome.trace.rows.iter().map(|r| r.vhat).collect::<Vec<_>>())?;
    out.set_item("times", outcome.trace.rows.iter().map(|r| r.t).collect::<Vec<_>>())?;
    out.set_item("res_nonsphere", outcome.trace.rows.iter().map(|r| r.res_nonsphere).collect::<Vec<_>>())?;
    out.set_item("vhat_drift", outcome.trace.vhat_drift())?;
    out.set_item("decay_rate", measure_decay(&outcome.trace).ok().map(|d| d.rate))?;
    out.set_item("fit_b", outcome.final_fit.map(|f| f.b))?;
    out.set_item("final_u", outcome.final_u)?;
    out.set_item("trace_csv", outcome.trace.to_csv())?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "spheregraph")]
fn spheregraph_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_function(wrap_pyfunction!(weights, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(run_flow, m)?)?;
    Ok(())
}
