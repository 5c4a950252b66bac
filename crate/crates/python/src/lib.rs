//! Python bindings: grids, lattices, the layered weight, kernel coefficients,
//! band certification and the full solve/verify pipeline.

use std::path::PathBuf;

use breather_core::commands::{cmd_bands, cmd_solve, cmd_verify};
use breather_core::config::RunConfig;
use breather_core::grid::{FrequencyLattice, SpaceGrid};
use breather_core::material::{self, StepWeight};
use breather_core::pipeline::{self, SolveOptions};
use breather_core::spectrum::{self, default_resolution};
use breather_core::Error;
use num_complex::Complex64;
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::Usage(_) | Error::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyclass(name = "Grid", frozen)]
struct PyGrid {
    inner: SpaceGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(x_min: f64, x_max: f64, n_points: usize) -> PyResult<Self> {
        Ok(Self { inner: SpaceGrid::new(x_min, x_max, n_points).map_err(py_err)? })
    }

    #[getter]
    fn x_min(&self) -> f64 {
        self.inner.x_min
    }

    #[getter]
    fn x_max(&self) -> f64 {
        self.inner.x_max
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.inner.dx()
    }

    fn nodes(&self) -> Vec<f64> {
        self.inner.nodes()
    }

    fn trapezoid_weights(&self) -> Vec<f64> {
        self.inner.trapezoid_weights()
    }

    fn __repr__(&self) -> String {
        format!("Grid({}, {}, {})", self.inner.x_min, self.inner.x_max, self.inner.n_points)
    }
}

#[pyclass(name = "Lattice", frozen)]
struct PyLattice {
    inner: FrequencyLattice,
}

#[pymethods]
impl PyLattice {
    #[new]
    #[pyo3(signature = (period, k_max, m = 1))]
    fn new(period: f64, k_max: i64, m: i64) -> PyResult<Self> {
        Ok(Self { inner: FrequencyLattice::new(period, k_max, m).map_err(py_err)? })
    }

    #[getter]
    fn active_set(&self) -> Vec<i64> {
        self.inner.active_set.clone()
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Lattice(period={}, k_max={}, m={})", self.inner.period, self.inner.k_max, self.inner.sublattice_m)
    }
}

#[pyclass(name = "StepWeight", frozen)]
struct PyStepWeight {
    inner: StepWeight,
}

#[pymethods]
impl PyStepWeight {
    #[staticmethod]
    fn two_layer(period: f64, cell_length: f64, theta: f64, speed: f64) -> PyResult<Self> {
        Ok(Self { inner: StepWeight::two_layer(period, cell_length, theta, speed).map_err(py_err)? })
    }

    #[staticmethod]
    fn two_layer_halfspace(period: f64, cell_minus: f64, theta_minus: f64, cell_plus: f64, theta_plus: f64, speed: f64) -> PyResult<Self> {
        let w = StepWeight::two_layer_halfspace(period, cell_minus, theta_minus, cell_plus, theta_plus, speed).map_err(py_err)?;
        Ok(Self { inner: w })
    }

    #[staticmethod]
    fn constant(value: f64, speed: f64) -> PyResult<Self> {
        Ok(Self { inner: StepWeight::constant(value, speed).map_err(py_err)? })
    }

    fn value_at(&self, x: f64) -> f64 {
        self.inner.value_at(x)
    }

    fn sample(&self, grid: &PyGrid) -> Vec<f64> {
        self.inner.sample_on(&grid.inner)
    }

    fn min_value(&self) -> f64 {
        self.inner.min_value()
    }

    /// Floquet discriminant; for a half-space weight, one value per side.
    fn discriminant(&self, lam: f64) -> PyResult<f64> {
        spectrum::discriminant(&self.inner, lam).map_err(py_err)
    }

    /// Band intervals `(lo, hi)` below `lambda_max`, one list per periodic medium.
    #[pyo3(signature = (lambda_max, resolution = None))]
    fn bands(&self, py: Python<'_>, lambda_max: f64, resolution: Option<usize>) -> PyResult<Vec<Vec<(f64, f64)>>> {
        let res = resolution.unwrap_or_else(|| default_resolution(&self.inner, lambda_max));
        let bands = py.detach(|| spectrum::compute_bands(&self.inner, lambda_max, res)).map_err(py_err)?;
        Ok(bands.into_iter().map(|bs| bs.into_iter().map(|b| (b.lo, b.hi)).collect()).collect())
    }
}

#[pyclass(name = "Config", frozen)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: RunConfig::from_json(text).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: RunConfig::load(&path).map_err(py_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    fn hash(&self) -> PyResult<String> {
        self.inner.hash().map_err(py_err)
    }

    fn grid(&self) -> PyResult<PyGrid> {
        Ok(PyGrid { inner: self.inner.grid().map_err(py_err)? })
    }

    fn lattice(&self) -> PyResult<PyLattice> {
        Ok(PyLattice { inner: self.inner.lattice().map_err(py_err)? })
    }

    fn weight(&self) -> PyResult<PyStepWeight> {
        Ok(PyStepWeight { inner: self.inner.weight().map_err(py_err)? })
    }
}

/// Result of an in-memory solve.
#[pyclass(name = "Solution", frozen)]
struct PySolution {
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    energy: f64,
    #[pyo3(get)]
    lower_bound: f64,
    #[pyo3(get)]
    minimal_period: f64,
    #[pyo3(get)]
    support: Vec<i64>,
    #[pyo3(get)]
    active_set: Vec<i64>,
    #[pyo3(get)]
    x: Vec<f64>,
    coeffs: Vec<Vec<Complex64>>,
    report: String,
}

#[pymethods]
impl PySolution {
    /// Coefficient profile `û_k(x)` on the grid nodes.
    fn coefficient(&self, k: i64) -> PyResult<Vec<Complex64>> {
        let q = self
            .active_set
            .iter()
            .position(|&a| a == k)
            .ok_or_else(|| PyKeyError::new_err(format!("frequency {k} is not active")))?;
        Ok(self.coeffs[q].clone())
    }

    /// Full report as a JSON string.
    fn report_json(&self) -> String {
        self.report.clone()
    }

    fn __repr__(&self) -> String {
        format!("Solution(converged={}, energy={:.10e}, support={:?})", self.converged, self.energy, self.support)
    }
}

#[pyfunction]
fn nu_hat_triangular(period: f64, k: i64) -> f64 {
    material::nu_hat_triangular(period, k)
}

#[pyfunction]
fn g_hat_cosabs(period: f64, k: i64) -> f64 {
    material::g_hat_cosabs(period, k)
}

/// Band certificate of a configuration as a JSON string.
#[pyfunction]
fn certify(py: Python<'_>, config: &PyConfig) -> PyResult<String> {
    let cert = py
        .detach(|| pipeline::prepare(&config.inner, None).and_then(|p| pipeline::run_bands(&p)))
        .map_err(py_err)?;
    json(&cert)
}

#[pyfunction]
#[pyo3(signature = (config, sublattice = None, allow_uncertified = false))]
fn solve(py: Python<'_>, config: &PyConfig, sublattice: Option<i64>, allow_uncertified: bool) -> PyResult<PySolution> {
    let a = py
        .detach(|| {
            let p = pipeline::prepare(&config.inner, sublattice)?;
            pipeline::run_solve(&p, SolveOptions { allow_uncertified, skip_doubling: false })
        })
        .map_err(py_err)?;
    let r = &a.report;
    Ok(PySolution {
        converged: r.converged,
        energy: r.energy.j,
        lower_bound: r.energy.lower_bound,
        minimal_period: r.minimal_period,
        support: r.support.clone(),
        active_set: a.u.lattice.active_set.clone(),
        x: a.u.grid.nodes(),
        coeffs: a.u.coeffs.clone(),
        report: json(r)?,
    })
}

/// `bands` command: returns `(exit_code, message)`.
#[pyfunction]
fn run_bands(py: Python<'_>, config: &PyConfig, out: PathBuf) -> PyResult<(i32, String)> {
    let o = py.detach(|| cmd_bands(&config.inner, &out)).map_err(py_err)?;
    Ok((o.exit_code, o.message))
}

/// `solve` command: returns `(exit_code, message)`.
#[pyfunction]
#[pyo3(signature = (config, out, sublattice = None, allow_uncertified = false))]
fn run_solve(py: Python<'_>, config: &PyConfig, out: PathBuf, sublattice: Option<i64>, allow_uncertified: bool) -> PyResult<(i32, String)> {
    let o = py.detach(|| cmd_solve(&config.inner, &out, sublattice, allow_uncertified)).map_err(py_err)?;
    Ok((o.exit_code, o.message))
}

/// `verify` command: returns `(exit_code, message, report_json)`.
#[pyfunction]
#[pyo3(signature = (config, solution, refine = None))]
fn run_verify(py: Python<'_>, config: &PyConfig, solution: PathBuf, refine: Option<usize>) -> PyResult<(i32, String, String)> {
    let (o, rep) = py.detach(|| cmd_verify(&config.inner, &solution, refine)).map_err(py_err)?;
    Ok((o.exit_code, o.message, json(&rep)?))
}

#[pymodule]
fn breather(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyLattice>()?;
    m.add_class::<PyStepWeight>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(nu_hat_triangular, m)?)?;
    m.add_function(wrap_pyfunction!(g_hat_cosabs, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_bands, m)?)?;
    m.add_function(wrap_pyfunction!(run_solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_verify, m)?)?;
    Ok(())
}
