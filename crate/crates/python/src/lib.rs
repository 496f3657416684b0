//! Python bindings: grids, the regularized nonlinearity, noise models,
//! configuration, single paths, ensembles and reports.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spme_core::config::{parse_config, RunConfig, SchemeChoice};
use spme_core::grid::{self, Grid};
use spme_core::noise::{NoiseModel, NoiseShape};
use spme_core::nonlinearity::Regularization;
use spme_core::observables;
use spme_core::Error;

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        3 => PyOSError::new_err(e.to_string()),
        _ => match e {
            Error::Precondition(_) | Error::SizeMismatch { .. } => PyValueError::new_err(e.to_string()),
            other => PyRuntimeError::new_err(other.to_string()),
        },
    }
}

#[pyclass(name = "Grid", frozen)]
struct PyGrid {
    inner: Grid,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (dim, extent, n))]
    fn new(dim: usize, extent: Vec<f64>, n: Vec<usize>) -> PyResult<Self> {
        Ok(PyGrid {
            inner: grid::build_grid(dim, &extent, &n).map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n(&self) -> Vec<usize> {
        self.inner.n().to_vec()
    }

    #[getter]
    fn extent(&self) -> Vec<f64> {
        self.inner.extent().to_vec()
    }

    #[getter]
    fn h(&self) -> Vec<f64> {
        self.inner.h().to_vec()
    }

    #[getter]
    fn cell_volume(&self) -> f64 {
        self.inner.cell_volume()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn coords(&self, index: usize) -> PyResult<Vec<f64>> {
        if index >= self.inner.len() {
            return Err(PyValueError::new_err(format!("index {index} out of range")));
        }
        Ok(self.inner.coords(index)[..self.inner.dim()].to_vec())
    }

    /// Discrete Dirichlet Laplacian of `field`.
    fn laplacian(&self, field: Vec<f64>) -> PyResult<Vec<f64>> {
        grid::laplacian_apply(&self.inner, &field).map_err(to_py)
    }

    /// Solves `(diag − alpha Δ_h) u = rhs`.
    fn solve_shifted(&self, alpha: f64, diag: Vec<f64>, rhs: Vec<f64>) -> PyResult<Vec<f64>> {
        grid::solve_shifted(&self.inner, alpha, &diag, &rhs).map_err(to_py)
    }

    /// Returns `(continuum eigenvalue, discrete eigenvalue, values)`.
    fn eigenmode(&self, k: Vec<usize>) -> PyResult<(f64, f64, Vec<f64>)> {
        let m = grid::eigenmode(&self.inner, &k).map_err(to_py)?;
        Ok((m.eigenvalue, m.discrete_eigenvalue, m.values))
    }

    fn l2_norm(&self, field: Vec<f64>) -> PyResult<f64> {
        self.inner.check_len(&field).map_err(to_py)?;
        Ok(self.inner.l2_norm(&field))
    }

    fn mass(&self, field: Vec<f64>) -> PyResult<f64> {
        self.inner.check_len(&field).map_err(to_py)?;
        Ok(observables::mass(&field, &self.inner))
    }

    fn critical_measure(&self, field: Vec<f64>, delta: f64) -> PyResult<f64> {
        self.inner.check_len(&field).map_err(to_py)?;
        observables::critical_measure(&field, &self.inner, delta).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Grid(dim={}, extent={:?}, n={:?})", self.inner.dim(), self.inner.extent(), self.inner.n())
    }
}

#[pyclass(name = "Regularization", frozen)]
struct PyRegularization {
    inner: Regularization,
}

#[pymethods]
impl PyRegularization {
    #[new]
    fn new(lam: f64) -> PyResult<Self> {
        Ok(PyRegularization {
            inner: Regularization::new(lam).map_err(to_py)?,
        })
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda()
    }

    #[getter]
    fn c_pp(&self) -> f64 {
        self.inner.c_pp()
    }

    fn psi(&self, r: f64) -> f64 {
        self.inner.psi(r)
    }

    fn phi(&self, r: f64) -> f64 {
        self.inner.phi(r)
    }

    fn phi_prime(&self, r: f64) -> f64 {
        self.inner.phi_prime(r)
    }

    fn phi_second(&self, r: f64) -> f64 {
        self.inner.phi_second(r)
    }
}

#[pyfunction]
fn psi_lambda(r: f64, lam: f64) -> PyResult<f64> {
    Ok(Regularization::new(lam).map_err(to_py)?.psi(r))
}

fn parse_shape(shape: &str) -> PyResult<NoiseShape> {
    match shape {
        "eigen" => Ok(NoiseShape::Eigen),
        "global" => Ok(NoiseShape::Global),
        other => Err(PyValueError::new_err(format!("unknown noise shape {other:?}"))),
    }
}

#[pyclass(name = "NoiseModel", frozen)]
struct PyNoiseModel {
    inner: NoiseModel,
}

#[pymethods]
impl PyNoiseModel {
    #[new]
    #[pyo3(signature = (grid, mu, modes, shape = "eigen"))]
    fn new(grid: &PyGrid, mu: Vec<f64>, modes: Vec<Vec<usize>>, shape: &str) -> PyResult<Self> {
        Ok(PyNoiseModel {
            inner: NoiseModel::new(&grid.inner, &mu, &modes, parse_shape(shape)?).map_err(to_py)?,
        })
    }

    #[getter]
    fn n_modes(&self) -> usize {
        self.inner.n_modes()
    }

    /// `Σ μ_k² e_k²` on the grid.
    fn tilde_mu(&self) -> Vec<f64> {
        self.inner.tilde_mu().to_vec()
    }

    /// `−Σ μ_k e_k β_k`.
    fn mu_field(&self, beta: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.mu_field(&beta).map_err(to_py)
    }
}

#[pyclass(name = "RunConfig")]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (dim = 1))]
    fn new(dim: usize) -> Self {
        PyRunConfig {
            inner: RunConfig::default_for_dim(dim),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyRunConfig {
            inner: parse_config(text).map_err(to_py)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    #[getter]
    fn get_lam(&self) -> f64 {
        self.inner.lambda
    }

    #[setter]
    fn set_lam(&mut self, v: f64) {
        self.inner.lambda = v;
    }

    #[getter]
    fn get_dt(&self) -> f64 {
        self.inner.dt
    }

    #[setter]
    fn set_dt(&mut self, v: f64) {
        self.inner.dt = v;
    }

    #[getter]
    fn get_t_end(&self) -> f64 {
        self.inner.t_end
    }

    #[setter]
    fn set_t_end(&mut self, v: f64) {
        self.inner.t_end = v;
    }

    #[getter]
    fn get_n(&self) -> Vec<usize> {
        self.inner.n.clone()
    }

    #[setter]
    fn set_n(&mut self, v: Vec<usize>) {
        self.inner.n = v;
    }

    #[getter]
    fn get_record_stride(&self) -> usize {
        self.inner.record_stride
    }

    #[setter]
    fn set_record_stride(&mut self, v: usize) {
        self.inner.record_stride = v;
    }

    #[getter]
    fn get_mu(&self) -> Vec<f64> {
        self.inner.noise.mu.clone()
    }

    #[setter]
    fn set_mu(&mut self, v: Vec<f64>) {
        self.inner.noise.mu = v;
    }

    #[getter]
    fn get_scheme(&self) -> &'static str {
        self.inner.scheme.as_str()
    }

    #[setter]
    fn set_scheme(&mut self, v: &str) -> PyResult<()> {
        self.inner.scheme = match v {
            "direct" => SchemeChoice::Direct,
            "transformed" => SchemeChoice::Transformed,
            "both" => SchemeChoice::Both,
            other => return Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
        };
        Ok(())
    }

    #[getter]
    fn get_seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }

    #[getter]
    fn get_paths(&self) -> usize {
        self.inner.paths
    }

    #[setter]
    fn set_paths(&mut self, v: usize) {
        self.inner.paths = v;
    }
}

/// Integrates one path and returns the trajectory as a dict of columns.
#[pyfunction]
fn run_path<'py>(py: Python<'py>, config: &PyRunConfig, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    let traj = py.detach(move || spme_core::run_path(&cfg, seed)).map_err(to_py)?;
    let recs = &traj.records;
    let col = |f: fn(&observables::ObservableRecord) -> f64| recs.iter().map(f).collect::<Vec<f64>>();
    let out = PyDict::new(py);
    out.set_item("t", col(|r| r.t))?;
    out.set_item("Z", col(|r| r.z))?;
    out.set_item("l2", col(|r| r.l2))?;
    out.set_item("l2Y", col(|r| r.l2_y))?;
    out.set_item("m_noncrit", col(|r| r.m_noncrit))?;
    out.set_item("mass_K", recs.iter().map(|r| r.mass_k.clone()).collect::<Vec<_>>())?;
    out.set_item("bound_rhs", recs.iter().map(|r| r.bound_rhs.clone()).collect::<Vec<_>>())?;
    out.set_item("beta_sumsq", col(|r| r.beta_sumsq))?;
    out.set_item("min_x", col(|r| r.min_x))?;
    out.set_item("clamped_mass", col(|r| r.clamped_mass))?;
    Ok(out)
}

/// Runs an ensemble into `out_dir` and returns the manifest path.
#[pyfunction]
fn run_ensemble(py: Python<'_>, config: &PyRunConfig, out_dir: PathBuf) -> PyResult<String> {
    let cfg = config.inner.clone();
    let dir = out_dir.clone();
    py.detach(move || spme_core::run_ensemble(&cfg, &dir)).map_err(to_py)?;
    Ok(out_dir.join(spme_core::ensemble::MANIFEST_FILE).to_string_lossy().into_owned())
}

/// Summarizes a finished ensemble; returns one JSON document per scheme.
#[pyfunction]
fn report(py: Python<'_>, manifest: PathBuf) -> PyResult<Vec<String>> {
    let summary = py.detach(move || spme_core::report(&manifest)).map_err(to_py)?;
    let text = summary.to_jsonl().map_err(to_py)?;
    Ok(text.lines().map(str::to_owned).collect())
}

#[pymodule]
fn spme(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyRegularization>()?;
    m.add_class::<PyNoiseModel>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_function(wrap_pyfunction!(psi_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(run_path, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
