//! Python module `sabrlab`. Reports come back as plain dicts and lists;
//! invalid inputs raise `ValueError`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use sabrlab_core::asymptotics::{self, McConfig};
use sabrlab_core::dirichlet::{self, AuditConfig, ClosabilityFamily};
use sabrlab_core::geometry::{self, HyperbolicPoint};
use sabrlab_core::simulation;
use sabrlab_core::time_change::{self, EquivalenceConfig};
use sabrlab_core::weights::{self, GridSpec, WeightSpec};
use sabrlab_core::{stats, State2, TimeGrid};

fn err(e: sabrlab_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

/// SABR parameters `(beta, rho, nu)` with CEV scale `sigma`.
#[pyclass(name = "ModelParams", frozen)]
struct PyModelParams {
    inner: sabrlab_core::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (beta, rho, nu, sigma = 1.0))]
    fn new(beta: f64, rho: f64, nu: f64, sigma: f64) -> PyResult<Self> {
        Ok(Self {
            inner: sabrlab_core::ModelParams::with_sigma(beta, rho, nu, sigma).map_err(err)?,
        })
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta()
    }
    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho()
    }
    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu()
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }
    #[getter]
    fn rho_bar(&self) -> f64 {
        self.inner.rho_bar()
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelParams(beta={}, rho={}, nu={}, sigma={})",
            self.inner.beta(),
            self.inner.rho(),
            self.inner.nu(),
            self.inner.sigma()
        )
    }
}

#[derive(Serialize)]
struct PathOut {
    t: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    absorbed: Vec<bool>,
    absorption_time: Option<f64>,
    truncation_time: Option<f64>,
}

impl From<simulation::Path> for PathOut {
    fn from(p: simulation::Path) -> Self {
        Self {
            t: p.grid.times(),
            x: p.xs(),
            y: p.ys(),
            absorbed: p.states.iter().map(|s| s.absorbed).collect(),
            absorption_time: p.absorption_time,
            truncation_time: p.truncation_time,
        }
    }
}

/// Euler path of SABR (or the drifted variant) as a dict of lists.
#[pyfunction]
#[pyo3(signature = (params, x0, y0, horizon, dt, seed, path_index = 0, drifted = false))]
#[allow(clippy::too_many_arguments)]
fn simulate_sabr(
    py: Python<'_>,
    params: PyRef<'_, PyModelParams>,
    x0: f64,
    y0: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
    path_index: u64,
    drifted: bool,
) -> PyResult<Py<PyAny>> {
    let grid = TimeGrid::with_step(horizon, dt).map_err(err)?;
    let init = State2::new(x0, y0).map_err(err)?;
    let seed = sabrlab_core::SeedSpec::new(seed, path_index);
    let p = params.inner;
    let path = py
        .detach(|| simulation::simulate_sabr_euler(&p, init, &grid, drifted, seed))
        .map_err(err)?;
    to_py(py, &PathOut::from(path))
}

/// Decoupled system on its own clock, truncated where the volatility hits zero.
#[pyfunction]
#[pyo3(signature = (params, x0, y0, horizon, dt, seed, path_index = 0, drifted = false))]
#[allow(clippy::too_many_arguments)]
fn simulate_decoupled(
    py: Python<'_>,
    params: PyRef<'_, PyModelParams>,
    x0: f64,
    y0: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
    path_index: u64,
    drifted: bool,
) -> PyResult<Py<PyAny>> {
    let grid = TimeGrid::with_step(horizon, dt).map_err(err)?;
    let init = State2::new(x0, y0).map_err(err)?;
    let seed = sabrlab_core::SeedSpec::new(seed, path_index);
    let p = params.inner;
    let path = py
        .detach(|| simulation::simulate_decoupled(&p, init, &grid, drifted, seed))
        .map_err(err)?;
    to_py(py, &PathOut::from(path))
}

/// Direct vs time-changed KS comparison of the terminal marginals.
#[pyfunction]
#[pyo3(signature = (params, n_paths = 20000, dt = 1e-4, seeds = vec![1, 2, 3, 4, 5], drifted = false))]
fn equivalence(
    py: Python<'_>,
    params: PyRef<'_, PyModelParams>,
    n_paths: usize,
    dt: f64,
    seeds: Vec<u64>,
    drifted: bool,
) -> PyResult<Py<PyAny>> {
    let mut cfg = EquivalenceConfig::standard(params.inner, drifted);
    cfg.n_paths = n_paths;
    cfg.dt = dt;
    cfg.min_passing_seeds = (4 * seeds.len()).div_ceil(5);
    cfg.seeds = seeds;
    let r = py.detach(|| time_change::equivalence_experiment(&cfg)).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
fn adhoc_weight(beta: f64, x: f64, y: f64) -> PyResult<f64> {
    weights::adhoc_weight(beta, x, y).map_err(err)
}

/// `λψ − Aψ` for the ad-hoc weight.
#[pyfunction]
fn adhoc_subeigen_gap(params: PyRef<'_, PyModelParams>, x: f64, y: f64) -> PyResult<f64> {
    weights::adhoc_subeigen_gap(&params.inner, x, y).map_err(err)
}

/// Smallest gap and violations on a square log grid.
#[pyfunction]
#[pyo3(signature = (params, lo = 1e-3, hi = 1e3, n = 100, tolerance = 1e-12))]
fn adhoc_audit(py: Python<'_>, params: PyRef<'_, PyModelParams>, lo: f64, hi: f64, n: usize, tolerance: f64) -> PyResult<Py<PyAny>> {
    let a = weights::adhoc_audit(&params.inner, GridSpec { lo, hi, n }, tolerance).map_err(err)?;
    to_py(py, &a)
}

#[pyfunction]
fn cosh_radius(params: PyRef<'_, PyModelParams>, c: f64, x: f64, y: f64) -> PyResult<f64> {
    weights::cosh_radius(&params.inner, c, x, y).map_err(err)
}

#[pyfunction]
fn radial_weight(params: PyRef<'_, PyModelParams>, c: f64, n: u32, x: f64, y: f64) -> PyResult<f64> {
    let spec = WeightSpec::legendre_radial(params.inner, c, n).map_err(err)?;
    weights::radial_weight(&spec, x, y).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (params, c, n, x, y, h = 1e-3))]
fn eigen_residual(params: PyRef<'_, PyModelParams>, c: f64, n: u32, x: f64, y: f64, h: f64) -> PyResult<f64> {
    let spec = WeightSpec::legendre_radial(params.inner, c, n).map_err(err)?;
    weights::eigen_residual(&spec, x, y, h).map_err(err)
}

#[pyfunction]
fn regime_verdict(py: Python<'_>, params: PyRef<'_, PyModelParams>, c: f64, n: u32) -> PyResult<Py<PyAny>> {
    to_py(py, &weights::regime_verdict(c, n, &params.inner))
}

#[pyfunction]
fn sabr_cosh_distance(params: PyRef<'_, PyModelParams>, a: (f64, f64), b: (f64, f64)) -> PyResult<f64> {
    geometry::sabr_cosh_distance(&params.inner, a, b).map_err(err)
}

#[pyfunction]
fn hyperbolic_cosh_distance(a: (f64, f64), b: (f64, f64)) -> PyResult<f64> {
    let pa = HyperbolicPoint::new(a.0, a.1).map_err(err)?;
    let pb = HyperbolicPoint::new(b.0, b.1).map_err(err)?;
    Ok(geometry::hyperbolic_cosh_distance(&pa, &pb))
}

#[pyfunction]
fn sabr_isometry(params: PyRef<'_, PyModelParams>, x: f64, y: f64) -> PyResult<(f64, f64)> {
    let p = geometry::sabr_isometry(&params.inner, x, y).map_err(err)?;
    Ok((p.u, p.v))
}

#[pyfunction]
fn legendre(n: u32, r: f64) -> f64 {
    geometry::legendre_eval(n, r)
}

#[pyfunction]
fn classify_symmetrizable(py: Python<'_>, params: PyRef<'_, PyModelParams>) -> PyResult<Py<PyAny>> {
    to_py(py, &dirichlet::classify_symmetrizable(&params.inner).map_err(err)?)
}

/// Numerical symmetry audit of one parameter cell with bump test functions.
#[pyfunction]
#[pyo3(signature = (params, n_pairs = 50, resolution = 256, seed = 2024))]
fn symmetry_audit(py: Python<'_>, params: PyRef<'_, PyModelParams>, n_pairs: usize, resolution: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let cfg = AuditConfig {
        n_pairs,
        resolution,
        seed,
    };
    let p = params.inner;
    let a = py.detach(|| dirichlet::symmetry_audit(&p, &cfg)).map_err(err)?;
    to_py(py, &a)
}

/// `family` is one of `cev`, `ter_elst`, `m0_slice`, `m1_slice`.
#[pyfunction]
fn hamza_closability(py: Python<'_>, family: &str, beta: f64) -> PyResult<Py<PyAny>> {
    let fam = match family {
        "cev" => ClosabilityFamily::CevPower(beta),
        "ter_elst" => ClosabilityFamily::TerElst(beta),
        "m0_slice" => ClosabilityFamily::M0Slice(beta),
        "m1_slice" => ClosabilityFamily::M1Slice(beta),
        other => return Err(PyValueError::new_err(format!("unknown family '{other}'"))),
    };
    to_py(py, &dirichlet::hamza_closability(fam).map_err(err)?)
}

/// Probability of a positive limit of the forward.
#[pyfunction]
#[pyo3(signature = (params, x0, y0, n_paths = 10000, seed = 1, dt = 0.01, drifted = false))]
#[allow(clippy::too_many_arguments)]
fn absorption_probability(
    py: Python<'_>,
    params: PyRef<'_, PyModelParams>,
    x0: f64,
    y0: f64,
    n_paths: usize,
    seed: u64,
    dt: f64,
    drifted: bool,
) -> PyResult<Py<PyAny>> {
    let mc = McConfig {
        n_paths,
        master_seed: seed,
        dt,
        ..McConfig::default()
    };
    let p = params.inner;
    let est = py
        .detach(|| asymptotics::absorption_probability(&p, x0, y0, drifted, &mc))
        .map_err(err)?;
    to_py(py, &est)
}

/// Fraction of SABR paths absorbed by `horizon`.
#[pyfunction]
#[pyo3(signature = (params, x0, y0, horizon, n_paths = 10000, seed = 1, dt = 0.01))]
#[allow(clippy::too_many_arguments)]
fn mass_at_zero(
    py: Python<'_>,
    params: PyRef<'_, PyModelParams>,
    x0: f64,
    y0: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    dt: f64,
) -> PyResult<Py<PyAny>> {
    let mc = McConfig {
        n_paths,
        master_seed: seed,
        dt,
        ..McConfig::default()
    };
    let p = params.inner;
    let est = py
        .detach(|| asymptotics::mass_at_zero(&p, x0, y0, horizon, &mc))
        .map_err(err)?;
    to_py(py, &est)
}

#[pyfunction]
fn feller_boundary_class(py: Python<'_>, beta: f64) -> PyResult<Py<PyAny>> {
    to_py(py, &asymptotics::feller_boundary_class(beta).map_err(err)?)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
#[pyfunction]
fn ks_two_sample(py: Python<'_>, a: Vec<f64>, b: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_py(py, &stats::ks_two_sample(&a, &b).map_err(err)?)
}

#[pymodule]
fn sabrlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_function(wrap_pyfunction!(simulate_sabr, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_decoupled, m)?)?;
    m.add_function(wrap_pyfunction!(equivalence, m)?)?;
    m.add_function(wrap_pyfunction!(adhoc_weight, m)?)?;
    m.add_function(wrap_pyfunction!(adhoc_subeigen_gap, m)?)?;
    m.add_function(wrap_pyfunction!(adhoc_audit, m)?)?;
    m.add_function(wrap_pyfunction!(cosh_radius, m)?)?;
    m.add_function(wrap_pyfunction!(radial_weight, m)?)?;
    m.add_function(wrap_pyfunction!(eigen_residual, m)?)?;
    m.add_function(wrap_pyfunction!(regime_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(sabr_cosh_distance, m)?)?;
    m.add_function(wrap_pyfunction!(hyperbolic_cosh_distance, m)?)?;
    m.add_function(wrap_pyfunction!(sabr_isometry, m)?)?;
    m.add_function(wrap_pyfunction!(legendre, m)?)?;
    m.add_function(wrap_pyfunction!(classify_symmetrizable, m)?)?;
    m.add_function(wrap_pyfunction!(symmetry_audit, m)?)?;
    m.add_function(wrap_pyfunction!(hamza_closability, m)?)?;
    m.add_function(wrap_pyfunction!(absorption_probability, m)?)?;
    m.add_function(wrap_pyfunction!(mass_at_zero, m)?)?;
    m.add_function(wrap_pyfunction!(feller_boundary_class, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    Ok(())
}
