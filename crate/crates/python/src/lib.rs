//! Python bindings. Spec-like arguments (drift, diffusion, configs) are
//! passed as dicts or TOML text and travel through JSON.

use engine::fields::{self, CoefficientPair, Condition, CertifySettings, Weight};
use engine::flow::{self, BrownianStore, IntegrateOptions, RecordPolicy, Scheme, StartPoints};
use engine::fokker_planck::{self, Boundary, FpeScheme, GeneratorGrid, SolveOptions};
use engine::grid::{GridSpec, ScalarGrid};
use engine::lab;
use engine::moduli::{self, AuxiliaryFunction, OsgoodModulus};
use engine::mollify::{self, MollifierSpec};
use engine::Error;
use pyo3::exceptions::{PyArithmeticError, PyNotImplementedError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Parameter(_) | Error::Config(_) | Error::Cfl { .. } | Error::Coupling(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::Capability(_) => PyNotImplementedError::new_err(e.to_string()),
        Error::Numeric(_) => PyArithmeticError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let json = obj.py().import("json")?;
    let text: String = json.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn keyword<T: DeserializeOwned>(s: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| PyValueError::new_err(format!("unknown option {s:?}")))
}

/// An Osgood modulus `rho`.
#[pyclass(name = "Modulus", frozen)]
struct PyModulus {
    inner: OsgoodModulus,
}

#[pymethods]
impl PyModulus {
    /// `linear`, `loglinear` or `loglinear-smooth`.
    #[new]
    fn new(key: &str) -> PyResult<Self> {
        Ok(Self { inner: OsgoodModulus::from_key(key).map_err(err)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    fn __call__(&self, s: f64) -> PyResult<f64> {
        self.inner.eval(s).map_err(err)
    }

    /// `int_eps^1 ds / rho(s)`.
    fn osgood_integral(&self, eps: f64) -> PyResult<f64> {
        moduli::osgood_integral(&self.inner, eps).map_err(err)
    }

    #[pyo3(signature = (epsilons, threshold = 3.0))]
    fn divergence<'py>(&self, py: Python<'py>, epsilons: Vec<f64>, threshold: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &moduli::certify_osgood_divergence(&self.inner, &epsilons, threshold).map_err(err)?)
    }

    /// The gauge `psi_delta(xi) = int_0^xi ds / (rho(s) + delta)`.
    fn gauge(&self, delta: f64) -> PyResult<Gauge> {
        Ok(Gauge { inner: AuxiliaryFunction::new(self.inner.clone(), delta).map_err(err)? })
    }
}

#[pyclass(frozen)]
struct Gauge {
    inner: AuxiliaryFunction,
}

#[pymethods]
impl Gauge {
    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta()
    }

    fn __call__(&self, xi: f64) -> PyResult<f64> {
        self.inner.eval(xi).map_err(err)
    }

    fn many(&self, xis: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.eval_many(&xis).map_err(err)
    }
}

/// The coefficients `(sigma, b)`.
#[pyclass(name = "CoefficientPair", frozen)]
struct PyPair {
    inner: CoefficientPair,
}

#[pymethods]
impl PyPair {
    /// `drift` and `diffusion` are spec dicts such as `{"kind": "ou", "theta": 1.0}`.
    #[new]
    #[pyo3(signature = (drift, diffusion, d, m = None))]
    fn new(drift: &Bound<'_, PyAny>, diffusion: &Bound<'_, PyAny>, d: usize, m: Option<usize>) -> PyResult<Self> {
        let drift: fields::DriftSpec = from_py(drift)?;
        let diffusion: fields::DiffusionSpec = from_py(diffusion)?;
        let inner = CoefficientPair::from_specs(&drift, &diffusion, d, m.unwrap_or(d)).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }

    fn drift(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        Ok(self.inner.drift_at(&x))
    }

    /// Row-major `d x m`.
    fn sigma(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        Ok(self.inner.sigma_at(&x))
    }

    /// The level-`n` mollification; tabulated when `cells_per_unit > 0`.
    #[pyo3(signature = (level, cells_per_unit = 0.0, quadrature_points = mollify::DEFAULT_QUADRATURE_POINTS))]
    fn mollify(&self, level: usize, cells_per_unit: f64, quadrature_points: usize) -> PyResult<Self> {
        let spec = MollifierSpec::new(level).with_points(quadrature_points);
        let inner = if cells_per_unit > 0.0 {
            mollify::mollify_tabulated(&self.inner, spec, cells_per_unit)
        } else {
            mollify::mollify_pair(&self.inner, spec)
        }
        .map_err(err)?;
        Ok(Self { inner })
    }

    /// Sweeps a constant weight, then certifies the condition on fresh pairs.
    #[pyo3(signature = (condition, modulus, half = std::f64::consts::PI, radius = 1.0, n_pairs = 100_000, seed = 0, headroom = 0.02))]
    #[allow(clippy::too_many_arguments)]
    fn certify<'py>(
        &self,
        py: Python<'py>,
        condition: &str,
        modulus: &PyModulus,
        half: f64,
        radius: f64,
        n_pairs: usize,
        seed: u64,
        headroom: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cond: Condition = keyword(condition)?;
        let settings = CertifySettings::cube(self.inner.dim(), half, radius, n_pairs, seed);
        let g = fields::sweep_weight_scale(&self.inner, cond, &modulus.inner, &Weight::Constant(1.0), &settings, headroom)
            .map_err(err)?;
        let cert = fields::certify_condition(&self.inner, cond, &modulus.inner, &Weight::Constant(g), &settings).map_err(err)?;
        let out = to_py(py, &cert)?;
        out.set_item("weight", g)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

impl PyPair {
    fn check(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!("point must have {} coordinates", self.inner.dim())));
        }
        Ok(())
    }
}

/// Trajectories of every start on every Brownian path.
#[pyclass(frozen)]
struct Ensemble {
    inner: flow::FlowEnsemble,
}

#[pymethods]
impl Ensemble {
    #[getter]
    fn n_paths(&self) -> usize {
        self.inner.n_paths()
    }

    #[getter]
    fn n_particles(&self) -> usize {
        self.inner.n_particles()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        let g = self.inner.grid();
        self.inner.record_steps().iter().map(|&k| g.time(k)).collect()
    }

    /// Positions at recorded snapshot `s`, one row per trajectory
    /// (`path * n_particles + particle`).
    fn snapshot(&self, s: usize) -> PyResult<Vec<Vec<f64>>> {
        if s >= self.inner.record_steps().len() {
            return Err(PyValueError::new_err("snapshot index out of range"));
        }
        Ok((0..self.inner.n_trajectories()).map(|t| self.inner.state(t, s).to_vec()).collect())
    }

    fn sup_norm(&self) -> Vec<f64> {
        self.inner.sup_norm().to_vec()
    }

    fn diverged_count(&self) -> usize {
        self.inner.diverged_count()
    }
}

/// Euler-Maruyama (or Milstein in 1-d) from `starts` on `paths` seeded
/// Brownian paths, keeping `record` snapshots evenly spaced in time.
#[pyfunction]
#[pyo3(signature = (pair, starts, paths, steps, t_end = 1.0, seed = 0, scheme = "euler-maruyama", record = 1))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    pair: &PyPair,
    starts: Vec<Vec<f64>>,
    paths: usize,
    steps: usize,
    t_end: f64,
    seed: u64,
    scheme: &str,
    record: usize,
) -> PyResult<Ensemble> {
    let d = pair.inner.dim();
    if starts.iter().any(|x| x.len() != d) {
        return Err(PyValueError::new_err(format!("starts must have {d} coordinates")));
    }
    let scheme: Scheme = keyword(scheme)?;
    let coords: Vec<f64> = starts.into_iter().flatten().collect();
    let starts = StartPoints::uniform(d, coords).map_err(err)?;
    let noise = BrownianStore::new(seed, paths, pair.inner.noise_dim(), t_end, steps).map_err(err)?;
    let policy = RecordPolicy::Every((steps / record.max(1)).max(1));
    let opts = IntegrateOptions { record: policy, stopping_radius: None };
    let inner = flow::integrate(&pair.inner, &starts, &noise, scheme, &opts).map_err(err)?;
    Ok(Ensemble { inner })
}

/// Solves the Fokker-Planck equation on a box from a Gaussian of the given
/// variance; returns the snapshots with their mass and moments.
#[pyfunction]
#[pyo3(signature = (pair, lower, upper, resolution, variance, t_end, dt, scheme = "crank-nicolson", boundary = "zero-flux"))]
#[allow(clippy::too_many_arguments)]
fn solve_fpe<'py>(
    py: Python<'py>,
    pair: &PyPair,
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
    variance: f64,
    t_end: f64,
    dt: f64,
    scheme: &str,
    boundary: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let scheme: FpeScheme = keyword(scheme)?;
    let boundary: Boundary = keyword(boundary)?;
    let spec = GridSpec::new(lower, upper, resolution).map_err(err)?;
    let grid = GeneratorGrid::new(&pair.inner, spec.clone(), boundary).map_err(err)?;
    let initial = lab::InitialDensity::Gaussian { mean: vec![], variance };
    let u0 = ScalarGrid::from_fn(spec, |x| initial.eval(x));
    let opts = SolveOptions { t_end, dt, scheme, record: vec![t_end] };
    let path = py.detach(|| fokker_planck::solve(&grid, &u0, &opts)).map_err(err)?;
    let out = to_py(py, &path)?;
    let moments: Vec<(f64, Vec<f64>, Vec<f64>)> = path.snapshots.iter().map(fokker_planck::grid_moments).collect();
    out.set_item("moments", to_py(py, &moments)?)?;
    Ok(out)
}

/// Findings of the static config checks, as `key: message` strings.
#[pyfunction]
fn validate_config(toml_text: &str) -> PyResult<Vec<String>> {
    let cfg = lab::ExperimentConfig::from_toml(toml_text).map_err(err)?;
    Ok(lab::validate(&cfg).iter().map(|f| f.to_string()).collect())
}

/// Runs an experiment config and returns its report.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, toml_text: &str, output_root: std::path::PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let cfg = lab::ExperimentConfig::from_toml(toml_text).map_err(err)?;
    let report = py.detach(|| lab::run(&cfg, &output_root)).map_err(err)?;
    to_py(py, &report)
}

/// Desk-scale preset config of an experiment as TOML text.
#[pyfunction]
fn preset(experiment: &str) -> PyResult<String> {
    let e: lab::Experiment = keyword(experiment)?;
    lab::preset(e).to_toml().map_err(err)
}

#[pymodule]
#[pyo3(name = "flowlab")]
fn flowlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModulus>()?;
    m.add_class::<Gauge>()?;
    m.add_class::<PyPair>()?;
    m.add_class::<Ensemble>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(solve_fpe, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    Ok(())
}
