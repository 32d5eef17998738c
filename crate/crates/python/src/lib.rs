#![allow(clippy::useless_conversion)]

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use kinetic_brw::brw::{self, DEFAULT_CAP};
use kinetic_brw::fixed_point::{self, FixedPointPool};
use kinetic_brw::initial::{InitialLaw, InitialSpec};
use kinetic_brw::rng::SeedTree;
use kinetic_brw::solver::{self, StudyOptions};
use kinetic_brw::spectral::{self, SpectralSource, DEFAULT_BRACKET, DEFAULT_TOL};
use kinetic_brw::stats;
use kinetic_brw::weights::{self, ModelSpec};
use kinetic_brw::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Config(_) | Error::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A weight model `(A_1, A_2, ...)` of the smoothing transform.
#[pyclass(name = "WeightModel", module = "kinetic_brw_py", frozen)]
#[derive(Clone)]
struct PyWeightModel(weights::WeightModel);

#[pymethods]
impl PyWeightModel {
    #[staticmethod]
    fn kac() -> Self {
        Self(weights::WeightModel::kac())
    }

    #[staticmethod]
    fn deterministic_pair(a: f64) -> PyResult<Self> {
        weights::WeightModel::deterministic_pair(a).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn power_uniform_split(a: f64) -> PyResult<Self> {
        weights::WeightModel::power_uniform_split(a).map(Self).map_err(py_err)
    }

    /// Build from the JSON `model` block of a run configuration.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec: ModelSpec = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        weights::WeightModel::new(spec).map(Self).map_err(py_err)
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.name()
    }

    /// Positive weights of one draw.
    fn sample(&self, seed: u64) -> Vec<f64> {
        self.0.sample(&mut SeedTree::new(seed).stream(0)).weights().to_vec()
    }

    /// `Φ(θ)` from the closed form or quadrature.
    fn phi(&self, theta: f64) -> Option<f64> {
        self.0.analytic_phi(theta)
    }

    fn __repr__(&self) -> String {
        format!("WeightModel({:?})", self.0.spec())
    }
}

#[pyclass(name = "InitialLaw", module = "kinetic_brw_py", frozen)]
#[derive(Clone)]
struct PyInitialLaw(InitialLaw);

#[pymethods]
impl PyInitialLaw {
    #[staticmethod]
    fn point_mass(c: f64) -> Self {
        Self(InitialLaw::point_mass(c))
    }

    #[staticmethod]
    fn centered_uniform(half_width: f64) -> Self {
        Self(InitialLaw::centered_uniform(half_width))
    }

    #[staticmethod]
    #[pyo3(signature = (alpha, scale = 1.0))]
    fn symmetric_stable(alpha: f64, scale: f64) -> PyResult<Self> {
        InitialLaw::symmetric_stable(alpha, scale).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec: InitialSpec = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        InitialLaw::from_spec(&spec).map(Self).map_err(py_err)
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeedTree::new(seed).stream(0);
        (0..n).map(|_| self.0.sample(&mut rng)).collect()
    }
}

/// Spectral function of a model with its located minimizer.
#[pyclass(name = "SpectralProfile", module = "kinetic_brw_py", frozen)]
struct PyProfile(spectral::SpectralProfile);

#[pymethods]
impl PyProfile {
    #[new]
    fn new(model: &PyWeightModel) -> PyResult<Self> {
        let source = SpectralSource::exact(&model.0).map_err(py_err)?;
        spectral::find_theta_star(source, DEFAULT_BRACKET, DEFAULT_TOL).map(Self).map_err(py_err)
    }

    #[getter]
    fn theta_star(&self) -> PyResult<f64> {
        self.0.theta_star().map_err(py_err)
    }

    #[getter]
    fn f_theta_star(&self) -> PyResult<f64> {
        self.0.minimizer().map(|m| m.f).map_err(py_err)
    }

    fn phi(&self, theta: f64) -> f64 {
        self.0.phi(theta).value
    }

    fn f(&self, theta: f64) -> f64 {
        self.0.f(theta).value
    }

    fn sigma2(&self, delta: f64) -> PyResult<f64> {
        self.0.sigma2(delta).map_err(py_err)
    }

    /// `(regime, p, r)` for the rescaler `t^p e^{-rt}`.
    fn classify(&self, gamma: f64) -> PyResult<(String, f64, f64)> {
        let r = spectral::classify_regime(&self.0, gamma, None).map_err(py_err)?;
        let name = serde_json::to_value(r.regime).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok((name.as_str().unwrap_or_default().to_owned(), r.p, r.r))
    }
}

/// Independent samples of `U_t`.
#[pyfunction]
#[pyo3(signature = (model, law, t, n_samples, seed, cap = DEFAULT_CAP))]
fn sample_mu_t(
    py: Python<'_>,
    model: &PyWeightModel,
    law: &PyInitialLaw,
    t: f64,
    n_samples: usize,
    seed: u64,
    cap: usize,
) -> PyResult<Vec<f64>> {
    py.allow_threads(|| brw::sample_mu_t(&model.0, &law.0, t, n_samples, &SeedTree::new(seed), cap))
        .map(|s| s.into_values())
        .map_err(py_err)
}

/// `(estimate, se, expected)` for `E Σ_{I_t} e^{-θS}`.
#[pyfunction]
#[pyo3(signature = (model, t, theta, replicates, seed, cap = DEFAULT_CAP))]
fn many_to_one(
    py: Python<'_>,
    model: &PyWeightModel,
    t: f64,
    theta: f64,
    replicates: usize,
    seed: u64,
    cap: usize,
) -> PyResult<(f64, f64, f64)> {
    let profile = spectral::SpectralProfile::new(SpectralSource::exact(&model.0).map_err(py_err)?);
    let r = py
        .allow_threads(|| brw::many_to_one_check(&model.0, &profile, t, theta, replicates, &SeedTree::new(seed), cap))
        .map_err(py_err)?;
    Ok((r.estimate.value, r.estimate.se, r.expected))
}

/// Scaling study; returns per-time diagnostics and the terminal rescaled sample.
#[pyfunction]
#[pyo3(signature = (model, law, t_grid, n_samples, seed, bootstrap = 0, cap = DEFAULT_CAP))]
#[allow(clippy::too_many_arguments)]
fn scaling_study<'py>(
    py: Python<'py>,
    model: &PyWeightModel,
    law: &PyInitialLaw,
    t_grid: Vec<f64>,
    n_samples: usize,
    seed: u64,
    bootstrap: usize,
    cap: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let profile = PyProfile::new(model)?;
    let opts = StudyOptions { t_grid, n_samples, cap, bootstrap, ..Default::default() };
    let res = py
        .allow_threads(|| solver::scaling_study(&model.0, &law.0, &profile.0, &opts, &SeedTree::new(seed)))
        .map_err(py_err)?;
    let out = PyDict::new_bound(py);
    out.set_item("t", res.rows.iter().map(|r| r.t).collect::<Vec<_>>())?;
    out.set_item("ks_prev", res.rows.iter().map(|r| r.ks_prev).collect::<Vec<_>>())?;
    out.set_item("iqr", res.rows.iter().map(|r| r.iqr).collect::<Vec<_>>())?;
    out.set_item("median_abs", res.rows.iter().map(|r| r.median_abs).collect::<Vec<_>>())?;
    out.set_item("converged", res.verdict.converged)?;
    out.set_item("final_ks", res.verdict.final_ks)?;
    out.set_item("p", res.regime.p)?;
    out.set_item("r", res.regime.r)?;
    out.set_item("terminal", res.scaled.last().map(|s| s.values().to_vec()))?;
    Ok(out)
}

/// One smoothing step of a pool.
#[pyfunction]
fn smoothing_step(pool: Vec<f64>, model: &PyWeightModel, f_theta: f64, seed: u64) -> PyResult<Vec<f64>> {
    let pool = FixedPointPool::new(pool).map_err(py_err)?;
    Ok(fixed_point::smoothing_step(&pool, &model.0, f_theta, &SeedTree::new(seed)).samples().to_vec())
}

/// `(KS(pool, T(pool)), split-half noise floor)`.
#[pyfunction]
fn fixed_point_residual(pool: Vec<f64>, model: &PyWeightModel, f_theta: f64, seed: u64) -> PyResult<(f64, f64)> {
    let pool = FixedPointPool::new(pool).map_err(py_err)?;
    let r = fixed_point::fixed_point_residual(&pool, &model.0, f_theta, &SeedTree::new(seed)).map_err(py_err)?;
    Ok((r.ks, r.noise_floor))
}

/// `(statistic, critical_1pct, rejected)`.
#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, bool)> {
    let r = stats::ks_two_sample(&a, &b).map_err(py_err)?;
    Ok((r.statistic, r.critical_1pct, r.rejected))
}

/// Number of violations of `E|ΣX|^γ <= 2 ΣE|X|^γ` over random instances.
#[pyfunction]
fn check_moment_subadditivity(gamma: f64, trials: usize, seed: u64) -> PyResult<usize> {
    let r = stats::check_moment_subadditivity(gamma, trials, &mut SeedTree::new(seed).stream(0)).map_err(py_err)?;
    Ok(r.violations)
}

#[pymodule]
pub fn kinetic_brw_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWeightModel>()?;
    m.add_class::<PyInitialLaw>()?;
    m.add_class::<PyProfile>()?;
    m.add_function(wrap_pyfunction!(sample_mu_t, m)?)?;
    m.add_function(wrap_pyfunction!(many_to_one, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_study, m)?)?;
    m.add_function(wrap_pyfunction!(smoothing_step, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_point_residual, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(check_moment_subadditivity, m)?)?;
    Ok(())
}
