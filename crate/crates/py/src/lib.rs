//! Python bindings: the pointwise interaction math, the local kernel table
//! and whole configured runs, for scripting experiments from Python.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pedflow::config::load_config;
use pedflow::interaction;
use pedflow::local;
use pedflow::vec2::Vec2;

fn err<T>(r: pedflow::Result<T>) -> PyResult<T> {
    r.map_err(|e| PyValueError::new_err(e.to_string()))
}

fn vec2(t: (f64, f64)) -> Vec2 {
    Vec2::new(t.0, t.1)
}

/// Model constants of the vision-based interaction rule.
#[pyclass(name = "VisionParams", from_py_object)]
#[derive(Clone)]
struct PyVisionParams {
    inner: interaction::VisionParams,
}

#[pymethods]
impl PyVisionParams {
    #[new]
    #[pyo3(signature = (speed_c=1.5, sigma_a=0.0, sigma_b=0.6, sigma_exp=1.5, tau0=1.0, phi0=1.0, radius_r=1.68, lambda_=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        speed_c: f64,
        sigma_a: f64,
        sigma_b: f64,
        sigma_exp: f64,
        tau0: f64,
        phi0: f64,
        radius_r: f64,
        lambda_: f64,
    ) -> PyResult<Self> {
        let inner = interaction::VisionParams {
            speed_c,
            sigma_a,
            sigma_b,
            sigma_exp,
            tau0,
            phi0,
            radius_r,
            lambda: lambda_,
        };
        err(inner.validate())?;
        Ok(PyVisionParams { inner })
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "VisionParams(speed_c={}, sigma_a={}, sigma_b={}, sigma_exp={}, tau0={}, phi0={}, radius_r={}, lambda_={})",
            p.speed_c, p.sigma_a, p.sigma_b, p.sigma_exp, p.tau0, p.phi0, p.radius_r, p.lambda
        )
    }
}

/// Bearing rate, time to interaction and miss distance of one pair.
#[pyfunction]
fn indicators(
    x: (f64, f64),
    u: (f64, f64),
    y: (f64, f64),
    v: (f64, f64),
    params: &PyVisionParams,
) -> PyResult<(f64, f64, f64)> {
    let ind = err(interaction::indicators(
        vec2(x),
        vec2(u),
        vec2(y),
        vec2(v),
        &params.inner,
    ))?;
    Ok((ind.dba, ind.tti, ind.md))
}

#[pyfunction]
fn goal_bearing_rate(
    x: (f64, f64),
    u: (f64, f64),
    goal: (f64, f64),
    params: &PyVisionParams,
) -> PyResult<f64> {
    err(interaction::goal_bearing_rate(
        vec2(x),
        vec2(u),
        vec2(goal),
        &params.inner,
    ))
}

#[pyfunction]
fn sigma(tau_abs: f64, params: &PyVisionParams) -> f64 {
    interaction::sigma(tau_abs, &params.inner)
}

#[pyfunction]
fn phi_kernel(dba_abs: f64, tau_abs: f64, params: &PyVisionParams) -> f64 {
    interaction::phi_kernel(dba_abs, tau_abs, &params.inner)
}

/// "plus", "minus" or "none".
#[pyfunction]
fn danger_class(dba: f64, tti: f64, md: f64, params: &PyVisionParams) -> &'static str {
    let ind = interaction::DangerIndicators { dba, tti, md };
    match interaction::danger_class(&ind, &params.inner) {
        interaction::DangerClass::Plus => "plus",
        interaction::DangerClass::Minus => "minus",
        interaction::DangerClass::None => "none",
    }
}

/// Returns (omega, branch) with branch one of "goal_dominates", "avoid_plus",
/// "avoid_minus", "tie".
#[pyfunction]
fn angular_velocity(phi_plus: f64, phi_minus: f64, alpha_g: f64) -> (f64, &'static str) {
    let d = interaction::angular_velocity(phi_plus, phi_minus, alpha_g);
    let branch = match d.branch {
        interaction::Branch::GoalDominates => "goal_dominates",
        interaction::Branch::AvoidPlus => "avoid_plus",
        interaction::Branch::AvoidMinus => "avoid_minus",
        interaction::Branch::Tie => "tie",
    };
    (d.omega, branch)
}

/// Precomputed local-approximation kernel over relative speed.
#[pyclass(name = "PsiTable")]
struct PyPsiTable {
    inner: local::PsiTable,
}

#[pymethods]
impl PyPsiTable {
    #[staticmethod]
    #[pyo3(signature = (params, h, n_speeds=256, n_cells=400))]
    fn build(params: &PyVisionParams, h: f64, n_speeds: usize, n_cells: usize) -> PyResult<Self> {
        let sp = err(local::scale_params(&params.inner))?;
        let spec = local::PsiBuildSpec::new(n_speeds, n_cells, h / params.inner.lambda);
        Ok(PyPsiTable {
            inner: local::build_psi_table(&sp, &spec),
        })
    }

    fn speeds(&self) -> Vec<f64> {
        self.inner.speeds.clone()
    }

    fn psi_plus(&self) -> Vec<f64> {
        self.inner.psi_plus.clone()
    }

    fn psi_minus(&self) -> Vec<f64> {
        self.inner.psi_minus.clone()
    }

    /// Linear interpolation at a relative speed; returns (psi_plus, psi_minus).
    fn lookup(&self, speed: f64) -> (f64, f64) {
        self.inner.lookup(speed)
    }

    fn cache_key(&self) -> String {
        self.inner.cache_key()
    }
}

/// Validate a config file; raises ValueError with the problem description.
#[pyfunction]
fn validate_config(path: PathBuf) -> PyResult<String> {
    let (_cfg, hash) = err(load_config(&path))?;
    Ok(hash)
}

/// Execute a configured run; returns a dict with the report fields.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir=None, seed=None))]
fn run_config(
    py: Python<'_>,
    config_path: PathBuf,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<Py<PyDict>> {
    let (mut cfg, hash) = err(load_config(&config_path))?;
    if let Some(seed) = seed {
        cfg.scenario.seed = seed;
    }
    let dir = out_dir.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let report = err(pedflow::run::run(&cfg, &hash, &dir))?;
    let d = PyDict::new(py);
    d.set_item("mode", report.mode)?;
    d.set_item("config_hash", report.config_hash)?;
    d.set_item("steps", report.steps)?;
    d.set_item("n_initial", report.n_initial)?;
    d.set_item("n_active_final", report.n_active_final)?;
    d.set_item("completed", report.completed)?;
    d.set_item("completion_time", report.completion_time)?;
    d.set_item("physics_seconds", report.physics_seconds)?;
    d.set_item("min_separation", report.min_separation)?;
    d.set_item("out_dir", dir)?;
    Ok(d.into())
}

#[pymodule]
fn pedflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVisionParams>()?;
    m.add_class::<PyPsiTable>()?;
    m.add_function(wrap_pyfunction!(indicators, m)?)?;
    m.add_function(wrap_pyfunction!(goal_bearing_rate, m)?)?;
    m.add_function(wrap_pyfunction!(sigma, m)?)?;
    m.add_function(wrap_pyfunction!(phi_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(danger_class, m)?)?;
    m.add_function(wrap_pyfunction!(angular_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
