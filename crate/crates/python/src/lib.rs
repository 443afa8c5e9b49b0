//! Python module `reachcert`: noise radius, puck dynamics and certification
//! of saved posteriors and policies.

use std::path::Path;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use reachcert_core::certify::{run as certify_run, CertifyParams};
use reachcert_core::env::{true_step as puck_step, Layout, PuckParams, BUILTIN_LAYOUTS};
use reachcert_core::grid::GridSpec;
use reachcert_core::interval;
use reachcert_core::policy::StoredPolicy;
use reachcert_core::posterior::Posterior;
use reachcert_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        Error::InferenceFailure(m) => PyRuntimeError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: serde::de::DeserializeOwned + Default>(json: Option<&str>, what: &str) -> PyResult<T> {
    match json {
        None => Ok(T::default()),
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("invalid {what}: {e}"))),
    }
}

/// Truncation radius for Gaussian noise of standard deviation `sigma` at
/// confidence `eta`.
#[pyfunction]
fn epsilon_for(eta: f64, sigma: f64) -> PyResult<f64> {
    interval::epsilon_for(eta, sigma).map_err(to_py)
}

/// One noise-free puck step.
#[pyfunction]
#[pyo3(signature = (state, action, h = 0.35, m = 5.0, eta_f = 1.0))]
fn true_step(state: Vec<f64>, action: Vec<f64>, h: f64, m: f64, eta_f: f64) -> PyResult<Vec<f64>> {
    let p = PuckParams::new(h, m, eta_f, action.len()).map_err(to_py)?;
    puck_step(&p, &state, &action).map_err(to_py)
}

#[pyfunction]
fn layouts() -> Vec<&'static str> {
    BUILTIN_LAYOUTS.to_vec()
}

/// Certifies a saved policy under a saved posterior. `grid` and `params` are
/// JSON documents with the same keys as the CLI configuration sections.
/// Returns the metrics and the `K_0` table.
#[pyfunction]
#[pyo3(signature = (posterior, policy, layout = "v1", horizon = 10, sigma = 0.01, grid = None, params = None))]
#[allow(clippy::too_many_arguments)]
fn certify<'py>(
    py: Python<'py>,
    posterior: &str,
    policy: &str,
    layout: &str,
    horizon: usize,
    sigma: f64,
    grid: Option<&str>,
    params: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let grid_spec: GridSpec = parse(grid, "grid")?;
    let params: CertifyParams = parse(params, "params")?;
    let layout = if layout.ends_with(".json") { Layout::load(Path::new(layout)) } else { Layout::builtin(layout) }
        .map_err(to_py)?;
    let spec = layout.spec(horizon, sigma, params.eta).map_err(to_py)?;
    let post = Posterior::load(Path::new(posterior)).map_err(to_py)?;
    let pol = StoredPolicy::load(Path::new(policy)).map_err(to_py)?;
    let g = grid_spec.build(&spec, post.arch().output_dim()).map_err(to_py)?;
    let res = certify_run(&post, &pol, &spec, &g, &params).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("avg_lower_bound", res.metrics.avg_lower_bound)?;
    out.set_item("coverage", res.metrics.coverage)?;
    out.set_item("n_safe", res.metrics.n_safe)?;
    out.set_item("k0", res.k0().values().to_vec())?;
    Ok(out)
}

#[pymodule]
pub fn reachcert(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(epsilon_for, m)?)?;
    m.add_function(wrap_pyfunction!(true_step, m)?)?;
    m.add_function(wrap_pyfunction!(layouts, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    Ok(())
}
