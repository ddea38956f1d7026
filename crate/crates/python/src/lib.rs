//! Python bindings: configurations, flow runs, blow-up analysis, run
//! directories and the chart-level oracle suites.
//!
//! Structured results (manifests, reports, analyses) cross the boundary as
//! plain dicts.

use kf::flow::{self, FlowRun, Scenario};
use kf::harness::{self, RunConfig};
use kf::singularity::AnalysisOptions;
use kf::suite;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyKeyError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use std::path::PathBuf;

create_exception!(kahler_flow, ConfigError, PyValueError, "Invalid run configuration.");
create_exception!(kahler_flow, FlowError, PyException, "The flow solver rejected its input or failed.");
create_exception!(kahler_flow, HarnessError, PyException, "Run-directory or I/O failure.");

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn flow_err(e: flow::FlowError) -> PyErr {
    FlowError::new_err(e.to_string())
}

fn harness_err(e: harness::HarnessError) -> PyErr {
    match e {
        harness::HarnessError::Config(c) => ConfigError::new_err(c.to_string()),
        other => HarnessError::new_err(other.to_string()),
    }
}

/// A validated run configuration.
#[pyclass(name = "RunConfig", module = "kahler_flow", skip_from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    /// Parses TOML text.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        harness::parse_config(text)
            .map(|inner| Self { inner })
            .map_err(|e| ConfigError::new_err(e.to_string()))
    }

    /// Reads and parses a TOML file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        harness::load_config(&path).map(|inner| Self { inner }).map_err(harness_err)
    }

    #[getter]
    fn scenario(&self) -> &'static str {
        self.inner.scenario_name()
    }

    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.inner.output_dir.clone()
    }

    #[setter]
    fn set_output_dir(&mut self, dir: PathBuf) {
        self.inner.output_dir = dir;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    /// The full configuration, defaults filled in.
    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(scenario={:?}, output_dir={:?}, seed={})",
            self.inner.scenario_name(),
            self.inner.output_dir.display().to_string(),
            self.inner.seed
        )
    }
}

/// A finished flow run held in memory.
#[pyclass(name = "FlowRun", module = "kahler_flow", frozen)]
struct PyFlowRun {
    inner: FlowRun,
}

const STEP_COLUMNS: &[&str] = &[
    "t",
    "dt",
    "lower",
    "upper",
    "min_f",
    "max_f",
    "max_grad_sq",
    "heat_residual",
    "rm_norm",
    "a_norm_sq",
    "vertical_sectional",
    "horizontal_sectional_max",
    "fiber_area",
];

#[pymethods]
impl PyFlowRun {
    #[getter]
    fn scenario(&self) -> &'static str {
        match self.inner.scenario {
            Scenario::Product(_) => "product",
            Scenario::Hirzebruch(_) => "hirzebruch",
        }
    }

    #[getter]
    fn t_predicted(&self) -> f64 {
        self.inner.t_predicted
    }

    #[getter]
    fn t_observed(&self) -> Option<f64> {
        self.inner.t_observed
    }

    #[getter]
    fn stop_reason(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.stop_reason)
    }

    #[getter]
    fn wall_seconds(&self) -> f64 {
        self.inner.wall_seconds
    }

    fn __len__(&self) -> usize {
        self.inner.steps.len()
    }

    /// One per-step series by column name, e.g. `"t"` or `"rm_norm"`.
    fn series(&self, column: &str) -> PyResult<Vec<f64>> {
        let get: fn(&flow::StepRecord) -> f64 = match column {
            "t" => |s| s.t,
            "dt" => |s| s.dt,
            "lower" => |s| s.lower,
            "upper" => |s| s.upper,
            "min_f" => |s| s.min_f,
            "max_f" => |s| s.max_f,
            "max_grad_sq" => |s| s.max_grad_sq,
            "heat_residual" => |s| s.heat_residual,
            "rm_norm" => |s| s.at_max.rm_norm,
            "a_norm_sq" => |s| s.at_max.a_norm_sq,
            "vertical_sectional" => |s| s.at_max.vertical_sectional,
            "horizontal_sectional_max" => |s| s.horizontal_sectional_max,
            "fiber_area" => |s| s.fiber_area,
            other => {
                return Err(PyKeyError::new_err(format!(
                    "unknown column `{other}`; expected one of {STEP_COLUMNS:?}"
                )))
            }
        };
        Ok(self.inner.steps.iter().map(get).collect())
    }

    /// Every per-step record as a list of dicts.
    fn steps(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.steps)
    }

    /// Type classification, blow-up picks, rescaled series and splitting
    /// report. `options` overrides fields of the default analysis options.
    #[pyo3(signature = (options = None))]
    fn analyze(&self, py: Python<'_>, options: Option<&str>) -> PyResult<Py<PyAny>> {
        let opts: AnalysisOptions = match options {
            Some(json) => serde_json::from_str(json).map_err(|e| ConfigError::new_err(e.to_string()))?,
            None => AnalysisOptions::default(),
        };
        opts.validate().map_err(|e| ConfigError::new_err(e.to_string()))?;
        let analysis = py.detach(|| harness::analyze(&self.inner, &opts));
        to_py(py, &analysis)
    }
}

/// Runs the flow described by `config` without writing any files.
#[pyfunction]
fn run(py: Python<'_>, config: &PyRunConfig) -> PyResult<PyFlowRun> {
    let cfg = &config.inner;
    py.detach(|| flow::run_scenario(&cfg.scenario, &cfg.solver, &cfg.recording))
        .map(|inner| PyFlowRun { inner })
        .map_err(flow_err)
}

/// Runs `config`, writes its run directory and returns the manifest.
#[pyfunction]
fn execute(py: Python<'_>, config: &PyRunConfig) -> PyResult<Py<PyAny>> {
    let m = py.detach(|| harness::execute(&config.inner)).map_err(harness_err)?;
    to_py(py, &m)
}

/// Re-evaluates the acceptance checks of a stored run directory.
#[pyfunction]
fn check_run_dir(py: Python<'_>, run_dir: PathBuf) -> PyResult<Py<PyAny>> {
    let r = py.detach(|| harness::check_run_dir(&run_dir)).map_err(harness_err)?;
    to_py(py, &r)
}

/// Predicted singular time and limiting class of a Hirzebruch-type start.
#[pyfunction]
#[pyo3(signature = (n = 1, k = 1, a0 = 1.0, b0 = 2.0, r_h = None))]
fn predict_max_time(py: Python<'_>, n: usize, k: u32, a0: f64, b0: f64, r_h: Option<f64>) -> PyResult<Py<PyAny>> {
    let params = flow::HirzebruchParams {
        n,
        k,
        a0,
        b0,
        r_h: r_h.unwrap_or_else(|| flow::fubini_study_scalar(n)),
        ..flow::HirzebruchParams::default()
    };
    params.validate().map_err(flow_err)?;
    let (t, limit) = flow::predict_max_time(&params.cohomology()).map_err(flow_err)?;
    let out = serde_json::json!({ "t_max": t, "limit_class": limit });
    to_py(py, &out)
}

/// `(f(t), c(t), K_V(t))` for the product flow.
#[pyfunction]
#[pyo3(signature = (t, f0, c0, n = 1, r_h = None))]
fn product_closed_form(t: f64, f0: f64, c0: f64, n: usize, r_h: Option<f64>) -> PyResult<(f64, f64, f64)> {
    let p = flow::ProductParams {
        n,
        f0,
        c0,
        r_h: r_h.unwrap_or_else(|| flow::fubini_study_scalar(n)),
    };
    p.validate().map_err(flow_err)?;
    flow::product_closed_form(&p, t).map_err(flow_err)
}

/// Curvature diagnostics from the profile jet `(f, f', f'', f''')` in `ρ`.
#[pyfunction]
#[pyo3(signature = (jet, n = 1, k = 1.0, r_h = None))]
fn reduced_diagnostics(py: Python<'_>, jet: [f64; 4], n: usize, k: f64, r_h: Option<f64>) -> PyResult<Py<PyAny>> {
    if n == 0 || k.is_nan() || k <= 0.0 || jet[1].is_nan() || jet[1] <= 0.0 {
        return Err(PyValueError::new_err("need n >= 1, k > 0 and f' > 0"));
    }
    let d = flow::reduced_diagnostics(n, k, r_h.unwrap_or_else(|| flow::fubini_study_scalar(n)), jet);
    to_py(py, &d)
}

/// Block Ricci, compatibility, totally-geodesic and mixed-curvature residuals.
#[pyfunction]
#[pyo3(signature = (count = 20, seed = 0))]
fn block_identity_suite(py: Python<'_>, count: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let r = py
        .detach(|| suite::block_identity_suite(count, seed))
        .map_err(|e| FlowError::new_err(e.to_string()))?;
    to_py(py, &r)
}

/// Worst relative error of the `‖A‖² = 2n‖∇ log f‖²` identity.
#[pyfunction]
#[pyo3(signature = (count = 100, seed = 0))]
fn a_identity_suite(py: Python<'_>, count: usize, seed: u64) -> PyResult<f64> {
    py.detach(|| suite::a_identity_suite(count, seed))
        .map_err(|e| FlowError::new_err(e.to_string()))
}

/// Einstein residuals of the Fubini–Study base and a conformal perturbation.
#[pyfunction]
#[pyo3(signature = (n = 2, eps = 0.3, count = 20, seed = 0))]
fn einstein_suite(py: Python<'_>, n: usize, eps: f64, count: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let r = py
        .detach(|| suite::einstein_suite(n, eps, count, seed))
        .map_err(|e| FlowError::new_err(e.to_string()))?;
    to_py(py, &r)
}

#[pymodule]
fn kahler_flow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("FlowError", py.get_type::<FlowError>())?;
    m.add("HarnessError", py.get_type::<HarnessError>())?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyFlowRun>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(execute, m)?)?;
    m.add_function(wrap_pyfunction!(check_run_dir, m)?)?;
    m.add_function(wrap_pyfunction!(predict_max_time, m)?)?;
    m.add_function(wrap_pyfunction!(product_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(reduced_diagnostics, m)?)?;
    m.add_function(wrap_pyfunction!(block_identity_suite, m)?)?;
    m.add_function(wrap_pyfunction!(a_identity_suite, m)?)?;
    m.add_function(wrap_pyfunction!(einstein_suite, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
