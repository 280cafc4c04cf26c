//! Python bindings: field construction and norms, forward simulation,
//! adjoint gradients, optimization and the verification batteries.
//!
//! Run configurations use the same JSON schema as the `sgflow` command-line
//! tool; results come back as plain dicts/strings so the module stays free of
//! numpy requirements.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use sgflow_core::config::parse_config_str;
use sgflow_core::error::{OptimError, SolveError};
use sgflow_core::optimizer::optimize;
use sgflow_core::sensitivity::evaluate_j;
use sgflow_core::state::{energy, simulate};
use sgflow_core::verify::{run_suite, Suite};
use sgflow_core::{norms, SpectralField};

fn value_err(msg: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(msg.to_string())
}

fn solve_err(e: SolveError) -> PyErr {
    match e {
        SolveError::Config(msg) => PyValueError::new_err(msg),
        blow @ SolveError::BlowUp { .. } => PyRuntimeError::new_err(blow.to_string()),
    }
}

/// A divergence-free velocity field over the eigenbasis of the square.
#[pyclass(name = "Field")]
struct PyField {
    k_trunc: usize,
    alpha: f64,
    field: SpectralField,
}

#[pymethods]
impl PyField {
    /// Field from a list of (k, m, coeff) triples.
    #[new]
    #[pyo3(signature = (k_trunc, modes, alpha = 0.5))]
    fn new(k_trunc: usize, modes: Vec<(usize, usize, f64)>, alpha: f64) -> PyResult<Self> {
        if k_trunc < 1 {
            return Err(value_err("k_trunc must be at least 1"));
        }
        if !(alpha >= 0.0) {
            return Err(value_err("alpha must be nonnegative"));
        }
        let mut field = SpectralField::zeros(k_trunc);
        for (k, m, c) in modes {
            if k < 1 || k > k_trunc || m < 1 || m > k_trunc {
                return Err(value_err(format!(
                    "mode ({k},{m}) outside 1..={k_trunc}"
                )));
            }
            field.coeff_mut()[(k - 1) * k_trunc + (m - 1)] = c;
        }
        Ok(PyField {
            k_trunc,
            alpha,
            field,
        })
    }

    /// All norms used by the a priori estimates.
    fn norms<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let basis = sgflow_core::build_basis(self.k_trunc, self.alpha).map_err(value_err)?;
        let n = norms(&basis, &self.field);
        let out = PyDict::new(py);
        out.set_item("l2", n.l2)?;
        out.set_item("dnorm", n.dnorm)?;
        out.set_item("h2proxy", n.h2proxy)?;
        out.set_item("h3proxy", n.h3proxy)?;
        out.set_item("curl_sigma_norm", n.curl_sigma_norm)?;
        Ok(out)
    }

    /// Coefficients as a list of (k, m, coeff) triples, zeros included.
    fn coeffs(&self) -> Vec<(usize, usize, f64)> {
        self.field
            .coeff()
            .iter()
            .enumerate()
            .map(|(idx, c)| (idx / self.k_trunc + 1, idx % self.k_trunc + 1, *c))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Field(k_trunc={}, alpha={}, l2={})",
            self.k_trunc,
            self.alpha,
            self.field.norm_l2()
        )
    }
}

fn load(config_json: &str) -> PyResult<sgflow_core::config::ProblemConfig> {
    parse_config_str(config_json).map_err(value_err)
}

/// Integrate the state equation; returns energies and the final field.
#[pyfunction]
fn simulate_config<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config_json)?;
    let tables = cfg.tables().map_err(solve_err)?;
    let scfg = cfg.solver_config();
    let traj = simulate(&tables, &scfg, &cfg.initial_field(), &cfg.control()).map_err(solve_err)?;
    let out = PyDict::new(py);
    out.set_item("n_steps", traj.n_steps())?;
    out.set_item("initial_energy", energy(&tables, traj.snapshot(0)))?;
    out.set_item("final_energy", energy(&tables, traj.last()))?;
    let coeffs = PyList::empty(py);
    for (idx, c) in traj.last().coeff().iter().enumerate() {
        coeffs.append((idx / cfg.k_trunc + 1, idx % cfg.k_trunc + 1, *c))?;
    }
    out.set_item("final_coeffs", coeffs)?;
    Ok(out)
}

/// Tracking-functional value for the configured control.
#[pyfunction]
fn evaluate_objective(config_json: &str) -> PyResult<f64> {
    let cfg = load(config_json)?;
    let tables = cfg.tables().map_err(solve_err)?;
    let y_d = cfg.target(&tables).map_err(solve_err)?;
    let (j, _) = evaluate_j(
        &tables,
        &cfg.solver_config(),
        &cfg.initial_field(),
        &cfg.control(),
        &y_d,
        cfg.lambda,
    )
    .map_err(solve_err)?;
    Ok(j)
}

/// Adjoint gradient norm in the configured control space.
#[pyfunction]
fn gradient_norm(config_json: &str) -> PyResult<f64> {
    let cfg = load(config_json)?;
    let tables = cfg.tables().map_err(solve_err)?;
    let y_d = cfg.target(&tables).map_err(solve_err)?;
    let (g, _) = sgflow_core::optimizer::gradient(
        &tables,
        &cfg.solver_config(),
        &cfg.initial_field(),
        &cfg.control(),
        &y_d,
        cfg.lambda,
    )
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(g.norm_l2q())
}

/// Projected-gradient optimization; returns the report as a dict.
#[pyfunction]
fn optimize_config<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config_json)?;
    let tables = cfg.tables().map_err(solve_err)?;
    let scfg = cfg.solver_config();
    let y_d = cfg.target(&tables).map_err(solve_err)?;
    let n_intervals = cfg.control.as_ref().map(|c| c.n_intervals).unwrap_or(8);
    let set = cfg
        .admissible_set(n_intervals)
        .map_err(|e| value_err(e.to_string()))?;
    let report = optimize(
        &tables,
        &scfg,
        &cfg.initial_field(),
        &y_d,
        &set,
        cfg.lambda,
        n_intervals,
        &cfg.optim_options(),
    )
    .map_err(|e| match e {
        OptimError::Setup(msg) => PyValueError::new_err(msg),
        other => PyRuntimeError::new_err(other.to_string()),
    })?;
    let out = PyDict::new(py);
    out.set_item("status", format!("{:?}", report.status))?;
    out.set_item("iterations", report.iterates.len() - 1)?;
    let js = PyList::empty(py);
    let vis = PyList::empty(py);
    for it in &report.iterates {
        js.append(it.j)?;
        vis.append(it.vi_residual)?;
    }
    out.set_item("j", js)?;
    out.set_item("vi_residual", vis)?;
    out.set_item("final_control_norm", report.final_u.norm_l2q())?;
    Ok(out)
}

/// Run a verification battery; returns the JSON report text.
#[pyfunction]
#[pyo3(signature = (suite = "all", seed = 42))]
fn verify(suite: &str, seed: u64) -> PyResult<String> {
    let suite = Suite::parse(suite)
        .ok_or_else(|| value_err("suite must be all|forms|state|sensitivity|optimizer"))?;
    Ok(run_suite(suite, seed).to_json())
}

#[pymodule]
fn sgflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(simulate_config, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_objective, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_norm, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_config, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
