//! Python surface: pointwise kernels plus the config-driven solve, path and
//! certify workflows. Configs are the same JSON documents the CLI takes;
//! results come back as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use wfr::certify::certify as certify_path;
use wfr::config::RunConfig;
use wfr::energy::{self, CostPoint};
use wfr::error::WfrError;
use wfr::solver;

fn to_py_err(e: WfrError) -> PyErr {
    match e {
        WfrError::Config(_) | WfrError::Params(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// WFR infinitesimal cost f_delta(a, b, c).
#[pyfunction]
fn f_delta(a: f64, b: f64, c: f64, delta: f64) -> PyResult<f64> {
    if delta <= 0.0 {
        return Err(PyValueError::new_err("delta must be positive"));
    }
    Ok(energy::f_delta(CostPoint::new(a, b, c), delta))
}

/// Euclidean projection onto the paraboloid B_delta.
#[pyfunction]
fn project_paraboloid(a: f64, b: f64, c: f64, delta: f64) -> PyResult<(f64, f64, f64)> {
    if delta <= 0.0 {
        return Err(PyValueError::new_err("delta must be positive"));
    }
    let p = energy::project_paraboloid(CostPoint::new(a, b, c), delta);
    Ok((p.a, p.b, p.c))
}

/// Proximal operator of tau * f_delta.
#[pyfunction]
fn prox_f_delta(a: f64, b: f64, c: f64, tau: f64, delta: f64) -> PyResult<(f64, f64, f64)> {
    if delta <= 0.0 || tau <= 0.0 {
        return Err(PyValueError::new_err("tau and delta must be positive"));
    }
    let p = energy::prox_f_delta(CostPoint::new(a, b, c), tau, delta);
    Ok((p.a, p.b, p.c))
}

/// Solves the problem described by a JSON config string. Returns a dict
/// with energy, distance, iteration data, residuals, and the density frames
/// at time midpoints.
#[pyfunction]
fn solve(py: Python<'_>, config_json: &str) -> PyResult<Py<PyDict>> {
    let config = RunConfig::from_json(config_json).map_err(to_py_err)?;
    let (problem, params) = config.build().map_err(to_py_err)?;
    let solution = solver::solve(&problem, &params).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("energy", solution.energy)?;
    out.set_item("distance", solution.distance)?;
    out.set_item("iterations", solution.iterations)?;
    out.set_item("converged", solution.converged)?;
    out.set_item("dr_residual", solution.dr_residual)?;
    out.set_item("ce_residual", solution.ce_residual)?;
    out.set_item("constraint_residual", solution.constraint_residual)?;
    let rho: Vec<Vec<f64>> = (0..problem.tgrid.n_steps)
        .map(|k| solution.path.centered.rho.row(k).iter().map(|r| r.max(0.0)).collect())
        .collect();
    out.set_item("rho_midpoints", PyList::new(py, rho)?)?;
    let phi: Vec<Vec<f64>> =
        (0..problem.tgrid.n_steps).map(|k| solution.phi.row(k).to_vec()).collect();
    out.set_item("phi", PyList::new(py, phi)?)?;
    Ok(out.into())
}

/// Builds a closed-form path (teleport, linear_fr, scaling,
/// balanced_quantile, scaled_balanced) for a config and returns its energy.
#[pyfunction]
fn path_energy(config_json: &str, constructor: &str) -> PyResult<f64> {
    let config = RunConfig::from_json(config_json).map_err(to_py_err)?;
    let path = config.build_path(constructor).map_err(to_py_err)?;
    Ok(path.energy())
}

/// Certifies a constructor path against a potential given as a nested list
/// sampled at time nodes x cells. Returns the residual report as a dict.
#[pyfunction]
fn certify(
    py: Python<'_>,
    config_json: &str,
    constructor: &str,
    phi: Vec<Vec<f64>>,
    tol: f64,
) -> PyResult<Py<PyDict>> {
    let config = RunConfig::from_json(config_json).map_err(to_py_err)?;
    let path = config.build_path(constructor).map_err(to_py_err)?;
    let (grid, tgrid) = config.grids().map_err(to_py_err)?;
    if phi.len() != tgrid.n_steps + 1 || phi.iter().any(|row| row.len() != grid.n_cells) {
        return Err(PyValueError::new_err(format!(
            "phi must be {} x {}",
            tgrid.n_steps + 1,
            grid.n_cells
        )));
    }
    let phi_arr = ndarray::Array2::from_shape_fn((tgrid.n_steps + 1, grid.n_cells), |(k, j)| {
        phi[k][j]
    });
    let spec = config.constraint.build(&grid, &tgrid).map_err(to_py_err)?;
    let report = certify_path(&path, &phi_arr, &spec, config.delta, tol);
    let out = PyDict::new(py);
    out.set_item("certified", report.certified)?;
    out.set_item("r_hj", report.r_hj)?;
    out.set_item("r_membership", report.r_membership)?;
    out.set_item("r_momentum", report.r_momentum)?;
    out.set_item("r_source", report.r_source)?;
    out.set_item("tol", report.tol)?;
    Ok(out.into())
}

pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(f_delta, m)?)?;
    m.add_function(wrap_pyfunction!(project_paraboloid, m)?)?;
    m.add_function(wrap_pyfunction!(prox_f_delta, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(path_energy, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    Ok(())
}
