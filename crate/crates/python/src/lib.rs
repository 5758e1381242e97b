//! Python bindings. Structured results cross the boundary as plain Python
//! objects decoded from the library's JSON forms.

use std::collections::HashMap;

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use ramex::plan_polytope::ConstraintSystem;
use ramex::{Error, Tolerances};

create_exception!(pyramex, InputError, PyValueError, "Malformed or inconsistent input.");
create_exception!(pyramex, SolverError, PyRuntimeError, "A solver failed on valid input.");

fn raise(e: Error) -> PyErr {
    let message = format!("{}: {e}", e.kind());
    if e.is_input_error() {
        InputError::new_err(message)
    } else {
        SolverError::new_err(message)
    }
}

fn to_python<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn tolerances(overrides: Option<HashMap<String, f64>>) -> PyResult<Tolerances> {
    let mut tol = Tolerances::default();
    for (key, value) in overrides.unwrap_or_default() {
        tol.set(&key, value).map_err(InputError::new_err)?;
    }
    Ok(tol)
}

/// Goods, consumers, prices, wealth and utilities.
#[pyclass(module = "pyramex", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Economy(ramex::Economy);

#[pymethods]
impl Economy {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ramex::parse_economy(text.as_bytes()).map(Economy).map_err(raise)
    }

    #[pyo3(signature = (pretty = false))]
    fn to_json(&self, pretty: bool) -> String {
        ramex::emit_economy(&self.0, pretty)
    }

    #[getter]
    fn num_goods(&self) -> usize {
        self.0.num_goods()
    }

    #[getter]
    fn num_consumers(&self) -> usize {
        self.0.num_consumers()
    }

    /// Normalized demand plan.
    fn demand_plan(&self) -> PyResult<TransportPlan> {
        Ok(TransportPlan(self.0.demand_profile().map_err(raise)?.plan))
    }

    /// Demand plan, utility floors, scale and the induced measures.
    fn demand_profile<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let p = self.0.demand_profile().map_err(raise)?;
        let doc = serde_json::json!({
            "q_bar": p.plan,
            "floors": p.floors,
            "scale": p.scale,
            "sources": p.sources,
            "sinks": p.sinks,
        });
        to_python(py, &doc)
    }

    fn __repr__(&self) -> String {
        format!("Economy(goods={}, consumers={})", self.0.num_goods(), self.0.num_consumers())
    }
}

/// Weighted directed graph carrying the sources to the sinks.
#[pyclass(module = "pyramex", frozen, skip_from_py_object)]
#[derive(Clone)]
struct TransportPath(ramex::TransportPath);

#[pymethods]
impl TransportPath {
    #[staticmethod]
    #[pyo3(signature = (text, tol = None))]
    fn from_json(text: &str, tol: Option<HashMap<String, f64>>) -> PyResult<Self> {
        ramex::parse_graph(text.as_bytes(), &tolerances(tol)?).map(TransportPath).map_err(raise)
    }

    #[pyo3(signature = (pretty = false))]
    fn to_json(&self, pretty: bool) -> String {
        ramex::emit_graph(&self.0, pretty)
    }

    fn m_alpha_cost(&self, alpha: f64) -> f64 {
        self.0.m_alpha_cost(alpha)
    }

    fn euler_characteristic(&self) -> i64 {
        self.0.euler_characteristic()
    }

    /// Route per (source, sink) as a list of vertex ids, or `None`.
    fn routes(&self) -> PyResult<Vec<Vec<Option<Vec<String>>>>> {
        let routes = self.0.route_matrix().map_err(raise)?;
        let (k, l) = routes.shape();
        Ok((0..k)
            .map(|i| {
                (0..l)
                    .map(|j| {
                        routes
                            .get(i, j)
                            .map(|r| r.vertices.iter().map(|&v| self.0.vertices()[v].id.clone()).collect())
                    })
                    .collect()
            })
            .collect())
    }

    fn signature(&self) -> PyResult<String> {
        Ok(self.0.combinatorial_signature().map_err(raise)?.digest)
    }

    fn to_dot(&self) -> String {
        ramex::export_dot(&self.0)
    }

    fn __repr__(&self) -> String {
        format!(
            "TransportPath(vertices={}, edges={}, sources={}, sinks={})",
            self.0.vertices().len(),
            self.0.edges().len(),
            self.0.num_sources(),
            self.0.num_sinks()
        )
    }
}

/// Quantities shipped from each source to each sink.
#[pyclass(module = "pyramex", frozen, skip_from_py_object)]
#[derive(Clone)]
struct TransportPlan(ramex::TransportPlan);

#[pymethods]
impl TransportPlan {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        ramex::TransportPlan::from_rows(rows).map(TransportPlan).map_err(raise)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ramex::parse_plan(text.as_bytes()).map(TransportPlan).map_err(raise)
    }

    #[pyo3(signature = (pretty = false))]
    fn to_json(&self, pretty: bool) -> String {
        ramex::emit_plan(&self.0, pretty)
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.0.to_rows()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    fn __repr__(&self) -> String {
        format!("TransportPlan({:?})", self.0.to_rows())
    }
}

fn plan_or_demand(economy: &Economy, plan: Option<&TransportPlan>) -> PyResult<ramex::TransportPlan> {
    match plan {
        Some(p) => Ok(p.0.clone()),
        None => Ok(economy.0.demand_profile().map_err(raise)?.plan),
    }
}

/// Exchange value of `path`, with maximizer and diagnostics.
#[pyfunction]
#[pyo3(signature = (economy, path, plan = None, tol = None))]
fn exchange_value<'py>(
    py: Python<'py>,
    economy: &Economy,
    path: &TransportPath,
    plan: Option<&TransportPlan>,
    tol: Option<HashMap<String, f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let q = plan_or_demand(economy, plan)?;
    let tol = tolerances(tol)?;
    let result = py.detach(|| ramex::exchange_value(&economy.0, &path.0, &q, &tol)).map_err(raise)?;
    to_python(py, &result)
}

/// Zero and positivity criteria reports.
#[pyfunction]
#[pyo3(signature = (economy, path, plan = None, tol = None))]
fn criteria<'py>(
    py: Python<'py>,
    economy: &Economy,
    path: &TransportPath,
    plan: Option<&TransportPlan>,
    tol: Option<HashMap<String, f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let q = plan_or_demand(economy, plan)?;
    let reports = ramex::all_criteria(&economy.0, &path.0, &q, &tolerances(tol)?).map_err(raise)?;
    to_python(py, &reports)
}

/// Feasible-polytope dimension by rank and by formula. Without a plan only
/// the structure of `path` is used.
#[pyfunction]
#[pyo3(signature = (path, plan = None))]
fn dims(path: &TransportPath, plan: Option<&TransportPlan>) -> PyResult<(usize, i64)> {
    let tol = Tolerances::default();
    let cs = match plan {
        Some(q) => ramex::build_constraints(&path.0, &q.0, None, &tol),
        None => ConstraintSystem::structural(&path.0),
    }
    .map_err(raise)?;
    let formula = ramex::polytope_dimension_formula(&path.0).map_err(raise)?;
    Ok((ramex::polytope_dimension_rank(&cs, &tol), formula))
}

/// `M_alpha(path) - sigma * V(path)`.
#[pyfunction]
#[pyo3(signature = (economy, path, alpha, sigma, plan = None))]
fn h_cost(economy: &Economy, path: &TransportPath, alpha: f64, sigma: f64, plan: Option<&TransportPlan>) -> PyResult<f64> {
    let q = plan_or_demand(economy, plan)?;
    ramex::h_cost(&economy.0, &path.0, &q, alpha, sigma, &Tolerances::default()).map_err(raise)
}

/// Ranked candidates of the topology search and the arg-min.
#[pyfunction]
#[pyo3(signature = (economy, alpha, sigma, max_interior = 2))]
fn optimize_h<'py>(
    py: Python<'py>,
    economy: &Economy,
    alpha: f64,
    sigma: f64,
    max_interior: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let tol = Tolerances::default();
    let result = py.detach(|| ramex::optimize_h(&economy.0, alpha, sigma, max_interior, &tol)).map_err(raise)?;
    to_python(py, &result)
}

/// Graphviz rendering with `w=<weight>` edge labels.
#[pyfunction]
fn export_dot(path: &TransportPath) -> String {
    ramex::export_dot(&path.0)
}

#[pymodule]
pub fn pyramex(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Economy>()?;
    m.add_class::<TransportPath>()?;
    m.add_class::<TransportPlan>()?;
    m.add_function(wrap_pyfunction!(exchange_value, m)?)?;
    m.add_function(wrap_pyfunction!(criteria, m)?)?;
    m.add_function(wrap_pyfunction!(dims, m)?)?;
    m.add_function(wrap_pyfunction!(h_cost, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_h, m)?)?;
    m.add_function(wrap_pyfunction!(export_dot, m)?)?;
    m.add("InputError", m.py().get_type::<InputError>())?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    Ok(())
}
