//! Python bindings: cases, solutions and contingency analysis.

use bipf::cases;
use bipf::contingency::{apply_outage, run_contingency, Outage};
use bipf::formulation::{build_registry, ResidualSystem};
use bipf::io::{parse_case, parse_case_unvalidated, solution_records, write_case, write_contingency, write_results};
use bipf::io::{CaseError, OutputFormat};
use bipf::netmodel::{validate_case, NetworkCase, Terminal};
use bipf::solver::{flat_start, solve as solve_case, SolverError, SolverOptions};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(bipf_py, CaseFormatError, PyException);
create_exception!(bipf_py, ValidationError, PyException);
create_exception!(bipf_py, ConvergenceError, PyException);

fn case_err(e: CaseError) -> PyErr {
    match e {
        CaseError::Validation(_) => ValidationError::new_err(e.to_string()),
        _ => CaseFormatError::new_err(e.to_string()),
    }
}

fn solver_err(e: SolverError) -> PyErr {
    match e {
        SolverError::Validation(_) | SolverError::Formulation(_) => ValidationError::new_err(e.to_string()),
        _ => ConvergenceError::new_err(e.to_string()),
    }
}

fn format_of(name: &str) -> PyResult<OutputFormat> {
    name.parse().map_err(PyValueError::new_err)
}

fn outage_of(spec: &str) -> PyResult<Outage> {
    spec.parse().map_err(|e: bipf::contingency::ContingencyError| PyValueError::new_err(e.to_string()))
}

/// A network case.
#[pyclass(module = "bipf_py", frozen)]
struct Case {
    inner: NetworkCase,
}

#[pymethods]
impl Case {
    /// Parses and validates a JSON case document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        parse_case(text.as_bytes()).map(|inner| Case { inner }).map_err(case_err)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        bipf::io::read_case(&path).map(|inner| Case { inner }).map_err(case_err)
    }

    /// One of the bundled cases: `case1`..`case5`, `acdroopA`..`acdroopC`,
    /// `symmetric` or `two_bus`.
    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        let inner = match name {
            "symmetric" => cases::symmetric_bipole(),
            "two_bus" => cases::two_bus_ac(),
            _ => {
                if let Some(n) = name.strip_prefix("case").and_then(|n| n.parse().ok()).filter(|n| (1..=5).contains(n))
                {
                    cases::control_case(n)
                } else if let Some(v @ ('A' | 'B' | 'C')) =
                    name.strip_prefix("acdroop").filter(|v| v.len() == 1).and_then(|v| v.chars().next())
                {
                    cases::ac_droop_case(v)
                } else {
                    return Err(PyValueError::new_err(format!("no bundled case '{name}'")));
                }
            }
        };
        Ok(Case { inner })
    }

    /// Chain of AC islands coupled through a bipolar DC grid.
    #[staticmethod]
    fn synthetic(islands: usize, dc_buses: usize) -> Self {
        Case { inner: cases::synthetic_chain(islands, dc_buses) }
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    fn to_json(&self) -> String {
        write_case(&self.inner)
    }

    /// Validation messages; empty when the case is valid.
    fn validate(&self) -> Vec<String> {
        validate_case(&self.inner).errors.iter().map(|e| e.to_string()).collect()
    }

    /// Copy of the case with one element taken out of service.
    fn with_outage(&self, outage: &str) -> PyResult<Self> {
        let outage = outage_of(outage)?;
        apply_outage(&self.inner, &outage)
            .map(|inner| Case { inner })
            .map_err(|e| ValidationError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Case('{}', {} ac buses, {} dc buses, {} converter poles)",
            self.inner.name,
            self.inner.ac_buses.len(),
            self.inner.dc_buses.len(),
            self.inner.converters.len()
        )
    }
}

/// A converged power flow.
#[pyclass(module = "bipf_py", frozen)]
struct Solution {
    inner: bipf::solver::Solution,
}

#[pymethods]
impl Solution {
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn final_residual(&self) -> f64 {
        self.inner.final_residual
    }

    #[getter]
    fn residual_history(&self) -> Vec<f64> {
        self.inner.residual_history.clone()
    }

    /// `(kind, id, quantity, value)` rows of the results.
    fn records(&self) -> Vec<(String, String, String, f64)> {
        solution_records(&self.inner)
            .into_iter()
            .map(|r| (r.kind.to_string(), r.id, r.quantity.to_string(), r.value))
            .collect()
    }

    /// Voltage of a DC terminal (`pos`, `neg` or `neutral`), or None when it
    /// does not exist or is de-energized.
    fn dc_voltage(&self, bus: u32, terminal: &str) -> PyResult<Option<f64>> {
        let t: Terminal = terminal.parse().map_err(|_| PyValueError::new_err(format!("bad terminal '{terminal}'")))?;
        Ok(self.inner.flows.dc_voltage(bus, t))
    }

    fn ac_voltage(&self, bus: u32) -> Option<(f64, f64)> {
        self.inner.flows.ac_bus(bus).map(|b| (b.u_mag, b.theta))
    }

    /// `(P, Q)` withdrawn from the AC bus by a converter pole.
    fn converter_power(&self, id: &str) -> Option<(f64, f64)> {
        self.inner.flows.converter(id).map(|c| (c.p_ac, c.q_ac))
    }

    #[pyo3(signature = (format = "json"))]
    fn report(&self, format: &str) -> PyResult<String> {
        Ok(write_results(&self.inner, format_of(format)?))
    }
}

#[pyfunction]
#[pyo3(signature = (case, tol = 1e-8, max_iter = 50))]
fn solve(case: &Case, tol: f64, max_iter: usize) -> PyResult<Solution> {
    let opts = SolverOptions { tol_inf: tol, max_iter, ..SolverOptions::default() };
    solve_case(&case.inner, &opts, None).map(|inner| Solution { inner }).map_err(solver_err)
}

/// Solves the base case, applies the outage and returns the deviation report.
#[pyfunction]
#[pyo3(signature = (case, outage, format = "json"))]
fn contingency(case: &Case, outage: &str, format: &str) -> PyResult<String> {
    let outage = outage_of(outage)?;
    let opts = SolverOptions::default();
    let base = solve_case(&case.inner, &opts, None).map_err(solver_err)?;
    let report = run_contingency(&case.inner, &base, &outage, &opts).map_err(|e| match e {
        bipf::contingency::ContingencyError::Solver { source, .. } => solver_err(source),
        e => ValidationError::new_err(e.to_string()),
    })?;
    Ok(write_contingency(&report, format_of(format)?))
}

/// Largest relative deviation of the analytic Jacobian from central finite
/// differences at the flat start.
#[pyfunction]
#[pyo3(signature = (case, step = 1e-6))]
fn check_jacobian(case: &Case, step: f64) -> PyResult<f64> {
    let reg = build_registry(&case.inner).map_err(|e| ValidationError::new_err(e.to_string()))?;
    let x = flat_start(&case.inner, &reg);
    let sys = ResidualSystem::new(&case.inner, reg).map_err(|e| ValidationError::new_err(e.to_string()))?;
    let check = sys.check_jacobian(&x, step).map_err(|e| ValidationError::new_err(e.to_string()))?;
    Ok(check.max_rel_error)
}

/// Validation messages for a JSON document, without raising on topology
/// errors.
#[pyfunction]
fn validate_json(text: &str) -> PyResult<Vec<String>> {
    let case = parse_case_unvalidated(text.as_bytes()).map_err(case_err)?;
    Ok(validate_case(&case).errors.iter().map(|e| e.to_string()).collect())
}

#[pymodule]
fn bipf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Case>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(contingency, m)?)?;
    m.add_function(wrap_pyfunction!(check_jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(validate_json, m)?)?;
    m.add("CaseFormatError", m.py().get_type::<CaseFormatError>())?;
    m.add("ValidationError", m.py().get_type::<ValidationError>())?;
    m.add("ConvergenceError", m.py().get_type::<ConvergenceError>())?;
    Ok(())
}
