//! Damped Newton root finding on the unified residual system.
//!
//! Converter current magnitudes only enter the current equation squared, so
//! a negative magnitude is a spurious root with the wrong loss. Trial points
//! are reflected back to `I ≥ 0` before they are evaluated.

use crate::formulation::{
    build_registry, EquationLabel, FormulationError, NetworkFlows, ResidualSystem, VarKey, VariableRegistry,
};
use crate::netmodel::{validate_case, NetworkCase, Terminal, ValidationReport};
use nalgebra::DVector;
use std::collections::BTreeSet;
use thiserror::Error;

/// Pivot magnitude below which the Jacobian is treated as singular.
const PIVOT_TOL: f64 = 1e-12;

/// Converter current used at flat start when the setpoints give none.
const I_MAG_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Convergence threshold on `‖F‖∞`.
    pub tol_inf: f64,
    pub max_iter: usize,
    /// Smallest damping factor tried by the line search.
    pub min_step: f64,
    /// Compare the analytic Jacobian with finite differences at the start point.
    pub fd_check: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol_inf: 1e-8, max_iter: 50, min_step: 1.0 / 1024.0, fd_check: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub case: NetworkCase,
    pub registry: VariableRegistry,
    pub state: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `‖F‖∞` at `state`.
    pub final_residual: f64,
    pub worst_equation: Option<EquationLabel>,
    /// `‖F‖∞` at the start point and after every accepted step.
    pub residual_history: Vec<f64>,
    /// Largest relative finite-difference error, when requested.
    pub jacobian_error: Option<f64>,
    pub flows: NetworkFlows,
}

impl Solution {
    pub fn value(&self, key: &VarKey) -> Option<f64> {
        self.registry.index_of(key).map(|i| self.state[i])
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("case is invalid:\n{0}")]
    Validation(ValidationReport),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error("singular Jacobian at iteration {iteration}: pivot of {variable} is {pivot:.3e}")]
    SingularJacobian { iteration: usize, variable: VarKey, pivot: f64 },
    #[error("no convergence after {} iterations, |F| = {:.3e} at {}", .0.iterations, .0.final_residual, worst(.0))]
    NoConvergence(Box<Solution>),
    #[error("line search stalled at iteration {}, |F| = {:.3e} at {}", .0.iterations, .0.final_residual, worst(.0))]
    LineSearchStall(Box<Solution>),
    #[error("start vector has {got} entries, the system has {expected}")]
    StartMismatch { expected: usize, got: usize },
    #[error("cases are incompatible: {0}")]
    IncompatibleCase(String),
}

fn worst(s: &Solution) -> String {
    s.worst_equation.as_ref().map_or_else(|| "-".to_string(), |e| e.to_string())
}

impl SolverError {
    /// Best iterate for solver failures that have one.
    pub fn best_iterate(&self) -> Option<&Solution> {
        match self {
            SolverError::NoConvergence(s) | SolverError::LineSearchStall(s) => Some(s),
            _ => None,
        }
    }
}

fn inf_norm(f: &DVector<f64>) -> (f64, Option<usize>) {
    let mut best = (0.0, None);
    for (i, v) in f.iter().enumerate() {
        let a = if v.is_finite() { v.abs() } else { f64::INFINITY };
        if best.1.is_none() || a > best.0 {
            best = (a, Some(i));
        }
    }
    best
}

/// Nominal initial state: unit voltages at zero angle, `±1`/`0` on the DC
/// terminals, converter powers at their setpoints.
pub fn flat_start(case: &NetworkCase, registry: &VariableRegistry) -> DVector<f64> {
    let mut x = DVector::zeros(registry.len());
    for (i, key) in registry.keys().iter().enumerate() {
        x[i] = match key {
            VarKey::AcMagnitude(_) | VarKey::FilterMagnitude(_) | VarKey::ConverterMagnitude(_) => 1.0,
            VarKey::DcVoltage(t) => match t.terminal {
                Terminal::Positive => 1.0,
                Terminal::Negative => -1.0,
                Terminal::Neutral => 0.0,
            },
            VarKey::GeneratorP(id) => case.generators.iter().find(|g| &g.id == id).map_or(0.0, |g| g.p_set),
            _ => 0.0,
        };
    }
    for cv in case.active_converters() {
        let p = cv.control.d_axis.as_ref().and_then(|d| d.p_setpoint()).unwrap_or(0.0);
        let q = cv.control.q_axis.as_ref().and_then(|d| d.q_setpoint()).unwrap_or(0.0);
        let u_pole = match cv.polarity.terminal() {
            Terminal::Negative => -1.0,
            _ => 1.0,
        };
        let mut set = |key: VarKey, v: f64| {
            if let Some(i) = registry.index_of(&key) {
                x[i] = v;
            }
        };
        let id = || cv.id.clone();
        set(VarKey::ConverterP(id()), p);
        set(VarKey::ConverterQ(id()), q);
        set(VarKey::ConverterCurrent(id()), p.hypot(q).max(I_MAG_FLOOR));
        set(VarKey::PoleCurrent(id()), -p / u_pole);
        set(VarKey::NeutralCurrent(id()), p / u_pole);
    }
    x
}

/// State for `new_case` that reuses every unknown shared with `previous`
/// and takes flat-start values for the rest.
pub fn warm_start(previous: &Solution, new_case: &NetworkCase) -> Result<DVector<f64>, SolverError> {
    let ids = |c: &NetworkCase| -> (BTreeSet<u32>, BTreeSet<u32>) {
        (c.ac_buses.iter().map(|b| b.id).collect(), c.dc_buses.iter().map(|b| b.id).collect())
    };
    let (old_ac, old_dc) = ids(&previous.case);
    let (new_ac, new_dc) = ids(new_case);
    if old_ac != new_ac {
        return Err(SolverError::IncompatibleCase("AC bus sets differ".into()));
    }
    if old_dc != new_dc {
        return Err(SolverError::IncompatibleCase("DC bus sets differ".into()));
    }
    let registry = build_registry(new_case)?;
    let mut x = flat_start(new_case, &registry);
    for (i, key) in registry.keys().iter().enumerate() {
        if let Some(v) = previous.value(key) {
            x[i] = v;
        }
    }
    Ok(x)
}

/// Validates `case` and solves it from `start`, or from flat start.
pub fn solve(
    case: &NetworkCase,
    options: &SolverOptions,
    start: Option<&DVector<f64>>,
) -> Result<Solution, SolverError> {
    let report = validate_case(case);
    if !report.is_ok() {
        return Err(SolverError::Validation(report));
    }
    let registry = build_registry(case)?;
    solve_with_registry(case, registry, options, start)
}

/// Solves `case` with a caller-chosen variable ordering. `start`, if given,
/// must follow the same ordering.
pub fn solve_with_registry(
    case: &NetworkCase,
    registry: VariableRegistry,
    options: &SolverOptions,
    start: Option<&DVector<f64>>,
) -> Result<Solution, SolverError> {
    let system = ResidualSystem::new(case, registry)?;
    let n = system.dim();
    let mut x = match start {
        Some(s) if s.len() != n => return Err(SolverError::StartMismatch { expected: n, got: s.len() }),
        Some(s) => s.clone(),
        None => flat_start(case, system.registry()),
    };
    let jacobian_error = if options.fd_check { Some(system.check_jacobian(&x, 1e-6)?.max_rel_error) } else { None };

    let finish = |x: DVector<f64>,
                  iterations: usize,
                  converged: bool,
                  residual_history: Vec<f64>|
     -> Result<Solution, FormulationError> {
        let f = system.evaluate(&x)?;
        let (norm, at) = inf_norm(&f);
        Ok(Solution {
            case: case.clone(),
            registry: system.registry().clone(),
            flows: system.flows(&x),
            state: x,
            converged,
            iterations,
            final_residual: norm,
            worst_equation: at.map(|i| system.labels()[i].clone()),
            residual_history,
            jacobian_error,
        })
    };

    let magnitudes: Vec<usize> = system
        .registry()
        .keys()
        .iter()
        .enumerate()
        .filter(|(_, k)| matches!(k, VarKey::ConverterCurrent(_)))
        .map(|(i, _)| i)
        .collect();

    let mut f = system.evaluate(&x)?;
    let mut norm = inf_norm(&f).0;
    let mut history = vec![norm];
    let mut iterations = 0;
    loop {
        if norm <= options.tol_inf {
            return Ok(finish(x, iterations, true, history)?);
        }
        if iterations >= options.max_iter {
            return Err(SolverError::NoConvergence(Box::new(finish(x, iterations, false, history)?)));
        }
        let (_, jac) = system.evaluate_with_jacobian(&x)?;
        let lu = jac.lu();
        let u = lu.u();
        if let Some((col, pivot)) = (0..n).map(|i| (i, u[(i, i)].abs())).find(|&(_, p)| p.is_nan() || p < PIVOT_TOL) {
            return Err(SolverError::SingularJacobian {
                iteration: iterations,
                variable: system.registry().key(col).clone(),
                pivot,
            });
        }
        let dx = lu.solve(&(-&f)).expect("nonsingular after pivot check");

        let mut alpha = 1.0;
        loop {
            let mut trial = &x + alpha * &dx;
            for &i in &magnitudes {
                trial[i] = trial[i].abs();
            }
            if let Ok(ft) = system.evaluate(&trial) {
                let nt = inf_norm(&ft).0;
                if nt < norm {
                    x = trial;
                    f = ft;
                    norm = nt;
                    history.push(nt);
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < options.min_step {
                return Err(SolverError::LineSearchStall(Box::new(finish(x, iterations, false, history)?)));
            }
        }
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{AcBranch, AcBus, AcLoad, Generator};

    fn two_bus(p: f64) -> NetworkCase {
        NetworkCase {
            name: "two-bus".into(),
            ac_buses: vec![AcBus::reference(1), AcBus::new(2)],
            ac_branches: vec![AcBranch { id: "L12".into(), from_bus: 1, to_bus: 2, g: 0.0, b: -10.0, status: true }],
            generators: vec![Generator { id: "G1".into(), bus: 1, p_set: 0.0, u_mag_set: 1.0 }],
            loads_ac: vec![AcLoad { id: "D2".into(), bus: 2, p_set: p, q_set: 0.0 }],
            ..Default::default()
        }
    }

    #[test]
    fn flat_start_values() {
        let case = two_bus(0.5);
        let reg = build_registry(&case).unwrap();
        let x = flat_start(&case, &reg);
        assert_eq!(x[reg.index_of(&VarKey::AcMagnitude(2)).unwrap()], 1.0);
        assert_eq!(x[reg.index_of(&VarKey::AcAngle(2)).unwrap()], 0.0);
    }

    #[test]
    fn two_bus_converges_quadratically() {
        let sol = solve(&two_bus(0.5), &SolverOptions::default(), None).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 5, "{}", sol.iterations);
        assert!(sol.final_residual <= 1e-8);
    }

    #[test]
    fn overload_does_not_converge() {
        let opts = SolverOptions { max_iter: 30, ..Default::default() };
        let err = solve(&two_bus(8.0), &opts, None).unwrap_err();
        let best = err.best_iterate().expect("best iterate");
        assert!(!best.converged);
        assert!(best.worst_equation.is_some());
    }

    #[test]
    fn identical_case_warm_starts_to_same_state() {
        let case = two_bus(0.5);
        let sol = solve(&case, &SolverOptions::default(), None).unwrap();
        assert_eq!(warm_start(&sol, &case).unwrap(), sol.state);
        let again = solve(&case, &SolverOptions::default(), Some(&sol.state)).unwrap();
        assert_eq!(again.iterations, 0);
    }

    #[test]
    fn changed_bus_set_is_incompatible() {
        let case = two_bus(0.5);
        let sol = solve(&case, &SolverOptions::default(), None).unwrap();
        let mut other = case.clone();
        other.ac_buses[1].id = 3;
        assert!(matches!(warm_start(&sol, &other), Err(SolverError::IncompatibleCase(_))));
    }

    #[test]
    fn wrong_start_length_is_rejected() {
        let r = solve(&two_bus(0.5), &SolverOptions::default(), Some(&DVector::zeros(3)));
        assert!(matches!(r, Err(SolverError::StartMismatch { expected: 6, got: 3 })));
    }
}
