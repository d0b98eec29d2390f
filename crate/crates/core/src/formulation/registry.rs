//! Unknowns and equations of the unified system.
//!
//! Counting rules:
//! * every AC bus has an angle and a magnitude unknown, balanced by its
//!   active and reactive power equations;
//! * every generator adds a reactive output unknown and fixes its bus voltage
//!   magnitude; the generator on a reference bus also adds an active output
//!   unknown while the bus angle is fixed;
//! * every in-service converter pole adds nine unknowns (filter and converter
//!   node voltages, converter-side P/Q, current magnitude, pole and neutral DC
//!   currents), balanced by seven internal equations plus its d- and q-axis
//!   controls;
//! * every energized DC terminal adds a current balance and a voltage
//!   unknown, except grounded neutrals whose voltage is fixed at zero and
//!   whose ground current is the unknown instead.

use super::FormulationError;
use crate::netmodel::{energized_terminals, AcBusId, DcBusId, NetworkCase, Terminal, TerminalRef};
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum VarKey {
    AcAngle(AcBusId),
    AcMagnitude(AcBusId),
    FilterAngle(String),
    FilterMagnitude(String),
    ConverterAngle(String),
    ConverterMagnitude(String),
    /// Active power flowing from the phase reactor into the converter.
    ConverterP(String),
    ConverterQ(String),
    ConverterCurrent(String),
    /// DC current from the pole terminal into the converter.
    PoleCurrent(String),
    /// DC current from the neutral terminal into the converter.
    NeutralCurrent(String),
    DcVoltage(TerminalRef),
    GroundCurrent(DcBusId),
    GeneratorP(String),
    GeneratorQ(String),
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use VarKey::*;
        match self {
            AcAngle(b) => write!(f, "theta[ac {b}]"),
            AcMagnitude(b) => write!(f, "U[ac {b}]"),
            FilterAngle(c) => write!(f, "theta_f[{c}]"),
            FilterMagnitude(c) => write!(f, "U_f[{c}]"),
            ConverterAngle(c) => write!(f, "theta_cv[{c}]"),
            ConverterMagnitude(c) => write!(f, "U_cv[{c}]"),
            ConverterP(c) => write!(f, "P_cv_ac[{c}]"),
            ConverterQ(c) => write!(f, "Q_cv_ac[{c}]"),
            ConverterCurrent(c) => write!(f, "I_cv_mag[{c}]"),
            PoleCurrent(c) => write!(f, "I_cv_dc[{c}]"),
            NeutralCurrent(c) => write!(f, "I_cv_dc0[{c}]"),
            DcVoltage(t) => write!(f, "U_dc[{t}]"),
            GroundCurrent(b) => write!(f, "I_ground[dc {b}]"),
            GeneratorP(g) => write!(f, "P_g[{g}]"),
            GeneratorQ(g) => write!(f, "Q_g[{g}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EquationLabel {
    AcActiveBalance(AcBusId),
    AcReactiveBalance(AcBusId),
    FilterActiveBalance(String),
    FilterReactiveBalance(String),
    ConverterNodeActive(String),
    ConverterNodeReactive(String),
    ConverterLossBalance(String),
    CurrentMagnitude(String),
    PoleCurrentLoop(String),
    DcCurrentBalance(TerminalRef),
    GeneratorVoltage(String),
    ReferenceAngle(AcBusId),
    DAxisControl(String),
    QAxisControl(String),
}

impl fmt::Display for EquationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use EquationLabel::*;
        match self {
            AcActiveBalance(b) => write!(f, "P balance at ac bus {b}"),
            AcReactiveBalance(b) => write!(f, "Q balance at ac bus {b}"),
            FilterActiveBalance(c) => write!(f, "P balance at filter of {c}"),
            FilterReactiveBalance(c) => write!(f, "Q balance at filter of {c}"),
            ConverterNodeActive(c) => write!(f, "P at converter node of {c}"),
            ConverterNodeReactive(c) => write!(f, "Q at converter node of {c}"),
            ConverterLossBalance(c) => write!(f, "AC/DC loss balance of {c}"),
            CurrentMagnitude(c) => write!(f, "current magnitude of {c}"),
            PoleCurrentLoop(c) => write!(f, "pole current loop of {c}"),
            DcCurrentBalance(t) => write!(f, "current balance at dc terminal {t}"),
            GeneratorVoltage(g) => write!(f, "voltage setpoint of generator {g}"),
            ReferenceAngle(b) => write!(f, "reference angle of ac bus {b}"),
            DAxisControl(c) => write!(f, "d-axis control of {c}"),
            QAxisControl(c) => write!(f, "q-axis control of {c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Category {
    Ac,
    Converter,
    Dc,
    Generator,
}

impl VarKey {
    pub fn category(&self) -> Category {
        use VarKey::*;
        match self {
            AcAngle(_) | AcMagnitude(_) => Category::Ac,
            DcVoltage(_) | GroundCurrent(_) => Category::Dc,
            GeneratorP(_) | GeneratorQ(_) => Category::Generator,
            _ => Category::Converter,
        }
    }
}

impl EquationLabel {
    pub fn category(&self) -> Category {
        use EquationLabel::*;
        match self {
            AcActiveBalance(_) | AcReactiveBalance(_) => Category::Ac,
            DcCurrentBalance(_) => Category::Dc,
            GeneratorVoltage(_) | ReferenceAngle(_) => Category::Generator,
            _ => Category::Converter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CategoryCount {
    pub category: Category,
    pub variables: usize,
    pub equations: usize,
}

impl fmt::Display for CategoryCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {} variables / {} equations", self.category, self.variables, self.equations)
    }
}

/// Bijective mapping between semantic unknowns and state-vector indices.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableRegistry {
    keys: Vec<VarKey>,
    index: HashMap<VarKey, usize>,
}

impl VariableRegistry {
    pub fn from_keys(keys: Vec<VarKey>) -> Self {
        let index = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Self { keys, index }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn index_of(&self, key: &VarKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn key(&self, index: usize) -> &VarKey {
        &self.keys[index]
    }

    pub fn keys(&self) -> &[VarKey] {
        &self.keys
    }

    /// Registry with `new[i] = old[order[i]]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.keys.len());
        Self::from_keys(order.iter().map(|&i| self.keys[i].clone()).collect())
    }
}

fn reference_generators(case: &NetworkCase) -> Vec<(&str, AcBusId, bool)> {
    case.generators
        .iter()
        .filter(|g| case.ac_bus(g.bus).is_some())
        .map(|g| (g.id.as_str(), g.bus, case.ac_bus(g.bus).is_some_and(|b| b.is_reference)))
        .collect()
}

fn variable_keys(case: &NetworkCase) -> Vec<VarKey> {
    let mut keys = Vec::new();
    for bus in &case.ac_buses {
        keys.push(VarKey::AcAngle(bus.id));
        keys.push(VarKey::AcMagnitude(bus.id));
    }
    for cv in case.active_converters() {
        let id = || cv.id.clone();
        keys.extend([
            VarKey::FilterAngle(id()),
            VarKey::FilterMagnitude(id()),
            VarKey::ConverterAngle(id()),
            VarKey::ConverterMagnitude(id()),
            VarKey::ConverterP(id()),
            VarKey::ConverterQ(id()),
            VarKey::ConverterCurrent(id()),
            VarKey::PoleCurrent(id()),
            VarKey::NeutralCurrent(id()),
        ]);
    }
    let energized = energized_terminals(case);
    let grounded = grounded_neutrals(case);
    for &t in &energized {
        if grounded.contains(&t) {
            keys.push(VarKey::GroundCurrent(t.bus));
        } else {
            keys.push(VarKey::DcVoltage(t));
        }
    }
    for (id, _, is_ref) in reference_generators(case) {
        if is_ref {
            keys.push(VarKey::GeneratorP(id.to_string()));
        }
        keys.push(VarKey::GeneratorQ(id.to_string()));
    }
    keys
}

/// Energized neutral terminals of grounded DC buses.
pub(crate) fn grounded_neutrals(case: &NetworkCase) -> Vec<TerminalRef> {
    let energized = energized_terminals(case);
    case.dc_buses
        .iter()
        .filter(|b| b.grounded)
        .map(|b| TerminalRef::new(b.id, Terminal::Neutral))
        .filter(|t| energized.contains(t))
        .collect()
}

/// Equation labels in assembly order.
pub fn equation_labels(case: &NetworkCase) -> Vec<EquationLabel> {
    use EquationLabel::*;
    let mut eqs = Vec::new();
    for bus in &case.ac_buses {
        eqs.push(AcActiveBalance(bus.id));
        eqs.push(AcReactiveBalance(bus.id));
    }
    for cv in case.active_converters() {
        eqs.push(FilterActiveBalance(cv.id.clone()));
        eqs.push(FilterReactiveBalance(cv.id.clone()));
    }
    for cv in case.active_converters() {
        let id = || cv.id.clone();
        eqs.extend([
            ConverterNodeActive(id()),
            ConverterNodeReactive(id()),
            ConverterLossBalance(id()),
            CurrentMagnitude(id()),
            PoleCurrentLoop(id()),
        ]);
    }
    for t in energized_terminals(case) {
        eqs.push(DcCurrentBalance(t));
    }
    for (id, _, _) in reference_generators(case) {
        eqs.push(GeneratorVoltage(id.to_string()));
    }
    for bus in case.ac_buses.iter().filter(|b| b.is_reference) {
        eqs.push(ReferenceAngle(bus.id));
    }
    for cv in case.active_converters() {
        if cv.control.d_axis.is_some() {
            eqs.push(DAxisControl(cv.id.clone()));
        }
        if cv.control.q_axis.is_some() {
            eqs.push(QAxisControl(cv.id.clone()));
        }
    }
    eqs
}

fn category_counts(vars: &[VarKey], eqs: &[EquationLabel]) -> Vec<CategoryCount> {
    let mut counts: BTreeMap<Category, (usize, usize)> = BTreeMap::new();
    for v in vars {
        counts.entry(v.category()).or_default().0 += 1;
    }
    for e in eqs {
        counts.entry(e.category()).or_default().1 += 1;
    }
    counts
        .into_iter()
        .map(|(category, (variables, equations))| CategoryCount { category, variables, equations })
        .collect()
}

/// Enumerates the unknowns of `case` and checks that the system is square.
pub fn build_registry(case: &NetworkCase) -> Result<VariableRegistry, FormulationError> {
    let vars = variable_keys(case);
    let eqs = equation_labels(case);
    let counts = category_counts(&vars, &eqs);
    if counts.iter().any(|c| c.variables != c.equations) {
        return Err(FormulationError::DimensionMismatch { counts });
    }
    Ok(VariableRegistry::from_keys(vars))
}
