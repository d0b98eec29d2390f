//! Single-element outages and before/after comparison.

use crate::netmodel::{validate_case, NetworkCase, Terminal, ValidationReport};
use crate::solver::{solve, warm_start, Solution, SolverError, SolverOptions};
use serde::Serialize;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outage {
    ConverterPole { id: String },
    DcConductor { branch: String, conductor: Terminal },
    AcBranch { id: String },
}

impl Outage {
    pub fn converter(id: &str) -> Self {
        Outage::ConverterPole { id: id.to_string() }
    }

    pub fn dc_conductor(branch: &str, conductor: Terminal) -> Self {
        Outage::DcConductor { branch: branch.to_string(), conductor }
    }
}

impl fmt::Display for Outage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outage::ConverterPole { id } => write!(f, "conv:{id}"),
            Outage::DcConductor { branch, conductor } => write!(f, "dcline:{branch}:{}", conductor.short_name()),
            Outage::AcBranch { id } => write!(f, "acline:{id}"),
        }
    }
}

impl FromStr for Outage {
    type Err = ContingencyError;

    /// `conv:<id>`, `dcline:<id>:<pos|neg|neutral>` or `acline:<id>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ContingencyError::BadOutage(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        if rest.is_empty() {
            return Err(bad());
        }
        match kind {
            "conv" => Ok(Outage::converter(rest)),
            "acline" => Ok(Outage::AcBranch { id: rest.to_string() }),
            "dcline" => {
                let (branch, t) = rest.rsplit_once(':').ok_or_else(bad)?;
                let conductor = t.parse().map_err(|_| bad())?;
                if branch.is_empty() {
                    return Err(bad());
                }
                Ok(Outage::dc_conductor(branch, conductor))
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Error)]
pub enum ContingencyError {
    #[error("cannot parse outage '{0}', expected conv:<id>, dcline:<id>:<pos|neg|neutral> or acline:<id>")]
    BadOutage(String),
    #[error("unknown element {0}")]
    UnknownElement(String),
    #[error("{0} is already out of service")]
    AlreadyOutOfService(String),
    #[error("case after outage {outage} is infeasible:\n{report}")]
    PostOutageInfeasible { outage: String, report: ValidationReport },
    #[error("solving after outage {outage}: {source}")]
    Solver {
        outage: String,
        #[source]
        source: SolverError,
    },
}

/// Copy of `case` with the outaged element switched off.
pub fn apply_outage(case: &NetworkCase, outage: &Outage) -> Result<NetworkCase, ContingencyError> {
    let mut post = case.clone();
    let name = outage.to_string();
    let status = match outage {
        Outage::ConverterPole { id } => post.converter_mut(id).map(|c| &mut c.status),
        Outage::AcBranch { id } => post.ac_branches.iter_mut().find(|b| &b.id == id).map(|b| &mut b.status),
        Outage::DcConductor { branch, conductor } => post
            .dc_branches
            .iter_mut()
            .find(|b| &b.id == branch)
            .and_then(|b| b.conductors.get_mut(*conductor))
            .map(|c| &mut c.status),
    }
    .ok_or_else(|| ContingencyError::UnknownElement(name.clone()))?;
    if !*status {
        return Err(ContingencyError::AlreadyOutOfService(name));
    }
    *status = false;
    let report = validate_case(&post);
    if !report.is_ok() {
        return Err(ContingencyError::PostOutageInfeasible { outage: name, report });
    }
    Ok(post)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityKind {
    Converter,
    DcTerminal,
    AcBus,
}

impl fmt::Display for QuantityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuantityKind::Converter => "converter",
            QuantityKind::DcTerminal => "dc_terminal",
            QuantityKind::AcBus => "ac_bus",
        })
    }
}

/// One compared quantity. `None` marks a quantity that does not exist in
/// that state, e.g. a terminal left without an in-service converter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    pub kind: QuantityKind,
    pub id: String,
    pub quantity: String,
    pub before: Option<f64>,
    pub after: Option<f64>,
    /// `after − before`.
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ContingencyReport {
    pub outage: Outage,
    pub base: Solution,
    pub post: Solution,
    pub deviations: Vec<Deviation>,
}

impl ContingencyReport {
    pub fn deviation(&self, kind: QuantityKind, id: &str, quantity: &str) -> Option<&Deviation> {
        self.deviations.iter().find(|d| d.kind == kind && d.id == id && d.quantity == quantity)
    }
}

fn quantities(sol: &Solution) -> Vec<(QuantityKind, String, String, Option<f64>)> {
    let mut out = Vec::new();
    for c in &sol.flows.converters {
        out.push((QuantityKind::Converter, c.id.clone(), "p_ac".to_string(), Some(c.p_ac)));
        out.push((QuantityKind::Converter, c.id.clone(), "q_ac".to_string(), Some(c.q_ac)));
    }
    for b in &sol.flows.dc_buses {
        for t in Terminal::ALL {
            let exists = sol.case.dc_bus(b.id).is_some_and(|d| d.has(t));
            if exists {
                out.push((QuantityKind::DcTerminal, b.id.to_string(), format!("u_{t}"), b.voltage(t)));
            }
        }
    }
    for b in &sol.flows.ac_buses {
        out.push((QuantityKind::AcBus, b.id.to_string(), "u_mag".to_string(), Some(b.u_mag)));
    }
    out
}

/// Per-quantity `post − base`, in base ordering.
pub fn compute_deviations(base: &Solution, post: &Solution) -> Vec<Deviation> {
    let after = quantities(post);
    quantities(base)
        .into_iter()
        .map(|(kind, id, quantity, before)| {
            let after = after.iter().find(|(k, i, q, _)| *k == kind && *i == id && *q == quantity).and_then(|a| a.3);
            let deviation = match (before, after) {
                (Some(b), Some(a)) => Some(a - b),
                _ => None,
            };
            Deviation { kind, id, quantity, before, after, deviation }
        })
        .collect()
}

/// Applies `outage` and re-solves, warm-started from `base`. Falls back to a
/// flat start when the warm-started solve fails.
pub fn run_contingency(
    case: &NetworkCase,
    base: &Solution,
    outage: &Outage,
    options: &SolverOptions,
) -> Result<ContingencyReport, ContingencyError> {
    let post_case = apply_outage(case, outage)?;
    let wrap = |source| ContingencyError::Solver { outage: outage.to_string(), source };
    let start = warm_start(base, &post_case).map_err(wrap)?;
    let post = match solve(&post_case, options, Some(&start)) {
        Ok(s) => s,
        Err(_) => solve(&post_case, options, None).map_err(wrap)?,
    };
    let deviations = compute_deviations(base, &post);
    Ok(ContingencyReport { outage: outage.clone(), base: base.clone(), post, deviations })
}
