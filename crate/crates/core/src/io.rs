//! Case files and result documents.

use crate::contingency::ContingencyReport;
use crate::formulation::NetworkFlows;
use crate::netmodel::{validate_case, NetworkCase, Terminal, ValidationCode, ValidationReport};
use crate::solver::Solution;
use serde::Serialize;
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    SyntaxError { line: usize, column: usize, message: String },
    #[error("schema error at '{path}': {message}")]
    SchemaError { path: String, message: String },
    #[error("case is invalid:\n{0}")]
    Validation(ValidationReport),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses a JSON case document and validates it.
pub fn parse_case(bytes: &[u8]) -> Result<NetworkCase, CaseError> {
    let case = parse_case_unvalidated(bytes)?;
    let report = validate_case(&case);
    if let Some(dup) = report.errors.iter().find(|e| e.code == ValidationCode::DuplicateId) {
        return Err(CaseError::SchemaError { path: dup.element.clone(), message: dup.message.clone() });
    }
    if !report.is_ok() {
        return Err(CaseError::Validation(report));
    }
    Ok(case)
}

/// Parses a JSON case document without topology checks.
pub fn parse_case_unvalidated(bytes: &[u8]) -> Result<NetworkCase, CaseError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => CaseError::SchemaError { path, message: strip_position(&inner) },
            _ => CaseError::SyntaxError { line: inner.line(), column: inner.column(), message: strip_position(&inner) },
        }
    })
}

fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

pub fn read_case(path: &std::path::Path) -> Result<NetworkCase, CaseError> {
    parse_case(&std::fs::read(path)?)
}

pub fn write_case(case: &NetworkCase) -> String {
    let mut s = serde_json::to_string_pretty(case).expect("case serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Table,
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(OutputFormat::Table),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("unknown format '{s}', expected table, csv or json")),
        }
    }
}

/// One scalar of a results document.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub kind: &'static str,
    pub id: String,
    pub quantity: &'static str,
    pub value: f64,
}

fn rec(out: &mut Vec<Record>, kind: &'static str, id: impl ToString, quantity: &'static str, value: f64) {
    out.push(Record { kind, id: id.to_string(), quantity, value });
}

/// Flattens a solution into `(kind, id, quantity, value)` records.
pub fn solution_records(sol: &Solution) -> Vec<Record> {
    let mut out = Vec::new();
    let f = &sol.flows;
    rec(&mut out, "solver", "", "converged", if sol.converged { 1.0 } else { 0.0 });
    rec(&mut out, "solver", "", "iterations", sol.iterations as f64);
    rec(&mut out, "solver", "", "final_residual", sol.final_residual);
    for b in &f.ac_buses {
        rec(&mut out, "ac_bus", b.id, "u_mag", b.u_mag);
        rec(&mut out, "ac_bus", b.id, "theta", b.theta);
    }
    for g in &f.generators {
        rec(&mut out, "generator", &g.id, "p", g.p);
        rec(&mut out, "generator", &g.id, "q", g.q);
    }
    for br in f.ac_branches.iter().filter(|b| b.in_service) {
        rec(&mut out, "ac_branch", &br.id, "p_from", br.p_from);
        rec(&mut out, "ac_branch", &br.id, "q_from", br.q_from);
        rec(&mut out, "ac_branch", &br.id, "p_to", br.p_to);
        rec(&mut out, "ac_branch", &br.id, "q_to", br.q_to);
        rec(&mut out, "ac_branch", &br.id, "loss", br.loss);
    }
    if f.has_dc() {
        for b in &f.dc_buses {
            for (t, q) in [
                (Terminal::Positive, "u_positive"),
                (Terminal::Negative, "u_negative"),
                (Terminal::Neutral, "u_neutral"),
            ] {
                if let Some(v) = b.voltage(t) {
                    rec(&mut out, "dc_bus", b.id, q, v);
                }
            }
            if let Some(i) = b.ground_current {
                rec(&mut out, "dc_bus", b.id, "ground_current", i);
            }
        }
        for c in f.dc_conductors.iter().filter(|c| c.in_service) {
            let id = format!("{}:{}", c.branch, c.conductor.short_name());
            rec(&mut out, "dc_conductor", &id, "current", c.current);
            rec(&mut out, "dc_conductor", &id, "loss", c.loss);
        }
    }
    for c in &f.converters {
        rec(&mut out, "converter", &c.id, "p_ac", c.p_ac);
        rec(&mut out, "converter", &c.id, "q_ac", c.q_ac);
        rec(&mut out, "converter", &c.id, "p_dc", c.p_dc);
        rec(&mut out, "converter", &c.id, "p_loss", c.p_loss);
        rec(&mut out, "converter", &c.id, "i_dc", c.i_dc);
    }
    for l in &f.dc_loads {
        rec(&mut out, "dc_load", &l.id, "p", l.p);
        rec(&mut out, "dc_load", &l.id, "current", l.current);
    }
    let bal = &f.balance;
    rec(&mut out, "balance", "", "generation", bal.generation);
    rec(&mut out, "balance", "", "load", bal.ac_load + bal.dc_load);
    rec(&mut out, "balance", "", "losses", bal.total_loss());
    rec(&mut out, "balance", "", "mismatch", bal.mismatch);
    out
}

#[derive(Serialize)]
struct SolverSummary<'a> {
    case: &'a str,
    converged: bool,
    iterations: usize,
    final_residual: f64,
    worst_equation: Option<String>,
}

#[derive(Serialize)]
struct ResultsDocument<'a> {
    solver: SolverSummary<'a>,
    ac_buses: &'a [crate::formulation::AcBusState],
    generators: &'a [crate::formulation::GeneratorOutput],
    ac_branches: &'a [crate::formulation::AcBranchFlow],
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    dc_buses: &'a [crate::formulation::DcBusState],
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    dc_conductors: &'a [crate::formulation::DcConductorFlow],
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    converters: &'a [crate::formulation::ConverterState],
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    dc_loads: &'a [crate::formulation::DcLoadFlow],
    balance: &'a crate::formulation::PowerBalance,
}

fn document(sol: &Solution) -> ResultsDocument<'_> {
    let f: &NetworkFlows = &sol.flows;
    ResultsDocument {
        solver: SolverSummary {
            case: &sol.case.name,
            converged: sol.converged,
            iterations: sol.iterations,
            final_residual: sol.final_residual,
            worst_equation: sol.worst_equation.as_ref().map(|e| e.to_string()),
        },
        ac_buses: &f.ac_buses,
        generators: &f.generators,
        ac_branches: &f.ac_branches,
        dc_buses: &f.dc_buses,
        dc_conductors: &f.dc_conductors,
        converters: &f.converters,
        dc_loads: &f.dc_loads,
        balance: &f.balance,
    }
}

pub fn write_results(sol: &Solution, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(&document(sol)).expect("results serialize");
            s.push('\n');
            s
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["kind", "id", "quantity", "value"]).expect("in-memory write");
            for r in solution_records(sol) {
                w.write_record([r.kind, &r.id, r.quantity, &format!("{:?}", r.value)]).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
        }
        OutputFormat::Table => unsigned_zeros(results_table(sol)),
    }
}

/// Rounding leaves `-0.000000` for tiny negative values.
fn unsigned_zeros(s: String) -> String {
    s.replace("-0.000000", " 0.000000")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

fn results_table(sol: &Solution) -> String {
    let f = &sol.flows;
    let mut s = String::new();
    let status = if sol.converged { "converged" } else { "NOT converged" };
    let _ = writeln!(
        s,
        "Case {}: {status} in {} iterations, |F| = {:.3e}",
        sol.case.name, sol.iterations, sol.final_residual
    );
    if let (false, Some(eq)) = (sol.converged, &sol.worst_equation) {
        let _ = writeln!(s, "worst residual: {eq}");
    }

    let _ = writeln!(s, "\nAC buses\n{:>6} {:>12} {:>12}", "bus", "U_mag", "theta");
    for b in &f.ac_buses {
        let _ = writeln!(s, "{:>6} {:>12.6} {:>12.6}", b.id, b.u_mag, b.theta);
    }
    let _ = writeln!(s, "\nGenerators\n{:>8} {:>6} {:>12} {:>12}", "id", "bus", "P", "Q");
    for g in &f.generators {
        let _ = writeln!(s, "{:>8} {:>6} {:>12.6} {:>12.6}", g.id, g.bus, g.p, g.q);
    }
    let _ = writeln!(
        s,
        "\nAC branches\n{:>10} {:>5} {:>5} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "id", "from", "to", "P_from", "Q_from", "P_to", "Q_to", "loss"
    );
    for b in f.ac_branches.iter().filter(|b| b.in_service) {
        let _ = writeln!(
            s,
            "{:>10} {:>5} {:>5} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            b.id, b.from_bus, b.to_bus, b.p_from, b.q_from, b.p_to, b.q_to, b.loss
        );
    }
    if f.has_dc() {
        let _ = writeln!(
            s,
            "\nDC bus voltages\n{:>6} {:>12} {:>12} {:>12} {:>12}",
            "bus", "Positive", "Negative", "Neutral", "I_ground"
        );
        for b in &f.dc_buses {
            let _ = writeln!(
                s,
                "{:>6} {:>12} {:>12} {:>12} {:>12}",
                b.id,
                opt(b.positive),
                opt(b.negative),
                opt(b.neutral),
                opt(b.ground_current)
            );
        }
        let _ = writeln!(s, "\nDC conductors\n{:>10} {:>8} {:>12} {:>12}", "branch", "layer", "current", "loss");
        for c in f.dc_conductors.iter().filter(|c| c.in_service) {
            let _ =
                writeln!(s, "{:>10} {:>8} {:>12.6} {:>12.6}", c.branch, c.conductor.short_name(), c.current, c.loss);
        }
    }
    if !f.converters.is_empty() {
        let _ = writeln!(
            s,
            "\nConverters\n{:>8} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "id", "P_ac", "Q", "P_dc", "P_loss", "I_dc"
        );
        for c in &f.converters {
            let _ = writeln!(
                s,
                "{:>8} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
                c.id, c.p_ac, c.q_ac, c.p_dc, c.p_loss, c.i_dc
            );
        }
    }
    if !f.dc_loads.is_empty() {
        let _ = writeln!(s, "\nDC loads\n{:>8} {:>12} {:>12}", "id", "P", "I");
        for l in &f.dc_loads {
            let _ = writeln!(s, "{:>8} {:>12.6} {:>12.6}", l.id, l.p, l.current);
        }
    }
    let b = &f.balance;
    let _ = writeln!(
        s,
        "\nBalance: generation {:.6}, load {:.6}, losses {:.6}, mismatch {:.6}",
        b.generation,
        b.ac_load + b.dc_load,
        b.total_loss(),
        b.mismatch
    );
    s
}

#[derive(Serialize)]
struct ContingencyDocument<'a> {
    outage: String,
    base: SolverSummary<'a>,
    post: SolverSummary<'a>,
    deviations: &'a [crate::contingency::Deviation],
}

fn summary(sol: &Solution) -> SolverSummary<'_> {
    document(sol).solver
}

pub fn write_contingency(report: &ContingencyReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let doc = ContingencyDocument {
                outage: report.outage.to_string(),
                base: summary(&report.base),
                post: summary(&report.post),
                deviations: &report.deviations,
            };
            let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
            s.push('\n');
            s
        }
        OutputFormat::Csv => {
            let cell = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:?}"));
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["kind", "id", "quantity", "before", "after", "deviation"]).expect("in-memory write");
            for d in &report.deviations {
                w.write_record([
                    d.kind.to_string(),
                    d.id.clone(),
                    d.quantity.clone(),
                    cell(d.before),
                    cell(d.after),
                    cell(d.deviation),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
        }
        OutputFormat::Table => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "Outage {}: base {} iterations, post-outage {} iterations",
                report.outage, report.base.iterations, report.post.iterations
            );
            let mut last_kind = None;
            for d in &report.deviations {
                if last_kind != Some(d.kind) {
                    let _ = writeln!(
                        s,
                        "\n{:<12} {:>8} {:>12} {:>12} {:>12} {:>12}",
                        d.kind.to_string(),
                        "id",
                        "quantity",
                        "before",
                        "after",
                        "deviation"
                    );
                    last_kind = Some(d.kind);
                }
                let _ = writeln!(
                    s,
                    "{:<12} {:>8} {:>12} {:>12} {:>12} {:>12}",
                    "",
                    d.id,
                    d.quantity,
                    opt(d.before),
                    opt(d.after),
                    opt(d.deviation)
                );
            }
            unsigned_zeros(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_case(b"{\n  \"ac_buses\": [\n    {\"id\": 1,}\n  ]\n}").unwrap_err();
        match err {
            CaseError::SyntaxError { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_key_names_the_field() {
        let err = parse_case(br#"{"ac_buses": [{"id": 1, "voltage": 1.0}]}"#).unwrap_err();
        match err {
            CaseError::SchemaError { path, message } => {
                assert_eq!(path, "ac_buses[0].voltage");
                assert!(message.contains("voltage"), "{message}");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn droop_without_gain_is_a_schema_error() {
        let doc = br#"{"converters": [{"id": "c", "ac_bus": 1, "dc_bus": 1, "polarity": "positive",
            "transformer": {"r": 0.0, "x": 0.1}, "reactor": {"r": 0.0, "x": 0.1},
            "control": {"d_axis": {"mode": "dc_droop", "u_dc_ref": 1.0, "p_ac_ref": 0.0}}}]}"#;
        match parse_case(doc).unwrap_err() {
            CaseError::SchemaError { path, message } => {
                assert!(path.starts_with("converters[0].control.d_axis"), "{path}");
                assert!(message.contains("k_dc"), "{message}");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn duplicate_bus_is_a_schema_error() {
        let doc = br#"{"ac_buses": [{"id": 1, "is_reference": true}, {"id": 1}],
            "generators": [{"id": "G", "bus": 1, "p_set": 0.0, "u_mag_set": 1.0}]}"#;
        assert!(matches!(parse_case(doc), Err(CaseError::SchemaError { .. })));
    }

    #[test]
    fn invalid_topology_is_reported() {
        let doc = br#"{"ac_buses": [{"id": 1}]}"#;
        match parse_case(doc).unwrap_err() {
            CaseError::Validation(r) => assert!(r.has(ValidationCode::MissingReferenceBus)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn format_names() {
        assert_eq!("csv".parse::<OutputFormat>(), Ok(OutputFormat::Csv));
        assert!("xml".parse::<OutputFormat>().is_err());
    }
}
