use super::topology::{ac_islands, dc_components, layer_pieces};
use super::{NetworkCase, Terminal, TerminalRef};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ValidationCode {
    LayerWithoutVoltageReference,
    UngroundedDcComponent,
    DuplicateUacControl,
    MissingReferenceBus,
    MultipleReferenceBuses,
    ReferenceWithoutGenerator,
    MultipleGenerators,
    DanglingReference,
    DuplicateId,
    InvalidParameter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub code: ValidationCode,
    /// Offending element, e.g. `converter 1P` or `dc component {2neg}`.
    pub element: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} [{}]: {}", self.code, self.element, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has(&self, code: ValidationCode) -> bool {
        self.errors.iter().any(|e| e.code == code)
    }

    fn push(&mut self, code: ValidationCode, element: impl Into<String>, message: impl Into<String>) {
        self.errors.push(ValidationIssue { code, element: element.into(), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.errors.is_empty() {
            return f.write_str("case is valid");
        }
        for (i, e) in self.errors.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

fn check_unique<'a, T: fmt::Display + Eq + std::hash::Hash + 'a>(
    report: &mut ValidationReport,
    kind: &str,
    ids: impl IntoIterator<Item = T>,
) {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.to_string()) {
            report.push(
                ValidationCode::DuplicateId,
                format!("{kind} {id}"),
                format!("{kind} id {id} is used more than once"),
            );
        }
    }
}

fn terminal_list(ts: &[TerminalRef]) -> String {
    let names: Vec<String> = ts.iter().map(|t| t.to_string()).collect();
    format!("{{{}}}", names.join(","))
}

/// Checks that a case is solvable by construction. The returned report is
/// empty iff no rule is violated.
pub fn validate_case(case: &NetworkCase) -> ValidationReport {
    use ValidationCode::*;
    let mut r = ValidationReport::default();

    check_unique(&mut r, "ac bus", case.ac_buses.iter().map(|b| b.id));
    check_unique(&mut r, "ac branch", case.ac_branches.iter().map(|b| &b.id));
    check_unique(&mut r, "generator", case.generators.iter().map(|g| &g.id));
    check_unique(&mut r, "ac load", case.loads_ac.iter().map(|l| &l.id));
    check_unique(&mut r, "dc load", case.loads_dc.iter().map(|l| &l.id));
    check_unique(&mut r, "dc bus", case.dc_buses.iter().map(|b| b.id));
    check_unique(&mut r, "dc branch", case.dc_branches.iter().map(|b| &b.id));
    check_unique(&mut r, "converter", case.converters.iter().map(|c| &c.id));

    let finite = |v: f64| v.is_finite();

    for bus in &case.ac_buses {
        if ![bus.g_shunt, bus.b_shunt, bus.reference_angle].into_iter().all(finite) {
            r.push(InvalidParameter, format!("ac bus {}", bus.id), "non-finite parameter");
        }
    }
    for br in &case.ac_branches {
        let el = format!("ac branch {}", br.id);
        for end in [br.from_bus, br.to_bus] {
            if case.ac_bus(end).is_none() {
                r.push(DanglingReference, &el, format!("unknown ac bus {end}"));
            }
        }
        if br.from_bus == br.to_bus {
            r.push(InvalidParameter, &el, "from_bus equals to_bus");
        }
        if !(finite(br.g) && finite(br.b)) || (br.g == 0.0 && br.b == 0.0) {
            r.push(InvalidParameter, &el, "admittance must be finite and nonzero");
        }
    }
    let mut gens_per_bus: BTreeMap<u32, usize> = BTreeMap::new();
    for g in &case.generators {
        let el = format!("generator {}", g.id);
        if case.ac_bus(g.bus).is_none() {
            r.push(DanglingReference, &el, format!("unknown ac bus {}", g.bus));
        }
        if !(g.u_mag_set > 0.0 && g.u_mag_set.is_finite() && g.p_set.is_finite()) {
            r.push(InvalidParameter, &el, "u_mag_set must be positive and p_set finite");
        }
        *gens_per_bus.entry(g.bus).or_default() += 1;
    }
    for (bus, n) in &gens_per_bus {
        if *n > 1 {
            r.push(MultipleGenerators, format!("ac bus {bus}"), format!("{n} generators on one bus"));
        }
    }
    for l in &case.loads_ac {
        if case.ac_bus(l.bus).is_none() {
            r.push(DanglingReference, format!("ac load {}", l.id), format!("unknown ac bus {}", l.bus));
        }
    }

    for bus in &case.dc_buses {
        if bus.grounded && !bus.has(Terminal::Neutral) {
            r.push(DanglingReference, format!("dc bus {}", bus.id), "grounded bus has no neutral terminal");
        }
    }
    for br in &case.dc_branches {
        let el = format!("dc branch {}", br.id);
        if br.from_bus == br.to_bus {
            r.push(InvalidParameter, &el, "from_bus equals to_bus");
        }
        if br.conductors.iter().next().is_none() {
            r.push(InvalidParameter, &el, "branch has no conductors");
        }
        for (t, c) in br.conductors.iter() {
            if !(c.r > 0.0 && c.r.is_finite()) {
                r.push(InvalidParameter, &el, format!("{t} conductor resistance must be positive"));
            }
            for end in [br.from_bus, br.to_bus] {
                if !case.terminal_exists(TerminalRef::new(end, t)) {
                    r.push(DanglingReference, &el, format!("dc bus {end} has no {t} terminal"));
                }
            }
        }
    }
    for l in &case.loads_dc {
        let el = format!("dc load {}", l.id);
        for t in [l.polarity.terminal(), Terminal::Neutral] {
            if !case.terminal_exists(TerminalRef::new(l.dc_bus, t)) {
                r.push(DanglingReference, &el, format!("dc bus {} has no {t} terminal", l.dc_bus));
            }
        }
        if !l.p_set.is_finite() {
            r.push(InvalidParameter, &el, "non-finite p_set");
        }
    }

    for cv in &case.converters {
        let el = format!("converter {}", cv.id);
        if case.ac_bus(cv.ac_bus).is_none() {
            r.push(DanglingReference, &el, format!("unknown ac bus {}", cv.ac_bus));
        }
        for t in [cv.pole_terminal(), cv.neutral_terminal()] {
            if !case.terminal_exists(t) {
                r.push(DanglingReference, &el, format!("dc bus {} has no {} terminal", t.bus, t.terminal));
            }
        }
        let tf = &cv.transformer;
        if !(tf.tap > 0.0 && tf.tap.is_finite()) {
            r.push(InvalidParameter, &el, "transformer tap must be positive");
        }
        if !(finite(tf.r) && finite(tf.x)) || (tf.r == 0.0 && tf.x == 0.0) {
            r.push(InvalidParameter, &el, "transformer impedance must be finite and nonzero");
        }
        if !(finite(cv.reactor.r) && finite(cv.reactor.x)) || (cv.reactor.r == 0.0 && cv.reactor.x == 0.0) {
            r.push(InvalidParameter, &el, "reactor impedance must be finite and nonzero");
        }
        let loss = &cv.losses;
        if ![loss.a, loss.b, loss.c].into_iter().all(|v| v >= 0.0 && v.is_finite()) {
            r.push(InvalidParameter, &el, "loss coefficients must be nonnegative");
        }
        if !cv.filter_susceptance.is_finite() {
            r.push(InvalidParameter, &el, "non-finite filter susceptance");
        }
        match cv.control.d_axis {
            Some(super::DAxisControl::DcDroop { k_dc, .. }) if !(k_dc > 0.0 && k_dc.is_finite()) => {
                r.push(InvalidParameter, &el, "dc droop gain must be positive");
            }
            _ => {}
        }
        match cv.control.q_axis {
            Some(super::QAxisControl::AcDroop { k_ac, .. }) if !(k_ac > 0.0 && k_ac.is_finite()) => {
                r.push(InvalidParameter, &el, "ac droop gain must be positive");
            }
            _ => {}
        }
    }

    // Synchronous areas.
    for island in ac_islands(case) {
        let refs: Vec<u32> =
            island.iter().copied().filter(|&id| case.ac_bus(id).is_some_and(|b| b.is_reference)).collect();
        let el = format!("ac island {:?}", island);
        match refs.len() {
            0 => r.push(MissingReferenceBus, el, "synchronous area has no reference bus"),
            1 => {
                if !gens_per_bus.contains_key(&refs[0]) {
                    r.push(ReferenceWithoutGenerator, el, format!("reference bus {} hosts no generator", refs[0]));
                }
            }
            n => r.push(MultipleReferenceBuses, el, format!("{n} reference buses in one synchronous area")),
        }
    }

    // AC voltage magnitude may be fixed by at most one device per bus.
    let mut uac: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    for cv in case.active_converters() {
        if matches!(cv.control.q_axis, Some(super::QAxisControl::Uac { .. })) {
            uac.entry(cv.ac_bus).or_default().push(&cv.id);
        }
    }
    for (bus, convs) in &uac {
        let with_gen = gens_per_bus.contains_key(bus);
        if convs.len() > 1 || with_gen {
            let mut who = convs.join(", ");
            if with_gen {
                who.push_str(" and a generator");
            }
            r.push(DuplicateUacControl, format!("ac bus {bus}"), format!("ac voltage controlled by {who}"));
        }
    }

    // DC references: grounding per component, voltage controller per layer piece.
    let grounded: BTreeSet<TerminalRef> = case
        .dc_buses
        .iter()
        .filter(|b| b.grounded && b.has(Terminal::Neutral))
        .map(|b| TerminalRef::new(b.id, Terminal::Neutral))
        .collect();
    let mut energized = BTreeSet::new();
    for comp in dc_components(case) {
        let fed = case
            .active_converters()
            .any(|cv| comp.contains(cv.pole_terminal()) && comp.contains(cv.neutral_terminal()));
        let loaded = case.loads_dc.iter().any(|l| comp.contains(TerminalRef::new(l.dc_bus, l.polarity.terminal())));
        let el = format!("dc component {}", terminal_list(&comp.terminals));
        if fed {
            if !comp.terminals.iter().any(|t| grounded.contains(t)) {
                r.push(UngroundedDcComponent, el, "no grounded neutral terminal");
            }
            energized.extend(comp.terminals.iter().copied());
        } else if loaded {
            r.push(LayerWithoutVoltageReference, el, "dc loads without any converter");
        }
    }
    for layer in [Terminal::Positive, Terminal::Negative] {
        for piece in layer_pieces(case, layer) {
            if !piece.iter().any(|t| energized.contains(t)) {
                continue;
            }
            let on_piece: Vec<_> = case.active_converters().filter(|cv| piece.contains(&cv.pole_terminal())).collect();
            let has_load =
                case.loads_dc.iter().any(|l| piece.contains(&TerminalRef::new(l.dc_bus, l.polarity.terminal())));
            if on_piece.is_empty() && !has_load {
                continue;
            }
            let referenced = on_piece.iter().any(|cv| cv.control.d_axis.is_some_and(|d| d.controls_dc_voltage()));
            if !referenced {
                r.push(
                    LayerWithoutVoltageReference,
                    format!("{layer} layer {}", terminal_list(&piece)),
                    "no converter in dc voltage or dc droop control",
                );
            }
        }
    }

    r
}
