//! Hybrid AC/DC network description.
//!
//! A [`NetworkCase`] holds the AC grid (buses, series branches, generators,
//! loads), the multiconductor DC grid (buses with explicit positive, negative
//! and neutral terminals, branches with per-conductor resistances) and the
//! converter poles that couple the two. All electrical quantities are per
//! unit on the case base.

mod topology;
mod validate;

pub use topology::{ac_islands, dc_components, energized_terminals, layer_pieces, DcComponent};
pub use validate::{validate_case, ValidationCode, ValidationIssue, ValidationReport};

use serde::{Deserialize, Serialize};
use std::fmt;

pub type AcBusId = u32;
pub type DcBusId = u32;

fn in_service() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// DC terminal of a bus. Numbering follows the usual convention:
/// neutral 0, positive 1, negative 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Neutral,
    Positive,
    Negative,
}

impl Terminal {
    pub const ALL: [Terminal; 3] = [Terminal::Positive, Terminal::Negative, Terminal::Neutral];

    pub fn short_name(self) -> &'static str {
        match self {
            Terminal::Positive => "pos",
            Terminal::Negative => "neg",
            Terminal::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Terminal::Positive => "positive",
            Terminal::Negative => "negative",
            Terminal::Neutral => "neutral",
        })
    }
}

impl std::str::FromStr for Terminal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pos" | "positive" | "1" => Ok(Terminal::Positive),
            "neg" | "negative" | "2" => Ok(Terminal::Negative),
            "neutral" | "0" => Ok(Terminal::Neutral),
            other => Err(format!("unknown DC terminal `{other}`")),
        }
    }
}

/// Pole polarity of a converter or DC load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn terminal(self) -> Terminal {
        match self {
            Polarity::Positive => Terminal::Positive,
            Polarity::Negative => Terminal::Negative,
        }
    }

    pub fn mirrored(self) -> Polarity {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

/// A (DC bus, terminal) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TerminalRef {
    pub bus: DcBusId,
    pub terminal: Terminal,
}

impl TerminalRef {
    pub fn new(bus: DcBusId, terminal: Terminal) -> Self {
        Self { bus, terminal }
    }
}

impl fmt::Display for TerminalRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.bus, self.terminal.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerUnitBase {
    pub s_mva: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dc_kv: Option<f64>,
}

impl Default for PerUnitBase {
    fn default() -> Self {
        Self { s_mva: 100.0, dc_kv: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcBus {
    pub id: AcBusId,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub g_shunt: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub b_shunt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_kv: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_reference: bool,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub reference_angle: f64,
}

impl AcBus {
    pub fn new(id: AcBusId) -> Self {
        Self { id, g_shunt: 0.0, b_shunt: 0.0, base_kv: None, is_reference: false, reference_angle: 0.0 }
    }

    pub fn reference(id: AcBusId) -> Self {
        Self { is_reference: true, ..Self::new(id) }
    }
}

/// Series AC branch described by its admittance `g + jb`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcBranch {
    pub id: String,
    pub from_bus: AcBusId,
    pub to_bus: AcBusId,
    pub g: f64,
    pub b: f64,
    #[serde(default = "in_service", skip_serializing_if = "is_true")]
    pub status: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: String,
    pub bus: AcBusId,
    pub p_set: f64,
    pub u_mag_set: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcLoad {
    pub id: String,
    pub bus: AcBusId,
    pub p_set: f64,
    #[serde(default)]
    pub q_set: f64,
}

/// Constant-power DC load connected between a pole terminal and the neutral
/// terminal of the same bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcLoad {
    pub id: String,
    pub dc_bus: DcBusId,
    pub polarity: Polarity,
    pub p_set: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcBus {
    pub id: DcBusId,
    pub terminals: Vec<Terminal>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub grounded: bool,
}

impl DcBus {
    pub fn has(&self, terminal: Terminal) -> bool {
        self.terminals.contains(&terminal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conductor {
    pub r: f64,
    #[serde(default = "in_service", skip_serializing_if = "is_true")]
    pub status: bool,
}

impl Conductor {
    pub fn new(r: f64) -> Self {
        Self { r, status: true }
    }
}

/// The conductors physically present on a DC branch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conductors {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive: Option<Conductor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative: Option<Conductor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neutral: Option<Conductor>,
}

impl Conductors {
    pub fn get(&self, terminal: Terminal) -> Option<&Conductor> {
        match terminal {
            Terminal::Positive => self.positive.as_ref(),
            Terminal::Negative => self.negative.as_ref(),
            Terminal::Neutral => self.neutral.as_ref(),
        }
    }

    pub fn get_mut(&mut self, terminal: Terminal) -> Option<&mut Conductor> {
        match terminal {
            Terminal::Positive => self.positive.as_mut(),
            Terminal::Negative => self.negative.as_mut(),
            Terminal::Neutral => self.neutral.as_mut(),
        }
    }

    /// Present conductors in positive, negative, neutral order.
    pub fn iter(&self) -> impl Iterator<Item = (Terminal, &Conductor)> {
        Terminal::ALL.into_iter().filter_map(|t| self.get(t).map(|c| (t, c)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcBranch {
    pub id: String,
    pub from_bus: DcBusId,
    pub to_bus: DcBusId,
    pub conductors: Conductors,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transformer {
    pub r: f64,
    pub x: f64,
    #[serde(default = "unit_tap")]
    pub tap: f64,
}

fn unit_tap() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reactor {
    pub r: f64,
    pub x: f64,
}

/// Converter loss polynomial `a + b·I + c·I²`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// d-axis (active power / DC voltage) outer control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DAxisControl {
    /// Pole-to-neutral DC voltage held at `u_dc_ref` (negative for negative poles).
    Udc { u_dc_ref: f64 },
    /// Active power at the PCC held at `p_ac_ref`.
    Pac { p_ac_ref: f64 },
    /// Linear P–U_dc characteristic with gain `k_dc`.
    DcDroop { k_dc: f64, u_dc_ref: f64, p_ac_ref: f64 },
}

impl DAxisControl {
    /// Whether this mode provides a DC voltage reference for its layer.
    pub fn controls_dc_voltage(&self) -> bool {
        matches!(self, DAxisControl::Udc { .. } | DAxisControl::DcDroop { .. })
    }

    pub fn p_setpoint(&self) -> Option<f64> {
        match *self {
            DAxisControl::Udc { .. } => None,
            DAxisControl::Pac { p_ac_ref } | DAxisControl::DcDroop { p_ac_ref, .. } => Some(p_ac_ref),
        }
    }
}

/// q-axis (reactive power / AC voltage) outer control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum QAxisControl {
    Uac {
        u_mag_ref: f64,
    },
    Q {
        q_ref: f64,
    },
    /// Linear U_ac–Q characteristic with gain `k_ac`.
    AcDroop {
        k_ac: f64,
        u_mag_ref: f64,
        q_ref: f64,
    },
}

impl QAxisControl {
    pub fn q_setpoint(&self) -> Option<f64> {
        match *self {
            QAxisControl::Uac { .. } => None,
            QAxisControl::Q { q_ref } | QAxisControl::AcDroop { q_ref, .. } => Some(q_ref),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_axis: Option<DAxisControl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_axis: Option<QAxisControl>,
}

impl ControlSpec {
    pub fn new(d_axis: DAxisControl, q_axis: QAxisControl) -> Self {
        Self { d_axis: Some(d_axis), q_axis: Some(q_axis) }
    }
}

/// One pole of a VSC converter station: transformer, filter, phase reactor
/// and converter, connected between an AC bus and a pole terminal plus the
/// neutral terminal of a DC bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterPole {
    pub id: String,
    pub ac_bus: AcBusId,
    pub dc_bus: DcBusId,
    pub polarity: Polarity,
    pub transformer: Transformer,
    #[serde(default)]
    pub filter_susceptance: f64,
    pub reactor: Reactor,
    #[serde(default)]
    pub losses: LossCoefficients,
    pub control: ControlSpec,
    #[serde(default = "in_service", skip_serializing_if = "is_true")]
    pub status: bool,
}

impl ConverterPole {
    pub fn pole_terminal(&self) -> TerminalRef {
        TerminalRef::new(self.dc_bus, self.polarity.terminal())
    }

    pub fn neutral_terminal(&self) -> TerminalRef {
        TerminalRef::new(self.dc_bus, Terminal::Neutral)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCase {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    #[serde(default)]
    pub base: PerUnitBase,
    #[serde(default)]
    pub ac_buses: Vec<AcBus>,
    #[serde(default)]
    pub ac_branches: Vec<AcBranch>,
    #[serde(default)]
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub loads_ac: Vec<AcLoad>,
    #[serde(default)]
    pub loads_dc: Vec<DcLoad>,
    #[serde(default)]
    pub dc_buses: Vec<DcBus>,
    #[serde(default)]
    pub dc_branches: Vec<DcBranch>,
    #[serde(default)]
    pub converters: Vec<ConverterPole>,
}

impl NetworkCase {
    pub fn ac_bus(&self, id: AcBusId) -> Option<&AcBus> {
        self.ac_buses.iter().find(|b| b.id == id)
    }

    pub fn ac_bus_position(&self, id: AcBusId) -> Option<usize> {
        self.ac_buses.iter().position(|b| b.id == id)
    }

    pub fn dc_bus(&self, id: DcBusId) -> Option<&DcBus> {
        self.dc_buses.iter().find(|b| b.id == id)
    }

    pub fn converter(&self, id: &str) -> Option<&ConverterPole> {
        self.converters.iter().find(|c| c.id == id)
    }

    pub fn converter_mut(&mut self, id: &str) -> Option<&mut ConverterPole> {
        self.converters.iter_mut().find(|c| c.id == id)
    }

    pub fn dc_branch(&self, id: &str) -> Option<&DcBranch> {
        self.dc_branches.iter().find(|b| b.id == id)
    }

    pub fn active_converters(&self) -> impl Iterator<Item = &ConverterPole> {
        self.converters.iter().filter(|c| c.status)
    }

    pub fn terminal_exists(&self, t: TerminalRef) -> bool {
        self.dc_bus(t.bus).is_some_and(|b| b.has(t.terminal))
    }

    /// All declared DC terminals, sorted.
    pub fn dc_terminals(&self) -> Vec<TerminalRef> {
        let mut out: Vec<TerminalRef> =
            self.dc_buses.iter().flat_map(|b| b.terminals.iter().map(move |&t| TerminalRef::new(b.id, t))).collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Series admittance `g + jb` of an impedance `r + jx`.
pub fn admittance(r: f64, x: f64) -> (f64, f64) {
    let z2 = r * r + x * x;
    (r / z2, -x / z2)
}
