//! Quantities derived from a state vector.

use crate::netmodel::{AcBusId, DcBusId, Terminal};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcBusState {
    pub id: AcBusId,
    pub u_mag: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorOutput {
    pub id: String,
    pub bus: AcBusId,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcBranchFlow {
    pub id: String,
    pub from_bus: AcBusId,
    pub to_bus: AcBusId,
    pub in_service: bool,
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
    pub loss: f64,
}

/// Terminal voltages of a DC bus. `None` marks terminals that do not exist
/// or are not energized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DcBusState {
    pub id: DcBusId,
    pub positive: Option<f64>,
    pub negative: Option<f64>,
    pub neutral: Option<f64>,
    pub ground_current: Option<f64>,
}

impl DcBusState {
    pub fn voltage(&self, terminal: Terminal) -> Option<f64> {
        match terminal {
            Terminal::Positive => self.positive,
            Terminal::Negative => self.negative,
            Terminal::Neutral => self.neutral,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DcConductorFlow {
    pub branch: String,
    pub conductor: Terminal,
    pub in_service: bool,
    /// Current from the `from` bus towards the `to` bus.
    pub current: f64,
    pub loss: f64,
}

/// Converter pole operating point. Out-of-service poles report zeros.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConverterState {
    pub id: String,
    pub in_service: bool,
    /// Active power drawn from the AC bus into the transformer.
    pub p_ac: f64,
    pub q_ac: f64,
    pub p_cv_ac: f64,
    pub q_cv_ac: f64,
    /// `U_pole·I_dc`, power drawn from the pole terminal.
    pub p_dc: f64,
    /// `U_neutral·I_dc0`, power drawn from the neutral terminal.
    pub p_dc_neutral: f64,
    pub p_loss: f64,
    pub i_mag: f64,
    pub i_dc: f64,
    pub i_dc_neutral: f64,
    pub u_f: f64,
    pub theta_f: f64,
    pub u_cv: f64,
    pub theta_cv: f64,
    pub transformer_loss: f64,
    pub reactor_loss: f64,
}

impl ConverterState {
    pub fn out_of_service(id: &str) -> Self {
        Self {
            id: id.to_string(),
            in_service: false,
            p_ac: 0.0,
            q_ac: 0.0,
            p_cv_ac: 0.0,
            q_cv_ac: 0.0,
            p_dc: 0.0,
            p_dc_neutral: 0.0,
            p_loss: 0.0,
            i_mag: 0.0,
            i_dc: 0.0,
            i_dc_neutral: 0.0,
            u_f: 0.0,
            theta_f: 0.0,
            u_cv: 0.0,
            theta_cv: 0.0,
            transformer_loss: 0.0,
            reactor_loss: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DcLoadFlow {
    pub id: String,
    pub p: f64,
    pub current: f64,
}

/// System-wide active power balance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerBalance {
    pub generation: f64,
    pub ac_load: f64,
    pub dc_load: f64,
    pub ac_branch_loss: f64,
    pub shunt_loss: f64,
    pub transformer_loss: f64,
    pub reactor_loss: f64,
    pub converter_loss: f64,
    pub dc_line_loss: f64,
    /// Generation minus loads minus all losses.
    pub mismatch: f64,
}

impl PowerBalance {
    pub fn total_loss(&self) -> f64 {
        self.ac_branch_loss
            + self.shunt_loss
            + self.transformer_loss
            + self.reactor_loss
            + self.converter_loss
            + self.dc_line_loss
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkFlows {
    pub ac_buses: Vec<AcBusState>,
    pub generators: Vec<GeneratorOutput>,
    pub ac_branches: Vec<AcBranchFlow>,
    pub dc_buses: Vec<DcBusState>,
    pub dc_conductors: Vec<DcConductorFlow>,
    pub converters: Vec<ConverterState>,
    pub dc_loads: Vec<DcLoadFlow>,
    pub balance: PowerBalance,
}

impl NetworkFlows {
    pub(crate) fn sort(&mut self) {
        self.ac_buses.sort_by_key(|b| b.id);
        self.generators.sort_by(|a, b| a.id.cmp(&b.id));
        self.ac_branches.sort_by(|a, b| a.id.cmp(&b.id));
        self.dc_buses.sort_by_key(|b| b.id);
        self.dc_conductors.sort_by(|a, b| (&a.branch, a.conductor).cmp(&(&b.branch, b.conductor)));
        self.converters.sort_by(|a, b| a.id.cmp(&b.id));
        self.dc_loads.sort_by(|a, b| a.id.cmp(&b.id));
    }

    pub fn converter(&self, id: &str) -> Option<&ConverterState> {
        self.converters.iter().find(|c| c.id == id)
    }

    pub fn ac_bus(&self, id: AcBusId) -> Option<&AcBusState> {
        self.ac_buses.iter().find(|b| b.id == id)
    }

    pub fn dc_bus(&self, id: DcBusId) -> Option<&DcBusState> {
        self.dc_buses.iter().find(|b| b.id == id)
    }

    pub fn dc_voltage(&self, bus: DcBusId, terminal: Terminal) -> Option<f64> {
        self.dc_bus(bus).and_then(|b| b.voltage(terminal))
    }

    pub fn has_dc(&self) -> bool {
        !self.dc_buses.is_empty()
    }
}
