//! Unified residual system of the hybrid AC/DC network.
//!
//! Sign conventions: converter DC currents flow from the DC terminal into
//! the converter, `P_cv_ac` flows from the phase reactor into the converter,
//! and the PCC flow is measured from the AC bus into the transformer.

mod elements;
mod flows;
mod registry;
mod system;

pub use elements::{
    converter_current_residual, converter_loss, dc_branch_current, filter_reactive, series_element_flow, BranchFlow,
    FlowPartials, SeriesElement,
};
pub use flows::{
    AcBranchFlow, AcBusState, ConverterState, DcBusState, DcConductorFlow, DcLoadFlow, GeneratorOutput, NetworkFlows,
    PowerBalance,
};
pub use registry::{build_registry, equation_labels, Category, CategoryCount, EquationLabel, VarKey, VariableRegistry};
pub use system::{assemble_jacobian, assemble_residual, JacobianCheck, ResidualSystem};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulationError {
    #[error("system is not square: {}", format_counts(.counts))]
    DimensionMismatch { counts: Vec<CategoryCount> },
    #[error("state entry {0} is not finite")]
    NonFiniteState(String),
    #[error("conductor resistance must be positive, got {0}")]
    ZeroResistance(f64),
    #[error("no unknown {0} in the registry")]
    MissingVariable(String),
    #[error("no equation {0} for this case")]
    MissingEquation(String),
}

fn format_counts(counts: &[CategoryCount]) -> String {
    if counts.is_empty() {
        return "state length does not match the registry".to_string();
    }
    counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; ")
}
