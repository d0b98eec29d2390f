//! Steady-state power flow for hybrid AC/DC systems with bipolar HVDC grids.
//!
//! The positive, negative and neutral conductors of the DC grid are modeled
//! explicitly. Each converter pole connects one AC bus to one pole terminal
//! and the neutral terminal of a DC bus.

pub mod cases;
pub mod contingency;
pub mod controls;
pub mod formulation;
pub mod io;
pub mod netmodel;
pub mod oracle;
pub mod solver;
