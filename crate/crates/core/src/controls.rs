//! Converter outer-control equations in residual form.
//!
//! Every residual here is linear in its measured inputs, so the gradient
//! helpers return constants. `P_ac` and `Q` are the active and reactive power
//! withdrawn from the AC bus at the PCC.

use crate::netmodel::{DAxisControl, Polarity, QAxisControl};

/// d-axis residual.
///
/// * `Udc`: `(U_pole − U_neutral) − U*`
/// * `Pac`: `P_ac − P*`
/// * `DcDroop`: `(P_ac − P*) ± (1/k)((U_pole − U_neutral) − U*)`, `+` for a
///   positive pole and `−` for a negative pole.
pub fn d_axis_residual(
    control: &DAxisControl,
    polarity: Polarity,
    p_ac: f64,
    u_dc_pole: f64,
    u_dc_neutral: f64,
) -> f64 {
    let du = u_dc_pole - u_dc_neutral;
    match *control {
        DAxisControl::Udc { u_dc_ref } => du - u_dc_ref,
        DAxisControl::Pac { p_ac_ref } => p_ac - p_ac_ref,
        DAxisControl::DcDroop { k_dc, u_dc_ref, p_ac_ref } => {
            (p_ac - p_ac_ref) + droop_sign(polarity) / k_dc * (du - u_dc_ref)
        }
    }
}

fn droop_sign(polarity: Polarity) -> f64 {
    match polarity {
        Polarity::Positive => 1.0,
        Polarity::Negative => -1.0,
    }
}

/// Partial derivatives of [`d_axis_residual`] with respect to
/// `(P_ac, U_pole, U_neutral)`.
pub fn d_axis_gradient(control: &DAxisControl, polarity: Polarity) -> [f64; 3] {
    match *control {
        DAxisControl::Udc { .. } => [0.0, 1.0, -1.0],
        DAxisControl::Pac { .. } => [1.0, 0.0, 0.0],
        DAxisControl::DcDroop { k_dc, .. } => {
            let s = droop_sign(polarity) / k_dc;
            [1.0, s, -s]
        }
    }
}

/// q-axis residual.
///
/// * `Uac`: `U_pcc − U*`
/// * `Q`: `Q − Q*`
/// * `AcDroop`: `(Q − Q*) − (1/k)(U_pcc − U*)`
pub fn q_axis_residual(control: &QAxisControl, q: f64, u_mag_pcc: f64) -> f64 {
    match *control {
        QAxisControl::Uac { u_mag_ref } => u_mag_pcc - u_mag_ref,
        QAxisControl::Q { q_ref } => q - q_ref,
        QAxisControl::AcDroop { k_ac, u_mag_ref, q_ref } => (q - q_ref) - (u_mag_pcc - u_mag_ref) / k_ac,
    }
}

/// Partial derivatives of [`q_axis_residual`] with respect to `(Q, U_pcc)`.
pub fn q_axis_gradient(control: &QAxisControl) -> [f64; 2] {
    match *control {
        QAxisControl::Uac { .. } => [0.0, 1.0],
        QAxisControl::Q { .. } => [1.0, 0.0],
        QAxisControl::AcDroop { k_ac, .. } => [1.0, -1.0 / k_ac],
    }
}

/// Grounded neutral: the terminal voltage itself.
pub fn grounding_residual(u_dc_neutral: f64) -> f64 {
    u_dc_neutral
}
