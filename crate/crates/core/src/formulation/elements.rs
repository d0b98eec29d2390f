//! Per-element flow evaluators.

use super::FormulationError;

/// Power flows through a series element with an off-nominal tap on the
/// `i` side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFlow {
    pub p_ij: f64,
    pub q_ij: f64,
    pub p_ji: f64,
    pub q_ji: f64,
}

impl BranchFlow {
    pub fn active_loss(&self) -> f64 {
        self.p_ij + self.p_ji
    }
}

/// Series admittance `g + jb` with tap ratio `t` applied on the `i` side.
/// AC lines and phase reactors use `t = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesElement {
    pub g: f64,
    pub b: f64,
    pub tap: f64,
}

/// Partial derivatives of `(P_ij, Q_ij, P_ji, Q_ji)` (rows) with respect to
/// `(θ_i, U_i, θ_j, U_j)` (columns).
pub type FlowPartials = [[f64; 4]; 4];

impl SeriesElement {
    pub fn new(g: f64, b: f64, tap: f64) -> Self {
        Self { g, b, tap }
    }

    pub fn from_impedance(r: f64, x: f64, tap: f64) -> Self {
        let (g, b) = crate::netmodel::admittance(r, x);
        Self { g, b, tap }
    }

    pub fn flow(&self, u_i: f64, theta_i: f64, u_j: f64, theta_j: f64) -> BranchFlow {
        let (g, b) = (self.g, self.b);
        let a = u_i / self.tap;
        let (s, c) = (theta_i - theta_j).sin_cos();
        let auc = a * u_j * c;
        let aus = a * u_j * s;
        BranchFlow {
            p_ij: g * a * a - g * auc - b * aus,
            q_ij: -b * a * a + b * auc - g * aus,
            p_ji: g * u_j * u_j - g * auc + b * aus,
            q_ji: -b * u_j * u_j + b * auc + g * aus,
        }
    }

    pub fn flow_with_partials(&self, u_i: f64, theta_i: f64, u_j: f64, theta_j: f64) -> (BranchFlow, FlowPartials) {
        let (g, b, t) = (self.g, self.b, self.tap);
        let a = u_i / t;
        let (s, c) = (theta_i - theta_j).sin_cos();
        let flow = self.flow(u_i, theta_i, u_j, theta_j);

        let dp_ij_dth = g * a * u_j * s - b * a * u_j * c;
        let dq_ij_dth = -b * a * u_j * s - g * a * u_j * c;
        let dp_ji_dth = g * a * u_j * s + b * a * u_j * c;
        let dq_ji_dth = -b * a * u_j * s + g * a * u_j * c;

        let d = [
            [dp_ij_dth, (2.0 * g * a - g * u_j * c - b * u_j * s) / t, -dp_ij_dth, -g * a * c - b * a * s],
            [dq_ij_dth, (-2.0 * b * a + b * u_j * c - g * u_j * s) / t, -dq_ij_dth, b * a * c - g * a * s],
            [dp_ji_dth, (-g * u_j * c + b * u_j * s) / t, -dp_ji_dth, 2.0 * g * u_j - g * a * c + b * a * s],
            [dq_ji_dth, (b * u_j * c + g * u_j * s) / t, -dq_ji_dth, -2.0 * b * u_j + b * a * c + g * a * s],
        ];
        (flow, d)
    }
}

/// Flows `(P_ij, Q_ij, P_ji, Q_ji)` of a series element.
pub fn series_element_flow(
    g: f64,
    b: f64,
    tap: f64,
    u_i: f64,
    theta_i: f64,
    u_j: f64,
    theta_j: f64,
) -> (f64, f64, f64, f64) {
    let f = SeriesElement::new(g, b, tap).flow(u_i, theta_i, u_j, theta_j);
    (f.p_ij, f.q_ij, f.p_ji, f.q_ji)
}

/// Reactive power drawn by the filter capacitor, `−b_f·U²`.
pub fn filter_reactive(b_f: f64, u_f_mag: f64) -> f64 {
    -b_f * u_f_mag * u_f_mag
}

/// Conductor current leaving terminal `e` towards `f`.
pub fn dc_branch_current(r: f64, u_e: f64, u_f: f64) -> Result<f64, FormulationError> {
    if r <= 0.0 || r.is_nan() {
        return Err(FormulationError::ZeroResistance(r));
    }
    Ok((u_e - u_f) / r)
}

/// Converter loss polynomial `a + b·I + c·I²`.
pub fn converter_loss(a: f64, b: f64, c: f64, i_mag: f64) -> f64 {
    a + b * i_mag + c * i_mag * i_mag
}

/// Squared current-magnitude consistency `P² + Q² − U²·I²`.
pub fn converter_current_residual(p: f64, q: f64, u_cv_mag: f64, i_mag: f64) -> f64 {
    p * p + q * q - u_cv_mag * u_cv_mag * i_mag * i_mag
}
