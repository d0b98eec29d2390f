use super::elements::{converter_loss, SeriesElement};
use super::flows::{
    AcBranchFlow, AcBusState, ConverterState, DcBusState, DcConductorFlow, DcLoadFlow, GeneratorOutput, NetworkFlows,
    PowerBalance,
};
use super::registry::{equation_labels, EquationLabel, VarKey, VariableRegistry};
use super::FormulationError;
use crate::controls::{d_axis_gradient, d_axis_residual, q_axis_gradient, q_axis_residual};
use crate::netmodel::{NetworkCase, Polarity, Terminal, TerminalRef};
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;

/// Smallest converter voltage used in the current-magnitude Jacobian row.
const U_CV_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
struct AcBusSlot {
    theta: usize,
    u: usize,
    p_row: usize,
    q_row: usize,
}

#[derive(Debug, Clone, Copy)]
struct PoleSlot {
    conv: usize,
    bus: usize,
    polarity: Polarity,
    theta_f: usize,
    u_f: usize,
    theta_cv: usize,
    u_cv: usize,
    p_cv: usize,
    q_cv: usize,
    i_mag: usize,
    i_dc: usize,
    i_dc0: usize,
    u_pole: usize,
    u_neutral: Option<usize>,
    transformer: SeriesElement,
    reactor: SeriesElement,
    filter_p_row: usize,
    filter_q_row: usize,
    node_p_row: usize,
    node_q_row: usize,
    loss_row: usize,
    current_row: usize,
    loop_row: usize,
    pole_kcl_row: usize,
    neutral_kcl_row: usize,
    d_row: Option<usize>,
    q_row: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct GeneratorSlot {
    gen: usize,
    bus: usize,
    p: Option<usize>,
    q: usize,
    u_row: usize,
}

#[derive(Debug, Clone, Copy)]
struct ConductorSlot {
    branch: usize,
    terminal: Terminal,
    r: f64,
    u_from: Option<usize>,
    u_to: Option<usize>,
    row_from: usize,
    row_to: usize,
}

#[derive(Debug, Clone, Copy)]
struct DcLoadSlot {
    load: usize,
    p: f64,
    u_pole: usize,
    u_neutral: Option<usize>,
    row_pole: usize,
    row_neutral: usize,
}

#[derive(Debug, Clone, Copy)]
struct GroundSlot {
    i: usize,
    kcl_row: usize,
}

/// Value of an optional voltage column; grounded neutrals have none and sit at 0.
#[inline]
fn volt(x: &DVector<f64>, col: Option<usize>) -> f64 {
    col.map_or(0.0, |c| x[c])
}

/// Row/column accumulation target for one evaluation pass.
struct Sink<'m> {
    f: &'m mut DVector<f64>,
    jac: Option<&'m mut DMatrix<f64>>,
}

impl Sink<'_> {
    #[inline]
    fn f(&mut self, row: usize, v: f64) {
        self.f[row] += v;
    }

    #[inline]
    fn d(&mut self, row: usize, col: usize, v: f64) {
        if let Some(j) = self.jac.as_deref_mut() {
            j[(row, col)] += v;
        }
    }

    #[inline]
    fn d_opt(&mut self, row: usize, col: Option<usize>, v: f64) {
        if let Some(c) = col {
            self.d(row, c, v);
        }
    }

    fn flow(&mut self, rows: [Option<usize>; 4], cols: [usize; 4], value: [f64; 4], partials: &[[f64; 4]; 4]) {
        for k in 0..4 {
            if let Some(row) = rows[k] {
                self.f(row, value[k]);
                for c in 0..4 {
                    self.d(row, cols[c], partials[k][c]);
                }
            }
        }
    }
}

/// Worst entry of an analytic-vs-finite-difference Jacobian comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianCheck {
    /// `|J − J_fd| / max(1, |J|, |J_fd|)`, maximized over all entries.
    pub max_rel_error: f64,
    pub equation: EquationLabel,
    pub variable: VarKey,
}

/// The square nonlinear system `F(x) = 0` of one case.
///
/// Holds only immutable case data; evaluation is reentrant.
#[derive(Debug, Clone)]
pub struct ResidualSystem<'a> {
    case: &'a NetworkCase,
    registry: VariableRegistry,
    labels: Vec<EquationLabel>,
    ac: Vec<AcBusSlot>,
    shunts: Vec<(usize, f64, f64)>,
    ac_loads: Vec<(usize, f64, f64)>,
    ac_branches: Vec<(usize, usize, usize, SeriesElement)>,
    generators: Vec<GeneratorSlot>,
    references: Vec<(usize, usize, f64)>,
    poles: Vec<PoleSlot>,
    conductors: Vec<ConductorSlot>,
    dc_loads: Vec<DcLoadSlot>,
    grounds: Vec<GroundSlot>,
}

impl<'a> ResidualSystem<'a> {
    pub fn new(case: &'a NetworkCase, registry: VariableRegistry) -> Result<Self, FormulationError> {
        let labels = equation_labels(case);
        if labels.len() != registry.len() {
            return Err(FormulationError::DimensionMismatch { counts: Vec::new() });
        }
        let rows: HashMap<&EquationLabel, usize> = labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
        let row = |l: EquationLabel| -> Result<usize, FormulationError> {
            rows.get(&l).copied().ok_or_else(|| FormulationError::MissingEquation(l.to_string()))
        };
        let col = |k: VarKey| -> Result<usize, FormulationError> {
            registry.index_of(&k).ok_or_else(|| FormulationError::MissingVariable(k.to_string()))
        };
        let grounded = super::registry::grounded_neutrals(case);
        let volt_col = |t: TerminalRef| -> Result<Option<usize>, FormulationError> {
            if grounded.contains(&t) {
                Ok(None)
            } else {
                col(VarKey::DcVoltage(t)).map(Some)
            }
        };
        let bus_pos = |id: u32| -> Result<usize, FormulationError> {
            case.ac_bus_position(id).ok_or_else(|| FormulationError::MissingVariable(format!("ac bus {id}")))
        };

        let mut ac = Vec::with_capacity(case.ac_buses.len());
        let mut shunts = Vec::new();
        let mut references = Vec::new();
        for (k, bus) in case.ac_buses.iter().enumerate() {
            let slot = AcBusSlot {
                theta: col(VarKey::AcAngle(bus.id))?,
                u: col(VarKey::AcMagnitude(bus.id))?,
                p_row: row(EquationLabel::AcActiveBalance(bus.id))?,
                q_row: row(EquationLabel::AcReactiveBalance(bus.id))?,
            };
            if bus.g_shunt != 0.0 || bus.b_shunt != 0.0 {
                shunts.push((k, bus.g_shunt, bus.b_shunt));
            }
            if bus.is_reference {
                references.push((row(EquationLabel::ReferenceAngle(bus.id))?, slot.theta, bus.reference_angle));
            }
            ac.push(slot);
        }
        let mut ac_loads = Vec::new();
        for l in &case.loads_ac {
            ac_loads.push((bus_pos(l.bus)?, l.p_set, l.q_set));
        }
        let mut ac_branches = Vec::new();
        for (k, br) in case.ac_branches.iter().enumerate() {
            if br.status {
                ac_branches.push((k, bus_pos(br.from_bus)?, bus_pos(br.to_bus)?, SeriesElement::new(br.g, br.b, 1.0)));
            }
        }
        let mut generators = Vec::new();
        for (k, g) in case.generators.iter().enumerate() {
            let bus = bus_pos(g.bus)?;
            let is_ref = case.ac_buses[bus].is_reference;
            generators.push(GeneratorSlot {
                gen: k,
                bus,
                p: if is_ref { Some(col(VarKey::GeneratorP(g.id.clone()))?) } else { None },
                q: col(VarKey::GeneratorQ(g.id.clone()))?,
                u_row: row(EquationLabel::GeneratorVoltage(g.id.clone()))?,
            });
        }

        let mut poles = Vec::new();
        for (k, cv) in case.converters.iter().enumerate() {
            if !cv.status {
                continue;
            }
            let id = || cv.id.clone();
            let pole_t = cv.pole_terminal();
            let neutral_t = cv.neutral_terminal();
            poles.push(PoleSlot {
                conv: k,
                bus: bus_pos(cv.ac_bus)?,
                polarity: cv.polarity,
                theta_f: col(VarKey::FilterAngle(id()))?,
                u_f: col(VarKey::FilterMagnitude(id()))?,
                theta_cv: col(VarKey::ConverterAngle(id()))?,
                u_cv: col(VarKey::ConverterMagnitude(id()))?,
                p_cv: col(VarKey::ConverterP(id()))?,
                q_cv: col(VarKey::ConverterQ(id()))?,
                i_mag: col(VarKey::ConverterCurrent(id()))?,
                i_dc: col(VarKey::PoleCurrent(id()))?,
                i_dc0: col(VarKey::NeutralCurrent(id()))?,
                u_pole: col(VarKey::DcVoltage(pole_t))?,
                u_neutral: volt_col(neutral_t)?,
                transformer: SeriesElement::from_impedance(cv.transformer.r, cv.transformer.x, cv.transformer.tap),
                reactor: SeriesElement::from_impedance(cv.reactor.r, cv.reactor.x, 1.0),
                filter_p_row: row(EquationLabel::FilterActiveBalance(id()))?,
                filter_q_row: row(EquationLabel::FilterReactiveBalance(id()))?,
                node_p_row: row(EquationLabel::ConverterNodeActive(id()))?,
                node_q_row: row(EquationLabel::ConverterNodeReactive(id()))?,
                loss_row: row(EquationLabel::ConverterLossBalance(id()))?,
                current_row: row(EquationLabel::CurrentMagnitude(id()))?,
                loop_row: row(EquationLabel::PoleCurrentLoop(id()))?,
                pole_kcl_row: row(EquationLabel::DcCurrentBalance(pole_t))?,
                neutral_kcl_row: row(EquationLabel::DcCurrentBalance(neutral_t))?,
                d_row: rows.get(&EquationLabel::DAxisControl(id())).copied(),
                q_row: rows.get(&EquationLabel::QAxisControl(id())).copied(),
            });
        }

        let energized = crate::netmodel::energized_terminals(case);
        let mut conductors = Vec::new();
        for (k, br) in case.dc_branches.iter().enumerate() {
            for (t, c) in br.conductors.iter() {
                if !c.status {
                    continue;
                }
                let from = TerminalRef::new(br.from_bus, t);
                let to = TerminalRef::new(br.to_bus, t);
                if !energized.contains(&from) {
                    continue;
                }
                if c.r <= 0.0 {
                    return Err(FormulationError::ZeroResistance(c.r));
                }
                conductors.push(ConductorSlot {
                    branch: k,
                    terminal: t,
                    r: c.r,
                    u_from: volt_col(from)?,
                    u_to: volt_col(to)?,
                    row_from: row(EquationLabel::DcCurrentBalance(from))?,
                    row_to: row(EquationLabel::DcCurrentBalance(to))?,
                });
            }
        }
        let mut dc_loads = Vec::new();
        for (k, l) in case.loads_dc.iter().enumerate() {
            let pole_t = TerminalRef::new(l.dc_bus, l.polarity.terminal());
            let neutral_t = TerminalRef::new(l.dc_bus, Terminal::Neutral);
            if !energized.contains(&pole_t) {
                continue;
            }
            dc_loads.push(DcLoadSlot {
                load: k,
                p: l.p_set,
                u_pole: col(VarKey::DcVoltage(pole_t))?,
                u_neutral: volt_col(neutral_t)?,
                row_pole: row(EquationLabel::DcCurrentBalance(pole_t))?,
                row_neutral: row(EquationLabel::DcCurrentBalance(neutral_t))?,
            });
        }
        let mut grounds = Vec::new();
        for &t in &grounded {
            grounds.push(GroundSlot {
                i: col(VarKey::GroundCurrent(t.bus))?,
                kcl_row: row(EquationLabel::DcCurrentBalance(t))?,
            });
        }

        Ok(Self {
            case,
            registry,
            labels,
            ac,
            shunts,
            ac_loads,
            ac_branches,
            generators,
            references,
            poles,
            conductors,
            dc_loads,
            grounds,
        })
    }

    pub fn case(&self) -> &NetworkCase {
        self.case
    }

    pub fn registry(&self) -> &VariableRegistry {
        &self.registry
    }

    pub fn labels(&self) -> &[EquationLabel] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.registry.len()
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<(), FormulationError> {
        if x.len() != self.dim() {
            return Err(FormulationError::DimensionMismatch { counts: Vec::new() });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(FormulationError::NonFiniteState(self.registry.key(i).to_string()));
        }
        Ok(())
    }

    /// Residual vector `F(x)`.
    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>, FormulationError> {
        self.check_state(x)?;
        let mut f = DVector::zeros(self.dim());
        self.assemble(x, &mut Sink { f: &mut f, jac: None });
        Ok(f)
    }

    /// Dense analytic Jacobian `∂F/∂x`.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, FormulationError> {
        Ok(self.evaluate_with_jacobian(x)?.1)
    }

    pub fn evaluate_with_jacobian(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), FormulationError> {
        self.check_state(x)?;
        let n = self.dim();
        let mut f = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, n);
        self.assemble(x, &mut Sink { f: &mut f, jac: Some(&mut j) });
        Ok((f, j))
    }

    fn assemble(&self, x: &DVector<f64>, s: &mut Sink<'_>) {
        let case = self.case;

        for &(k, g, b) in &self.shunts {
            let bus = self.ac[k];
            let u = x[bus.u];
            s.f(bus.p_row, g * u * u);
            s.d(bus.p_row, bus.u, 2.0 * g * u);
            s.f(bus.q_row, -b * u * u);
            s.d(bus.q_row, bus.u, -2.0 * b * u);
        }
        for &(k, p, q) in &self.ac_loads {
            s.f(self.ac[k].p_row, p);
            s.f(self.ac[k].q_row, q);
        }
        for g in &self.generators {
            let bus = self.ac[g.bus];
            let spec = &case.generators[g.gen];
            match g.p {
                Some(col) => {
                    s.f(bus.p_row, -x[col]);
                    s.d(bus.p_row, col, -1.0);
                }
                None => s.f(bus.p_row, -spec.p_set),
            }
            s.f(bus.q_row, -x[g.q]);
            s.d(bus.q_row, g.q, -1.0);
            s.f(g.u_row, x[bus.u] - spec.u_mag_set);
            s.d(g.u_row, bus.u, 1.0);
        }
        for &(row, col, angle) in &self.references {
            s.f(row, x[col] - angle);
            s.d(row, col, 1.0);
        }
        for &(_, i, j, el) in &self.ac_branches {
            let (bi, bj) = (self.ac[i], self.ac[j]);
            let (fl, d) = el.flow_with_partials(x[bi.u], x[bi.theta], x[bj.u], x[bj.theta]);
            s.flow(
                [Some(bi.p_row), Some(bi.q_row), Some(bj.p_row), Some(bj.q_row)],
                [bi.theta, bi.u, bj.theta, bj.u],
                [fl.p_ij, fl.q_ij, fl.p_ji, fl.q_ji],
                &d,
            );
        }

        for p in &self.poles {
            let cv = &case.converters[p.conv];
            let bus = self.ac[p.bus];

            // Transformer: AC bus (tap side) to filter node.
            let tf_cols = [bus.theta, bus.u, p.theta_f, p.u_f];
            let (tf, dtf) = p.transformer.flow_with_partials(x[bus.u], x[bus.theta], x[p.u_f], x[p.theta_f]);
            s.flow(
                [Some(bus.p_row), Some(bus.q_row), Some(p.filter_p_row), Some(p.filter_q_row)],
                tf_cols,
                [tf.p_ij, tf.q_ij, tf.p_ji, tf.q_ji],
                &dtf,
            );

            // Phase reactor: filter node to converter node.
            let (pr, dpr) = p.reactor.flow_with_partials(x[p.u_f], x[p.theta_f], x[p.u_cv], x[p.theta_cv]);
            s.flow(
                [Some(p.filter_p_row), Some(p.filter_q_row), Some(p.node_p_row), Some(p.node_q_row)],
                [p.theta_f, p.u_f, p.theta_cv, p.u_cv],
                [pr.p_ij, pr.q_ij, pr.p_ji, pr.q_ji],
                &dpr,
            );

            let bf = cv.filter_susceptance;
            let uf = x[p.u_f];
            s.f(p.filter_q_row, -bf * uf * uf);
            s.d(p.filter_q_row, p.u_f, -2.0 * bf * uf);

            // Power entering the converter equals power leaving the node.
            s.f(p.node_p_row, x[p.p_cv]);
            s.d(p.node_p_row, p.p_cv, 1.0);
            s.f(p.node_q_row, x[p.q_cv]);
            s.d(p.node_q_row, p.q_cv, 1.0);

            let loss = cv.losses;
            let (i_mag, i_dc, i_dc0) = (x[p.i_mag], x[p.i_dc], x[p.i_dc0]);
            let (u_pole, u_n) = (x[p.u_pole], volt(x, p.u_neutral));
            s.f(p.loss_row, x[p.p_cv] + u_pole * i_dc + u_n * i_dc0 - converter_loss(loss.a, loss.b, loss.c, i_mag));
            s.d(p.loss_row, p.p_cv, 1.0);
            s.d(p.loss_row, p.u_pole, i_dc);
            s.d(p.loss_row, p.i_dc, u_pole);
            s.d_opt(p.loss_row, p.u_neutral, i_dc0);
            s.d(p.loss_row, p.i_dc0, u_n);
            s.d(p.loss_row, p.i_mag, -(loss.b + 2.0 * loss.c * i_mag));

            let (pc, qc, ucv) = (x[p.p_cv], x[p.q_cv], x[p.u_cv]);
            s.f(p.current_row, pc * pc + qc * qc - ucv * ucv * i_mag * i_mag);
            let ucv_j = if ucv.abs() < U_CV_FLOOR { U_CV_FLOOR.copysign(ucv) } else { ucv };
            s.d(p.current_row, p.p_cv, 2.0 * pc);
            s.d(p.current_row, p.q_cv, 2.0 * qc);
            s.d(p.current_row, p.u_cv, -2.0 * ucv_j * i_mag * i_mag);
            s.d(p.current_row, p.i_mag, -2.0 * ucv_j * ucv_j * i_mag);

            s.f(p.loop_row, i_dc + i_dc0);
            s.d(p.loop_row, p.i_dc, 1.0);
            s.d(p.loop_row, p.i_dc0, 1.0);

            s.f(p.pole_kcl_row, i_dc);
            s.d(p.pole_kcl_row, p.i_dc, 1.0);
            s.f(p.neutral_kcl_row, i_dc0);
            s.d(p.neutral_kcl_row, p.i_dc0, 1.0);

            if let (Some(row), Some(ctrl)) = (p.d_row, cv.control.d_axis.as_ref()) {
                s.f(row, d_axis_residual(ctrl, p.polarity, tf.p_ij, u_pole, u_n));
                let [gp, gup, gun] = d_axis_gradient(ctrl, p.polarity);
                if gp != 0.0 {
                    for c in 0..4 {
                        s.d(row, tf_cols[c], gp * dtf[0][c]);
                    }
                }
                s.d(row, p.u_pole, gup);
                s.d_opt(row, p.u_neutral, gun);
            }
            if let (Some(row), Some(ctrl)) = (p.q_row, cv.control.q_axis.as_ref()) {
                s.f(row, q_axis_residual(ctrl, tf.q_ij, x[bus.u]));
                let [gq, gu] = q_axis_gradient(ctrl);
                if gq != 0.0 {
                    for c in 0..4 {
                        s.d(row, tf_cols[c], gq * dtf[1][c]);
                    }
                }
                s.d(row, bus.u, gu);
            }
        }

        for c in &self.conductors {
            let g = 1.0 / c.r;
            let i = (volt(x, c.u_from) - volt(x, c.u_to)) * g;
            s.f(c.row_from, i);
            s.d_opt(c.row_from, c.u_from, g);
            s.d_opt(c.row_from, c.u_to, -g);
            s.f(c.row_to, -i);
            s.d_opt(c.row_to, c.u_from, -g);
            s.d_opt(c.row_to, c.u_to, g);
        }
        for l in &self.dc_loads {
            // Constant power between pole and neutral: I = P / (U_pole − U_neutral).
            let du = x[l.u_pole] - volt(x, l.u_neutral);
            let i = l.p / du;
            let di = -l.p / (du * du);
            s.f(l.row_pole, i);
            s.d(l.row_pole, l.u_pole, di);
            s.d_opt(l.row_pole, l.u_neutral, -di);
            s.f(l.row_neutral, -i);
            s.d(l.row_neutral, l.u_pole, -di);
            s.d_opt(l.row_neutral, l.u_neutral, di);
        }
        for gr in &self.grounds {
            s.f(gr.kcl_row, x[gr.i]);
            s.d(gr.kcl_row, gr.i, 1.0);
        }
    }

    /// Central-difference Jacobian, column by column, using only
    /// [`evaluate`](Self::evaluate).
    pub fn finite_difference_jacobian(&self, x: &DVector<f64>, step: f64) -> Result<DMatrix<f64>, FormulationError> {
        let n = self.dim();
        let mut jac = DMatrix::zeros(n, n);
        let mut xp = x.clone();
        for c in 0..n {
            let orig = xp[c];
            xp[c] = orig + step;
            let fp = self.evaluate(&xp)?;
            xp[c] = orig - step;
            let fm = self.evaluate(&xp)?;
            xp[c] = orig;
            jac.set_column(c, &((fp - fm) / (2.0 * step)));
        }
        Ok(jac)
    }

    /// Compares the analytic Jacobian with central differences at `x`.
    pub fn check_jacobian(&self, x: &DVector<f64>, step: f64) -> Result<JacobianCheck, FormulationError> {
        let analytic = self.jacobian(x)?;
        let numeric = self.finite_difference_jacobian(x, step)?;
        let mut worst = (0.0f64, 0usize, 0usize);
        for r in 0..self.dim() {
            for c in 0..self.dim() {
                let (a, f) = (analytic[(r, c)], numeric[(r, c)]);
                let err = (a - f).abs() / 1.0f64.max(a.abs()).max(f.abs());
                if err > worst.0 {
                    worst = (err, r, c);
                }
            }
        }
        Ok(JacobianCheck {
            max_rel_error: worst.0,
            equation: self.labels.get(worst.1).cloned().unwrap_or(EquationLabel::AcActiveBalance(0)),
            variable: self.registry.keys().get(worst.2).cloned().unwrap_or(VarKey::AcAngle(0)),
        })
    }

    /// Flows, losses and voltages evaluated from a state.
    pub fn flows(&self, x: &DVector<f64>) -> NetworkFlows {
        let case = self.case;
        let v = |k: &VarKey| self.registry.index_of(k).map(|i| x[i]);

        let ac_buses = case
            .ac_buses
            .iter()
            .zip(&self.ac)
            .map(|(b, slot)| AcBusState { id: b.id, u_mag: x[slot.u], theta: x[slot.theta] })
            .collect();

        let generators = self
            .generators
            .iter()
            .map(|g| {
                let spec = &case.generators[g.gen];
                GeneratorOutput { id: spec.id.clone(), bus: spec.bus, p: g.p.map_or(spec.p_set, |c| x[c]), q: x[g.q] }
            })
            .collect();

        let mut ac_branches: Vec<AcBranchFlow> = case
            .ac_branches
            .iter()
            .map(|br| AcBranchFlow {
                id: br.id.clone(),
                from_bus: br.from_bus,
                to_bus: br.to_bus,
                in_service: false,
                p_from: 0.0,
                q_from: 0.0,
                p_to: 0.0,
                q_to: 0.0,
                loss: 0.0,
            })
            .collect();
        let mut branch_loss = 0.0;
        for &(k, i, j, el) in &self.ac_branches {
            let (bi, bj) = (self.ac[i], self.ac[j]);
            let fl = el.flow(x[bi.u], x[bi.theta], x[bj.u], x[bj.theta]);
            let out = &mut ac_branches[k];
            out.in_service = true;
            out.p_from = fl.p_ij;
            out.q_from = fl.q_ij;
            out.p_to = fl.p_ji;
            out.q_to = fl.q_ji;
            out.loss = fl.active_loss();
            branch_loss += out.loss;
        }

        let shunt_loss: f64 = self.shunts.iter().map(|&(k, g, _)| g * x[self.ac[k].u].powi(2)).sum();

        let mut converters: Vec<ConverterState> =
            case.converters.iter().map(|cv| ConverterState::out_of_service(&cv.id)).collect();
        let (mut tf_loss, mut pr_loss, mut cv_loss) = (0.0, 0.0, 0.0);
        for p in &self.poles {
            let cv = &case.converters[p.conv];
            let bus = self.ac[p.bus];
            let tf = p.transformer.flow(x[bus.u], x[bus.theta], x[p.u_f], x[p.theta_f]);
            let pr = p.reactor.flow(x[p.u_f], x[p.theta_f], x[p.u_cv], x[p.theta_cv]);
            let l = cv.losses;
            let state = ConverterState {
                id: cv.id.clone(),
                in_service: true,
                p_ac: tf.p_ij,
                q_ac: tf.q_ij,
                p_cv_ac: x[p.p_cv],
                q_cv_ac: x[p.q_cv],
                p_dc: x[p.u_pole] * x[p.i_dc],
                p_dc_neutral: volt(x, p.u_neutral) * x[p.i_dc0],
                p_loss: converter_loss(l.a, l.b, l.c, x[p.i_mag]),
                i_mag: x[p.i_mag],
                i_dc: x[p.i_dc],
                i_dc_neutral: x[p.i_dc0],
                u_f: x[p.u_f],
                theta_f: x[p.theta_f],
                u_cv: x[p.u_cv],
                theta_cv: x[p.theta_cv],
                transformer_loss: tf.active_loss(),
                reactor_loss: pr.active_loss(),
            };
            tf_loss += state.transformer_loss;
            pr_loss += state.reactor_loss;
            cv_loss += state.p_loss;
            converters[p.conv] = state;
        }

        let dc_buses = case
            .dc_buses
            .iter()
            .map(|b| {
                let ground = v(&VarKey::GroundCurrent(b.id));
                let at = |t: Terminal| match (t, ground) {
                    (Terminal::Neutral, Some(_)) => Some(0.0),
                    _ => v(&VarKey::DcVoltage(TerminalRef::new(b.id, t))),
                };
                DcBusState {
                    id: b.id,
                    positive: at(Terminal::Positive),
                    negative: at(Terminal::Negative),
                    neutral: at(Terminal::Neutral),
                    ground_current: ground,
                }
            })
            .collect();

        let mut dc_conductors = Vec::new();
        for br in &case.dc_branches {
            for (t, c) in br.conductors.iter() {
                dc_conductors.push(DcConductorFlow {
                    branch: br.id.clone(),
                    conductor: t,
                    in_service: false,
                    current: 0.0,
                    loss: 0.0,
                });
                let _ = c;
            }
        }
        let mut dc_line_loss = 0.0;
        for c in &self.conductors {
            let i = (volt(x, c.u_from) - volt(x, c.u_to)) / c.r;
            let id = &case.dc_branches[c.branch].id;
            if let Some(out) = dc_conductors.iter_mut().find(|o| &o.branch == id && o.conductor == c.terminal) {
                out.in_service = true;
                out.current = i;
                out.loss = c.r * i * i;
                dc_line_loss += out.loss;
            }
        }

        let mut dc_loads: Vec<DcLoadFlow> =
            case.loads_dc.iter().map(|l| DcLoadFlow { id: l.id.clone(), p: 0.0, current: 0.0 }).collect();
        for l in &self.dc_loads {
            let du = x[l.u_pole] - volt(x, l.u_neutral);
            dc_loads[l.load].p = l.p;
            dc_loads[l.load].current = l.p / du;
        }

        let generation: f64 = self.generators.iter().map(|g| g.p.map_or(case.generators[g.gen].p_set, |c| x[c])).sum();
        let ac_load: f64 = self.ac_loads.iter().map(|l| l.1).sum();
        let dc_load: f64 = self.dc_loads.iter().map(|l| l.p).sum();
        let losses = branch_loss + shunt_loss + tf_loss + pr_loss + cv_loss + dc_line_loss;
        let balance = PowerBalance {
            generation,
            ac_load,
            dc_load,
            ac_branch_loss: branch_loss,
            shunt_loss,
            transformer_loss: tf_loss,
            reactor_loss: pr_loss,
            converter_loss: cv_loss,
            dc_line_loss,
            mismatch: generation - ac_load - dc_load - losses,
        };

        let mut flows =
            NetworkFlows { ac_buses, generators, ac_branches, dc_buses, dc_conductors, converters, dc_loads, balance };
        flows.sort();
        flows
    }
}

/// `F(x)` for `case` under `registry`.
pub fn assemble_residual(
    case: &NetworkCase,
    registry: &VariableRegistry,
    x: &DVector<f64>,
) -> Result<DVector<f64>, FormulationError> {
    ResidualSystem::new(case, registry.clone())?.evaluate(x)
}

/// Dense `∂F/∂x` for `case` under `registry`.
pub fn assemble_jacobian(
    case: &NetworkCase,
    registry: &VariableRegistry,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>, FormulationError> {
    ResidualSystem::new(case, registry.clone())?.jacobian(x)
}
