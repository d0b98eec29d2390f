//! Bundled example cases.
//!
//! The control cases run one five-pole, four-bus DC grid under five
//! combinations of converter control modes. Converter setpoints follow the
//! reference operating points; line, transformer, reactor and loss
//! parameters are synthetic.

use crate::io::parse_case;
use crate::netmodel::{
    AcBranch, AcBus, AcLoad, Conductor, Conductors, ControlSpec, ConverterPole, DAxisControl, DcBranch, DcBus,
    Generator, LossCoefficients, NetworkCase, Polarity, QAxisControl, Reactor, Terminal, Transformer,
};

pub const CONTROL_CASE_1: &str = include_str!("../cases/control_case1.json");
pub const CONTROL_CASE_2: &str = include_str!("../cases/control_case2.json");
pub const CONTROL_CASE_3: &str = include_str!("../cases/control_case3.json");
pub const CONTROL_CASE_4: &str = include_str!("../cases/control_case4.json");
pub const CONTROL_CASE_5: &str = include_str!("../cases/control_case5.json");
pub const AC_DROOP_CASE_A: &str = include_str!("../cases/acdroop_case_a.json");
pub const AC_DROOP_CASE_B: &str = include_str!("../cases/acdroop_case_b.json");
pub const AC_DROOP_CASE_C: &str = include_str!("../cases/acdroop_case_c.json");
pub const SYMMETRIC_BIPOLE: &str = include_str!("../cases/symmetric_bipole.json");
pub const TWO_BUS_AC: &str = include_str!("../cases/two_bus_ac.json");

fn load(doc: &str) -> NetworkCase {
    parse_case(doc.as_bytes()).expect("bundled case is valid")
}

/// Four-bus DC grid under control combination `n` (1 to 5).
pub fn control_case(n: usize) -> NetworkCase {
    load(match n {
        1 => CONTROL_CASE_1,
        2 => CONTROL_CASE_2,
        3 => CONTROL_CASE_3,
        4 => CONTROL_CASE_4,
        5 => CONTROL_CASE_5,
        _ => panic!("control cases are numbered 1 to 5"),
    })
}

/// Control case 1 with poles 2P and 2N on one AC bus; `variant` is 'A', 'B' or 'C'.
pub fn ac_droop_case(variant: char) -> NetworkCase {
    load(match variant {
        'A' => AC_DROOP_CASE_A,
        'B' => AC_DROOP_CASE_B,
        'C' => AC_DROOP_CASE_C,
        _ => panic!("AC-droop variants are A, B and C"),
    })
}

pub fn symmetric_bipole() -> NetworkCase {
    load(SYMMETRIC_BIPOLE)
}

pub fn two_bus_ac() -> NetworkCase {
    load(TWO_BUS_AC)
}

/// Every bundled case file, by name.
pub fn all() -> Vec<NetworkCase> {
    let mut v: Vec<NetworkCase> = (1..=5).map(control_case).collect();
    v.extend(['A', 'B', 'C'].map(ac_droop_case));
    v.push(symmetric_bipole());
    v.push(two_bus_ac());
    v
}

/// A chain of `dc_buses` bipolar DC buses with two converter poles per AC
/// island, each island a generator bus plus a converter bus.
///
/// Poles alternate between DC buses round-robin, so the grid gets
/// `islands` stations. The first station holds the DC voltage on both
/// layers; every other station runs in power control with small setpoints
/// whose signs alternate. Even-numbered DC buses are grounded.
pub fn synthetic_chain(islands: usize, dc_buses: usize) -> NetworkCase {
    assert!(islands >= 1 && dc_buses >= 1);
    let (g, b) = crate::netmodel::admittance(0.01, 0.1);
    let mut case = NetworkCase { name: format!("synthetic-{islands}x{dc_buses}"), ..Default::default() };
    for k in 0..dc_buses as u32 {
        case.dc_buses.push(DcBus {
            id: k + 1,
            terminals: vec![Terminal::Positive, Terminal::Negative, Terminal::Neutral],
            grounded: k % 2 == 0,
        });
        if k > 0 {
            let c = Conductor::new(0.01);
            case.dc_branches.push(DcBranch {
                id: format!("D{}-{}", k, k + 1),
                from_bus: k,
                to_bus: k + 1,
                conductors: Conductors { positive: Some(c), negative: Some(c), neutral: Some(c) },
            });
        }
    }
    for s in 0..islands as u32 {
        let (gen_bus, pcc) = (2 * s + 1, 2 * s + 2);
        case.ac_buses.push(AcBus::reference(gen_bus));
        case.ac_buses.push(AcBus::new(pcc));
        case.ac_branches.push(AcBranch {
            id: format!("L{gen_bus}-{pcc}"),
            from_bus: gen_bus,
            to_bus: pcc,
            g,
            b,
            status: true,
        });
        case.generators.push(Generator { id: format!("G{gen_bus}"), bus: gen_bus, p_set: 0.0, u_mag_set: 1.0 });
        case.loads_ac.push(AcLoad { id: format!("D{pcc}"), bus: pcc, p_set: 0.1, q_set: 0.02 });
        let dc_bus = s % dc_buses as u32 + 1;
        let p = if s % 2 == 0 { 0.1 } else { -0.1 } * (1.0 + (s % 5) as f64 * 0.1);
        for polarity in [Polarity::Positive, Polarity::Negative] {
            let d_axis = if s == 0 {
                DAxisControl::Udc { u_dc_ref: if polarity == Polarity::Positive { 1.0 } else { -1.0 } }
            } else {
                DAxisControl::Pac { p_ac_ref: if polarity == Polarity::Positive { p } else { 0.9 * p } }
            };
            case.converters.push(ConverterPole {
                id: format!("C{}{}", s + 1, if polarity == Polarity::Positive { "P" } else { "N" }),
                ac_bus: pcc,
                dc_bus,
                polarity,
                transformer: Transformer { r: 0.001, x: 0.1, tap: 1.0 },
                filter_susceptance: 0.05,
                reactor: Reactor { r: 0.001, x: 0.08 },
                losses: LossCoefficients { a: 0.002, b: 0.003, c: 0.004 },
                control: ControlSpec::new(d_axis, QAxisControl::Q { q_ref: 0.0 }),
                status: true,
            });
        }
    }
    case
}
