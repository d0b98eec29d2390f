//! Helpers shared by the oracle and acceptance targets.

use bipf::netmodel::{NetworkCase, Terminal, TerminalRef};
use bipf::oracle::{solve_dc_linear, Resistor};
use bipf::solver::Solution;
use std::collections::BTreeMap;

/// Rebuilds the DC conductor network from case data, treats converter and
/// DC-load currents from the solution as fixed injections, and pins one
/// solved voltage per conductor layer piece.
pub fn dc_oracle_voltages(case: &NetworkCase, sol: &Solution) -> BTreeMap<TerminalRef, f64> {
    let mut nodes: Vec<TerminalRef> = Vec::new();
    for b in &case.dc_buses {
        for &t in &b.terminals {
            if sol.flows.dc_voltage(b.id, t).is_some() {
                nodes.push(TerminalRef::new(b.id, t));
            }
        }
    }
    let index = |t: TerminalRef| nodes.iter().position(|n| *n == t);
    let mut resistors = Vec::new();
    for br in &case.dc_branches {
        for t in Terminal::ALL {
            if let Some(c) = br.conductors.get(t).filter(|c| c.status) {
                if let (Some(a), Some(b)) =
                    (index(TerminalRef::new(br.from_bus, t)), index(TerminalRef::new(br.to_bus, t)))
                {
                    resistors.push(Resistor { from: a, to: b, r: c.r });
                }
            }
        }
    }
    let mut inj = vec![0.0; nodes.len()];
    for cv in case.converters.iter().filter(|c| c.status) {
        let st = sol.flows.converter(&cv.id).unwrap();
        // Converter currents flow from the terminal into the converter.
        inj[index(TerminalRef::new(cv.dc_bus, cv.polarity.terminal())).unwrap()] -= st.i_dc;
        inj[index(TerminalRef::new(cv.dc_bus, Terminal::Neutral)).unwrap()] -= st.i_dc_neutral;
    }
    for l in &case.loads_dc {
        let i = sol.flows.dc_loads.iter().find(|d| d.id == l.id).unwrap().current;
        inj[index(TerminalRef::new(l.dc_bus, l.polarity.terminal())).unwrap()] -= i;
        inj[index(TerminalRef::new(l.dc_bus, Terminal::Neutral)).unwrap()] += i;
    }
    // Grounded neutrals sit at zero and absorb the ground currents. Every
    // other connected piece of a layer gets its first node pinned at the
    // solved voltage.
    let mut slack: Vec<(usize, f64)> = case
        .dc_buses
        .iter()
        .filter(|b| b.grounded)
        .filter_map(|b| index(TerminalRef::new(b.id, Terminal::Neutral)))
        .map(|i| (i, 0.0))
        .collect();
    let mut seen = vec![false; nodes.len()];
    let starts: Vec<usize> = slack.iter().map(|s| s.0).chain(0..nodes.len()).collect();
    for start in starts {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(n) = stack.pop() {
            for r in &resistors {
                for (a, b) in [(r.from, r.to), (r.to, r.from)] {
                    if a == n && !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
        }
        if !slack.iter().any(|s| s.0 == start) {
            let t = nodes[start];
            slack.push((start, sol.flows.dc_voltage(t.bus, t.terminal).unwrap()));
        }
    }
    let u = solve_dc_linear(nodes.len(), &resistors, &inj, &slack).unwrap();
    nodes.into_iter().zip(u).collect()
}

#[allow(dead_code)]
/// Largest deviation between solved DC terminal voltages and the oracle.
pub fn dc_oracle_error(case: &NetworkCase, sol: &Solution) -> f64 {
    dc_oracle_voltages(case, sol)
        .into_iter()
        .map(|(t, u)| (u - sol.flows.dc_voltage(t.bus, t.terminal).unwrap()).abs())
        .fold(0.0, f64::max)
}
