//! Solver results against the independent reference solutions.

mod common;

use bipf::cases;
use bipf::solver::{solve, SolverOptions};
use common::dc_oracle_voltages;

#[test]
fn dc_voltages_match_linear_oracle() {
    let mut all = cases::all();
    all.push(cases::synthetic_chain(6, 4));
    for case in all.iter().filter(|c| !c.dc_buses.is_empty()) {
        let sol = solve(case, &SolverOptions::default(), None).unwrap();
        for (t, u) in dc_oracle_voltages(case, &sol) {
            let s = sol.flows.dc_voltage(t.bus, t.terminal).unwrap();
            assert!((u - s).abs() <= 1e-10, "{} {t}: {u} vs {s}", case.name);
        }
    }
}
