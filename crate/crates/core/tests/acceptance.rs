//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use bipf::cases;
use bipf::contingency::{run_contingency, ContingencyReport, Outage, QuantityKind};
use bipf::controls::{d_axis_residual, q_axis_residual};
use bipf::formulation::{build_registry, ResidualSystem};
use bipf::netmodel::{DAxisControl, NetworkCase, QAxisControl, Terminal};
use bipf::oracle::solve_two_bus_ac;
use bipf::solver::{flat_start, solve, Solution, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn solved(case: &NetworkCase) -> Result<Solution, String> {
    solve(case, &SolverOptions::default(), None).map_err(|e| format!("{}: {e}", case.name))
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn d_control(case: &NetworkCase, id: &str) -> Result<DAxisControl, String> {
    case.converter(id).and_then(|c| c.control.d_axis).ok_or_else(|| format!("{id} has no d-axis control"))
}

fn q_control(case: &NetworkCase, id: &str) -> Result<QAxisControl, String> {
    case.converter(id).and_then(|c| c.control.q_axis).ok_or_else(|| format!("{id} has no q-axis control"))
}

/// Largest d/q control residual over all in-service poles.
fn worst_control_residual(case: &NetworkCase, sol: &Solution) -> f64 {
    let mut worst = 0.0f64;
    for cv in case.active_converters() {
        let st = sol.flows.converter(&cv.id).unwrap();
        let up = sol.flows.dc_voltage(cv.dc_bus, cv.polarity.terminal()).unwrap();
        let un = sol.flows.dc_voltage(cv.dc_bus, Terminal::Neutral).unwrap();
        let u = sol.flows.ac_bus(cv.ac_bus).unwrap().u_mag;
        if let Some(d) = &cv.control.d_axis {
            worst = worst.max(d_axis_residual(d, cv.polarity, st.p_ac, up, un).abs());
        }
        if let Some(q) = &cv.control.q_axis {
            worst = worst.max(q_axis_residual(q, st.q_ac, u).abs());
        }
    }
    worst
}

fn droop_data_consistency() -> Outcome {
    let case3 = cases::control_case(3);
    let droop = d_control(&case3, "2P")?;
    ensure(
        matches!(droop, DAxisControl::DcDroop { k_dc, u_dc_ref, p_ac_ref }
        if k_dc == 0.1 && u_dc_ref == 1.0 && p_ac_ref == -0.76070),
        || format!("2P control {droop:?}"),
    )?;
    let polarity = case3.converter("2P").unwrap().polarity;
    let r_dc = d_axis_residual(&droop, polarity, -0.61749, 0.985679, 0.0).abs();
    ensure(r_dc <= 5e-5, || format!("dc droop residual {r_dc:e}"))?;

    let case_c = cases::ac_droop_case('C');
    let mut worst_ac = 0.0f64;
    for (id, q) in [("2P", -0.0973), ("2N", -0.2473)] {
        worst_ac = worst_ac.max(q_axis_residual(&q_control(&case_c, id)?, q, 1.04014).abs());
    }
    ensure(worst_ac <= 1e-3, || format!("ac droop residual {worst_ac:e}"))?;
    Ok(format!("dc droop {r_dc:.1e}, ac droop {worst_ac:.1e}"))
}

fn control_cases_solve() -> Outcome {
    let mut slowest = Duration::ZERO;
    let mut most_iter = 0;
    let mut worst_ctrl = 0.0f64;
    for n in 1..=5 {
        let case = cases::control_case(n);
        let t0 = Instant::now();
        let sol = solved(&case)?;
        let dt = t0.elapsed();
        ensure(sol.converged && sol.final_residual <= 1e-8, || format!("case {n}: |F| {:e}", sol.final_residual))?;
        ensure(sol.iterations <= 20, || format!("case {n}: {} iterations", sol.iterations))?;
        ensure(dt < Duration::from_secs(1), || format!("case {n}: {dt:?}"))?;
        for b in case.dc_buses.iter().filter(|b| b.grounded) {
            let u = sol.flows.dc_voltage(b.id, Terminal::Neutral);
            ensure(u == Some(0.0), || format!("case {n}: grounded neutral of dc bus {} is {u:?}", b.id))?;
        }
        let ctrl = worst_control_residual(&case, &sol);
        ensure(ctrl <= 1e-10, || format!("case {n}: control residual {ctrl:e}"))?;
        slowest = slowest.max(dt);
        most_iter = most_iter.max(sol.iterations);
        worst_ctrl = worst_ctrl.max(ctrl);
    }
    Ok(format!("max {most_iter} iterations, slowest {slowest:.2?}, control residual {worst_ctrl:.1e}"))
}

fn symmetry_collapse() -> Outcome {
    let sol = solved(&cases::symmetric_bipole())?;
    let mut worst = 0.0f64;
    for b in &sol.flows.dc_buses {
        let (p, n, z) = (b.positive.unwrap(), b.negative.unwrap(), b.neutral.unwrap());
        worst = worst.max(z.abs()).max((p + n).abs());
        worst = worst.max(b.ground_current.unwrap_or(0.0).abs());
    }
    for c in sol.flows.dc_conductors.iter().filter(|c| c.conductor == Terminal::Neutral) {
        worst = worst.max(c.current.abs());
    }
    ensure(worst <= 1e-10, || format!("largest asymmetry {worst:e}"))?;
    Ok(format!("largest asymmetry {worst:.1e}"))
}

fn conservation() -> Outcome {
    let mut worst = 0.0f64;
    for case in cases::all() {
        let sol = solved(&case)?;
        let f = &sol.flows;
        let gen: f64 = f.generators.iter().map(|g| g.p).sum();
        let ac_load: f64 = case.loads_ac.iter().map(|l| l.p_set).sum();
        let dc_load: f64 = f.dc_loads.iter().map(|l| l.p).sum();
        let shunt: f64 = case.ac_buses.iter().map(|b| b.g_shunt * f.ac_bus(b.id).unwrap().u_mag.powi(2)).sum();
        let losses: f64 = shunt
            + f.ac_branches.iter().map(|b| b.loss).sum::<f64>()
            + f.dc_conductors.iter().map(|c| c.loss).sum::<f64>()
            + f.converters.iter().map(|c| c.p_loss + c.transformer_loss + c.reactor_loss).sum::<f64>();
        let mismatch = (gen - ac_load - dc_load - losses).abs();
        ensure(mismatch <= 1e-8, || format!("{}: mismatch {mismatch:e}", case.name))?;
        worst = worst.max(mismatch);
    }
    Ok(format!("largest mismatch {worst:.1e} pu"))
}

fn jacobian_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for case in cases::all() {
        let reg = build_registry(&case).map_err(|e| e.to_string())?;
        let sys = ResidualSystem::new(&case, reg.clone()).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let mut x = flat_start(&case, &reg);
            for v in x.iter_mut() {
                *v += rng.random_range(-0.1..0.1);
            }
            let check = sys.check_jacobian(&x, 1e-6).map_err(|e| e.to_string())?;
            ensure(check.max_rel_error <= 1e-6, || {
                format!("{}: {:e} at {} / {}", case.name, check.max_rel_error, check.equation, check.variable)
            })?;
            worst = worst.max(check.max_rel_error);
        }
    }
    Ok(format!("largest relative error {worst:.1e}"))
}

fn oracle_equivalence() -> Outcome {
    let mut dc = 0.0f64;
    for case in cases::all().iter().filter(|c| !c.dc_buses.is_empty()) {
        dc = dc.max(common::dc_oracle_error(case, &solved(case)?));
    }
    ensure(dc <= 1e-10, || format!("dc voltages off by {dc:e}"))?;

    let case = cases::two_bus_ac();
    let sol = solved(&case)?;
    let line = &case.ac_branches[0];
    let load = &case.loads_ac[0];
    let gen = &case.generators[0];
    let (u, th) = solve_two_bus_ac(line.g, line.b, gen.u_mag_set, load.p_set, load.q_set).map_err(|e| e.to_string())?;
    let bus = sol.flows.ac_bus(load.bus).unwrap();
    let ac = (bus.u_mag - u).abs().max((bus.theta - th).abs());
    ensure(ac <= 1e-9, || format!("two-bus off by {ac:e}"))?;
    Ok(format!("dc {dc:.1e}, two-bus {ac:.1e}"))
}

fn p_deviation(r: &ContingencyReport, id: &str) -> f64 {
    r.deviation(QuantityKind::Converter, id, "p_ac").and_then(|d| d.deviation).unwrap_or(f64::NAN)
}

fn pole_outage(n: usize, pole: &str) -> Result<(NetworkCase, ContingencyReport), String> {
    let case = cases::control_case(n);
    let sol = solved(&case)?;
    let r = run_contingency(&case, &sol, &Outage::converter(pole), &SolverOptions::default())
        .map_err(|e| format!("case {n}: {e}"))?;
    Ok((case, r))
}

fn contingency_behavior() -> Outcome {
    let mut worst_share = 0.0f64;
    for n in 1..=4 {
        let (_, r) = pole_outage(n, "1N")?;
        let (lost, slack) = (p_deviation(&r, "1N"), p_deviation(&r, "3N"));
        let share = ((slack + lost) / lost).abs();
        ensure(share <= 0.02, || format!("case {n}: slack dP {slack:.5} vs outaged dP {lost:.5}"))?;
        worst_share = worst_share.max(share);
    }

    let (_, plain) = pole_outage(1, "1N")?;
    let (_, droop) = pole_outage(5, "1N")?;
    let (without, with) = (p_deviation(&plain, "3N").abs(), p_deviation(&droop, "3N").abs());
    ensure(with < without, || format!("slack |dP| {with:.5} with droop vs {without:.5} without"))?;
    let ctrl = worst_control_residual(&droop.post.case, &droop.post);
    ensure(ctrl <= 1e-10, || format!("post-outage control residual {ctrl:e}"))?;

    for d in plain.deviations.iter().filter(|d| d.kind == QuantityKind::DcTerminal && d.quantity == "u_negative") {
        let (b, a) = (d.before.unwrap(), d.after.unwrap());
        ensure(a.abs() < b.abs(), || format!("dc bus {} negative terminal {b:.6} -> {a:.6}", d.id))?;
    }
    Ok(format!(
        "slack share error {:.2}%, slack |dP| {with:.4} with droop vs {without:.4}, droop residual {ctrl:.1e}",
        100.0 * worst_share
    ))
}

fn reactive_shift(case: &NetworkCase, sol: &Solution, id: &str) -> Result<f64, String> {
    let q_ref = match q_control(case, id)? {
        QAxisControl::AcDroop { q_ref, .. } => q_ref,
        other => return Err(format!("{id} runs {other:?}")),
    };
    Ok(sol.flows.converter(id).unwrap().q_ac - q_ref)
}

fn ac_droop_sharing() -> Outcome {
    let equal = cases::ac_droop_case('C');
    let sol = solved(&equal)?;
    let (p, n) = (reactive_shift(&equal, &sol, "2P")?, reactive_shift(&equal, &sol, "2N")?);
    ensure((p - n).abs() <= 1e-8, || format!("equal gains: dQ {p:.9} vs {n:.9}"))?;

    let mut halved = equal.clone();
    if let Some(QAxisControl::AcDroop { k_ac, .. }) = &mut halved.converter_mut("2P").unwrap().control.q_axis {
        *k_ac /= 2.0;
    }
    let sol = solved(&halved)?;
    let (p2, n2) = (reactive_shift(&halved, &sol, "2P")?, reactive_shift(&halved, &sol, "2N")?);
    ensure((p2 - 2.0 * n2).abs() <= 1e-8, || format!("halved gain: dQ {p2:.9} vs 2 x {n2:.9}"))?;
    Ok(format!("equal gains dQ {p:.5}/{n:.5}, halved gain dQ {p2:.5}/{n2:.5}"))
}

fn robustness() -> Outcome {
    let case = cases::synthetic_chain(50, 20);
    let t0 = Instant::now();
    let sol = solved(&case)?;
    let dt = t0.elapsed();
    ensure(sol.converged && sol.final_residual <= 1e-8, || format!("|F| {:e}", sol.final_residual))?;
    ensure(dt < Duration::from_secs(30), || format!("took {dt:?}"))?;
    Ok(format!("{} unknowns, {} iterations, {dt:.2?}", sol.registry.len(), sol.iterations))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("droop data consistency", droop_data_consistency),
        ("control cases from flat start", control_cases_solve),
        ("symmetry collapse", symmetry_collapse),
        ("power conservation", conservation),
        ("jacobian vs finite differences", jacobian_correctness),
        ("oracle equivalence", oracle_equivalence),
        ("single-pole contingencies", contingency_behavior),
        ("ac droop sharing", ac_droop_sharing),
        ("synthetic 50-island grid", robustness),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
