use bipf::cases;
use bipf::contingency::*;
use bipf::controls::d_axis_residual;
use bipf::netmodel::{Terminal, ValidationCode};
use bipf::solver::{solve, Solution, SolverOptions};

fn base(n: usize) -> (bipf::netmodel::NetworkCase, Solution) {
    let case = cases::control_case(n);
    let sol = solve(&case, &SolverOptions::default(), None).unwrap();
    (case, sol)
}

fn p_dev(r: &ContingencyReport, id: &str) -> f64 {
    r.deviation(QuantityKind::Converter, id, "p_ac").unwrap().deviation.unwrap()
}

#[test]
fn losing_one_negative_pole_leaves_a_valid_case() {
    let case = cases::control_case(1);
    let post = apply_outage(&case, &Outage::converter("1N")).unwrap();
    assert!(!post.converter("1N").unwrap().status);
}

#[test]
fn losing_the_only_negative_slack_is_infeasible() {
    match apply_outage(&cases::control_case(1), &Outage::converter("3N")) {
        Err(ContingencyError::PostOutageInfeasible { report, .. }) => {
            assert!(report.has(ValidationCode::LayerWithoutVoltageReference))
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_and_repeated_outages_are_errors() {
    let case = cases::control_case(1);
    assert!(matches!(apply_outage(&case, &Outage::converter("9X")), Err(ContingencyError::UnknownElement(_))));
    assert!(matches!(
        apply_outage(&case, &Outage::dc_conductor("D34", Terminal::Positive)),
        Err(ContingencyError::UnknownElement(_))
    ));
    let post = apply_outage(&case, &Outage::converter("1N")).unwrap();
    assert!(matches!(apply_outage(&post, &Outage::converter("1N")), Err(ContingencyError::AlreadyOutOfService(_))));
}

#[test]
fn slack_pole_takes_up_the_lost_power() {
    for n in 1..=4 {
        let (case, sol) = base(n);
        let r = run_contingency(&case, &sol, &Outage::converter("1N"), &SolverOptions::default()).unwrap();
        let lost = p_dev(&r, "1N");
        let slack = p_dev(&r, "3N");
        assert!(((slack + lost) / lost).abs() <= 0.02, "case {n}: {slack} vs {lost}");
    }
}

#[test]
fn outaged_pole_reports_zero() {
    let (case, sol) = base(1);
    let r = run_contingency(&case, &sol, &Outage::converter("1N"), &SolverOptions::default()).unwrap();
    let st = r.post.flows.converter("1N").unwrap();
    assert!(!st.in_service);
    assert_eq!((st.p_ac, st.q_ac, st.i_dc), (0.0, 0.0, 0.0));
}

#[test]
fn droop_pole_shares_the_imbalance() {
    let (c1, s1) = base(1);
    let (c5, s5) = base(5);
    let o = Outage::converter("1N");
    let r1 = run_contingency(&c1, &s1, &o, &SolverOptions::default()).unwrap();
    let r5 = run_contingency(&c5, &s5, &o, &SolverOptions::default()).unwrap();
    assert!(p_dev(&r5, "3N").abs() < p_dev(&r1, "3N").abs());
    assert!(p_dev(&r5, "2N").abs() > 1e-3);
    let cv = c5.converter("2N").unwrap();
    let st = r5.post.flows.converter("2N").unwrap();
    let up = r5.post.flows.dc_voltage(2, Terminal::Negative).unwrap();
    let un = r5.post.flows.dc_voltage(2, Terminal::Neutral).unwrap();
    assert!(d_axis_residual(cv.control.d_axis.as_ref().unwrap(), cv.polarity, st.p_ac, up, un).abs() <= 1e-10);
}

#[test]
fn negative_terminals_rise_and_positive_layer_feels_it() {
    let (case, sol) = base(1);
    let r = run_contingency(&case, &sol, &Outage::converter("1N"), &SolverOptions::default()).unwrap();
    let mut positive_moved = false;
    for d in r.deviations.iter().filter(|d| d.kind == QuantityKind::DcTerminal) {
        match d.quantity.as_str() {
            "u_negative" => assert!(d.after.unwrap().abs() < d.before.unwrap().abs(), "{}", d.id),
            "u_positive" => positive_moved |= d.deviation.unwrap().abs() > 0.0,
            _ => {}
        }
    }
    assert!(positive_moved);
}

#[test]
fn deviations_are_post_minus_base() {
    let (case, sol) = base(3);
    let r = run_contingency(&case, &sol, &Outage::dc_conductor("D12", Terminal::Neutral), &SolverOptions::default())
        .unwrap();
    assert_eq!(r.deviations, compute_deviations(&r.base, &r.post));
    for d in &r.deviations {
        if let (Some(b), Some(a), Some(dv)) = (d.before, d.after, d.deviation) {
            assert_eq!(dv, a - b);
        }
    }
    let vb = r.base.flows.dc_voltage(4, Terminal::Neutral).unwrap();
    let va = r.post.flows.dc_voltage(4, Terminal::Neutral).unwrap();
    let d = r.deviation(QuantityKind::DcTerminal, "4", "u_neutral").unwrap();
    assert_eq!(d.deviation, Some(va - vb));
}

#[test]
fn outage_of_an_absent_element_matches_modeling_it_absent() {
    let (case, sol) = base(1);
    let r = run_contingency(&case, &sol, &Outage::converter("1N"), &SolverOptions::default()).unwrap();
    let mut absent = case.clone();
    absent.converter_mut("1N").unwrap().status = false;
    let direct = solve(&absent, &SolverOptions::default(), None).unwrap();
    assert!(r.post.flows.converters.iter().all(|c| c.i_mag >= 0.0));
    for d in compute_deviations(&direct, &r.post) {
        if let Some(v) = d.deviation {
            assert!(v.abs() <= 1e-8, "{} {} {}", d.kind, d.id, d.quantity);
        }
    }
}

#[test]
fn ac_branch_outage_that_islands_a_converter_is_rejected() {
    // Every AC branch feeds a PCC bus; losing one leaves an island without a reference.
    assert!(matches!(
        apply_outage(&cases::control_case(1), &Outage::AcBranch { id: "L1-2".into() }),
        Err(ContingencyError::PostOutageInfeasible { .. })
    ));
}
