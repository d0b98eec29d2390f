use bipf::cases;
use bipf::contingency::{run_contingency, Outage};
use bipf::io::*;
use bipf::netmodel::*;
use bipf::solver::{solve, SolverOptions};
use proptest::prelude::*;
use std::collections::HashMap;

#[test]
fn bundled_documents_round_trip() {
    for doc in [cases::CONTROL_CASE_1, cases::CONTROL_CASE_5, cases::AC_DROOP_CASE_C, cases::SYMMETRIC_BIPOLE] {
        let case = parse_case(doc.as_bytes()).unwrap();
        assert_eq!(parse_case(write_case(&case).as_bytes()).unwrap(), case);
    }
}

#[test]
fn minimal_document_parses_and_solves() {
    let doc = br#"{
        "ac_buses": [{"id": 1, "is_reference": true}, {"id": 2}],
        "ac_branches": [{"id": "L", "from_bus": 1, "to_bus": 2, "g": 0.0, "b": -10.0}],
        "generators": [{"id": "G", "bus": 1, "p_set": 0.0, "u_mag_set": 1.0}],
        "loads_ac": [{"id": "D", "bus": 2, "p_set": 0.5}]
    }"#;
    let case = parse_case(doc).unwrap();
    assert!(solve(&case, &SolverOptions::default(), None).unwrap().converged);
}

#[test]
fn read_case_reports_missing_files() {
    assert!(matches!(read_case(std::path::Path::new("/nonexistent/case.json")), Err(CaseError::Io(_))));
}

fn csv_values(text: &str) -> HashMap<(String, String, String), f64> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(r.headers().unwrap(), vec!["kind", "id", "quantity", "value"]);
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            ((rec[0].to_string(), rec[1].to_string(), rec[2].to_string()), rec[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn csv_and_json_carry_identical_values() {
    let sol = solve(&cases::control_case(3), &SolverOptions::default(), None).unwrap();
    let csv = csv_values(&write_results(&sol, OutputFormat::Csv));
    let json: serde_json::Value = serde_json::from_str(&write_results(&sol, OutputFormat::Json)).unwrap();
    let mut checked = 0;
    for conv in json["converters"].as_array().unwrap() {
        let id = conv["id"].as_str().unwrap().to_string();
        for q in ["p_ac", "q_ac", "p_dc", "p_loss", "i_dc"] {
            let v = csv[&("converter".to_string(), id.clone(), q.to_string())];
            assert_eq!(v, conv[q].as_f64().unwrap(), "{id} {q}");
            checked += 1;
        }
    }
    for bus in json["dc_buses"].as_array().unwrap() {
        let id = bus["id"].to_string();
        for (field, q) in [("positive", "u_positive"), ("negative", "u_negative"), ("neutral", "u_neutral")] {
            if let Some(v) = bus[field].as_f64() {
                assert_eq!(csv[&("dc_bus".to_string(), id.clone(), q.to_string())], v);
                checked += 1;
            }
        }
    }
    assert!(checked > 30);
    assert_eq!(json["solver"]["converged"], true);
}

#[test]
fn table_uses_six_decimals_and_per_terminal_columns() {
    let sol = solve(&cases::control_case(3), &SolverOptions::default(), None).unwrap();
    let table = write_results(&sol, OutputFormat::Table);
    assert!(table.contains("Positive") && table.contains("Negative") && table.contains("Neutral"));
    let p = sol.flows.converter("2P").unwrap().p_ac;
    assert!(table.contains(&format!("{p:.6}")));
    // Bus 3 has no positive terminal.
    let row = table.lines().find(|l| l.trim_start().starts_with("3 ") && l.contains('-')).unwrap();
    assert!(row.split_whitespace().nth(1) == Some("-"), "{row}");
}

#[test]
fn ac_only_results_omit_dc_sections() {
    let sol = solve(&cases::two_bus_ac(), &SolverOptions::default(), None).unwrap();
    let table = write_results(&sol, OutputFormat::Table);
    assert!(!table.contains("DC bus") && !table.contains("Converters"));
    let json: serde_json::Value = serde_json::from_str(&write_results(&sol, OutputFormat::Json)).unwrap();
    assert!(json.get("dc_buses").is_none() && json.get("converters").is_none());
    assert!(!write_results(&sol, OutputFormat::Csv).contains("dc_bus"));
}

#[test]
fn contingency_csv_has_before_after_deviation() {
    let case = cases::control_case(1);
    let sol = solve(&case, &SolverOptions::default(), None).unwrap();
    let report = run_contingency(&case, &sol, &Outage::converter("1N"), &SolverOptions::default()).unwrap();
    let text = write_contingency(&report, OutputFormat::Csv);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(r.headers().unwrap(), vec!["kind", "id", "quantity", "before", "after", "deviation"]);
    let row =
        r.records().map(|x| x.unwrap()).find(|x| &x[0] == "converter" && &x[1] == "1N" && &x[2] == "p_ac").unwrap();
    let (b, a, d): (f64, f64, f64) = (row[3].parse().unwrap(), row[4].parse().unwrap(), row[5].parse().unwrap());
    assert_eq!(a, 0.0);
    assert_eq!(d, a - b);
    let json: serde_json::Value = serde_json::from_str(&write_contingency(&report, OutputFormat::Json)).unwrap();
    assert_eq!(json["outage"], "conv:1N");
    assert!(write_contingency(&report, OutputFormat::Table).contains("deviation"));
}

fn perturbed(case: &NetworkCase, scale: f64, drop_branch: bool, rename: bool) -> NetworkCase {
    let mut c = case.clone();
    for br in &mut c.ac_branches {
        br.g *= scale;
        br.b *= scale;
    }
    for cv in &mut c.converters {
        cv.transformer.x *= scale;
        cv.losses.c *= scale;
    }
    for l in &mut c.loads_ac {
        l.q_set = -l.q_set * scale;
    }
    if drop_branch {
        c.dc_branches[0].conductors.neutral = None;
    }
    if rename {
        c.name = format!("variant {scale}");
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn writing_and_reparsing_is_identity(
        which in 0usize..10, scale in 0.5f64..2.0, drop_branch in any::<bool>(), rename in any::<bool>(),
    ) {
        let base = &cases::all()[which];
        let drop_branch = drop_branch && !base.dc_branches.is_empty();
        let case = perturbed(base, scale, drop_branch, rename);
        let once = parse_case_unvalidated(write_case(&case).as_bytes()).unwrap();
        prop_assert_eq!(&once, &case);
        let twice = parse_case_unvalidated(write_case(&once).as_bytes()).unwrap();
        prop_assert_eq!(twice, once);
    }
}
