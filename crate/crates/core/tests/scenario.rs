use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use cmra::report::ClassificationMatrix;
use cmra::scenario::{export_figure_data, run_scenario, Mode, Scenario, ScenarioError, OUT_DIR_VAR};
use cmra::verify::VerifyOptions;

const POW_SWEEP: &str = r#"{
  "name": "pow-sweep",
  "mode": "sweep",
  "environment": { "cap": 0.75, "family": { "kind": "power", "alpha": 2.0 }, "thetas": [0.8, 0.5] },
  "auction": { "eps": 0.01, "grid": 4 },
  "runs": [
    { "label": "truthful", "strategies": ["cmra-truthful", "cmra-truthful"] },
    { "label": "clock", "mechanism": "clock", "strategies": ["clock-truthful", "clock-truthful"] }
  ],
  "sweep": { "theta1": { "low": 0.1, "high": 1.0, "points": 4 }, "theta2": { "low": 0.1, "high": 1.0, "points": 4 } }
}"#;

const POW_SINGLE: &str = r#"{
  "name": "pow-single",
  "mode": "single",
  "environment": { "cap": 0.75, "family": { "kind": "power", "alpha": 2.0 }, "thetas": [0.8, 0.5] },
  "auction": { "eps": 0.01, "grid": 4 },
  "runs": [ { "label": "truthful", "strategies": ["cmra-truthful", "cmra-truthful"] } ]
}"#;

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cmra"))
}

/// Every file under `dir`, keyed by relative path.
fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn lots_example_meets_its_expectations() {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario::bundled("lots-example").unwrap();
    let r = run_scenario(&s, dir.path(), &VerifyOptions::default()).unwrap();
    assert!(r.ok, "{:#?}", r.lines);
    let names: Vec<String> = tree(dir.path()).into_keys().collect();
    for label in ["clock", "cmra-truthful", "rdr"] {
        assert!(names.contains(&format!("lots-example/{label}.rounds.csv")));
        assert!(names.contains(&format!("lots-example/{label}.outcome.json")));
    }
}

#[test]
fn serialisation_round_trip_is_idempotent() {
    for s in [
        Scenario::bundled("lots-example").unwrap(),
        Scenario::bundled("fig1-matrix").unwrap(),
        Scenario::from_json(POW_SWEEP).unwrap(),
    ] {
        let once = s.to_json();
        let again = Scenario::from_json(&once).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.to_json(), once);
    }
}

#[test]
fn malformed_scenarios_are_rejected() {
    let empty = POW_SINGLE.replace(r#"["cmra-truthful", "cmra-truthful"]"#, "[]");
    assert!(matches!(Scenario::from_json(&empty), Err(ScenarioError::Invalid(_))));
    let one = POW_SINGLE.replace(r#"["cmra-truthful", "cmra-truthful"]"#, r#"["rdr"]"#);
    assert!(matches!(Scenario::from_json(&one), Err(ScenarioError::Invalid(_))));
    let unknown = POW_SINGLE.replace("cmra-truthful", "spiteful");
    assert!(Scenario::from_json(&unknown).is_err());
    let cap = POW_SINGLE.replace(r#""cap": 0.75"#, r#""cap": 0.4"#);
    assert!(Scenario::from_json(&cap).is_err());
    assert!(matches!(Scenario::load("no-such-scenario.json"), Err(ScenarioError::Io(_))));
}

#[test]
fn figure_export() {
    let s = Scenario::from_json(POW_SINGLE).unwrap();
    assert!(matches!(export_figure_data(&s, &[5.0]), Err(ScenarioError::Invalid(_))));
    assert!(matches!(export_figure_data(&s, &[-0.1]), Err(ScenarioError::Invalid(_))));
    let sweep = Scenario::from_json(POW_SWEEP).unwrap();
    assert_eq!(sweep.mode, Mode::Sweep);
    assert!(export_figure_data(&sweep, &[0.0]).is_err());

    // At price 0 only the headline λ carries a bid.
    let rows = export_figure_data(&s, &[0.0]).unwrap();
    let bids: Vec<_> = rows.iter().filter(|r| r.series.starts_with("bid") && r.value.is_some()).collect();
    assert_eq!(bids.len(), 2);
    assert!(bids.iter().all(|r| r.quantity == 0.75));

    // At the weaker bidder's final price the pair curve peaks at (λ, 1−λ).
    let rows = export_figure_data(&s, &[0.5 / 0.75]).unwrap();
    let pair: Vec<_> = rows.iter().filter(|r| r.series == "pair_revenue" && r.value.is_some()).collect();
    let best = pair.iter().map(|r| r.value.unwrap()).max().unwrap();
    let at: Vec<f64> = pair.iter().filter(|r| r.value == Some(best)).map(|r| r.quantity).collect();
    assert_eq!(at, vec![0.75]);
}

#[test]
fn cli_output_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let scenario = a.path().join("sweep.json");
    fs::write(&scenario, POW_SWEEP).unwrap();
    for (out, extra) in [(a.path(), None), (b.path(), Some("--sequential"))] {
        for name in ["lots-example", scenario.to_str().unwrap()] {
            let mut cmd = cli();
            cmd.args(["run", name]).env(OUT_DIR_VAR, out.join("out"));
            cmd.args(extra);
            assert!(cmd.output().unwrap().status.success());
        }
    }
    let (ta, tb) = (tree(&a.path().join("out")), tree(&b.path().join("out")));
    assert!(ta.contains_key("pow-sweep/sweep.csv"));
    assert_eq!(ta, tb);
}

#[test]
fn cli_exit_codes() {
    let ok = cli().args(["verify", "lots"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8(ok.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 3);

    let unknown = cli().args(["verify", "no-such-check"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));

    let audit = cli().args(["audit", "denmark-2016"]).output().unwrap();
    assert_eq!(audit.status.code(), Some(0));
    assert!(String::from_utf8(audit.stdout).unwrap().contains("125079743"));

    let fig = cli().args(["export-fig", "lots-example", "--prices", "0,80"]).output().unwrap();
    assert_eq!(fig.status.code(), Some(0));
    let csv = String::from_utf8(fig.stdout).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "price,series,quantity,value");
    let bad = cli().args(["export-fig", "lots-example", "--prices", "1000"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn bundled_matrix_scenario_reproduces_the_classification() {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario::bundled("fig1-matrix").unwrap();
    let r = run_scenario(&s, dir.path(), &VerifyOptions::default()).unwrap();
    assert!(r.ok, "{:#?}", r.lines);
    let table = fs::read_to_string(dir.path().join("fig1-matrix/matrix.txt")).unwrap();
    for cell in ClassificationMatrix::expected().cells {
        assert!(table.contains(cell.verdict.label()), "{}", cell.verdict.label());
    }
}
