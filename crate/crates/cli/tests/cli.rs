use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hedgekit::hedge::{objective, solve_numeric};
use hedgekit::{ComposedPreference, ConstraintSet, Market, RiskMeasure, Rv, ScenarioSpace, SolverOptions, Utility};
use hedgekit_cli::{parse_scenarios, parse_scenarios_str, write_scenarios};
use proptest::prelude::*;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn hedgekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hedgekit")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn scratch_file(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hedgekit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

#[test]
fn four_state_fixture_library_solution() {
    // Oracle: grid over the budget line h = (t, 1 − t), refined by ternary
    // search (the ES objective is convex along the line).
    let market = parse_scenarios(&fixture("four_state.csv"), 1.0).unwrap();
    let pref = ComposedPreference::new(RiskMeasure::ExpectedShortfall { alpha: 0.5 }, Utility::IDENTITY).unwrap();
    let f = |t: f64| objective(&pref, &market, &[t, 1.0 - t]).unwrap();
    let best = (-40_000..=40_000).map(|j| j as f64 * 1e-4).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
    let (mut lo, mut hi) = (best - 1e-4, best + 1e-4);
    for _ in 0..200 {
        let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let oracle = f(0.5 * (lo + hi));
    assert!((oracle - -0.45).abs() < 1e-9, "{oracle}");

    let sol = solve_numeric(&pref, &market, &ConstraintSet::BudgetHyperplane, &SolverOptions::default()).unwrap();
    assert!((sol.value - oracle).abs() < 1e-9);
    assert!(sol.residual <= 1e-6);
}

#[test]
fn hedge_on_four_state_fixture() {
    let path = fixture("four_state.csv");
    let out = hedgekit(&[
        "hedge", "--scenarios", path.to_str().unwrap(), "--measure", "es", "--alpha", "0.5", "--utility", "affine",
        "--constraint", "budget",
    ]);
    let report = json(&out);
    assert!(report["residual"].as_f64().unwrap() <= 1e-6);
    assert!((report["value"].as_f64().unwrap() - -0.45).abs() < 1e-9);
    let h: Vec<f64> = report["h"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert_eq!(report["witness_density"].as_array().unwrap().len(), 4);
    assert!(report["lambda"].is_number());
}

#[test]
fn check_on_two_state_fixture() {
    // ΔS = (1, −1) under P = (½, ½): P itself is the unique martingale measure.
    let path = fixture("two_state.csv");
    let out = hedgekit(&["check", "--scenarios", path.to_str().unwrap()]);
    assert_eq!(json(&out), serde_json::json!({ "arbitrage_free": true, "complete": true }));
}

#[test]
fn price_and_risk_reports_have_the_documented_keys() {
    let path = fixture("four_state.csv");
    let path = path.to_str().unwrap();
    let price = json(&hedgekit(&["price", "--scenarios", path, "--measure", "entropic", "--a", "1.5"]));
    let keys: Vec<&str> = price.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["arbitrage_free", "bp", "complete", "sp", "subhedge", "superhedge"]);
    let sp = price["sp"].as_f64().unwrap();
    let bp = price["bp"].as_f64().unwrap();
    assert!(price["superhedge"].as_f64().unwrap() + 1e-6 >= sp && sp + 1e-6 >= bp);
    assert!(bp + 1e-6 >= price["subhedge"].as_f64().unwrap());

    // Zero hedge: position V0 − H = (0, 0.8, 0.3, 1); the worst quarter is 0.
    let risk = json(&hedgekit(&["risk", "--scenarios", path, "--measure", "var", "--alpha", "0.25"]));
    assert_eq!(risk, serde_json::json!({ "value": 0.0 }));
    let risk = json(&hedgekit(&["risk", "--scenarios", path, "--measure", "negexp", "--weights", "1,0"]));
    // Position (0.5, 0.5, 0.4, 0.8): mean 0.55.
    assert_eq!(risk, serde_json::json!({ "value": -0.55 }));
}

#[test]
fn gaussian_route_uses_the_closed_form() {
    let mu = scratch_file("mu.csv", "0.1,0.3\n");
    let sigma = scratch_file("sigma.csv", "1,0\n0,1\n");
    let out = hedgekit(&[
        "hedge", "--gaussian", mu.to_str().unwrap(), sigma.to_str().unwrap(), "--measure", "negexp", "--utility",
        "exp", "--ua", "1", "--constraint", "budget",
    ]);
    let report = json(&out);
    assert_eq!(report["h"], serde_json::json!([0.4, 0.6]));
    assert_eq!(report["lambda"], serde_json::json!(0.3));
    assert!(report["witness_density"].is_null());

    let out = hedgekit(&[
        "hedge", "--gaussian", mu.to_str().unwrap(), sigma.to_str().unwrap(), "--measure", "negexp", "--utility",
        "exp", "--constraint", "longonly",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_flag_writes_the_report() {
    let path = fixture("two_state.csv");
    let target = std::env::temp_dir().join(format!("hedgekit-out-{}.json", std::process::id()));
    let out = hedgekit(&["check", "--scenarios", path.to_str().unwrap(), "--out", target.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let written = std::fs::read_to_string(&target).unwrap();
    assert!(written.contains("\"complete\": true"));
    std::fs::remove_file(target).unwrap();
}

#[test]
fn exit_codes_and_diagnostics() {
    let two = fixture("two_state.csv");
    let two = two.to_str().unwrap();

    let out = hedgekit(&["hedge", "--scenarios", two, "--measure", "es", "--alpha", "0.5", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.contains("--frobnicate"));

    let out = hedgekit(&["hedge", "--scenarios", two, "--measure", "es"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("--alpha"));

    let out = hedgekit(&["hedge", "--scenarios", two, "--measure", "var", "--alpha", "0.5"]);
    assert_eq!(out.status.code(), Some(2));

    let missing_h = scratch_file("missing_h.csv", "prob,dS_1\n0.5,1\n0.5,-1\n");
    let out = hedgekit(&["check", "--scenarios", missing_h.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.contains("column H"));

    let unnormalized = scratch_file("unnormalized.csv", "prob,dS_1,H\n0.5,1,1\n0.4,-1,0\n");
    let out = hedgekit(&["check", "--scenarios", unnormalized.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("0.9"));
}

#[test]
fn library_parse_errors_match_the_binary() {
    let e = parse_scenarios_str("prob,dS_1,H\n0.5,1,1\n0.5,-1,oops\n", "inline", 1.0).unwrap_err();
    assert_eq!(e.exit_code(), 3);
    assert!(e.to_string().contains("line 3, column H"));
}

fn market_strategy() -> impl Strategy<Value = Market> {
    (1usize..8, 1usize..4).prop_flat_map(|(k, n)| {
        (
            prop::collection::vec(0.05f64..1.0, k),
            prop::collection::vec(prop::collection::vec(-1e3f64..1e3, n), k),
            prop::collection::vec(-1e3f64..1e3, k),
            0.01f64..100.0,
        )
            .prop_map(|(raw, rows, claim, v0)| {
                let total: f64 = raw.iter().sum();
                let space = ScenarioSpace::new(raw.iter().map(|w| w / total).collect()).unwrap();
                Market::from_rows(space, &rows, Rv::new(claim), v0).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn serialized_markets_reparse_to_equal_values(market in market_strategy()) {
        let text = write_scenarios(&market);
        let again = parse_scenarios_str(&text, "roundtrip", market.v0()).unwrap();
        prop_assert_eq!(again.delta_s(), market.delta_s());
        prop_assert_eq!(again.claim(), market.claim());
        prop_assert_eq!(again.space().weights(), market.space().weights());
    }
}
