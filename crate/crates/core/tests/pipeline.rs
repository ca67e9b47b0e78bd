use std::collections::BTreeMap;
use std::path::PathBuf;

use rmstab::config::{AnalysisConfig, Strategy};
use rmstab::phi::{PhiMethod, Verdict};
use rmstab::pipeline::{run_analyze, run_simulate, run_validate, RunOptions, SlopeSign};

fn load(name: &str) -> (AnalysisConfig, String) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let text = std::fs::read_to_string(path).unwrap();
    (AnalysisConfig::parse(&text).unwrap(), text)
}

fn with_lambda(lambda: f64) -> RunOptions {
    RunOptions { parameters: BTreeMap::from([("lambda".to_string(), lambda)]), ..Default::default() }
}

#[test]
fn shipped_configs_validate() {
    for name in ["two_sensor.json", "scalar_iid.json", "gilbert_elliott.json"] {
        let (cfg, text) = load(name);
        let report = run_validate(&cfg, &text, &RunOptions::default()).unwrap();
        assert!(report.is_valid(), "{name}: {report:?}");
    }
}

#[test]
fn analysis_is_deterministic() {
    let (cfg, text) = load("gilbert_elliott.json");
    let opts = RunOptions { trials: Some(20_000), ..Default::default() };
    let a = run_analyze(&cfg, &text, &opts).unwrap();
    let b = run_analyze(&cfg, &text, &opts).unwrap();
    assert_eq!(a.to_json_without_timings(), b.to_json_without_timings());
    assert_eq!(a.stability.blocks[0].method, PhiMethod::MonteCarlo);
}

#[test]
fn strategies_agree_away_from_the_threshold() {
    let (cfg, text) = load("two_sensor.json");
    let critical = 1.3f64.powi(-4);
    for (lambda, expected) in [(0.6 * critical, Verdict::Stable), (1.5 * critical, Verdict::Unstable)] {
        for strategy in [Strategy::ClosedForm, Strategy::Exact, Strategy::MonteCarlo] {
            let opts = RunOptions { strategy: Some(vec![strategy]), ..with_lambda(lambda) };
            let report = run_analyze(&cfg, &text, &opts).unwrap();
            assert_eq!(report.stability.verdict, expected, "{strategy} at lambda = {lambda}");
            assert_eq!(report.exit_code(), if expected == Verdict::Stable { 0 } else { 10 });
        }
    }
}

#[test]
fn scalar_config_phi_equals_loss_probability() {
    let (cfg, text) = load("scalar_iid.json");
    let report = run_analyze(&cfg, &text, &RunOptions::default()).unwrap();
    let block = &report.stability.blocks[0];
    assert!((block.phi - 0.2).abs() < 1e-12);
    assert!((block.margin - 0.8).abs() < 1e-12);
    assert_eq!(report.stability.verdict, Verdict::Stable);
}

#[test]
fn simulation_agrees_with_unstable_verdict() {
    let (cfg, text) = load("two_sensor.json");
    let opts = RunOptions { trials: Some(1000), ..with_lambda(0.5) };
    let out = run_simulate(&cfg, &text, &opts, true).unwrap();
    assert_eq!(out.summary.sign, SlopeSign::Positive);
    assert_eq!(out.summary.verdict, Some(Verdict::Unstable));
    assert_eq!(out.summary.agrees, Some(true));
    assert!(out.summary.message.contains("agrees"));
}

#[test]
fn overrides_keep_the_input_digest() {
    let (cfg, text) = load("two_sensor.json");
    let a = run_analyze(&cfg, &text, &with_lambda(0.2)).unwrap();
    let b = run_analyze(&cfg, &text, &with_lambda(0.3)).unwrap();
    assert_eq!(a.input_digest, b.input_digest);
    assert_eq!(a.parameters["lambda"], 0.2);
    assert!(a.stability.blocks[0].phi < b.stability.blocks[0].phi);
}
