use std::process::Command;

use evaba::harness::{
    check_complexity, committee_stats, promotion_bound, run_experiment, ExperimentConfig,
    REPORT_VERSION, TOTAL_CONSTANT,
};
use evaba::message::Phase;
use evaba::sim::{run, SchedulerKind, SimConfig};

fn evaba() -> Command {
    Command::new(env!("CARGO_BIN_EXE_evaba"))
}

#[test]
fn report_is_versioned_and_a_function_of_its_config() {
    let mut c = ExperimentConfig::new(4, 1).with_adversary("equivocate");
    c.runs = 12;
    c.seed = 100;
    let a = run_experiment(&c, None, false).unwrap();
    let b = run_experiment(&c, None, false).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let json: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
    assert_eq!(json["version"], REPORT_VERSION);
    assert_eq!(json["per_run"].as_array().unwrap().len(), 12);
    assert_eq!(a.aggregates.decided_runs, 12);
    assert!(a.violations.is_empty());

    // A run's record does not depend on which batch it ran in.
    let mut single = c.clone();
    single.runs = 1;
    single.seed = 105;
    let one = run_experiment(&single, None, false).unwrap();
    assert_eq!(one.per_run[0], a.per_run[5]);
}

#[test]
fn honest_single_view_stays_within_bounds() {
    let mut c = SimConfig::new(4, 1);
    c.kappa = 2;
    let t = run(&c).unwrap();
    assert_eq!(t.views_to_decide(), Some(1));
    let report = check_complexity(&t);
    assert!(report.pass, "{:?}", report.failures);
    assert_eq!(promotion_bound(4, 2), 64);
    let v1 = &report.views[0];
    let promotion = v1.counts.get(Phase::Promotion);
    // One full promotion is 4 steps of n SENDs and n ACKs; two members start.
    assert!((32..=64).contains(&promotion), "{promotion}");
    assert!(v1.counts.get(Phase::Propose) <= 2 * 4);
    for p in [
        Phase::Selection,
        Phase::Suggest,
        Phase::Election,
        Phase::ViewChange,
    ] {
        assert!(v1.counts.get(p) <= 16, "{p:?}");
    }
    assert!(report.max_c <= TOTAL_CONSTANT);
}

#[test]
fn complexity_holds_under_random_scheduling() {
    for seed in 0..30 {
        let mut c = SimConfig::new(10, 3);
        c.key_seed = seed;
        c.adversary.scheduler = SchedulerKind::Random;
        c.adversary.seed = seed;
        let t = run(&c).unwrap();
        let r = check_complexity(&t);
        assert!(r.pass, "seed {seed}: {:?}", r.failures);
        assert!(r.max_promotion <= promotion_bound(10, 4));
    }
}

#[test]
fn committee_stats_match_the_closed_form() {
    let rows = committee_stats(10, 3, &[1, 2, 3, 4], 20_000, 1).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].exact_ratio, "3/10");
    assert_eq!(rows[1].exact_ratio, "1/15");
    assert_eq!(rows[2].exact_ratio, "1/120");
    assert_eq!(rows[3].exact, 0.0);
    assert_eq!(rows[3].hits, 0);
    for r in &rows {
        assert!(
            (r.empirical - r.exact).abs() <= 4.0 * r.sigma + 1e-12,
            "{r:?}"
        );
        assert!(r.exact <= r.third_power);
    }
}

#[test]
fn cli_run_writes_a_report_and_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let trace = dir.path().join("trace.jsonl.gz");
    let status = evaba()
        .args(["run", "--n", "7", "--f", "2", "--runs", "3", "--seed", "7"])
        .args([
            "--adversary",
            "rogue-broadcast",
            "--byz",
            "2,4",
            "--scheduler",
            "honest-last",
        ])
        .arg("--out")
        .arg(&out)
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(json["config"]["byzantine"], serde_json::json!([2, 4]));
    assert_eq!(json["runs"], 3);
    let mut text = String::new();
    std::io::Read::read_to_string(
        &mut flate2::read::GzDecoder::new(std::fs::File::open(&trace).unwrap()),
        &mut text,
    )
    .unwrap();
    let runs = text
        .lines()
        .filter(|l| l.starts_with("{\"kind\":\"run\""))
        .count();
    assert_eq!(runs, 3);
}

#[test]
fn cli_config_errors_exit_with_two() {
    let cases: [&[&str]; 5] = [
        &[
            "run",
            "--n",
            "7",
            "--f",
            "2",
            "--adversary",
            "crash",
            "--byz",
            "3",
        ],
        &["run", "--n", "5", "--f", "1"],
        &["run", "--n", "4", "--f", "1", "--byz", "4"],
        &["run", "--n", "4", "--f", "1", "--adversary", "gremlin"],
        &["run", "--n", "4", "--f", "1", "--scheduler", "lifo"],
    ];
    for args in cases {
        let out = evaba().args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn cli_keygen_and_shared_keys() {
    let dir = tempfile::tempdir().unwrap();
    let keys = dir.path().join("keys.bin");
    let status = evaba()
        .args(["keygen", "--n", "7", "--f", "2", "--seed", "3", "--out"])
        .arg(&keys)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    let report = dir.path().join("r.json");
    let status = evaba()
        .args(["run", "--n", "7", "--f", "2", "--runs", "4", "--keys"])
        .arg(&keys)
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    // Keys dealt for another size are refused.
    let status = evaba()
        .args(["run", "--n", "4", "--f", "1", "--keys"])
        .arg(&keys)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(2));
}

#[test]
fn cli_committee_stats() {
    let out = evaba()
        .args([
            "committee-stats",
            "--n",
            "7",
            "--f",
            "2",
            "--kappa",
            "1,2,3",
            "--samples",
            "2000",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("1/21"), "{text}");
}
