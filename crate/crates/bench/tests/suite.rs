use std::path::{Path, PathBuf};
use std::process::Command;

use afm_bench::aggregate::{aggregate, overall_csv, summary_csv};
use afm_bench::config::{load_config, SuiteConfig};
use afm_bench::curves::{export_loss_curves, moving_average};
use afm_bench::records::{read_records, write_records, CellStatus};
use afm_bench::suite::{run_suite, RECORDS_FILE};
use afm_bench::BenchError;
use afm_core::afm::{train_afm, AfmArch, AfmTrainConfig};
use afm_core::dynamics::{pe_init_train, InitTrainConfig};
use afm_core::sim::{Method, Scenario};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tiny snapshots, good enough to exercise the plumbing.
fn write_artifacts(dir: &Path) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = InitTrainConfig {
        n_samples: 2000,
        hidden: vec![16, 16],
        max_epochs: 4,
        ..InitTrainConfig::default()
    };
    let (ens, _) = pe_init_train(&cfg, &mut rng).unwrap();
    let afm_cfg = AfmTrainConfig {
        iterations: 20,
        gen_chunk: 256,
        batch: 64,
        arch: AfmArch {
            regime_latent: 8,
            action_latent: 8,
            encoder_hidden: vec![8],
            flow_hidden: vec![16, 8, 8],
        },
        ..AfmTrainConfig::default()
    };
    let (afm, _) = train_afm(&ens, &afm_cfg, &mut rng).unwrap();
    let (d, a) = (dir.join("dynamics.json"), dir.join("afm.json"));
    std::fs::write(&d, ens.to_json().unwrap()).unwrap();
    std::fs::write(&a, afm.to_json().unwrap()).unwrap();
    (d, a)
}

fn small_suite(dir: &Path, methods: &[&str]) -> SuiteConfig {
    let (d, a) = write_artifacts(dir);
    let text = serde_json::json!({
        "methods": methods,
        "scenarios": [{"v_gain": -1.0, "omega_gain": 1.0}, {"v_gain": 2.0, "omega_gain": 2.0}],
        "maps": ["oval"],
        "seeds": [0, 1, 2],
        "episode": {"max_steps": 25, "mppi": {"population": 32, "horizon": 4}},
        "artifacts": {"dynamics": d, "afm": a},
    })
    .to_string();
    let path = dir.join("suite.json");
    std::fs::write(&path, text).unwrap();
    load_config(&path).unwrap()
}

fn ndjson(dir: &Path) -> String {
    std::fs::read_to_string(dir.join(RECORDS_FILE)).unwrap()
}

#[test]
fn minimal_config_takes_defaults() {
    let cfg = SuiteConfig::from_json("{}").unwrap();
    assert_eq!(cfg.seeds.len(), 5);
    assert_eq!(cfg.episode.delta_m, 1.0);
    assert_eq!(cfg.episode.max_steps, 5000);
    assert_eq!(cfg.scenarios, Scenario::table());
}

#[test]
fn config_is_strict() {
    assert!(matches!(SuiteConfig::from_json(r#"{"foo": 1}"#), Err(BenchError::Parse { .. })));
    assert!(matches!(
        SuiteConfig::from_json(r#"{"episode": {"max_step": 10}}"#),
        Err(BenchError::Parse { .. })
    ));
    assert!(matches!(SuiteConfig::from_json(r#"{"methods": []}"#), Err(BenchError::Invalid(_))));
    assert!(SuiteConfig::from_json(r#"{"episode": {"max_steps": 0}}"#).is_err());
    match SuiteConfig::from_json("{\n  \"seeds\": [0,\n  \"x\"]\n}") {
        Err(BenchError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn referenced_artifacts_must_exist() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(&path, r#"{"methods": ["OnlinePE"]}"#).unwrap();
    assert!(matches!(load_config(&path), Err(BenchError::MissingArtifact { .. })));
    std::fs::write(&path, r#"{"methods": ["OnlinePE"], "artifacts": {"dynamics": "nope.json"}}"#).unwrap();
    assert!(matches!(load_config(&path), Err(BenchError::ArtifactNotFound(_))));
    std::fs::write(&path, r#"{"methods": ["Physics"]}"#).unwrap();
    assert!(load_config(&path).is_ok());
}

#[test]
fn suite_records_are_complete_deterministic_and_job_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_suite(dir.path(), &["AFM", "Physics"]);
    let (o1, o4, again) = (dir.path().join("j1"), dir.path().join("j4"), dir.path().join("again"));
    let r1 = run_suite(&cfg, 1, Some(&o1), |_, _, _| {}).unwrap();
    assert_eq!(r1.records.len(), 12);
    assert_eq!(r1.failed(), 0);
    run_suite(&cfg, 4, Some(&o4), |_, _, _| {}).unwrap();
    run_suite(&cfg, 1, Some(&again), |_, _, _| {}).unwrap();
    assert_eq!(ndjson(&o1), ndjson(&o4));
    assert_eq!(ndjson(&o1), ndjson(&again));

    // records round-trip, and summaries are pure functions of them
    let back = read_records(&o1.join(RECORDS_FILE)).unwrap();
    assert_eq!(back, r1.records);
    let s1 = aggregate(&back).unwrap();
    assert_eq!(summary_csv(&s1), summary_csv(&aggregate(&r1.records).unwrap()));
    let copy = dir.path().join("copy.ndjson");
    write_records(&copy, &back).unwrap();
    assert_eq!(std::fs::read_to_string(&copy).unwrap(), ndjson(&o1));

    // overall means against hand summation
    for method in [Method::Afm, Method::Physics] {
        let mine: Vec<_> = back.iter().filter(|r| r.method == method).collect();
        let hand = mine.iter().map(|r| r.success_rate).sum::<f64>() / mine.len() as f64;
        let row = s1.overall_for(method).unwrap();
        assert_eq!(row.cells, 6);
        assert!((row.success_mean - hand).abs() < 1e-12);
    }
    assert_eq!(overall_csv(&s1).lines().count(), 3);
    assert_eq!(summary_csv(&s1).lines().count(), 1 + 4);

    let files = export_loss_curves(&back, 20, &dir.path().join("curves")).unwrap();
    assert_eq!(files.len(), 4);
    let text = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(text.lines().next().unwrap(), "step,mean_loss,smoothed_loss,transition_marker");
}

#[test]
fn corrupted_snapshot_fails_only_its_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_suite(dir.path(), &["AFM", "Physics"]);
    std::fs::write(cfg.artifacts.afm.as_ref().unwrap(), "{ not json").unwrap();
    let out = dir.path().join("out");
    let res = run_suite(&cfg, 2, Some(&out), |_, _, _| {}).unwrap();
    assert_eq!(res.records.len(), 12);
    for r in &res.records {
        let expect = if r.method == Method::Afm { CellStatus::Failed } else { CellStatus::Ok };
        assert_eq!(r.status, expect);
    }
    assert_eq!(res.failed(), 6);
    assert_eq!(read_records(&out.join(RECORDS_FILE)).unwrap().len(), 12);
}

fn afm_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_afm"))
}

#[test]
fn cli_rejects_bad_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let out = afm_bin().current_dir(dir.path()).arg("train-afm").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dynamics snapshot"));
    let out = afm_bin().arg("frobnicate").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("usage"));
    let out = afm_bin().args(["run", "--bogus"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn cli_run_writes_results_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.json");
    std::fs::write(
        &cfg,
        r#"{"methods": ["Physics"], "maps": ["oval"], "seeds": [0],
            "scenarios": [{"v_gain": 2.0, "omega_gain": 2.0}],
            "episode": {"max_steps": 20, "mppi": {"population": 32, "horizon": 4}}}"#,
    )
    .unwrap();
    let out = dir.path().join("res");
    let status = afm_bin()
        .args(["run", "--jobs", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    for f in ["records.ndjson", "results.json", "summary.csv", "overall.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    std::fs::remove_file(out.join("summary.csv")).unwrap();
    let status = afm_bin().arg("aggregate").arg("--out").arg(&out).output().unwrap().status;
    assert!(status.success());
    assert_eq!(std::fs::read_to_string(out.join("summary.csv")).unwrap(), summary);
    let status = afm_bin().arg("curves").arg("--out").arg(&out).output().unwrap().status;
    assert!(status.success());
    assert!(out.join("curves").read_dir().unwrap().count() == 1);
}

proptest! {
    #[test]
    fn moving_average_matches_brute_force(
        xs in prop::collection::vec(-100.0f64..100.0, 0..60),
        window in 1usize..25,
    ) {
        let got = moving_average(&xs, window);
        prop_assert_eq!(got.len(), xs.len());
        for (i, g) in got.iter().enumerate() {
            let lo = i.saturating_sub(window - 1);
            let brute: f64 = xs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64;
            prop_assert!((g - brute).abs() <= 1e-9 * (1.0 + brute.abs()));
        }
    }

    #[test]
    fn constant_trace_is_a_fixed_point(c in -10.0f64..10.0, n in 1usize..50, window in 1usize..30) {
        let xs = vec![c; n];
        for v in moving_average(&xs, window) {
            prop_assert!((v - c).abs() <= 1e-12 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn window_one_is_identity(xs in prop::collection::vec(-1e3f64..1e3, 0..40)) {
        prop_assert_eq!(moving_average(&xs, 1), xs);
    }
}
