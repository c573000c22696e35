use std::path::Path;

use subexp_ruin::config::ExperimentConfig;
use subexp_ruin::experiment::*;
use subexp_ruin::par::Execution;

fn shipped(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

fn small(mut c: ExperimentConfig, u: &[f64], paths: u64) -> ExperimentConfig {
    c.u = u.to_vec();
    c.paths = paths;
    c
}

#[test]
fn shipped_configs() {
    let r = shipped("reference.toml").validate().unwrap();
    assert!(r.admissibility.on_full_swelling() && r.admissibility.on_half_swelling());
    assert!(r.model.drift().certified);
    let two = shipped("two_cone.toml").validate().unwrap();
    assert!(two.distance.unwrap() > 0.0);
    let report = shipped("reference_kappa1.toml").validate().unwrap_err();
    assert!(!report.valid);
    assert!(report.issues.iter().any(|i| i.field == "model"), "{report}");
}

const POINT_MASS: &str = r#"
delta = 0.3
u = [5.0, 10.0]
paths = 500
estimator = "crude"
drift_override = [0.5, 0.5]

[model]
off_direction = [-0.5, -0.5]
radial = { kind = "point_mass", value = 12.0 }
weight = { family = "constant", value = 1.0 }
core = [{ center = [0.5, 0.5], radius = 0.0 }]

[[theta]]
center = [0.5, 0.5]
radius = 0.05
"#;

#[test]
fn degenerate_point_mass_pipeline() {
    let cfg = ExperimentConfig::from_toml(POINT_MASS).unwrap();
    let v = cfg.validate().unwrap();
    assert!(!v.warnings.is_empty());
    let exp = run_ratio_experiment(&v, Execution::Parallel).unwrap();
    for row in &exp.rows {
        assert_eq!(row.estimate, 1.0);
        assert_eq!(row.ratio, Some(row.estimate / row.asymptotic));
        assert_eq!(row.ratio_low, Some(row.ci_low / row.asymptotic));
        assert_eq!(row.ratio_high, Some(row.ci_high / row.asymptotic));
        assert_eq!(row.halfspace_over_cone, Some(1.0));
    }
}

#[test]
fn same_seed_same_bytes_and_manifest_round_trip() {
    let cfg = small(shipped("reference.toml"), &[20.0, 30.0], 4000);
    let v = cfg.validate().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let exp = run_ratio_experiment(&v, Execution::Parallel).unwrap();
        write_ratio_outputs(d, &v, &exp).unwrap();
    }
    for f in ["ratio.csv", "ratio_summary.json", "manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let again = ExperimentConfig::load(&a.join("manifest.json")).unwrap();
    assert_eq!(again, cfg);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert!(manifest["version"].is_string() && manifest["drift"]["certified"] == true);
}

#[test]
fn two_cone_with_all_mass_on_one_cap() {
    let mut cfg = small(shipped("two_cone.toml"), &[10.0, 20.0], 20_000);
    cfg.model.core.truncate(1);
    cfg.model.core[0].mass = 1.0;
    let v = cfg.validate().unwrap();
    let exp = run_two_cone(&v, Execution::Parallel).unwrap();
    assert!(exp.rows.iter().all(|r| r.p_b == 0.0 && r.p_both == 0.0 && r.hits_a > 0));
    assert!(exp.rows.iter().all(|r| r.hits_a + r.hits_b - r.hits_both == r.hits_union));
}

#[test]
fn simulate_rows_carry_the_estimates() {
    let cfg = small(shipped("reference.toml"), &[15.0], 2000);
    let v = cfg.validate().unwrap();
    let est = run_simulate(&v, Execution::Sequential).unwrap();
    let rows = simulate_rows(&est);
    assert_eq!(rows[0].estimate, est[0].hit_probability);
    assert_eq!(rows[0].truncated_paths, est[0].truncated_paths);
}

#[test]
fn assumption_bundle_files() {
    let spec = shipped("reference.toml").model;
    let opts = SuiteOptions { a3_draws: 20_000, grid_points: 8, ..SuiteOptions::default() };
    let bundle = run_assumption_suite(&spec, &opts, Execution::Parallel);
    let dir = tempfile::tempdir().unwrap();
    write_assumption_bundle(dir.path(), &bundle).unwrap();
    for a in ["a1", "a2", "a3", "a4", "a5", "a6"] {
        let text = std::fs::read_to_string(dir.path().join(format!("{a}.csv"))).unwrap();
        assert!(text.lines().count() > 1, "{a}");
    }
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("verdicts.json")).unwrap()).unwrap();
    assert!(json["verdicts"].is_array());
}
