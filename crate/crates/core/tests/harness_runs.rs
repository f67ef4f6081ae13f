//! End-to-end harness runs at miniature scale: output contracts and
//! bit-level reproducibility.

use pathweight::harness::{
    render_csv, run_experiment, write_outputs, ExperimentConfig, ExperimentKind,
};

fn mini_ou_config(out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::OuPerturbation);
    cfg.k = 2000;
    cfg.n_steps = 50;
    cfg.sweep_values = vec![0.0, 0.2, 0.4];
    cfg.seed = 7;
    cfg.out_dir = out.to_path_buf();
    cfg
}

#[test]
fn csv_identical_across_worker_counts_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mini_ou_config(dir.path());
    let csv_with_threads = |n: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap();
        let out = pool.install(|| run_experiment(&cfg).unwrap());
        render_csv(cfg.experiment, &out.rows).unwrap()
    };
    let single = csv_with_threads(1);
    let multi = csv_with_threads(4);
    assert_eq!(single, multi, "worker count changed the CSV bytes");
    let again = csv_with_threads(1);
    assert_eq!(single, again, "rerun changed the CSV bytes");
}

#[test]
fn outputs_are_written_and_summary_records_assertions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mini_ou_config(dir.path());
    let out = run_experiment(&cfg).unwrap();
    let (csv_path, json_path) = write_outputs(&cfg, &out).unwrap();
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("swept_value,estimate,stderr,exact,kl_lower,holder_upper\n"));
    assert_eq!(csv.lines().count(), 1 + cfg.sweep_values.len());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(json["experiment"], "ou_perturbation");
    assert_eq!(json["seed"], 7);
    assert!(json["assertions"].as_array().unwrap().len() >= 2);
    assert!(json["sub_seeds"].as_object().unwrap().contains_key("ou_matrix_d1"));
    // mini-scale sampling still tracks the closed form at small eps
    assert!(out.summary.all_passed(), "assertions: {:?}", out.summary.assertions);
}

#[test]
fn gaussian_dim_sweep_emits_ordered_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::GaussianDimSweep);
    cfg.k = 20_000;
    cfg.sweep_values = vec![1.0, 2.0, 4.0];
    cfg.out_dir = dir.path().to_path_buf();
    let out = run_experiment(&cfg).unwrap();
    for row in &out.rows {
        assert!(row.bound("kl_lower").unwrap() <= row.bound("exact").unwrap());
    }
    assert!(out.summary.all_passed());
}

#[test]
fn hitting_sweep_structure_at_miniature_scale() {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::HittingSweep);
    cfg.k = 400;
    cfg.dt = 1e-3;
    cfg.sweep_values = vec![0.25, 0.5];
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.rows.len(), 2);
    for row in &out.rows {
        for col in ["exact", "exact_stderr", "jensen_lower", "naive_wrong"] {
            assert!(row.bound(col).is_some(), "missing column {col}");
        }
        assert!(row.bound("jensen_lower").unwrap() <= row.bound("exact").unwrap());
    }
}

#[test]
fn invalid_sweep_parameter_is_a_config_error() {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::OuPerturbation);
    cfg.sweep_param = "kappa".into();
    let err = run_experiment(&cfg).unwrap_err();
    assert!(err.to_string().contains("sweeps 'eps' or 'd'"), "{err}");
}
