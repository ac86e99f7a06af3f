use std::fs;
use std::path::Path;

use kwind::config::{RunConfig, TimeGrid};
use kwind::harness::{analytic_run, read_csv, recompute_ck_mean, scramblon_run, spin_run, Manifest};

fn small_spin(dir: &Path, threads: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.output_dir = dir.to_path_buf();
    cfg.threads = threads;
    cfg.model.n_sites = 5;
    cfg.model.realizations = 4;
    cfg.model.seed_base = 17;
    cfg.krylov.n_max = 80;
    cfg.analysis.t_grid = TimeGrid { t_max: 12.0, points: 7 };
    cfg.analysis.mu_points = 128;
    cfg
}

fn numeric_files(dir: &Path) -> Vec<String> {
    let mut files = Manifest::read(dir).unwrap().files;
    files.retain(|f| f.ends_with(".csv"));
    files
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("one");
    let b = tmp.path().join("two");
    let ra = spin_run(&small_spin(&a, 1)).unwrap();
    let rb = spin_run(&small_spin(&b, 2)).unwrap();
    assert_eq!(ra.exit_code(), 0);
    assert_eq!(rb.exit_code(), 0);
    let files = numeric_files(&a);
    assert_eq!(files, numeric_files(&b));
    assert!(files.iter().any(|f| f == "ck_mean.csv"));
    for f in &files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn single_realization_reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for k in 0..2 {
        let mut cfg = small_spin(&tmp.path().join(k.to_string()), 0);
        cfg.model.realizations = 1;
        spin_run(&cfg).unwrap();
        runs.push(cfg.output_dir);
    }
    for f in numeric_files(&runs[0]) {
        assert_eq!(fs::read(runs[0].join(&f)).unwrap(), fs::read(runs[1].join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn aggregates_are_recomputable_from_parts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_spin(tmp.path(), 0);
    let res = spin_run(&cfg).unwrap();
    assert_eq!(res.completed, vec![0, 1, 2, 3]);
    assert!(recompute_ck_mean(tmp.path()).unwrap() < 1e-12);

    // b_mean.csv is the plain mean of the per-realization chains.
    let (_, mean) = read_csv(&tmp.path().join("b_mean.csv")).unwrap();
    let parts: Vec<Vec<Vec<f64>>> = (0..4)
        .map(|r| read_csv(&tmp.path().join(format!("realizations/r{r:04}/b.csv"))).unwrap().1)
        .collect();
    for (k, row) in mean.iter().enumerate() {
        let avg = parts.iter().map(|p| p[k][1]).sum::<f64>() / 4.0;
        assert!((row[1] - avg).abs() < 1e-12);
    }
}

#[test]
fn manifest_round_trips_and_lists_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.output_dir = tmp.path().to_path_buf();
    cfg.scramblon.h_list = vec![1.0, 0.5];
    cfg.scramblon.s_points = 12;
    cfg.scramblon.mu_points = 21;
    let rep = scramblon_run(&cfg).unwrap();
    assert_eq!(rep.exit_code(), 0);
    let m = Manifest::read(tmp.path()).unwrap();
    assert_eq!(m.command, "scramblon");
    assert_eq!(m.config, cfg);
    let text = serde_json::to_string(&m).unwrap();
    assert_eq!(serde_json::from_str::<Manifest>(&text).unwrap(), m);
    for f in &m.files {
        let path = tmp.path().join(f);
        let body = fs::read_to_string(&path).unwrap();
        let mut lines = body.lines();
        assert!(lines.next().is_some_and(|l| !l.starts_with('#')), "{f}: header");
        assert!(lines.next().is_some_and(|l| l.starts_with('#')), "{f}: units line");
    }
}

#[test]
fn infinite_temperature_solvable_amplitudes_do_not_wind() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.output_dir = tmp.path().to_path_buf();
    cfg.analytic.beta = 0.0;
    cfg.analytic.ramp_sizes.clear();
    assert!(analytic_run(&cfg).is_err(), "beta = 0 needs an explicit alpha");
    cfg.analytic.alpha = Some(1.0);
    let rep = analytic_run(&cfg).unwrap();
    assert_eq!(rep.summary["solvable_phi_real"], serde_json::Value::Bool(true));
    let (_, phi) = read_csv(&tmp.path().join("solvable_phi.csv")).unwrap();
    assert!(phi.iter().all(|r| r[3] == 0.0));
    let (header, rows) = read_csv(&tmp.path().join("solvable_mu_k.csv")).unwrap();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for r in &rows {
        assert_eq!(r[col("mu_k_closed")], 0.0);
        assert!(r[col("mu_k")].abs() < 1e-12);
    }
}
