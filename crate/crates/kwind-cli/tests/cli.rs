use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kwind::config::{RunConfig, TimeGrid};
use kwind::harness::Manifest;

fn kwind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kwind"))
        .args(args)
        .output()
        .expect("spawn kwind")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = RunConfig::default();
    cfg.model.n_sites = 4;
    cfg.model.realizations = 3;
    cfg.krylov.n_max = 64;
    cfg.analysis.t_grid = TimeGrid { t_max: 4.0, points: 5 };
    cfg.analysis.mu_points = 64;
    cfg.analytic.times = vec![1.0, 2.0];
    cfg.analytic.ramp_sizes = vec![8];
    cfg.analytic.ramp_points = 5;
    cfg.analytic.ramp_mu_points = 256;
    cfg.analytic.mu_points = 64;
    cfg.scramblon.h_list = vec![1.0];
    cfg.scramblon.s_points = 8;
    cfg.scramblon.mu_points = 11;
    let path = dir.join("run.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn argument_errors_exit_one() {
    assert_eq!(code(&kwind(&[])), 1);
    assert_eq!(code(&kwind(&["spin-run", "--threads", "many"])), 1);
    assert_eq!(code(&kwind(&["selftest", "--only", "13"])), 1);
    assert_eq!(code(&kwind(&["--help"])), 0);
}

#[test]
fn bad_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[model]\nn_sites = 14\n").unwrap();
    let o = kwind(&["spin-run", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", text(&o));
    fs::write(&path, "[model]\nsites = 4\n").unwrap();
    assert_eq!(code(&kwind(&["analytic", "--config", path.to_str().unwrap()])), 1);
}

#[test]
fn memory_budget_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_kwind"))
        .args(["spin-run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env(kwind::krylov::BUDGET_ENV, "0.001")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1, "{}", text(&o));
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("spin");
    let o = kwind(&[
        "spin-run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "40",
        "--realizations",
        "2",
        "--threads",
        "1",
    ]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let m = Manifest::read(&out).unwrap();
    assert_eq!(m.command, "spin-run");
    assert_eq!(m.config.model.seed_base, 40);
    assert_eq!(m.config.model.realizations, 2);
    assert_eq!(m.config.threads, 1);
    assert!(out.join("realizations/r0001/b.csv").exists());
    assert!(!out.join("realizations/r0002").exists());
}

/// Every output directory can be regenerated from its manifest alone.
#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for cmd in ["analytic", "scramblon", "spin-run"] {
        let first = dir.path().join(format!("{cmd}-a"));
        let o = kwind(&[cmd, "--config", cfg.to_str().unwrap(), "--out", first.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", text(&o));
        let m = Manifest::read(&first).unwrap();
        assert!(!m.files.is_empty());
        for f in &m.files {
            assert!(first.join(f).is_file(), "{cmd}: {f} listed but missing");
        }

        let echoed = dir.path().join(format!("{cmd}.toml"));
        fs::write(&echoed, m.config.to_toml().unwrap()).unwrap();
        let second = dir.path().join(format!("{cmd}-b"));
        let o = kwind(&[&m.command, "--config", echoed.to_str().unwrap(), "--out", second.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", text(&o));
        let m2 = Manifest::read(&second).unwrap();
        assert_eq!(m.files, m2.files);
        assert_eq!(m.summary, m2.summary);
        for f in m.files.iter().filter(|f| f.ends_with(".csv") || (f.ends_with(".json") && *f != "manifest.json")) {
            assert_eq!(
                fs::read(first.join(f)).unwrap(),
                fs::read(second.join(f)).unwrap(),
                "{cmd}: {f} differs"
            );
        }
    }
}

#[test]
fn selftest_reports_and_detects_tightened_bounds() {
    let o = kwind(&["selftest", "--only", "1,4"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.lines().any(|l| l.starts_with("PASS  1")));
    assert!(out.lines().any(|l| l.starts_with("PASS  4")));
    assert!(out.contains("2/2 criteria passed"));
    assert!(out.contains(" s)"));

    let o = kwind(&["selftest", "--only", "1", "--tighten", "1=0"]);
    assert_eq!(code(&o), 3, "{}", text(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("FAIL  1"));
}
