use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use irgnm_core::benchmarks::DenseRate;
use irgnm_core::misfit::{rate_bound, RateFunction};
use irgnm_core::oracle::{dense_residual, replay_linear};
use serde_json::Value;
use tempfile::TempDir;

fn irgnm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irgnm")).args(args).output().expect("binary runs")
}

fn config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_in(dir: &TempDir, cmd: &str, cfg: &Path, out: &str, extra: &[&str]) -> (Output, PathBuf) {
    let out_dir = dir.path().join(out);
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    (irgnm(&args), out_dir)
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

const DENSE: &str = "[problem]\nkind = \"dense\"\n\n[irgnm]\nc_tc = 0.0\n";

#[test]
fn validate_prints_derived_constants() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", "[irgnm]\ntau = 10.0\nc_tc = 0.1\n");
    let out = irgnm(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("c4 = 0.0279"), "{text}");
}

#[test]
fn validate_names_the_violated_condition() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", "[irgnm]\nc_tc = 0.4\n");
    let out = irgnm(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("residual contraction"), "{text}");
}

#[test]
fn malformed_config_reports_the_location() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", "[irgnm]\ntau = = 3\n");
    let out = irgnm(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2"), "{err}");

    let cfg = config(&dir, "u.toml", "[irgnm]\ntua = 3.0\n");
    assert_eq!(irgnm(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(irgnm(&["run"]).status.code(), Some(2));
    assert_eq!(irgnm(&["validate", "--config", "/nonexistent/c.toml"]).status.code(), Some(2));
}

#[test]
fn huge_noise_stops_before_the_first_step() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", "[problem]\nkind = \"smooth\"\ndelta = 1e4\n");
    let (out, out_dir) = run_in(&dir, "run", &cfg, "o", &[]);
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&out_dir);
    assert_eq!(s["k_star"], 0);
    assert_eq!(s["status"], "ok");
    let (header, rows) = csv_rows(&out_dir.join("iterations.csv"));
    assert_eq!(header.join(","), irgnm_core::report::ITERATION_HEADER);
    assert!(rows.is_empty());
}

#[test]
fn dense_run_matches_a_replay_of_its_beta_sequence() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", DENSE);
    let (out, out_dir) = run_in(&dir, "run", &cfg, "o", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out_dir);
    let (header, rows) = csv_rows(&out_dir.join("iterations.csv"));
    let betas = column(&header, &rows, "beta");
    assert_eq!(betas.len() as u64, s["k_star"].as_u64().unwrap());

    let inst = DenseRate::default().build().unwrap();
    let t = &inst.problem.t;
    let iterates = replay_linear(t, &inst.problem.data, &inst.problem.prior, &betas).unwrap();
    let final_res = dense_residual(t, &inst.problem.data, iterates.last().unwrap());
    let reported = s["final_i3h"].as_f64().unwrap();
    assert!((final_res - reported).abs() <= 1e-6 * reported, "{final_res} vs {reported}");
    assert!(reported <= s["stop_level"].as_f64().unwrap());
}

#[test]
fn repeated_runs_give_identical_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", "dump_functions = true\n[problem]\nkind = \"smooth\"\n");
    let (_, a) = run_in(&dir, "run", &cfg, "a", &[]);
    let (_, b) = run_in(&dir, "run", &cfg, "b", &[]);
    for f in ["iterations.csv", "beta_trace.csv", "q_final.csv", "q_dagger.csv"] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn seed_flag_overrides_the_file() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", "seed = 1\n[problem]\nkind = \"smooth\"\n");
    let (_, a) = run_in(&dir, "run", &cfg, "a", &[]);
    let (_, b) = run_in(&dir, "run", &cfg, "b", &["--seed", "2"]);
    let echo = fs::read_to_string(b.join("config.toml")).unwrap();
    assert!(echo.contains("seed = 2"), "{echo}");
    assert_eq!(summary(&b)["config"]["problem"]["seed"], 2);
    assert_ne!(fs::read(a.join("iterations.csv")).unwrap(), fs::read(b.join("iterations.csv")).unwrap());
}

#[test]
fn runtime_failure_is_recorded() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", "[problem]\nkind = \"smooth\"\nq0 = -20.0\n");
    let (out, out_dir) = run_in(&dir, "run", &cfg, "o", &[]);
    assert_eq!(out.status.code(), Some(1));
    let s = summary(&out_dir);
    assert_eq!(s["status"], "failed");
    assert!(s["error"].as_str().unwrap().contains("admissible"));
}

#[test]
fn rate_study_output_is_consistent() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", DENSE);
    let (out, out_dir) = run_in(&dir, "rate-study", &cfg, "o", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(&out_dir.join("rates.csv"));
    let delta = column(&header, &rows, "delta");
    let error = column(&header, &rows, "error");
    let bound = column(&header, &rows, "rate_bound");
    assert_eq!(delta.len(), 5);
    assert!(delta.windows(2).all(|w| w[1] < w[0]));
    assert!(error.windows(2).all(|w| w[1] <= 1.1 * w[0]));
    let s = summary(&out_dir);
    let slope = s["slope"].as_f64().unwrap();
    let c_bar = irgnm_core::studies::c_bar(&irgnm_core::irgnm::RunConfig { c_tc: 0.0, ..Default::default() });
    assert!((0.35..=0.65).contains(&slope), "slope {slope}");
    let bench = DenseRate::default();
    let s_norm = irgnm_core::linalg::norm2(&bench.source());
    let f = RateFunction::holder(bench.nu).unwrap();
    for (d, b) in delta.iter().zip(&bound) {
        assert_eq!(*b, rate_bound(&f, *d, s_norm, c_bar).unwrap());
    }
}

#[test]
fn rate_study_rejects_the_smooth_problem() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", "[problem]\nkind = \"smooth\"\n");
    let (out, _) = run_in(&dir, "rate-study", &cfg, "o", &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn estimator_study_on_the_smooth_benchmark() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", "[problem]\nkind = \"smooth\"\n");
    let (out, out_dir) = run_in(&dir, "estimator-study", &cfg, "o", &["--fine-factor", "8"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = csv_rows(&out_dir.join("effectivity.csv"));
    assert_eq!(rows.len(), 6);
    let s = summary(&out_dir);
    for i in 0..4 {
        let m = s["median_effectivity"][i].as_f64().unwrap();
        assert!((0.2..=5.0).contains(&m), "eta{}: {m}", i + 1);
        assert_eq!(s["eta_decay"][i], true);
    }
    assert_eq!(s["config"]["estimator_study"]["fine_factor"], 8);
    let (bad, _) = run_in(&dir, "estimator-study", &cfg, "p", &["--fine-factor", "3"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn dense_estimator_study_marks_effectivity_undefined() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", DENSE);
    let (out, out_dir) = run_in(&dir, "estimator-study", &cfg, "o", &[]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = csv_rows(&out_dir.join("effectivity.csv"));
    for i in 1..=4 {
        let e = header.iter().position(|h| *h == format!("effectivity{i}")).unwrap();
        let eta = header.iter().position(|h| *h == format!("eta{i}")).unwrap();
        assert_eq!(rows[0][e], "NA");
        assert_eq!(rows[0][eta], "0");
    }
}
