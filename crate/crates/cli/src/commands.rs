use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use irgnm_core::benchmarks::{smooth_q_dagger, DenseInstance, SmoothInstance};
use irgnm_core::irgnm::{self, validate_config, RunReport};
use irgnm_core::mesh::Mesh1D;
use irgnm_core::problem::InverseProblem;
use irgnm_core::report::{self, beta_trace_csv, function_csv, iterations_csv};
use irgnm_core::studies::{self, effectivity_csv, median_effectivity, rate_csv, EffectivityRow};
use irgnm_core::Error;

use crate::config::{ConfigFile, ProblemConfig};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn prepare(cfg: &ConfigFile) -> Result<std::path::PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    fs::write(dir.join("config.toml"), toml::to_string(cfg)?)?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::write(dir.join(name), text).with_context(|| format!("cannot write {name}"))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    write(dir, name, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// Records a failed command so that partial output is recognizable.
fn write_failure(dir: &Path, cfg: &ConfigFile, err: &anyhow::Error) {
    let v = json!({ "status": "failed", "error": format!("{err:#}"), "version": VERSION, "config": cfg });
    if let Err(e) = write_json(dir, "summary.json", &v) {
        log::error!("could not record the failure: {e}");
    }
}

fn with_failure_record(cfg: &ConfigFile, dir: &Path, f: impl FnOnce() -> Result<()>) -> Result<()> {
    f().inspect_err(|e| write_failure(dir, cfg, e))
}

pub fn validate(cfg: &ConfigFile) -> Result<()> {
    match validate_config(&cfg.irgnm) {
        Ok(c) => {
            println!("constants ok");
            println!("theta_mid = {:.4}", c.theta_mid);
            println!("noise_term = {:.4}", c.noise_term);
            println!("contraction = {:.4}", c.contraction);
            println!("c4 = {:.4}", c.c4);
            println!("c5 = {:.4}", c.c5);
            println!("c_C = {:.4}", c.c_c);
            Ok(())
        }
        Err(Error::Constants(v)) => {
            for line in &v {
                println!("violated: {line}");
            }
            bail!("{} condition(s) violated", v.len())
        }
        Err(e) => Err(e.into()),
    }
}

fn check_constants(cfg: &ConfigFile) -> Result<()> {
    validate_config(&cfg.irgnm).map(|_| ()).map_err(Into::into)
}

fn summary_value<P: InverseProblem>(p: &P, report: &RunReport<P>, cfg: &ConfigFile) -> Result<Value> {
    let mut v = serde_json::to_value(report::summarize(p, report, cfg.irgnm.tau, cfg))?;
    v["status"] = json!("ok");
    v["cli_version"] = json!(VERSION);
    Ok(v)
}

fn write_run<P: InverseProblem>(dir: &Path, p: &P, report: &RunReport<P>, cfg: &ConfigFile) -> Result<()> {
    write(dir, "iterations.csv", &iterations_csv(&report.records))?;
    write(dir, "beta_trace.csv", &beta_trace_csv(&report.beta_trace))?;
    write_json(dir, "summary.json", &summary_value(p, report, cfg)?)?;
    println!("k* = {}, stop = {:?}, final I3h = {}", report.k_star, report.stop, report.final_i3h);
    Ok(())
}

pub fn run(cfg: &ConfigFile) -> Result<()> {
    check_constants(cfg)?;
    let dir = prepare(cfg)?;
    with_failure_record(cfg, &dir, || match &cfg.problem {
        ProblemConfig::Smooth(s) => {
            let SmoothInstance { problem: p, mesh0, q_start, .. } = s.build()?;
            let mesh0 = p.discretize(mesh0)?;
            let q = p.interpolate_control(&mesh0, |_| q_start);
            let report = irgnm::run(&p, &cfg.irgnm, mesh0, q)?;
            write_run(&dir, &p, &report, cfg)?;
            if cfg.dump_functions {
                let m = &report.final_mesh;
                write(&dir, "q_final.csv", &function_csv(m.mesh.vertices(), &report.final_q))?;
                let qd = p.interpolate_control(m, smooth_q_dagger);
                write(&dir, "q_dagger.csv", &function_csv(m.mesh.vertices(), &qd))?;
            }
            Ok(())
        }
        ProblemConfig::Dense(d) => {
            let DenseInstance { problem: p, q_dagger, .. } = d.build()?;
            let report = irgnm::run(&p, &cfg.irgnm, (), p.prior.clone())?;
            write_run(&dir, &p, &report, cfg)?;
            if cfg.dump_functions {
                let idx: Vec<f64> = (0..q_dagger.len()).map(|i| i as f64).collect();
                write(&dir, "q_final.csv", &function_csv(&idx, &report.final_q))?;
                write(&dir, "q_dagger.csv", &function_csv(&idx, &q_dagger))?;
            }
            Ok(())
        }
    })
}

pub fn rate_study(cfg: &ConfigFile) -> Result<()> {
    check_constants(cfg)?;
    let ProblemConfig::Dense(bench) = &cfg.problem else {
        bail!("the rate study needs a manufactured source; use kind = \"dense\"");
    };
    let mut deltas = cfg.rate_study.deltas.clone();
    if deltas.is_empty() || deltas.iter().any(|d| !d.is_finite() || *d <= 0.0) {
        bail!("the rate study needs a nonempty list of positive noise levels");
    }
    deltas.sort_by(|a, b| b.total_cmp(a));
    deltas.dedup();
    let dir = prepare(cfg)?;
    with_failure_record(cfg, &dir, || {
        let study = studies::rate_study(bench, &cfg.irgnm, &deltas)?;
        write(&dir, "rates.csv", &rate_csv(&study))?;
        let errors_nonincreasing = study.rows.windows(2).all(|w| w[1].error <= 1.1 * w[0].error);
        let ratio = study.rows.iter().map(|r| r.error * r.error / r.rate_bound).fold(0.0, f64::max);
        println!("slope = {:.4}, worst squared error / bound = {:.3e}", study.slope, ratio);
        write_json(
            &dir,
            "summary.json",
            &json!({
                "status": "ok",
                "version": VERSION,
                "slope": study.slope,
                "c_bar": study.c_bar,
                "worst_ratio": ratio,
                "errors_nonincreasing": errors_nonincreasing,
                "config": cfg,
            }),
        )
    })
}

/// True when `eta` decreases in absolute value once `dofs > 100`, allowing one inversion.
fn decays_beyond_100_dofs(rows: &[EffectivityRow], i: usize) -> bool {
    let tail: Vec<f64> = rows.iter().filter(|r| r.dofs > 100).map(|r| r.eta[i].abs()).collect();
    tail.windows(2).filter(|w| w[1] > w[0]).count() <= 1
}

pub fn estimator_study(cfg: &ConfigFile) -> Result<()> {
    let ff = cfg.estimator_study.fine_factor;
    if ff < 4 || !ff.is_power_of_two() {
        bail!("fine factor must be a power of two of at least 4, got {ff}");
    }
    let dir = prepare(cfg)?;
    with_failure_record(cfg, &dir, || {
        let beta = cfg.estimator_study.beta;
        let rows = match &cfg.problem {
            ProblemConfig::Smooth(s) => {
                let inst = s.build()?;
                let meshes = cfg
                    .estimator_study
                    .cells
                    .iter()
                    .map(|&n| Mesh1D::uniform(0.0, 1.0, n))
                    .collect::<irgnm_core::Result<Vec<_>>>()?;
                let q0 = inst.q_start;
                studies::estimator_study(&inst.problem, move |_| q0, beta, &meshes, ff)?
            }
            ProblemConfig::Dense(d) => {
                let inst = d.build()?;
                vec![studies::dense_estimator_row(&inst.problem, &inst.problem.prior, beta)?]
            }
        };
        write(&dir, "effectivity.csv", &effectivity_csv(&rows))?;
        let medians: Vec<Option<f64>> = (0..4).map(|i| median_effectivity(&rows, i)).collect();
        let decay: Vec<bool> = (0..4).map(|i| decays_beyond_100_dofs(&rows, i)).collect();
        for (i, m) in medians.iter().enumerate() {
            match m {
                Some(m) => println!("eta{}: median effectivity {m:.4}", i + 1),
                None => println!("eta{}: effectivity undefined", i + 1),
            }
        }
        write_json(
            &dir,
            "summary.json",
            &json!({
                "status": "ok",
                "version": VERSION,
                "median_effectivity": medians,
                "eta_decay": decay,
                "config": cfg,
            }),
        )
    })
}
