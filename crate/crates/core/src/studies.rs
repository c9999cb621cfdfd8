//! Convergence-rate and estimator-effectivity studies.

use std::fmt::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::benchmarks::DenseRate;
use crate::error::Result;
use crate::gnstep::{eval_qoi, gn_solve};
use crate::irgnm::{run, RunConfig, StopReason};
use crate::linalg;
use crate::mesh::Mesh1D;
use crate::misfit::{bregman_distance, rate_bound, QuadraticPenalty, RateFunction};
use crate::oracle::reference_qoi;
use crate::par;
use crate::problem::{linearize_at, FemProblem, InverseProblem, Reaction, StepQoi};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub delta: f64,
    pub error: f64,
    pub bregman: f64,
    pub rate_bound: f64,
    pub k_star: usize,
    pub dofs: usize,
    pub stop: StopReason,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateStudy {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `log error` against `log δ`.
    pub slope: f64,
    pub c_bar: f64,
}

/// `C̄ = √(1 + c1) τ + 1`, the constant in the final residual bound.
pub fn c_bar(cfg: &RunConfig) -> f64 {
    (1.0 + cfg.c1).sqrt() * cfg.tau + 1.0
}

pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs the dense benchmark for each noise level. The grid points are
/// independent and run concurrently; rows keep the order of `deltas`.
pub fn rate_study(bench: &DenseRate, cfg: &RunConfig, deltas: &[f64]) -> Result<RateStudy> {
    let f = RateFunction::holder(bench.nu)?;
    let cb = c_bar(cfg);
    let rows = par::map_slice(deltas, |&delta| -> Result<RateRow> {
        let inst = DenseRate { delta, ..bench.clone() }.build()?;
        let p = &inst.problem;
        let report = run(p, cfg, (), p.prior.clone())?;
        let err = linalg::norm2(&linalg::sub(&report.final_q, &inst.q_dagger));
        let r = QuadraticPenalty::new(p.prior.clone());
        let xi = linalg::sub(&inst.q_dagger, &p.prior);
        Ok(RateRow {
            delta,
            error: err,
            bregman: bregman_distance(&r, &report.final_q, &inst.q_dagger, &xi),
            rate_bound: rate_bound(&f, delta, linalg::norm2(&inst.source), cb)?,
            k_star: report.k_star,
            dofs: p.dofs(&()),
            stop: report.stop,
        })
    });
    let rows: Vec<RateRow> = rows.into_iter().collect::<Result<_>>()?;
    let d: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let e: Vec<f64> = rows.iter().map(|r| r.error).collect();
    Ok(RateStudy { slope: log_log_slope(&d, &e), rows, c_bar: cb })
}

pub fn rate_csv(study: &RateStudy) -> String {
    let mut s = String::from("delta,error,bregman,rate_bound,ratio,k_star,dofs\n");
    for r in &study.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.delta,
            r.error,
            r.bregman,
            r.rate_bound,
            r.error * r.error / r.rate_bound,
            r.k_star,
            r.dofs
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectivityRow {
    pub cells: usize,
    pub dofs: usize,
    /// Working values, references, estimates and effectivities for `I_1 … I_4`.
    pub value: [f64; 4],
    pub reference: [f64; 4],
    pub eta: [f64; 4],
    pub effectivity: [Option<f64>; 4],
}

/// Effectivity `η / (I_ref - I_h)`; undefined when the true error is zero.
pub fn effectivity(eta: f64, reference: f64, value: f64) -> Option<f64> {
    let err = reference - value;
    if err == 0.0 || !err.is_finite() {
        None
    } else {
        Some(eta / err)
    }
}

/// One Gauss-Newton step at `q_old` with fixed `β` on each mesh, compared
/// with a reference on the mesh refined `fine_factor` times.
pub fn estimator_study<R: Reaction>(
    p: &FemProblem<R>,
    q_old: impl Fn(f64) -> f64 + Sync,
    beta: f64,
    meshes: &[Mesh1D],
    fine_factor: usize,
) -> Result<Vec<EffectivityRow>> {
    let rows = par::map_slice(meshes, |m| -> Result<EffectivityRow> {
        let mesh = p.discretize(m.clone())?;
        let q = p.interpolate_control(&mesh, &q_old);
        let lin = Arc::new(linearize_at(p, &q, &mesh)?);
        let state = gn_solve(p, lin.clone(), &mesh, beta)?;
        let (qoi, _) = eval_qoi(p, &state)?;
        let eta = [
            p.estimate_step(&state, StepQoi::I1)?.value,
            p.estimate_step(&state, StepQoi::I2)?.value,
            p.estimate_misfit(&lin, &mesh)?.value,
            p.estimate_step(&state, StepQoi::I4)?.value,
        ];
        let r = reference_qoi(p, &mesh, &q, beta, fine_factor)?;
        let value = [qoi.i1, qoi.i2, qoi.i3, qoi.i4];
        let reference = [r.i1, r.i2, r.i3, r.i4];
        let effectivity = std::array::from_fn(|i| effectivity(eta[i], reference[i], value[i]));
        Ok(EffectivityRow { cells: m.n_cells(), dofs: p.dofs(&mesh), value, reference, eta, effectivity })
    });
    rows.into_iter().collect()
}

/// Dense problems have no discretization error: every estimate is zero and
/// every effectivity undefined.
pub fn dense_estimator_row<P: InverseProblem<Mesh = ()>>(p: &P, q_old: &[f64], beta: f64) -> Result<EffectivityRow> {
    let lin = Arc::new(linearize_at(p, q_old, &())?);
    let state = gn_solve(p, lin.clone(), &(), beta)?;
    let (qoi, _) = eval_qoi(p, &state)?;
    let eta = [
        p.estimate_step(&state, StepQoi::I1)?.value,
        p.estimate_step(&state, StepQoi::I2)?.value,
        p.estimate_misfit(&lin, &())?.value,
        p.estimate_step(&state, StepQoi::I4)?.value,
    ];
    let value = [qoi.i1, qoi.i2, qoi.i3, qoi.i4];
    Ok(EffectivityRow {
        cells: 0,
        dofs: p.dofs(&()),
        value,
        reference: value,
        eta,
        effectivity: [None; 4],
    })
}

pub fn effectivity_csv(rows: &[EffectivityRow]) -> String {
    let mut s = String::from("cells,dofs");
    for i in 1..=4 {
        let _ = write!(s, ",I{i}h,I{i}_ref,eta{i},effectivity{i}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{}", r.cells, r.dofs);
        for i in 0..4 {
            let eff = r.effectivity[i].map_or_else(|| "NA".to_string(), |e| e.to_string());
            let _ = write!(s, ",{},{},{},{}", r.value[i], r.reference[i], r.eta[i], eff);
        }
        s.push('\n');
    }
    s
}

/// Median of the defined effectivities of estimator `i`.
pub fn median_effectivity(rows: &[EffectivityRow], i: usize) -> Option<f64> {
    let mut v: Vec<f64> = rows.iter().filter_map(|r| r.effectivity[i]).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
