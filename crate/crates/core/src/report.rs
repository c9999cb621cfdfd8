//! CSV and JSON artifacts of a run. Floats use the shortest representation
//! that round-trips, so identical runs give identical bytes.

use std::fmt::Write;

use serde::Serialize;

use crate::irgnm::{DerivedConstants, IterationRecord, RunReport, StopReason};
use crate::problem::InverseProblem;
use crate::regparam::BetaTraceRow;

pub const ITERATION_HEADER: &str =
    "k,beta,I1h,I2h,I3h,I4h,eta1,eta2,eta3,eta4,dofs_h1,dofs_h2,dofs_h3,dofs_h4,q_norm,condA_rounds,condC_rounds";

pub const BETA_TRACE_HEADER: &str = "k,inner_step,beta,i_h,i_prime_h,eta_i,eta_i_prime,dofs";

pub fn iterations_csv(records: &[IterationRecord]) -> String {
    let mut s = String::from(ITERATION_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.beta,
            r.i1h,
            r.i2h,
            r.i3h,
            r.i4h,
            r.eta1,
            r.eta2,
            r.eta3,
            r.eta4,
            r.dofs[0],
            r.dofs[1],
            r.dofs[2],
            r.dofs[3],
            r.q_norm,
            r.cond_a_rounds,
            r.cond_c_rounds
        );
    }
    s
}

pub fn beta_trace_csv(rows: &[BetaTraceRow]) -> String {
    let mut s = String::from(BETA_TRACE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.k, r.inner_step, r.beta, r.i_h, r.i_prime_h, r.eta_i, r.eta_i_prime, r.dofs
        );
    }
    s
}

/// Nodal values as `vertex,value` lines.
pub fn function_csv(vertices: &[f64], values: &[f64]) -> String {
    let mut s = String::from("x,value\n");
    for (x, v) in vertices.iter().zip(values) {
        let _ = writeln!(s, "{x},{v}");
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary<C: Serialize> {
    pub version: &'static str,
    pub k_star: usize,
    pub stop: StopReason,
    pub final_i3h: f64,
    pub stop_level: f64,
    pub final_dofs: usize,
    pub initial_cond_c_rounds: usize,
    pub constants: DerivedConstants,
    pub window_violations: usize,
    pub total_wall_seconds: f64,
    pub config: C,
}

pub fn summarize<P: InverseProblem, C: Serialize>(p: &P, report: &RunReport<P>, tau: f64, config: C) -> RunSummary<C> {
    let delta = p.noise_level();
    RunSummary {
        version: env!("CARGO_PKG_VERSION"),
        k_star: report.k_star,
        stop: report.stop,
        final_i3h: report.final_i3h,
        stop_level: tau * tau * delta * delta,
        final_dofs: p.dofs(&report.final_mesh),
        initial_cond_c_rounds: report.initial_cond_c_rounds,
        constants: report.constants,
        window_violations: report.records.iter().filter(|r| !r.window_ok).count(),
        total_wall_seconds: report.records.iter().map(|r| r.wall_seconds).sum(),
        config,
    }
}
