//! The adaptive iteratively regularized Gauss-Newton method.
//!
//! Each step picks `β` so that the linearized residual lands in the window
//! `[θ_lo, θ_hi] · I_3`, refines until the error in `I_1` is small relative
//! to `I_3` (condition A), moves to the new iterate, and refines until the
//! error in the new misfit `I_3` is small (condition C). The iteration stops
//! by the discrepancy principle `I_3 ≤ τ² δ²`.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnstep::{eval_qoi, gn_solve, GnState};
use crate::problem::{linearize_at, Estimate, InverseProblem, Linearization, StepQoi};
use crate::regparam::{select_beta, BetaSearchConfig, BetaTraceRow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tau: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub tau_beta: f64,
    pub tau_beta_tilde: f64,
    /// Tangential cone constant assumed for the forward operator.
    pub c_tc: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Slack `r^k = r0 · rate^k` in the misfit growth bound.
    pub slack_r0: f64,
    pub slack_rate: f64,
    pub marking_fraction: f64,
    pub max_newton_steps: usize,
    pub max_dofs: usize,
    pub max_beta_steps: usize,
    /// Starting `β`; defaults to `1 / ‖g^δ‖²`.
    pub beta_init: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tau: 10.0,
            theta_lo: 0.1,
            theta_hi: 0.2,
            tau_beta: 2.0,
            tau_beta_tilde: 1.0,
            c_tc: 0.1,
            c1: 1.0,
            c2: 0.7,
            c3: 0.5,
            slack_r0: 0.0,
            slack_rate: 0.5,
            marking_fraction: 0.5,
            max_newton_steps: 30,
            max_dofs: 4097,
            max_beta_steps: 60,
            beta_init: None,
        }
    }
}

impl RunConfig {
    pub fn beta_search(&self) -> BetaSearchConfig {
        BetaSearchConfig {
            theta_lo: self.theta_lo,
            theta_hi: self.theta_hi,
            tau_beta: self.tau_beta,
            tau_beta_tilde: self.tau_beta_tilde,
            max_steps: self.max_beta_steps,
            max_dofs: self.max_dofs,
            marking_fraction: self.marking_fraction,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub theta_mid: f64,
    /// `2 (c_tc² + (1 + c_tc)² / τ²)`.
    pub noise_term: f64,
    /// `(2 θ_hi + 4 c_tc²) / (1 - 4 c_tc²)`.
    pub contraction: f64,
    /// Bound in condition A: `η_1 ≤ c4 I_3`.
    pub c4: f64,
    pub c5: f64,
    /// Bound in condition C: `η_3 ≤ c_C I_3`.
    pub c_c: f64,
}

/// Checks the constants against the convergence conditions and returns the
/// derived bounds. All violations are reported together.
pub fn validate_config(cfg: &RunConfig) -> Result<DerivedConstants> {
    let mut bad = Vec::new();
    let finite = [cfg.tau, cfg.theta_lo, cfg.theta_hi, cfg.tau_beta, cfg.tau_beta_tilde, cfg.c_tc, cfg.c1, cfg.c2, cfg.c3];
    if finite.iter().any(|x| !x.is_finite()) {
        return Err(Error::Constants(vec!["all constants must be finite".into()]));
    }
    if !(0.0 < cfg.theta_lo && cfg.theta_lo <= cfg.theta_hi && cfg.theta_hi < 1.0) {
        bad.push(format!(
            "theta ordering: need 0 < theta_lo <= theta_hi < 1, got theta_lo = {}, theta_hi = {}",
            cfg.theta_lo, cfg.theta_hi
        ));
    }
    if !(cfg.tau_beta > cfg.tau_beta_tilde.max(1.0) && cfg.tau_beta <= cfg.tau) {
        bad.push(format!(
            "tau_beta ordering: need max(1, tau_beta_tilde) < tau_beta <= tau, got tau_beta_tilde = {}, tau_beta = {}, tau = {}",
            cfg.tau_beta_tilde, cfg.tau_beta, cfg.tau
        ));
    }
    if !(cfg.c_tc >= 0.0) {
        bad.push(format!("cone constant: need c_tc >= 0, got {}", cfg.c_tc));
    }
    if !(cfg.tau > 0.0) {
        bad.push(format!("tau must be positive, got {}", cfg.tau));
    }
    let noise_term = 2.0 * (cfg.c_tc.powi(2) + (1.0 + cfg.c_tc).powi(2) / cfg.tau.powi(2));
    if !(noise_term < cfg.theta_lo) {
        bad.push(format!(
            "noise dominance: 2 (c_tc^2 + (1 + c_tc)^2 / tau^2) = {noise_term:.6} must be < theta_lo = {} (margin {:.3e})",
            cfg.theta_lo,
            cfg.theta_lo - noise_term
        ));
    }
    let denom = 1.0 - 4.0 * cfg.c_tc.powi(2);
    let contraction = if denom > 0.0 { (2.0 * cfg.theta_hi + 4.0 * cfg.c_tc.powi(2)) / denom } else { f64::INFINITY };
    if !(contraction < 1.0) {
        bad.push(format!(
            "residual contraction: (2 theta_hi + 4 c_tc^2) / (1 - 4 c_tc^2) = {contraction:.6} must be < 1 (denominator {denom:.4})"
        ));
    }
    if !(cfg.c1 > 0.0 && cfg.c3 > 0.0 && cfg.c2 > 0.0 && cfg.c2 < 1.0) {
        bad.push(format!(
            "need c1, c3 > 0 and 0 < c2 < 1, got c1 = {}, c2 = {}, c3 = {}",
            cfg.c1, cfg.c2, cfg.c3
        ));
    }
    let budget = (1.0 + cfg.c3) * contraction;
    if !(budget <= cfg.c2) {
        bad.push(format!(
            "contraction budget: (1 + c3) (2 theta_hi + 4 c_tc^2) / (1 - 4 c_tc^2) = {budget:.6} must be <= c2 = {}",
            cfg.c2
        ));
    }
    if !(cfg.slack_r0 >= 0.0 && (0.0..1.0).contains(&cfg.slack_rate)) {
        bad.push(format!("slack sequence: need r0 >= 0 and 0 <= rate < 1, got {} and {}", cfg.slack_r0, cfg.slack_rate));
    }
    if !(cfg.marking_fraction > 0.0 && cfg.marking_fraction <= 1.0) {
        bad.push(format!("marking fraction must lie in (0, 1], got {}", cfg.marking_fraction));
    }
    if !bad.is_empty() {
        return Err(Error::Constants(bad));
    }
    let gap = cfg.theta_lo - noise_term;
    let c5 = if cfg.c_tc > 0.0 { gap / (4.0 * cfg.c_tc.powi(2)) } else { f64::INFINITY };
    Ok(DerivedConstants {
        theta_mid: 0.5 * (cfg.theta_lo + cfg.theta_hi),
        noise_term,
        contraction,
        c4: 0.5 * gap,
        c5,
        c_c: cfg.c1.min(c5).min(cfg.c3 / (2.0 * (1.0 + cfg.c3))),
    })
}

pub fn condition_a(eta1: f64, i3h: f64, c: &DerivedConstants) -> bool {
    eta1.abs() <= c.c4 * i3h
}

pub fn condition_c(eta3: f64, i3h: f64, c: &DerivedConstants) -> bool {
    eta3.abs() <= c.c_c * i3h
}

/// One Gauss-Newton step as logged.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub beta: f64,
    pub i1h: f64,
    pub i2h: f64,
    /// Misfit at `q_old` on the mesh the step was solved on.
    pub i3h: f64,
    pub i4h: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
    /// Mesh sizes at entry, after the β search, after condition A and after condition C.
    pub dofs: [usize; 4],
    /// `‖q^k - q_0‖`.
    pub q_norm: f64,
    pub cond_a_rounds: usize,
    pub cond_c_rounds: usize,
    /// Misfit at `q_old` on the entry mesh, before any refinement in this step.
    pub i3h_entry: f64,
    pub window_ok: bool,
    pub cond_a_ok: bool,
    pub cond_c_ok: bool,
    pub beta_steps: usize,
    pub window_repairs: usize,
    pub wall_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StopReason {
    Discrepancy,
    NewtonBudget,
}

pub struct RunReport<P: InverseProblem> {
    pub records: Vec<IterationRecord>,
    pub beta_trace: Vec<BetaTraceRow>,
    pub k_star: usize,
    pub stop: StopReason,
    pub final_q: Vec<f64>,
    pub final_mesh: P::Mesh,
    pub final_i3h: f64,
    pub initial_cond_c_rounds: usize,
    pub constants: DerivedConstants,
    /// Iterates `q^k` on their own meshes, kept only when requested.
    pub iterates: Vec<(Vec<f64>, P::Mesh)>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub keep_iterates: bool,
}

struct Linearized<P: InverseProblem> {
    mesh: P::Mesh,
    lin: Arc<Linearization>,
    eta3: Estimate,
}

/// Refines by the misfit estimator until condition C holds or the budget is hit.
fn enforce_condition_c<P: InverseProblem>(
    p: &P,
    cfg: &RunConfig,
    c: &DerivedConstants,
    mut cur: Linearized<P>,
) -> Result<(Linearized<P>, usize)> {
    let mut rounds = 0;
    while !condition_c(cur.eta3.value, cur.lin.i3, c) && p.dofs(&cur.mesh) < cfg.max_dofs {
        let mesh = p.refine(&cur.mesh, &cur.eta3.indicators, cfg.marking_fraction)?;
        if p.dofs(&mesh) <= p.dofs(&cur.mesh) {
            break;
        }
        let q = p.transfer_control(&cur.lin.q_old, &cur.mesh, &mesh)?;
        let lin = Arc::new(linearize_at(p, &q, &mesh)?);
        let eta3 = p.estimate_misfit(&lin, &mesh)?;
        cur = Linearized { mesh, lin, eta3 };
        rounds += 1;
    }
    Ok((cur, rounds))
}

pub fn run<P: InverseProblem>(p: &P, cfg: &RunConfig, mesh0: P::Mesh, q_start: Vec<f64>) -> Result<RunReport<P>> {
    run_with(p, cfg, mesh0, q_start, RunOptions::default())
}

pub fn run_with<P: InverseProblem>(
    p: &P,
    cfg: &RunConfig,
    mesh0: P::Mesh,
    q_start: Vec<f64>,
    opts: RunOptions,
) -> Result<RunReport<P>> {
    let consts = validate_config(cfg)?;
    let bcfg = cfg.beta_search();
    let delta = p.noise_level();
    let stop_level = cfg.tau * cfg.tau * delta * delta;
    let lin0 = Arc::new(linearize_at(p, &q_start, &mesh0)?);
    let eta0 = p.estimate_misfit(&lin0, &mesh0)?;
    let (mut cur, initial_rounds) = enforce_condition_c(p, cfg, &consts, Linearized { mesh: mesh0, lin: lin0, eta3: eta0 })?;
    let mut beta_prev = match cfg.beta_init {
        Some(b) => b,
        None => {
            let g2 = p.data_norm_sq();
            if g2 > 0.0 {
                1.0 / g2
            } else {
                1.0
            }
        }
    };
    let mut records = Vec::new();
    let mut beta_trace = Vec::new();
    let mut iterates = Vec::new();
    let mut k = 0;
    let stop = loop {
        if cur.lin.i3 <= stop_level {
            break StopReason::Discrepancy;
        }
        if k >= cfg.max_newton_steps {
            break StopReason::NewtonBudget;
        }
        let t0 = Instant::now();
        let dofs1 = p.dofs(&cur.mesh);
        let i3_entry = cur.lin.i3;
        let q_old = cur.lin.q_old.clone();
        let outcome = select_beta(p, &bcfg, &q_old, cur.mesh.clone(), cur.lin.clone(), beta_prev, k)?;
        let mut beta_steps = outcome.trace.len();
        beta_trace.extend(outcome.trace);
        let mut state = outcome.state;
        let dofs2 = p.dofs(&state.mesh);

        let mut eta1 = p.estimate_step(&state, StepQoi::I1)?;
        let mut a_rounds = 0;
        let mut repairs = 0;
        while !condition_a(eta1.value, state.i3(), &consts) && p.dofs(&state.mesh) < cfg.max_dofs {
            let mesh = p.refine(&state.mesh, &eta1.indicators, cfg.marking_fraction)?;
            if p.dofs(&mesh) <= p.dofs(&state.mesh) {
                break;
            }
            let q = p.transfer_control(&state.lin.q_old, &state.mesh, &mesh)?;
            let lin = Arc::new(linearize_at(p, &q, &mesh)?);
            state = gn_solve(p, lin.clone(), &mesh, state.beta)?;
            if !bcfg.in_window(state.i2, state.i3()) {
                let again = select_beta(p, &bcfg, &q, mesh, lin, state.beta, k)?;
                beta_steps += again.trace.len();
                beta_trace.extend(again.trace);
                state = again.state;
                repairs += 1;
            }
            eta1 = p.estimate_step(&state, StepQoi::I1)?;
            a_rounds += 1;
        }
        let dofs3 = p.dofs(&state.mesh);
        let (qoi, u) = eval_qoi(p, &state)?;
        let eta2 = p.estimate_step(&state, StepQoi::I2)?.value;
        let eta4 = p.estimate_step(&state, StepQoi::I4)?.value;
        let eta3_k = p.estimate_misfit(&state.lin, &state.mesh)?.value;
        log::info!(
            "k = {k}: beta = {:.4e}, I2h = {:.4e}, I3h = {:.4e}, I4h = {:.4e}, dofs = {dofs3}",
            state.beta,
            qoi.i2,
            qoi.i3,
            qoi.i4
        );

        let lin_next = Arc::new(p.linearize(&state.q, &u, &state.mesh)?);
        let eta3_next = p.estimate_misfit(&lin_next, &state.mesh)?;
        let (next, c_rounds) =
            enforce_condition_c(p, cfg, &consts, Linearized { mesh: state.mesh.clone(), lin: lin_next, eta3: eta3_next })?;

        records.push(IterationRecord {
            k,
            beta: state.beta,
            i1h: qoi.i1,
            i2h: qoi.i2,
            i3h: qoi.i3,
            i4h: qoi.i4,
            eta1: eta1.value,
            eta2,
            eta3: eta3_k,
            eta4,
            dofs: [dofs1, dofs2, dofs3, p.dofs(&next.mesh)],
            q_norm: state.penalty.sqrt(),
            cond_a_rounds: a_rounds,
            cond_c_rounds: c_rounds,
            i3h_entry: i3_entry,
            window_ok: bcfg.in_window(qoi.i2, qoi.i3),
            cond_a_ok: condition_a(eta1.value, qoi.i3, &consts),
            cond_c_ok: condition_c(next.eta3.value, next.lin.i3, &consts),
            beta_steps,
            window_repairs: repairs,
            wall_seconds: t0.elapsed().as_secs_f64(),
        });
        if opts.keep_iterates {
            iterates.push((state.q.clone(), state.mesh.clone()));
        }
        beta_prev = state.beta;
        cur = next;
        k += 1;
    };
    Ok(RunReport {
        records,
        beta_trace,
        k_star: k,
        stop,
        final_q: cur.lin.q_old.clone(),
        final_mesh: cur.mesh,
        final_i3h: cur.lin.i3,
        initial_cond_c_rounds: initial_rounds,
        constants: consts,
        iterates,
    })
}

/// Keeps `GnState` nameable for callers that replay steps.
pub type Step<P> = GnState<P>;

/// Per-step checks of the convergence theory on a finished run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRow {
    pub k: usize,
    /// `‖q^k - q_0‖² - ‖q† - q_0‖²`, nonpositive when the iterates stay in the ball.
    pub monotonicity_gap: f64,
    /// `η_1 + 2 c_tc² η_3 - (θ_lo - noise term) I_3`.
    pub eta_bound_gap: f64,
    /// `η_3 - c1 I_3`.
    pub eta3_gap: f64,
    /// `I_3^k - (1 + c3) I_4^{k-1} - r^k`.
    pub growth_gap: f64,
}

pub fn audit_convergence(records: &[IterationRecord], q_dagger_dist_sq: f64, cfg: &RunConfig) -> Vec<AuditRow> {
    let noise_term = 2.0 * (cfg.c_tc.powi(2) + (1.0 + cfg.c_tc).powi(2) / cfg.tau.powi(2));
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let growth_gap = if i == 0 {
                f64::NEG_INFINITY
            } else {
                let rk = cfg.slack_r0 * cfg.slack_rate.powi(r.k as i32);
                r.i3h - (1.0 + cfg.c3) * records[i - 1].i4h - rk
            };
            AuditRow {
                k: r.k,
                monotonicity_gap: r.q_norm * r.q_norm - q_dagger_dist_sq,
                eta_bound_gap: r.eta1 + 2.0 * cfg.c_tc.powi(2) * r.eta3 - (cfg.theta_lo - noise_term) * r.i3h,
                eta3_gap: r.eta3 - cfg.c1 * r.i3h,
                growth_gap,
            }
        })
        .collect()
}
