//! Choice of the regularization parameter `β` (the inverse of the Tikhonov
//! parameter) for one Gauss-Newton step.
//!
//! We look for `β` with `θ_lo I_3 ≤ i(β) ≤ θ_hi I_3`, `i(β)` being the
//! linearized residual `I_2`, by a Newton iteration on
//! `i(β) = ½(θ_lo + θ_hi) I_3`, safeguarded by a bracket. As long as the
//! window is missed, the mesh is refined until the discretization error of
//! `i` and `i'` is small compared to the target and the slope.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gnstep::{gn_solve, i_prime_beta, GnState};
use crate::problem::{linearize_at, InverseProblem, Linearization, StepQoi};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BetaSearchConfig {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub tau_beta: f64,
    pub tau_beta_tilde: f64,
    pub max_steps: usize,
    pub max_dofs: usize,
    pub marking_fraction: f64,
}

impl BetaSearchConfig {
    pub fn theta_mid(&self) -> f64 {
        0.5 * (self.theta_lo + self.theta_hi)
    }

    pub fn in_window(&self, i: f64, i3: f64) -> bool {
        self.theta_lo * i3 <= i && i <= self.theta_hi * i3
    }
}

/// One row of the search trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BetaTraceRow {
    pub k: usize,
    pub inner_step: usize,
    pub beta: f64,
    pub i_h: f64,
    pub i_prime_h: f64,
    pub eta_i: f64,
    pub eta_i_prime: f64,
    pub dofs: usize,
}

pub struct BetaOutcome<P: InverseProblem> {
    pub state: GnState<P>,
    pub trace: Vec<BetaTraceRow>,
    pub refinements: usize,
}

/// `|η_i| ≤ (τ̃_β² / 4) δ_β²` and `|η_i'| ≤ ½ |i'_h|`.
pub fn accuracy_requirements(eta_i: f64, eta_i_prime: f64, i_prime: f64, delta_beta: f64, tau_beta_tilde: f64) -> bool {
    eta_i.abs() <= 0.25 * tau_beta_tilde * tau_beta_tilde * delta_beta * delta_beta && eta_i_prime.abs() <= 0.5 * i_prime.abs()
}

pub fn estimate_i_and_iprime_error<P: InverseProblem>(p: &P, state: &GnState<P>) -> Result<(f64, f64, Vec<f64>, Vec<f64>)> {
    let a = p.estimate_step(state, StepQoi::I2)?;
    let b = p.estimate_step(state, StepQoi::IPrime)?;
    Ok((a.value, b.value, a.indicators, b.indicators))
}

/// Runs the search starting at `beta_init` on `mesh`, refining as needed.
/// `q_old` lives on `mesh`.
pub fn select_beta<P: InverseProblem>(
    p: &P,
    cfg: &BetaSearchConfig,
    q_old: &[f64],
    mesh: P::Mesh,
    lin: Arc<Linearization>,
    beta_init: f64,
    k: usize,
) -> Result<BetaOutcome<P>> {
    if !(beta_init > 0.0 && beta_init.is_finite()) {
        return Err(Error::invalid(format!("initial β must be positive, got {beta_init}")));
    }
    let mut mesh = mesh;
    let mut lin = lin;
    let mut q_old = q_old.to_vec();
    let mut beta = beta_init;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut trace = Vec::new();
    let mut history = Vec::new();
    let mut refinements = 0;
    let theta = cfg.theta_mid();

    for inner in 0..cfg.max_steps {
        let state = gn_solve(p, lin.clone(), &mesh, beta)?;
        let i3 = lin.i3;
        let i = state.i2;
        let ip = i_prime_beta(&state);
        history.push((beta, i));
        let mut row = BetaTraceRow {
            k,
            inner_step: inner,
            beta,
            i_h: i,
            i_prime_h: ip,
            eta_i: 0.0,
            eta_i_prime: 0.0,
            dofs: p.dofs(&mesh),
        };
        if cfg.in_window(i, i3) {
            trace.push(row);
            return Ok(BetaOutcome { state, trace, refinements });
        }

        let delta_beta = (theta * i3).sqrt() / cfg.tau_beta;
        let (eta_i, eta_ip, ind_i, ind_ip) = estimate_i_and_iprime_error(p, &state)?;
        row.eta_i = eta_i;
        row.eta_i_prime = eta_ip;
        trace.push(row);
        if !accuracy_requirements(eta_i, eta_ip, ip, delta_beta, cfg.tau_beta_tilde) && p.dofs(&mesh) < cfg.max_dofs {
            let first_ok = eta_i.abs() <= 0.25 * cfg.tau_beta_tilde.powi(2) * delta_beta.powi(2);
            let ind = if first_ok { &ind_ip } else { &ind_i };
            let new_mesh = p.refine(&mesh, ind, cfg.marking_fraction)?;
            if p.dofs(&new_mesh) > p.dofs(&mesh) {
                q_old = p.transfer_control(&q_old, &mesh, &new_mesh)?;
                mesh = new_mesh;
                lin = Arc::new(linearize_at(p, &q_old, &mesh)?);
                lo = 0.0;
                hi = f64::INFINITY;
                refinements += 1;
                continue;
            }
        }

        let r = i - theta * i3;
        if r > 0.0 {
            lo = lo.max(beta);
        } else {
            hi = hi.min(beta);
        }
        if !(ip < 0.0) {
            return Err(Error::BetaSearch {
                reason: format!("i'(β) = {ip:.3e} is not negative at β = {beta:.3e}"),
                history,
            });
        }
        let newton = beta - r / ip;
        beta = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else if hi.is_finite() {
            if lo > 0.0 {
                (lo * hi).sqrt()
            } else {
                0.1 * hi
            }
        } else {
            10.0 * beta
        };
        if hi.is_finite() && lo > 0.0 && (hi - lo) <= 1e-14 * hi {
            return Err(Error::BetaSearch { reason: "bracket collapsed outside the window".into(), history });
        }
    }
    Err(Error::BetaSearch { reason: format!("no β in the window after {} steps", cfg.max_steps), history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::DenseLinearProblem;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn dense_search_lands_in_window() {
        let t = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5]));
        let p = DenseLinearProblem::new(t, vec![1.0, 1.0], vec![0.0, 0.0], 0.0).unwrap();
        let cfg = BetaSearchConfig {
            theta_lo: 0.1,
            theta_hi: 0.2,
            tau_beta: 2.0,
            tau_beta_tilde: 1.0,
            max_steps: 50,
            max_dofs: 100,
            marking_fraction: 0.5,
        };
        let lin = Arc::new(linearize_at(&p, &[0.0, 0.0], &()).unwrap());
        assert_eq!(lin.i3, 2.0);
        let out = select_beta(&p, &cfg, &[0.0, 0.0], (), lin, 0.5, 0).unwrap();
        let i = out.state.i2;
        assert!((0.2..=0.4).contains(&i), "i = {i}");
        assert_eq!(out.refinements, 0);
    }
}
