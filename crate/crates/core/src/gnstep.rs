//! One Gauss-Newton step: the regularized linearized least-squares problem
//!
//! ```text
//! min_q ‖C'(u_old) w + C(u_old) - g^δ‖² + (1/β) ‖q - q_0‖²
//!   s.t. A'_u(q_old, u_old)(w)(·) + A'_q(q_old, u_old)(q - q_old)(·) = 0,
//! ```
//!
//! solved in coupled KKT form for `(q, w, v)`, followed by the adjoint
//! `v_old` of the state equation. The factorized KKT matrix is kept so that
//! the β-derivative and the auxiliary problems of the error estimators cost
//! one back substitution each.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, BandedLu, SparseMatrix, Triplets};
use crate::problem::{InverseProblem, Linearization};

/// Factorized KKT operator
///
/// ```text
/// [ (2/β) M_Q    0      B^T ] [q]
/// [ 0          2 M_G    K^T ] [w]
/// [ B            K      0   ] [v]
/// ```
#[derive(Debug)]
pub struct KktSystem {
    pub beta: f64,
    nq: usize,
    nu: usize,
    lu: BandedLu,
}

/// Block right-hand side or solution of the KKT system.
#[derive(Clone, Debug, PartialEq)]
pub struct KktVec {
    pub q: Vec<f64>,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

impl KktVec {
    pub fn zeros(nq: usize, nu: usize) -> Self {
        KktVec { q: vec![0.0; nq], w: vec![0.0; nu], v: vec![0.0; nu] }
    }
}

impl KktSystem {
    pub fn matrix(lin: &Linearization, beta: f64) -> SparseMatrix {
        let nq = lin.control_gram.nrows;
        let nu = lin.obs_gram.nrows;
        let n = nq + 2 * nu;
        let mut t = Triplets::new(n, n);
        for i in 0..nq {
            for (j, v) in lin.control_gram.row(i) {
                t.push(i, j, 2.0 / beta * v);
            }
        }
        for i in 0..nu {
            for (j, v) in lin.obs_gram.row(i) {
                t.push(nq + i, nq + j, 2.0 * v);
            }
        }
        t.push_block(nq, nq + nu, &lin.state_jac, true);
        t.push_block(0, nq + nu, &lin.control_jac, true);
        t.push_block(nq + nu, 0, &lin.control_jac, false);
        t.push_block(nq + nu, nq, &lin.state_jac, false);
        t.build()
    }

    pub fn new(lin: &Linearization, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("β must be positive and finite, got {beta}")));
        }
        let lu = BandedLu::factor(&Self::matrix(lin, beta))?;
        Ok(KktSystem { beta, nq: lin.control_gram.nrows, nu: lin.obs_gram.nrows, lu })
    }

    pub fn solve(&self, rhs: &KktVec) -> KktVec {
        let mut b = Vec::with_capacity(self.nq + 2 * self.nu);
        b.extend_from_slice(&rhs.q);
        b.extend_from_slice(&rhs.w);
        b.extend_from_slice(&rhs.v);
        let x = self.lu.solve(&b);
        KktVec {
            q: x[..self.nq].to_vec(),
            w: x[self.nq..self.nq + self.nu].to_vec(),
            v: x[self.nq + self.nu..].to_vec(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nq, self.nu)
    }
}

/// Discrete stationary point of the Gauss-Newton Lagrangian at fixed
/// `(q_old, u_old)` and `β`.
#[derive(Debug)]
pub struct GnState<P: InverseProblem> {
    pub mesh: P::Mesh,
    pub beta: f64,
    pub lin: Arc<Linearization>,
    pub kkt: Arc<KktSystem>,
    pub q: Vec<f64>,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub v_old: Vec<f64>,
    /// `I_2 + (1/β) ‖q - q_0‖²`.
    pub i1: f64,
    /// `‖C'(u_old) w + C(u_old) - g^δ‖²`.
    pub i2: f64,
    /// `‖q - q_0‖²`.
    pub penalty: f64,
}

impl<P: InverseProblem> Clone for GnState<P> {
    fn clone(&self) -> Self {
        GnState {
            mesh: self.mesh.clone(),
            beta: self.beta,
            lin: self.lin.clone(),
            kkt: self.kkt.clone(),
            q: self.q.clone(),
            w: self.w.clone(),
            v: self.v.clone(),
            v_old: self.v_old.clone(),
            i1: self.i1,
            i2: self.i2,
            penalty: self.penalty,
        }
    }
}

impl<P: InverseProblem> GnState<P> {
    pub fn i3(&self) -> f64 {
        self.lin.i3
    }

    pub fn dq(&self) -> Vec<f64> {
        linalg::sub(&self.q, &self.lin.q_old)
    }
}

/// Solves the Gauss-Newton subproblem for the given `β`.
pub fn gn_solve<P: InverseProblem>(p: &P, lin: Arc<Linearization>, mesh: &P::Mesh, beta: f64) -> Result<GnState<P>> {
    let kkt = KktSystem::new(&lin, beta)?;
    let mg_u = lin.obs_gram.mul_vec(&lin.u_old);
    let rhs = KktVec {
        q: linalg::scale(2.0 / beta, &lin.control_gram.mul_vec(&lin.prior)),
        w: lin.data_load.iter().zip(&mg_u).map(|(g, m)| 2.0 * (g - m)).collect(),
        v: lin.control_jac.mul_vec(&lin.q_old),
    };
    let KktVec { q, w, v } = kkt.solve(&rhs);
    let load = p.state_adjoint_load(&lin, &q, &w, &v, mesh);
    let v_old: Vec<f64> = lin.state_lu.solve_transpose(&load).iter().map(|x| -x).collect();
    let u_lin = linalg::add(&lin.u_old, &w);
    let i2 = p.misfit(&u_lin, mesh);
    let dq0 = linalg::sub(&q, &lin.prior);
    let penalty = lin.control_gram.quad_form(&dq0, &dq0);
    Ok(GnState {
        mesh: mesh.clone(),
        beta,
        lin,
        kkt: Arc::new(kkt),
        q,
        w,
        v,
        v_old,
        i1: i2 + penalty / beta,
        i2,
        penalty,
    })
}

/// Derivative of the step with respect to `β`.
pub fn sensitivity<P: InverseProblem>(state: &GnState<P>) -> KktVec {
    let b = state.beta;
    let dq0 = linalg::sub(&state.q, &state.lin.prior);
    let (nq, nu) = state.kkt.dims();
    let mut rhs = KktVec::zeros(nq, nu);
    rhs.q = linalg::scale(2.0 / (b * b), &state.lin.control_gram.mul_vec(&dq0));
    state.kkt.solve(&rhs)
}

/// `2⟨C(u_old) + C'(u_old) w - g^δ, ·⟩` on the state basis.
pub fn linear_residual_load<P: InverseProblem>(state: &GnState<P>) -> Vec<f64> {
    let lin = &state.lin;
    let u = linalg::add(&lin.u_old, &state.w);
    lin.obs_gram.mul_vec(&u).iter().zip(&lin.data_load).map(|(m, g)| 2.0 * (m - g)).collect()
}

/// `i'(β) = d/dβ I_2(β)`; negative whenever the linearized residual is nonzero.
pub fn i_prime_beta<P: InverseProblem>(state: &GnState<P>) -> f64 {
    let s = sensitivity(state);
    linalg::dot(&linear_residual_load(state), &s.w)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct QoiBundle {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
}

/// All four functionals of a step; `I_4` needs one nonlinear state solve.
pub fn eval_qoi<P: InverseProblem>(p: &P, state: &GnState<P>) -> Result<(QoiBundle, Vec<f64>)> {
    let u = p.solve_state(&state.q, &state.mesh)?;
    let i4 = p.misfit(&u, &state.mesh);
    Ok((QoiBundle { i1: state.i1, i2: state.i2, i3: state.i3(), i4 }, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{linearize_at, DenseLinearProblem};
    use nalgebra::DMatrix;

    fn diag_instance() -> DenseLinearProblem {
        let t = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.5]));
        DenseLinearProblem::new(t, vec![1.0, 1.0], vec![0.0, 0.0], 0.0).unwrap()
    }

    #[test]
    fn dense_step_matches_closed_form() {
        let p = diag_instance();
        let lin = Arc::new(linearize_at(&p, &[0.0, 0.0], &()).unwrap());
        let s = gn_solve(&p, lin, &(), 1.0).unwrap();
        assert!((s.q[0] - 0.5).abs() < 1e-14 && (s.q[1] - 0.4).abs() < 1e-14);
        assert!((s.i2 - 0.89).abs() < 1e-14);
        assert!((s.i1 - (0.89 + 0.41)).abs() < 1e-14);
    }

    #[test]
    fn rejects_nonpositive_beta() {
        let p = diag_instance();
        let lin = Arc::new(linearize_at(&p, &[0.0, 0.0], &()).unwrap());
        assert!(gn_solve(&p, lin.clone(), &(), 0.0).is_err());
        assert!(gn_solve(&p, lin, &(), -1.0).is_err());
    }

    #[test]
    fn i_prime_matches_closed_form() {
        // i(β) = Σ g_i² / (1 + β t_i²)², so i'(β) = -2 Σ g_i² t_i² / (1 + β t_i²)³
        let p = diag_instance();
        let lin = Arc::new(linearize_at(&p, &[0.0, 0.0], &()).unwrap());
        let s = gn_solve(&p, lin, &(), 1.0).unwrap();
        let exact = -2.0 * (1.0 / 8.0 + 0.25 / 1.25f64.powi(3));
        assert!((i_prime_beta(&s) - exact).abs() < 1e-14);
    }
}
