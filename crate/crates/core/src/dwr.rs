//! Dual weighted residual estimates for the functionals of a Gauss-Newton step.
//!
//! With the step Lagrangian
//!
//! ```text
//! L(q, u_old, w, v, v_old) = I_1 + A'_u(q_old, u_old)(w)(v)
//!     + A'_q(q_old, u_old)(q - q_old)(v) + A(q_old, u_old)(v_old) - f(v_old)
//! ```
//!
//! and `D = π_h - id` the patchwise quadratic defect, the estimates are
//!
//! * `η_1 = ½ L'(x_h)(D x_h)`,
//! * `η_j = ½ [I_j'(x_h)(D x_h) + L''(x_h)(x^j_h, D x_h) + L'(x_h)(D x^j_h)]` for
//!   `I_2` and `I_3`, where `x^j_h` solves `L''(x_h)(x^j, ·) = -I_j'(x_h)`,
//! * the same for `I_4` with `L` extended by `A(q, u)(z) - f(z)`.
//!
//! The estimate for `i'(β)` uses the quadratic Lagrangian of the sensitivity
//! system at fixed `u_old`.

use crate::error::{Error, Result};
use crate::fem::{self, Boundary, FeFunction};
use crate::gnstep::{self, GnState, KktVec};
use crate::linalg;
use crate::mesh::MarkSet;
use crate::par;
use crate::problem::{Estimate, FemMesh, FemProblem, Linearization, Reaction, StepQoi};

/// Dörfler marking: the smallest set of cells, taken in order of decreasing
/// `|η_K|` with ties broken by lower index, whose indicators sum to at least
/// `fraction` of the total.
pub fn mark_cells(indicators: &[f64], fraction: f64) -> Result<MarkSet> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("marking fraction {fraction} outside (0, 1]")));
    }
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| indicators[b].abs().total_cmp(&indicators[a].abs()).then(a.cmp(&b)));
    let total: f64 = indicators.iter().map(|e| e.abs()).sum();
    let mut marks = MarkSet::none(indicators.len());
    if total == 0.0 || !total.is_finite() {
        return Ok(marks);
    }
    let mut acc = 0.0;
    for c in order {
        marks.mark(c);
        acc += indicators[c].abs();
        if acc >= fraction * total {
            break;
        }
    }
    Ok(marks)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct EtaBundle {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
}

// ---------------------------------------------------------------------------
// tuples and pointwise forms

pub const Q: usize = 0;
pub const UO: usize = 1;
pub const W: usize = 2;
pub const V: usize = 3;
pub const VO: usize = 4;
pub const U: usize = 5;
pub const Z: usize = 6;
const NB: usize = 7;

/// `(q, u_old, w, v, v_old, u, z)`; the last two are only used by the
/// extended Lagrangian.
#[derive(Clone, Debug)]
pub struct Tuple {
    pub c: [FeFunction; NB],
}

fn space(b: usize) -> Boundary {
    if b == Q {
        Boundary::Free
    } else {
        Boundary::Dirichlet
    }
}

impl Tuple {
    pub fn zero(mesh: &FemMesh) -> Self {
        Tuple { c: std::array::from_fn(|b| FeFunction::zero(mesh.mesh.clone(), space(b))) }
    }

    pub fn with(mut self, b: usize, dofs: &[f64]) -> Self {
        self.c[b] = FeFunction::from_dofs(self.c[b].mesh().clone(), space(b), dofs);
        self
    }

    pub fn only(&self, blocks: &[usize]) -> Self {
        let mut t = self.clone();
        for b in 0..NB {
            if !blocks.contains(&b) {
                t.c[b] = FeFunction::zero(t.c[b].mesh().clone(), space(b));
            }
        }
        t
    }

    /// Componentwise `π_h - id`.
    pub fn defect(&self) -> Result<Self> {
        let mut c = self.c.clone();
        for f in c.iter_mut() {
            *f = fem::defect(f)?;
        }
        Ok(Tuple { c })
    }

    #[inline]
    fn at(&self, c: usize, t: f64) -> [(f64, f64); NB] {
        std::array::from_fn(|b| self.c[b].eval(c, t))
    }
}

/// Fixed data of one Lagrangian: linearization point, prior and `β`.
pub struct Ctx<'a, R: Reaction> {
    pub p: &'a FemProblem<R>,
    pub mesh: &'a FemMesh,
    pub beta: f64,
    pub q_old: FeFunction,
    pub q0: FeFunction,
}

impl<'a, R: Reaction> Ctx<'a, R> {
    pub fn new(p: &'a FemProblem<R>, mesh: &'a FemMesh, lin: &Linearization, beta: f64) -> Self {
        let m = mesh.mesh.clone();
        Ctx {
            p,
            mesh,
            beta,
            q_old: FeFunction::from_dofs(m.clone(), Boundary::Free, &lin.q_old),
            q0: FeFunction::from_dofs(m, Boundary::Free, &lin.prior),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Functional {
    I2,
    I3,
    I4,
}

pub enum Form<'t> {
    /// `L'(x)(·)`.
    Gradient,
    /// `L''(x)(y, ·)`.
    Hessian(&'t Tuple),
    /// `I'(x)(·)`.
    Objective(Functional),
}

type Coeffs = [(f64, f64); NB];

impl<R: Reaction> Ctx<'_, R> {
    /// Coefficients `(c0, c1)` per block such that the form tested with `φ`
    /// in that block has integrand `c0 φ + c1 φ'`.
    fn integrand(&self, form: &Form, c: usize, k: usize, t: f64, x: &Coeffs, y: Option<&Coeffs>) -> Coeffs {
        let g = self.mesh.g[c][k];
        let f = self.mesh.f[c][k];
        let qo = self.q_old.eval(c, t).0;
        let (q, uo, w, v, vo, u, z) = (x[Q].0, x[UO].0, x[W].0, x[V].0, x[VO].0, x[U].0, x[Z].0);
        let dold = self.p.reaction.eval(qo, uo);
        let mut out = [(0.0, 0.0); NB];
        match form {
            Form::Gradient => {
                let dnew = self.p.reaction.eval(q, u);
                let q0 = self.q0.eval(c, t).0;
                let res = 2.0 * (uo + w - g);
                out[Q].0 = 2.0 / self.beta * (q - q0) + dold.r_q * v + dnew.r_q * z;
                out[UO] = (res + dold.r_uu * w * v + dold.r_qu * (q - qo) * v + dold.r_u * vo, x[VO].1);
                out[W] = (res + dold.r_u * v, x[V].1);
                out[V] = (dold.r_u * w + dold.r_q * (q - qo), x[W].1);
                out[VO] = (dold.r - f, x[UO].1);
                out[U] = (dnew.r_u * z, x[Z].1);
                out[Z] = (dnew.r - f, x[U].1);
            }
            Form::Hessian(_) => {
                let y = y.expect("direction values");
                let dnew = self.p.reaction.eval(q, u);
                let (yq, yuo, yw, yv, yvo, yu, yz) = (y[Q].0, y[UO].0, y[W].0, y[V].0, y[VO].0, y[U].0, y[Z].0);
                let dq = q - qo;
                out[Q].0 = 2.0 / self.beta * yq + dold.r_qu * yuo * v + dold.r_q * yv + dnew.r_q * yz + dnew.r_qu * yu * z;
                out[UO] = (
                    2.0 * (yuo + yw)
                        + dold.r_uuu * w * v * yuo
                        + dold.r_uu * (yw * v + w * yv + yuo * vo)
                        + dold.r_quu * dq * v * yuo
                        + dold.r_qu * (yq * v + dq * yv)
                        + dold.r_u * yvo,
                    y[VO].1,
                );
                out[W] = (2.0 * (yuo + yw) + dold.r_uu * yuo * v + dold.r_u * yv, y[V].1);
                out[V] = (dold.r_uu * w * yuo + dold.r_u * yw + dold.r_qu * dq * yuo + dold.r_q * yq, y[W].1);
                out[VO] = (dold.r_u * yuo, y[UO].1);
                out[U] = (dnew.r_u * yz + dnew.r_uu * yu * z + dnew.r_qu * yq * z, y[Z].1);
                out[Z] = (dnew.r_q * yq + dnew.r_u * yu, y[U].1);
            }
            Form::Objective(j) => match j {
                Functional::I2 => {
                    out[UO].0 = 2.0 * (uo + w - g);
                    out[W].0 = 2.0 * (uo + w - g);
                }
                Functional::I3 => out[UO].0 = 2.0 * (uo - g),
                Functional::I4 => out[U].0 = 2.0 * (u - g),
            },
        }
        out
    }

    /// Per-cell values of `form(x)(test)`.
    pub fn cellwise(&self, x: &Tuple, form: &Form, test: &Tuple) -> Vec<f64> {
        par::map_range(self.mesh.mesh.n_cells(), |c| {
            let mut s = 0.0;
            for (k, p) in self.mesh.quad.cells[c].iter().enumerate() {
                let xv = x.at(c, p.t);
                let yv = match form {
                    Form::Hessian(y) => Some(y.at(c, p.t)),
                    _ => None,
                };
                let co = self.integrand(form, c, k, p.t, &xv, yv.as_ref());
                let tv = test.at(c, p.t);
                let mut acc = 0.0;
                for b in 0..NB {
                    acc += co[b].0 * tv[b].0 + co[b].1 * tv[b].1;
                }
                s += p.w * acc;
            }
            s
        })
    }

    /// `form(x)` tested with every basis function of block `b`.
    pub fn assemble(&self, x: &Tuple, form: &Form, b: usize) -> Vec<f64> {
        let m = &self.mesh.mesh;
        let per_cell: Vec<[f64; 2]> = par::map_range(m.n_cells(), |c| {
            let h = m.width(c);
            let mut local = [0.0; 2];
            for (k, p) in self.mesh.quad.cells[c].iter().enumerate() {
                let xv = x.at(c, p.t);
                let yv = match form {
                    Form::Hessian(y) => Some(y.at(c, p.t)),
                    _ => None,
                };
                let co = self.integrand(form, c, k, p.t, &xv, yv.as_ref())[b];
                let (phi, dphi) = fem::p1_shape(p.t);
                for i in 0..2 {
                    local[i] += p.w * (co.0 * phi[i] + co.1 * dphi[i] / h);
                }
            }
            local
        });
        let bd = space(b);
        let mut out = vec![0.0; fem::n_dofs(m, bd)];
        for (c, local) in per_cell.iter().enumerate() {
            for i in 0..2 {
                if let Some(r) = fem::dof_of(m, c + i, bd) {
                    out[r] += local[i];
                }
            }
        }
        out
    }

    /// Per-cell `∫ f`.
    fn cell_integral(&self, f: impl Fn(usize, usize, f64) -> f64 + Sync + Send) -> Vec<f64> {
        par::map_range(self.mesh.mesh.n_cells(), |c| {
            self.mesh.quad.cells[c].iter().enumerate().map(|(k, p)| p.w * f(c, k, p.t)).sum()
        })
    }
}

fn sum_cells(parts: &[&[f64]], weights: &[f64]) -> Vec<f64> {
    let n = parts[0].len();
    (0..n).map(|c| parts.iter().zip(weights).map(|(p, w)| w * p[c]).sum()).collect()
}

fn estimate(cells: Vec<f64>) -> Estimate {
    Estimate { value: cells.iter().sum(), indicators: cells }
}

// ---------------------------------------------------------------------------
// step tuples and auxiliary problems

/// The discrete stationary point of the step Lagrangian as a tuple.
pub fn primal_tuple<R: Reaction>(state: &GnState<FemProblem<R>>) -> Tuple {
    Tuple::zero(&state.mesh)
        .with(Q, &state.q)
        .with(UO, &state.lin.u_old)
        .with(W, &state.w)
        .with(V, &state.v)
        .with(VO, &state.v_old)
}

/// Solves `L''(x)(y, ·) = -I'(x)(·)` on the discrete spaces. Right-hand
/// sides without a `v_old` component force `y_{u_old} = 0`, which reduces
/// the solve to one KKT solve and one adjoint solve.
fn solve_second_order<R: Reaction>(
    ctx: &Ctx<R>,
    state: &GnState<FemProblem<R>>,
    x: &Tuple,
    rhs: KktVec,
    rhs_uo: &[f64],
) -> Tuple {
    let KktVec { q, w, v } = state.kkt.solve(&rhs);
    let y = Tuple::zero(ctx.mesh).with(Q, &q).with(W, &w).with(V, &v);
    let coupling = ctx.assemble(x, &Form::Hessian(&y), UO);
    let load = linalg::sub(rhs_uo, &coupling);
    let yvo = state.lin.state_lu.solve_transpose(&load);
    y.with(VO, &yvo)
}

fn negated(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| -x).collect()
}

/// Auxiliary solution for `I_2`.
pub fn solve_aux_i2<R: Reaction>(ctx: &Ctx<R>, state: &GnState<FemProblem<R>>, x: &Tuple) -> Tuple {
    let j = Form::Objective(Functional::I2);
    let rhs = KktVec {
        q: vec![0.0; state.q.len()],
        w: negated(ctx.assemble(x, &j, W)),
        v: vec![0.0; state.w.len()],
    };
    solve_second_order(ctx, state, x, rhs, &negated(ctx.assemble(x, &j, UO)))
}

/// Auxiliary solution for `I_4` in the extended Lagrangian. `x` must carry
/// the nonlinear state `u` at `q` and `z = 0`.
pub fn solve_aux_i4<R: Reaction>(ctx: &Ctx<R>, state: &GnState<FemProblem<R>>, x: &Tuple) -> Result<Tuple> {
    let j = ctx.assemble(x, &Form::Objective(Functional::I4), U);
    // A'_u(q, u)(·)(y_z) = -I_4'
    let jac_new = ctx.p.weighted_bilinear(ctx.mesh, Boundary::Dirichlet, Boundary::Dirichlet, 1.0, |c, t| {
        ctx.p.reaction.eval(x.c[Q].eval(c, t).0, x.c[U].eval(c, t).0).r_u
    });
    let lu_new = linalg::BandedLu::factor(&jac_new)?;
    let yz = lu_new.solve_transpose(&negated(j));
    let with_z = Tuple::zero(ctx.mesh).with(Z, &yz);
    let coupling_q = ctx.assemble(x, &Form::Hessian(&with_z), Q);
    let rhs = KktVec { q: negated(coupling_q), w: vec![0.0; state.w.len()], v: vec![0.0; state.w.len()] };
    let mut y = solve_second_order(ctx, state, x, rhs, &vec![0.0; state.w.len()]);
    y.c[Z] = with_z.c[Z].clone();
    // A'_q(q, u)(y_q)(·) + A'_u(q, u)(y_u)(·) = 0
    let only_q = y.only(&[Q]);
    let rq = ctx.assemble(x, &Form::Hessian(&only_q), Z);
    let yu = lu_new.solve(&negated(rq));
    Ok(y.with(U, &yu))
}

fn dwr_estimate<R: Reaction>(ctx: &Ctx<R>, x: &Tuple, y: &Tuple, j: Functional) -> Result<Estimate> {
    let dx = x.defect()?;
    let dy = y.defect()?;
    let a = ctx.cellwise(x, &Form::Objective(j), &dx);
    let b = ctx.cellwise(x, &Form::Hessian(y), &dx);
    let c = ctx.cellwise(x, &Form::Gradient, &dy);
    Ok(estimate(sum_cells(&[&a, &b, &c], &[0.5, 0.5, 0.5])))
}

// ---------------------------------------------------------------------------
// estimators

/// Estimate for `‖C(u_old) - g^δ‖²` at a linearization: the state-equation
/// part of the step Lagrangian.
pub fn eta_misfit<R: Reaction>(p: &FemProblem<R>, lin: &Linearization, mesh: &FemMesh) -> Result<Estimate> {
    let ctx = Ctx::new(p, mesh, lin, 1.0);
    let x = Tuple::zero(mesh).with(Q, &lin.q_old).with(UO, &lin.u_old);
    let j = ctx.assemble(&x, &Form::Objective(Functional::I3), UO);
    let z = lin.state_lu.solve_transpose(&negated(j));
    let y = Tuple::zero(mesh).with(VO, &z);
    dwr_estimate(&ctx, &x, &y, Functional::I3)
}

pub fn eta1<R: Reaction>(p: &FemProblem<R>, state: &GnState<FemProblem<R>>) -> Result<Estimate> {
    let ctx = Ctx::new(p, &state.mesh, &state.lin, state.beta);
    let x = primal_tuple(state);
    let dx = x.defect()?;
    Ok(estimate(ctx.cellwise(&x, &Form::Gradient, &dx).iter().map(|v| 0.5 * v).collect()))
}

pub fn eta2<R: Reaction>(p: &FemProblem<R>, state: &GnState<FemProblem<R>>) -> Result<Estimate> {
    let ctx = Ctx::new(p, &state.mesh, &state.lin, state.beta);
    let x = primal_tuple(state);
    let y = solve_aux_i2(&ctx, state, &x);
    dwr_estimate(&ctx, &x, &y, Functional::I2)
}

pub fn eta4<R: Reaction>(p: &FemProblem<R>, state: &GnState<FemProblem<R>>) -> Result<Estimate> {
    use crate::problem::InverseProblem;
    let ctx = Ctx::new(p, &state.mesh, &state.lin, state.beta);
    let u = p.solve_state(&state.q, &state.mesh)?;
    let x = primal_tuple(state).with(U, &u);
    let y = solve_aux_i4(&ctx, state, &x)?;
    dwr_estimate(&ctx, &x, &y, Functional::I4)
}

/// Estimate for `i'(β)` at fixed `u_old`.
pub fn eta_i_prime<R: Reaction>(p: &FemProblem<R>, state: &GnState<FemProblem<R>>) -> Result<Estimate> {
    let ctx = Ctx::new(p, &state.mesh, &state.lin, state.beta);
    let mesh = &state.mesh;
    let b2 = 2.0 / (state.beta * state.beta);
    let (nq, nu) = state.kkt.dims();
    let x = primal_tuple(state);
    let sens = gnstep::sensitivity(state);
    let xb = Tuple::zero(mesh).with(Q, &sens.q).with(W, &sens.w).with(V, &sens.v);
    // a(·, z) = J_{x_β}
    let z = state.kkt.solve(&KktVec { q: vec![0.0; nq], w: gnstep::linear_residual_load(state), v: vec![0.0; nu] });
    let zt = Tuple::zero(mesh).with(Q, &z.q).with(W, &z.w).with(V, &z.v);
    // a(·, y) = J_x + m'(·)(z)
    let y = state.kkt.solve(&KktVec {
        q: linalg::scale(b2, &state.lin.control_gram.mul_vec(&z.q)),
        w: linalg::scale(2.0, &state.lin.obs_gram.mul_vec(&sens.w)),
        v: vec![0.0; nu],
    });
    let yt = Tuple::zero(mesh).with(Q, &y.q).with(W, &y.w).with(V, &y.v);

    let qwv = [Q, W, V];
    let dx = x.defect()?.only(&qwv);
    let dxb = xb.defect()?;
    let dy = yt.defect()?;
    let dz = zt.defect()?;

    let wb = &xb.c[W];
    let (uo, w, q, q0) = (&x.c[UO], &x.c[W], &x.c[Q], &ctx.q0);
    let j_x = ctx.cell_integral(|c, _, t| 2.0 * wb.eval(c, t).0 * dx.c[W].eval(c, t).0);
    let j_xb = ctx.cell_integral(|c, k, t| {
        2.0 * (uo.eval(c, t).0 + w.eval(c, t).0 - mesh.g[c][k]) * dxb.c[W].eval(c, t).0
    });
    let m_dz = ctx.cell_integral(|c, _, t| b2 * (q.eval(c, t).0 - q0.eval(c, t).0) * dz.c[Q].eval(c, t).0);
    let m_dx = ctx.cell_integral(|c, _, t| b2 * dx.c[Q].eval(c, t).0 * zt.c[Q].eval(c, t).0);
    let l_dy = ctx.cellwise(&x, &Form::Gradient, &dy.only(&qwv));
    let h_y_dx = ctx.cellwise(&x, &Form::Hessian(&yt), &dx);
    let h_xb_dz = ctx.cellwise(&x, &Form::Hessian(&xb), &dz);
    let h_z_dxb = ctx.cellwise(&x, &Form::Hessian(&zt), &dxb);
    Ok(estimate(sum_cells(
        &[&j_x, &j_xb, &l_dy, &h_y_dx, &m_dz, &h_xb_dz, &m_dx, &h_z_dxb],
        &[0.5, 0.5, -0.5, -0.5, 0.5, -0.5, 0.5, -0.5],
    )))
}

pub fn eta_step<R: Reaction>(p: &FemProblem<R>, state: &GnState<FemProblem<R>>, which: StepQoi) -> Result<Estimate> {
    match which {
        StepQoi::I1 => eta1(p, state),
        StepQoi::I2 => eta2(p, state),
        StepQoi::I4 => eta4(p, state),
        StepQoi::IPrime => eta_i_prime(p, state),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dorfler_example() {
        let m = mark_cells(&[0.1, 0.5, 0.4], 0.5).unwrap();
        assert_eq!(m.cells(), vec![1]);
        let m = mark_cells(&[0.1, 0.5, 0.4], 0.6).unwrap();
        assert_eq!(m.cells(), vec![1, 2]);
    }

    #[test]
    fn dorfler_ties_prefer_lower_index() {
        let m = mark_cells(&[0.3, 0.3, 0.3, 0.1], 0.3).unwrap();
        assert_eq!(m.cells(), vec![0]);
    }

    #[test]
    fn dorfler_rejects_bad_fraction() {
        assert!(mark_cells(&[1.0], 0.0).is_err());
        assert!(mark_cells(&[1.0], 1.5).is_err());
    }
}
