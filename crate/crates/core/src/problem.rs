//! Forward problems `F = C ∘ S` in variational form.
//!
//! The algorithm only sees an [`InverseProblem`]: it can solve the state
//! equation, evaluate the misfit, and assemble the linearization at a point
//! `(q_old, u_old)`. Two instances are provided: [`FemProblem`] (a 1D
//! semilinear reaction-diffusion equation discretized with P1 elements, with
//! the coefficient problem `-u'' + q u = f` as [`CoefficientProblem`]) and
//! [`DenseLinearProblem`] (`F(q) = T q` with a dense matrix).

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dwr;
use crate::error::{Error, Result};
use crate::fem::{self, Boundary, CellQuadrature, FeFunction};
use crate::gnstep::GnState;
use crate::linalg::{self, BandedLu, SparseMatrix};
use crate::mesh::Mesh1D;

/// A discretized inverse problem as seen by the Gauss-Newton iteration.
///
/// Vectors are coefficient vectors: controls live in `Q_h` with Gram matrix
/// [`InverseProblem::control_gram`], states and adjoints in `V_h = W_h`, and
/// the observation operator is the identity on state coefficients with Gram
/// matrix [`InverseProblem::obs_gram`].
pub trait InverseProblem: Send + Sync {
    type Mesh: Clone + fmt::Debug + Send + Sync;

    fn noise_level(&self) -> f64;
    /// `‖g^δ‖²`.
    fn data_norm_sq(&self) -> f64;
    /// Size reported in logs and budgets.
    fn dofs(&self, mesh: &Self::Mesh) -> usize;
    fn control_dim(&self, mesh: &Self::Mesh) -> usize;
    fn state_dim(&self, mesh: &Self::Mesh) -> usize;
    /// Coefficients of the prior `q_0`.
    fn prior(&self, mesh: &Self::Mesh) -> Vec<f64>;
    fn control_gram(&self, mesh: &Self::Mesh) -> SparseMatrix;
    fn obs_gram(&self, mesh: &Self::Mesh) -> SparseMatrix;
    fn solve_state(&self, q: &[f64], mesh: &Self::Mesh) -> Result<Vec<f64>>;
    /// `‖C(u) - g^δ‖²`.
    fn misfit(&self, u: &[f64], mesh: &Self::Mesh) -> f64;
    fn linearize(&self, q_old: &[f64], u_old: &[f64], mesh: &Self::Mesh) -> Result<Linearization>;
    /// Derivative of the Lagrangian with respect to `u_old`, without the
    /// `v_old` term: `2⟨u_old + w - g, ·⟩ + A''_uu(w, ·)(v) + A''_qu(q - q_old, ·)(v)`.
    fn state_adjoint_load(&self, lin: &Linearization, q: &[f64], w: &[f64], v: &[f64], mesh: &Self::Mesh)
        -> Vec<f64>;
    /// Moves control coefficients to a nested mesh.
    fn transfer_control(&self, q: &[f64], from: &Self::Mesh, to: &Self::Mesh) -> Result<Vec<f64>>;
    /// Marks and refines by cellwise indicators.
    fn refine(&self, mesh: &Self::Mesh, indicators: &[f64], fraction: f64) -> Result<Self::Mesh>;

    /// Error estimate for `‖C(u_old) - g^δ‖²` at a linearization.
    fn estimate_misfit(&self, lin: &Linearization, mesh: &Self::Mesh) -> Result<Estimate>;
    /// Error estimates attached to a Gauss-Newton step.
    fn estimate_step(&self, state: &GnState<Self>, which: StepQoi) -> Result<Estimate>
    where
        Self: Sized;
}

/// Quantities of interest attached to a Gauss-Newton step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepQoi {
    /// Regularized linearized functional.
    I1,
    /// Linearized residual.
    I2,
    /// Nonlinear residual at the new iterate.
    I4,
    /// Derivative of the linearized residual with respect to `β`.
    IPrime,
}

/// Global error estimate and its cellwise split (empty without a mesh).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub indicators: Vec<f64>,
}

impl Estimate {
    pub fn zero() -> Self {
        Estimate::default()
    }
}

/// Assembled data of the Gauss-Newton subproblem at `(q_old, u_old)`.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub control_gram: SparseMatrix,
    pub obs_gram: SparseMatrix,
    /// `A'_u(q_old, u_old)(ψ_j)(ψ_i)`.
    pub state_jac: SparseMatrix,
    /// `A'_q(q_old, u_old)(χ_j)(ψ_i)`.
    pub control_jac: SparseMatrix,
    pub state_lu: BandedLu,
    /// `⟨g^δ, ψ_i⟩`.
    pub data_load: Vec<f64>,
    pub prior: Vec<f64>,
    pub q_old: Vec<f64>,
    pub u_old: Vec<f64>,
    /// `‖C(u_old) - g^δ‖²`.
    pub i3: f64,
}

/// Solves the state equation at `q_old` and assembles the linearization there.
pub fn linearize_at<P: InverseProblem>(p: &P, q_old: &[f64], mesh: &P::Mesh) -> Result<Linearization> {
    let u_old = p.solve_state(q_old, mesh)?;
    p.linearize(q_old, &u_old, mesh)
}

pub fn apply_f<P: InverseProblem>(p: &P, q: &[f64], mesh: &P::Mesh) -> Result<Vec<f64>> {
    p.solve_state(q, mesh)
}

/// `F'(q) dq`.
pub fn apply_f_prime<P: InverseProblem>(p: &P, q: &[f64], dq: &[f64], mesh: &P::Mesh) -> Result<Vec<f64>> {
    let lin = linearize_at(p, q, mesh)?;
    Ok(linearized_response(&lin, dq))
}

pub(crate) fn linearized_response(lin: &Linearization, dq: &[f64]) -> Vec<f64> {
    let rhs = lin.control_jac.mul_vec(dq);
    lin.state_lu.solve(&rhs).iter().map(|x| -x).collect()
}

/// `F'(q)^* r`, the Riesz representative in `Q_h`.
pub fn apply_f_prime_adjoint<P: InverseProblem>(p: &P, q: &[f64], r: &[f64], mesh: &P::Mesh) -> Result<Vec<f64>> {
    let lin = linearize_at(p, q, mesh)?;
    let z = lin.state_lu.solve_transpose(&lin.obs_gram.mul_vec(r));
    let rhs: Vec<f64> = lin.control_jac.tmul_vec(&z).iter().map(|x| -x).collect();
    Ok(BandedLu::factor(&lin.control_gram)?.solve(&rhs))
}

/// Local tangential cone ratio `‖F(q) - F(q̄) - F'(q)(q - q̄)‖ / ‖F(q) - F(q̄)‖`.
pub fn estimate_ctc<P: InverseProblem>(p: &P, q: &[f64], q_bar: &[f64], mesh: &P::Mesh) -> Result<f64> {
    let fq = p.solve_state(q, mesh)?;
    let fb = p.solve_state(q_bar, mesh)?;
    let lin = p.linearize(q, &fq, mesh)?;
    let dq = linalg::sub(q, q_bar);
    let lin_resp = linearized_response(&lin, &dq);
    let diff = linalg::sub(&fq, &fb);
    let rem = linalg::sub(&diff, &lin_resp);
    let g = p.obs_gram(mesh);
    let den = g.quad_form(&diff, &diff).sqrt();
    if den == 0.0 {
        return Err(Error::invalid("F(q) = F(q̄); cone ratio undefined"));
    }
    Ok(g.quad_form(&rem, &rem).sqrt() / den)
}

pub fn control_norm_sq<P: InverseProblem>(p: &P, a: &[f64], mesh: &P::Mesh) -> f64 {
    p.control_gram(mesh).quad_form(a, a)
}

// ---------------------------------------------------------------------------
// Semilinear FEM instance

/// Pointwise reaction term `r(q, u)` with the derivatives the Lagrangian needs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReactionDerivs {
    pub r: f64,
    pub r_q: f64,
    pub r_u: f64,
    pub r_qu: f64,
    pub r_uu: f64,
    pub r_quu: f64,
    pub r_uuu: f64,
}

/// Reaction in `A(q, u)(v) = ∫ u'v' + r(q, u) v - f v`. The form must be
/// affine in `q` for fixed `u`.
pub trait Reaction: Send + Sync + fmt::Debug {
    fn eval(&self, q: f64, u: f64) -> ReactionDerivs;
}

/// `r(q, u) = q u`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Bilinear;

impl Reaction for Bilinear {
    #[inline]
    fn eval(&self, q: f64, u: f64) -> ReactionDerivs {
        ReactionDerivs { r: q * u, r_q: u, r_u: q, r_qu: 1.0, ..Default::default() }
    }
}

/// `r(q, u) = q u + u³`, a genuinely nonlinear variant used in tests.
#[derive(Clone, Copy, Debug, Default)]
pub struct BilinearCubic;

impl Reaction for BilinearCubic {
    #[inline]
    fn eval(&self, q: f64, u: f64) -> ReactionDerivs {
        ReactionDerivs {
            r: q * u + u * u * u,
            r_q: u,
            r_u: q + 3.0 * u * u,
            r_qu: 1.0,
            r_uu: 6.0 * u,
            r_quu: 0.0,
            r_uuu: 6.0,
        }
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Mesh plus everything precomputed on it: quadrature on the common refinement
/// with the data mesh, and data and source values at the quadrature points.
pub struct FemMesh {
    pub mesh: Arc<Mesh1D>,
    pub quad: CellQuadrature,
    pub g: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
}

impl fmt::Debug for FemMesh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FemMesh({} cells)", self.mesh.n_cells())
    }
}

/// `-u'' + r(q, u) = f` on an interval with homogeneous Dirichlet conditions,
/// observed in `L²`.
#[derive(Clone)]
pub struct FemProblem<R: Reaction> {
    pub reaction: R,
    pub source: ScalarFn,
    pub prior: ScalarFn,
    pub data: FeFunction,
    pub delta: f64,
    /// Lower bound on nodal coefficient values accepted by the state solver.
    pub q_lower_bound: f64,
    data_norm_sq: f64,
}

pub type CoefficientProblem = FemProblem<Bilinear>;

impl<R: Reaction> fmt::Debug for FemProblem<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FemProblem")
            .field("reaction", &self.reaction)
            .field("data_cells", &self.data.mesh().n_cells())
            .field("delta", &self.delta)
            .finish()
    }
}

impl<R: Reaction> FemProblem<R> {
    pub fn new(reaction: R, source: ScalarFn, prior: ScalarFn, data: FeFunction, delta: f64) -> Self {
        let data_norm_sq = fem::l2_norm(&data).powi(2);
        FemProblem {
            reaction,
            source,
            prior,
            data,
            delta,
            q_lower_bound: -0.5 * std::f64::consts::PI.powi(2),
            data_norm_sq,
        }
    }

    pub fn data_mesh(&self) -> &Arc<Mesh1D> {
        self.data.mesh()
    }

    pub fn discretize(&self, mesh: Mesh1D) -> Result<Arc<FemMesh>> {
        let mesh = Arc::new(mesh);
        let quad = CellQuadrature::merged(&mesh, self.data.mesh())?;
        let g = quad
            .cells
            .iter()
            .map(|pts| pts.iter().map(|p| self.data.eval(p.other_cell, p.other_t).0).collect())
            .collect();
        let f = quad.cells.iter().map(|pts| pts.iter().map(|p| (self.source)(p.x)).collect()).collect();
        Ok(Arc::new(FemMesh { mesh, quad, g, f }))
    }

    pub fn control_fn(&self, mesh: &FemMesh, q: &[f64]) -> FeFunction {
        FeFunction::from_dofs(mesh.mesh.clone(), Boundary::Free, q)
    }

    pub fn state_fn(&self, mesh: &FemMesh, u: &[f64]) -> FeFunction {
        FeFunction::from_dofs(mesh.mesh.clone(), Boundary::Dirichlet, u)
    }

    pub fn interpolate_control(&self, mesh: &FemMesh, f: impl Fn(f64) -> f64) -> Vec<f64> {
        FeFunction::interpolate(mesh.mesh.clone(), Boundary::Free, f).dofs()
    }

    /// `A(q, u)(ψ_i) - f(ψ_i)` for the state basis.
    pub fn residual(&self, mesh: &FemMesh, q: &[f64], u: &[f64]) -> Vec<f64> {
        self.state_residual(mesh, &self.control_fn(mesh, q), &self.state_fn(mesh, u)).0
    }

    fn check_admissible(&self, q: &[f64]) -> Result<()> {
        let q_min = q.iter().copied().fold(f64::INFINITY, f64::min);
        if q_min < self.q_lower_bound || q_min.is_nan() {
            return Err(Error::InadmissibleCoefficient { q_min, bound: self.q_lower_bound });
        }
        Ok(())
    }

    /// `A(q, u)(ψ_i) - f(ψ_i)` and the Jacobian `A'_u(q, u)`.
    fn state_residual(&self, mesh: &FemMesh, q: &FeFunction, u: &FeFunction) -> (Vec<f64>, SparseMatrix) {
        let m = &mesh.mesh;
        let res = fem::assemble_linear(m, &mesh.quad, Boundary::Dirichlet, |c, k, p| {
            let (uv, ud) = u.eval(c, p.t);
            let r = self.reaction.eval(q.eval(c, p.t).0, uv).r;
            (r - mesh.f[c][k], ud)
        });
        let jac = self.weighted_bilinear(mesh, Boundary::Dirichlet, Boundary::Dirichlet, 1.0, |c, t| {
            self.reaction.eval(q.eval(c, t).0, u.eval(c, t).0).r_u
        });
        (res, jac)
    }

    /// `∫ a φ_j φ_i + s φ_j' φ_i'` with `a = weight(cell, t)`.
    pub(crate) fn weighted_bilinear(
        &self,
        mesh: &FemMesh,
        rows: Boundary,
        cols: Boundary,
        stiffness: f64,
        weight: impl Fn(usize, f64) -> f64,
    ) -> SparseMatrix {
        fem::assemble_bilinear(&mesh.mesh, &mesh.quad, rows, cols, |c, _, p| (weight(c, p.t), stiffness))
    }
}

impl<R: Reaction> InverseProblem for FemProblem<R> {
    type Mesh = Arc<FemMesh>;

    fn noise_level(&self) -> f64 {
        self.delta
    }

    fn data_norm_sq(&self) -> f64 {
        self.data_norm_sq
    }

    fn dofs(&self, mesh: &Self::Mesh) -> usize {
        mesh.mesh.n_vertices()
    }

    fn control_dim(&self, mesh: &Self::Mesh) -> usize {
        fem::n_dofs(&mesh.mesh, Boundary::Free)
    }

    fn state_dim(&self, mesh: &Self::Mesh) -> usize {
        fem::n_dofs(&mesh.mesh, Boundary::Dirichlet)
    }

    fn prior(&self, mesh: &Self::Mesh) -> Vec<f64> {
        let p = self.prior.clone();
        self.interpolate_control(mesh, move |x| p(x))
    }

    fn control_gram(&self, mesh: &Self::Mesh) -> SparseMatrix {
        self.weighted_bilinear(mesh, Boundary::Free, Boundary::Free, 0.0, |_, _| 1.0)
    }

    fn obs_gram(&self, mesh: &Self::Mesh) -> SparseMatrix {
        self.weighted_bilinear(mesh, Boundary::Dirichlet, Boundary::Dirichlet, 0.0, |_, _| 1.0)
    }

    fn solve_state(&self, q: &[f64], mesh: &Self::Mesh) -> Result<Vec<f64>> {
        self.check_admissible(q)?;
        let qf = self.control_fn(mesh, q);
        let n = self.state_dim(mesh);
        let mut u = vec![0.0; n];
        let (mut res, mut jac) = self.state_residual(mesh, &qf, &self.state_fn(mesh, &u));
        let scale = linalg::norm2(&res).max(1e-300);
        const MAX_NEWTON: usize = 50;
        for _ in 0..MAX_NEWTON {
            let du = BandedLu::factor(&jac)?.solve(&res);
            linalg::axpy(-1.0, &du, &mut u);
            let uf = self.state_fn(mesh, &u);
            (res, jac) = self.state_residual(mesh, &qf, &uf);
            let rn = linalg::norm2(&res);
            if rn <= 1e-13 * scale || linalg::norm2(&du) <= 1e-15 * (1.0 + linalg::norm2(&u)) {
                return Ok(u);
            }
        }
        Err(Error::StateSolve { iterations: MAX_NEWTON, residual: linalg::norm2(&res) })
    }

    fn misfit(&self, u: &[f64], mesh: &Self::Mesh) -> f64 {
        let uf = self.state_fn(mesh, u);
        let cells = crate::par::map_range(mesh.mesh.n_cells(), |c| {
            mesh.quad.cells[c]
                .iter()
                .zip(&mesh.g[c])
                .map(|(p, g)| p.w * (uf.eval(c, p.t).0 - g).powi(2))
                .sum::<f64>()
        });
        cells.iter().sum()
    }

    fn linearize(&self, q_old: &[f64], u_old: &[f64], mesh: &Self::Mesh) -> Result<Linearization> {
        self.check_admissible(q_old)?;
        let qf = self.control_fn(mesh, q_old);
        let uf = self.state_fn(mesh, u_old);
        let rx = |c: usize, t: f64| self.reaction.eval(qf.eval(c, t).0, uf.eval(c, t).0);
        let state_jac = self.weighted_bilinear(mesh, Boundary::Dirichlet, Boundary::Dirichlet, 1.0, |c, t| rx(c, t).r_u);
        let control_jac = self.weighted_bilinear(mesh, Boundary::Dirichlet, Boundary::Free, 0.0, |c, t| rx(c, t).r_q);
        let data_load = fem::assemble_linear(&mesh.mesh, &mesh.quad, Boundary::Dirichlet, |c, k, _| {
            (mesh.g[c][k], 0.0)
        });
        let state_lu = BandedLu::factor(&state_jac)?;
        Ok(Linearization {
            control_gram: self.control_gram(mesh),
            obs_gram: self.obs_gram(mesh),
            state_jac,
            control_jac,
            state_lu,
            data_load,
            prior: self.prior(mesh),
            q_old: q_old.to_vec(),
            u_old: u_old.to_vec(),
            i3: self.misfit(u_old, mesh),
        })
    }

    fn state_adjoint_load(&self, lin: &Linearization, q: &[f64], w: &[f64], v: &[f64], mesh: &Self::Mesh) -> Vec<f64> {
        let qo = self.control_fn(mesh, &lin.q_old);
        let qn = self.control_fn(mesh, q);
        let uo = self.state_fn(mesh, &lin.u_old);
        let wf = self.state_fn(mesh, w);
        let vf = self.state_fn(mesh, v);
        fem::assemble_linear(&mesh.mesh, &mesh.quad, Boundary::Dirichlet, |c, k, p| {
            let (qov, uov) = (qo.eval(c, p.t).0, uo.eval(c, p.t).0);
            let d = self.reaction.eval(qov, uov);
            let (wv, vv) = (wf.eval(c, p.t).0, vf.eval(c, p.t).0);
            let dq = qn.eval(c, p.t).0 - qov;
            (2.0 * (uov + wv - mesh.g[c][k]) + d.r_uu * wv * vv + d.r_qu * dq * vv, 0.0)
        })
    }

    fn transfer_control(&self, q: &[f64], from: &Self::Mesh, to: &Self::Mesh) -> Result<Vec<f64>> {
        if Arc::ptr_eq(from, to) {
            return Ok(q.to_vec());
        }
        let f = self.control_fn(from, q);
        Ok(fem::prolong(&f, &to.mesh)?.dofs())
    }

    fn refine(&self, mesh: &Self::Mesh, indicators: &[f64], fraction: f64) -> Result<Self::Mesh> {
        let mut marks = dwr::mark_cells(indicators, fraction)?;
        marks.close_patches(&mesh.mesh);
        self.discretize(mesh.mesh.refine(&marks)?)
    }

    fn estimate_misfit(&self, lin: &Linearization, mesh: &Self::Mesh) -> Result<Estimate> {
        dwr::eta_misfit(self, lin, mesh)
    }

    fn estimate_step(&self, state: &GnState<Self>, which: StepQoi) -> Result<Estimate> {
        dwr::eta_step(self, state, which)
    }
}

/// Exact and noisy data for a FEM problem: the state at `q_dagger` on
/// `data_mesh`, plus a seeded perturbation scaled to `L²` norm exactly `delta`.
pub fn synthesize_data<R: Reaction + Clone>(
    reaction: R,
    source: ScalarFn,
    q_dagger: impl Fn(f64) -> f64,
    delta: f64,
    seed: u64,
    data_mesh: Mesh1D,
) -> Result<(FeFunction, FeFunction)> {
    if delta < 0.0 {
        return Err(Error::invalid("noise level must be nonnegative"));
    }
    let zero = FeFunction::zero(Arc::new(data_mesh.clone()), Boundary::Free);
    let probe = FemProblem::new(reaction, source, Arc::new(|_| 0.0), zero, 0.0);
    let mesh = probe.discretize(data_mesh)?;
    let qd = probe.interpolate_control(&mesh, q_dagger);
    let u = probe.solve_state(&qd, &mesh)?;
    let clean = FeFunction::from_nodal(mesh.mesh.clone(), Boundary::Free, probe.state_fn(&mesh, &u).nodal().to_vec())?;
    let noisy = if delta > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e: Vec<f64> = (0..mesh.mesh.n_vertices()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ef = FeFunction::from_nodal(mesh.mesh.clone(), Boundary::Free, e)?;
        let s = delta / fem::l2_norm(&ef);
        clean.add_scaled(s, &ef)?
    } else {
        clean.clone()
    };
    Ok((clean, noisy))
}

// ---------------------------------------------------------------------------
// Dense linear instance

/// `F(q) = T q` on `R^n -> R^m` with Euclidean inner products. The state
/// equation is `A(q, u)(v) = ⟨u - T q, v⟩`.
#[derive(Clone, Debug)]
pub struct DenseLinearProblem {
    pub t: DMatrix<f64>,
    pub data: Vec<f64>,
    pub prior: Vec<f64>,
    pub delta: f64,
    neg_t: SparseMatrix,
}

impl DenseLinearProblem {
    pub fn new(t: DMatrix<f64>, data: Vec<f64>, prior: Vec<f64>, delta: f64) -> Result<Self> {
        if data.len() != t.nrows() || prior.len() != t.ncols() {
            return Err(Error::invalid(format!(
                "T is {}x{}, data has {} entries, prior {}",
                t.nrows(),
                t.ncols(),
                data.len(),
                prior.len()
            )));
        }
        let neg_t = SparseMatrix::from_dense(t.nrows(), t.ncols(), |i, j| -t[(i, j)]);
        Ok(DenseLinearProblem { t, data, prior, delta, neg_t })
    }

    pub fn apply(&self, q: &[f64]) -> Vec<f64> {
        (&self.t * nalgebra::DVector::from_column_slice(q)).as_slice().to_vec()
    }
}

impl InverseProblem for DenseLinearProblem {
    type Mesh = ();

    fn noise_level(&self) -> f64 {
        self.delta
    }

    fn data_norm_sq(&self) -> f64 {
        linalg::dot(&self.data, &self.data)
    }

    fn dofs(&self, _: &()) -> usize {
        self.t.ncols()
    }

    fn control_dim(&self, _: &()) -> usize {
        self.t.ncols()
    }

    fn state_dim(&self, _: &()) -> usize {
        self.t.nrows()
    }

    fn prior(&self, _: &()) -> Vec<f64> {
        self.prior.clone()
    }

    fn control_gram(&self, _: &()) -> SparseMatrix {
        SparseMatrix::identity(self.t.ncols())
    }

    fn obs_gram(&self, _: &()) -> SparseMatrix {
        SparseMatrix::identity(self.t.nrows())
    }

    fn solve_state(&self, q: &[f64], _: &()) -> Result<Vec<f64>> {
        if q.len() != self.t.ncols() {
            return Err(Error::invalid("control has the wrong length"));
        }
        Ok(self.apply(q))
    }

    fn misfit(&self, u: &[f64], _: &()) -> f64 {
        let r = linalg::sub(u, &self.data);
        linalg::dot(&r, &r)
    }

    fn linearize(&self, q_old: &[f64], u_old: &[f64], mesh: &()) -> Result<Linearization> {
        let m = self.t.nrows();
        let id = SparseMatrix::identity(m);
        Ok(Linearization {
            control_gram: self.control_gram(mesh),
            obs_gram: id.clone(),
            state_lu: BandedLu::factor(&id)?,
            state_jac: id,
            control_jac: self.neg_t.clone(),
            data_load: self.data.clone(),
            prior: self.prior.clone(),
            q_old: q_old.to_vec(),
            u_old: u_old.to_vec(),
            i3: self.misfit(u_old, mesh),
        })
    }

    fn state_adjoint_load(&self, lin: &Linearization, _q: &[f64], w: &[f64], _v: &[f64], _: &()) -> Vec<f64> {
        lin.u_old.iter().zip(w).zip(&self.data).map(|((u, w), g)| 2.0 * (u + w - g)).collect()
    }

    fn transfer_control(&self, q: &[f64], _: &(), _: &()) -> Result<Vec<f64>> {
        Ok(q.to_vec())
    }

    fn refine(&self, _: &(), _: &[f64], _: f64) -> Result<()> {
        Err(Error::invalid("a dense problem has no mesh to refine"))
    }

    fn estimate_misfit(&self, _: &Linearization, _: &()) -> Result<Estimate> {
        Ok(Estimate::zero())
    }

    fn estimate_step(&self, _: &GnState<Self>, _: StepQoi) -> Result<Estimate> {
        Ok(Estimate::zero())
    }
}
