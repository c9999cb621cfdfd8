//! General misfit and penalty terms, Bregman distances, the convex
//! linearized subproblem `min S(J q + y_0, g) + (1/β) R(q)`, and source
//! condition / rate utilities.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::par;
use crate::problem::Linearization;

/// Data misfit `S(y, ỹ)`.
pub trait MisfitS: Send + Sync {
    fn eval(&self, y: &[f64], y_tilde: &[f64]) -> f64;
    /// Gradient with respect to the first argument.
    fn gradient(&self, y: &[f64], y_tilde: &[f64]) -> Vec<f64>;
    /// Lipschitz constant of the gradient in the first argument, if known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

/// `S(y, ỹ) = ‖y - ỹ‖²_G`, Euclidean when no Gram matrix is given.
#[derive(Clone, Debug, Default)]
pub struct QuadraticMisfit {
    pub gram: Option<DMatrix<f64>>,
}

impl QuadraticMisfit {
    pub fn euclidean() -> Self {
        QuadraticMisfit { gram: None }
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        match &self.gram {
            None => r.to_vec(),
            Some(g) => (g * DVector::from_column_slice(r)).as_slice().to_vec(),
        }
    }
}

impl MisfitS for QuadraticMisfit {
    fn eval(&self, y: &[f64], y_tilde: &[f64]) -> f64 {
        let r = linalg::sub(y, y_tilde);
        linalg::dot(&r, &self.apply(&r))
    }

    fn gradient(&self, y: &[f64], y_tilde: &[f64]) -> Vec<f64> {
        linalg::scale(2.0, &self.apply(&linalg::sub(y, y_tilde)))
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(match &self.gram {
            None => 2.0,
            Some(g) => 2.0 * SymmetricEigen::new(g.clone()).eigenvalues.amax(),
        })
    }
}

/// Convex penalty `R` with a subgradient and the proximal map of `t R`.
pub trait PenaltyR: Send + Sync {
    fn eval(&self, q: &[f64]) -> f64;
    fn subgradient(&self, q: &[f64]) -> Vec<f64>;
    /// `argmin_x ½‖x - v‖² + t R(x)`.
    fn prox(&self, v: &[f64], t: f64) -> Vec<f64>;
}

/// `R(q) = ½‖q - q_0‖²_M`.
#[derive(Clone, Debug)]
pub struct QuadraticPenalty {
    pub q0: Vec<f64>,
    pub gram: Option<DMatrix<f64>>,
}

impl QuadraticPenalty {
    pub fn new(q0: Vec<f64>) -> Self {
        QuadraticPenalty { q0, gram: None }
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        match &self.gram {
            None => r.to_vec(),
            Some(g) => (g * DVector::from_column_slice(r)).as_slice().to_vec(),
        }
    }
}

impl PenaltyR for QuadraticPenalty {
    fn eval(&self, q: &[f64]) -> f64 {
        let r = linalg::sub(q, &self.q0);
        0.5 * linalg::dot(&r, &self.apply(&r))
    }

    fn subgradient(&self, q: &[f64]) -> Vec<f64> {
        self.apply(&linalg::sub(q, &self.q0))
    }

    fn prox(&self, v: &[f64], t: f64) -> Vec<f64> {
        match &self.gram {
            None => v.iter().zip(&self.q0).map(|(v, q0)| (v + t * q0) / (1.0 + t)).collect(),
            Some(g) => {
                let n = v.len();
                let a = DMatrix::identity(n, n) + g * t;
                let b = DVector::from_column_slice(v) + g * DVector::from_column_slice(&self.q0) * t;
                a.lu().solve(&b).expect("I + tM is positive definite").as_slice().to_vec()
            }
        }
    }
}

fn soft(x: f64, k: f64) -> f64 {
    x.signum() * (x.abs() - k).max(0.0)
}

/// `R(q) = λ Σ |q_i|`.
#[derive(Clone, Debug)]
pub struct L1Penalty {
    pub lambda: f64,
}

impl PenaltyR for L1Penalty {
    fn eval(&self, q: &[f64]) -> f64 {
        self.lambda * q.iter().map(|x| x.abs()).sum::<f64>()
    }

    fn subgradient(&self, q: &[f64]) -> Vec<f64> {
        q.iter().map(|&x| if x == 0.0 { 0.0 } else { self.lambda * x.signum() }).collect()
    }

    fn prox(&self, v: &[f64], t: f64) -> Vec<f64> {
        v.iter().map(|&x| soft(x, t * self.lambda)).collect()
    }
}

/// `R(q) = ½‖q - q_0‖² + λ Σ |q_i|`.
#[derive(Clone, Debug)]
pub struct ElasticNetPenalty {
    pub q0: Vec<f64>,
    pub lambda: f64,
}

impl PenaltyR for ElasticNetPenalty {
    fn eval(&self, q: &[f64]) -> f64 {
        let r = linalg::sub(q, &self.q0);
        0.5 * linalg::dot(&r, &r) + self.lambda * q.iter().map(|x| x.abs()).sum::<f64>()
    }

    fn subgradient(&self, q: &[f64]) -> Vec<f64> {
        q.iter()
            .zip(&self.q0)
            .map(|(&x, q0)| x - q0 + if x == 0.0 { 0.0 } else { self.lambda * x.signum() })
            .collect()
    }

    fn prox(&self, v: &[f64], t: f64) -> Vec<f64> {
        v.iter()
            .zip(&self.q0)
            .map(|(v, q0)| soft((v + t * q0) / (1.0 + t), t * self.lambda / (1.0 + t)))
            .collect()
    }
}

/// `D(q, q̄) = R(q) - R(q̄) - ⟨ξ̄, q - q̄⟩` for `ξ̄ ∈ ∂R(q̄)`.
pub fn bregman_distance(r: &dyn PenaltyR, q: &[f64], q_bar: &[f64], xi_bar: &[f64]) -> f64 {
    r.eval(q) - r.eval(q_bar) - linalg::dot(xi_bar, &linalg::sub(q, q_bar))
}

/// Affine model `q ↦ J q + y_0` of the forward map, compared with `data`.
#[derive(Clone, Debug)]
pub struct LinearModel {
    pub j: DMatrix<f64>,
    pub offset: Vec<f64>,
    pub data: Vec<f64>,
}

impl LinearModel {
    pub fn new(j: DMatrix<f64>, offset: Vec<f64>, data: Vec<f64>) -> Result<Self> {
        if offset.len() != j.nrows() || data.len() != j.nrows() {
            return Err(Error::invalid("model and data dimensions disagree"));
        }
        Ok(LinearModel { j, offset, data })
    }

    /// Dense model of a linearization. The data are replaced by their
    /// projection onto the state space, which shifts `‖y - g‖²_G` by a
    /// constant and leaves minimizers unchanged.
    pub fn from_linearization(lin: &Linearization) -> Result<(Self, DMatrix<f64>)> {
        let nq = lin.control_gram.nrows;
        let mut j = DMatrix::zeros(lin.obs_gram.nrows, nq);
        let cols = par::map_range(nq, |c| {
            let mut e = vec![0.0; nq];
            e[c] = 1.0;
            crate::problem::linearized_response(lin, &e)
        });
        for (c, col) in cols.iter().enumerate() {
            j.set_column(c, &DVector::from_column_slice(col));
        }
        let offset = linalg::sub(&lin.u_old, (&j * DVector::from_column_slice(&lin.q_old)).as_slice());
        let gram = lin.obs_gram.to_dense();
        let data = gram
            .clone()
            .lu()
            .solve(&DVector::from_column_slice(&lin.data_load))
            .ok_or(Error::Singular { column: 0 })?
            .as_slice()
            .to_vec();
        Ok((LinearModel { j, offset, data }, gram))
    }

    pub fn predict(&self, q: &[f64]) -> Vec<f64> {
        linalg::add((&self.j * DVector::from_column_slice(q)).as_slice(), &self.offset)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxGradOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProxGradOptions {
    fn default() -> Self {
        ProxGradOptions { tol: 1e-10, max_iter: 200_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubproblemSolution {
    pub q: Vec<f64>,
    pub iterations: usize,
    /// Final prox fixed-point residual `‖x - prox(x - t∇f(x))‖ / t`.
    pub residual: f64,
    pub misfit: f64,
    pub penalty: f64,
}

/// Accelerated proximal gradient with backtracking and adaptive restart for
/// `min S(J q + y_0, g) + (1/β) R(q)`.
pub fn solve_general_subproblem(
    model: &LinearModel,
    s: &dyn MisfitS,
    r: &dyn PenaltyR,
    beta: f64,
    q_init: &[f64],
    opts: ProxGradOptions,
) -> Result<SubproblemSolution> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("β must be positive, got {beta}")));
    }
    let f = |q: &[f64]| s.eval(&model.predict(q), &model.data);
    let grad = |q: &[f64]| {
        let gy = s.gradient(&model.predict(q), &model.data);
        model.j.tr_mul(&DVector::from_column_slice(&gy)).as_slice().to_vec()
    };
    let phi = |q: &[f64]| f(q) + r.eval(q) / beta;
    let lj = model.j.norm().powi(2) * s.lipschitz().unwrap_or(1.0);
    let mut t = if lj > 0.0 { 1.0 / lj } else { 1.0 };
    let mut x = q_init.to_vec();
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    let mut history = Vec::new();
    for it in 0..opts.max_iter {
        let gy = grad(&y);
        let fy = f(&y);
        let x_new = loop {
            let step: Vec<f64> = y.iter().zip(&gy).map(|(y, g)| y - t * g).collect();
            let cand = r.prox(&step, t / beta);
            let d = linalg::sub(&cand, &y);
            if f(&cand) <= fy + linalg::dot(&gy, &d) + linalg::dot(&d, &d) / (2.0 * t) + 1e-15 * fy.abs() {
                break cand;
            }
            t *= 0.5;
            if t < 1e-300 {
                return Err(Error::NonConvergence("proximal step size underflow".into()));
            }
        };
        // residual measured at the new point, with the same step size
        let gx = grad(&x_new);
        let step: Vec<f64> = x_new.iter().zip(&gx).map(|(x, g)| x - t * g).collect();
        let res = linalg::norm2(&linalg::sub(&x_new, &r.prox(&step, t / beta))) / t;
        history.push(res);
        if res <= opts.tol * (1.0 + linalg::norm2(&x_new)) {
            return Ok(SubproblemSolution {
                misfit: f(&x_new),
                penalty: r.eval(&x_new),
                q: x_new,
                iterations: it + 1,
                residual: res,
            });
        }
        let next_m = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        if phi(&x_new) > phi(&x) {
            // restart
            momentum = 1.0;
            y = x_new.clone();
        } else {
            let w = (momentum - 1.0) / next_m;
            y = x_new.iter().zip(&x).map(|(a, b)| a + w * (a - b)).collect();
            momentum = next_m;
        }
        x = x_new;
        t *= 1.1;
    }
    let tail: Vec<String> = history.iter().rev().take(5).map(|r| format!("{r:.3e}")).collect();
    Err(Error::NonConvergence(format!(
        "proximal gradient did not converge in {} iterations; last residuals {}",
        opts.max_iter,
        tail.join(", ")
    )))
}

/// β with `θ_lo I_3 ≤ S(J q_β + y_0, g) ≤ θ_hi I_3`, by bisection in `log β`.
/// Used for penalties where the derivative of the residual in `β` is not
/// available in closed form.
#[allow(clippy::too_many_arguments)]
pub fn select_beta_bisection(
    model: &LinearModel,
    s: &dyn MisfitS,
    r: &dyn PenaltyR,
    window: (f64, f64),
    i3: f64,
    beta_init: f64,
    q_init: &[f64],
    opts: ProxGradOptions,
) -> Result<(f64, SubproblemSolution)> {
    let (lo_t, hi_t) = window;
    let (mut lo, mut hi) = (f64::NAN, f64::NAN);
    let mut beta = beta_init;
    let mut history = Vec::new();
    for _ in 0..200 {
        let sol = solve_general_subproblem(model, s, r, beta, q_init, opts)?;
        history.push((beta, sol.misfit));
        if sol.misfit > hi_t * i3 {
            lo = beta;
        } else if sol.misfit < lo_t * i3 {
            hi = beta;
        } else {
            return Ok((beta, sol));
        }
        beta = match (lo.is_nan(), hi.is_nan()) {
            (false, false) => (lo * hi).sqrt(),
            (false, true) => 10.0 * lo,
            (true, false) => 0.1 * hi,
            _ => unreachable!(),
        };
        if !lo.is_nan() && !hi.is_nan() && hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    Err(Error::BetaSearch { reason: "bisection did not reach the window".into(), history })
}

// ---------------------------------------------------------------------------
// Source conditions and rates

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum RateKind {
    Holder { nu: f64 },
    Logarithmic { p: f64 },
}

/// Index function `f` of a source condition `q† - q_0 = f(F'*F') s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFunction {
    pub kind: RateKind,
}

const LOG_DOMAIN_END: f64 = 1.0 / std::f64::consts::E;

impl RateFunction {
    pub fn holder(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::invalid(format!("Hölder exponent must be positive, got {nu}")));
        }
        Ok(RateFunction { kind: RateKind::Holder { nu } })
    }

    pub fn logarithmic(p: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::invalid(format!("logarithmic exponent must be positive, got {p}")));
        }
        Ok(RateFunction { kind: RateKind::Logarithmic { p } })
    }

    /// Right end of the domain.
    pub fn domain_end(&self) -> f64 {
        match self.kind {
            RateKind::Holder { .. } => f64::INFINITY,
            RateKind::Logarithmic { .. } => LOG_DOMAIN_END,
        }
    }

    pub fn eval(&self, lambda: f64) -> Result<f64> {
        if lambda < 0.0 || lambda > self.domain_end() || lambda.is_nan() {
            return Err(Error::Range(format!("λ = {lambda} outside the domain of f")));
        }
        Ok(match self.kind {
            _ if lambda == 0.0 => 0.0,
            RateKind::Holder { nu } => lambda.powf(nu),
            RateKind::Logarithmic { p } => (1.0 / lambda).ln().powf(-p),
        })
    }

    /// `Θ(λ) = f(λ) √λ`.
    pub fn theta(&self, lambda: f64) -> Result<f64> {
        Ok(self.eval(lambda)? * lambda.sqrt())
    }

    /// `Θ⁻¹(t)` by bisection to relative accuracy `1e-12`.
    pub fn theta_inverse(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Range(format!("Θ⁻¹ needs t >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let mut hi = match self.kind {
            RateKind::Holder { .. } => {
                let mut h = 1.0;
                while self.theta(h)? < t {
                    h *= 2.0;
                    if !h.is_finite() {
                        return Err(Error::Range(format!("t = {t} beyond the range of Θ")));
                    }
                }
                h
            }
            RateKind::Logarithmic { .. } => {
                if self.theta(LOG_DOMAIN_END)? < t {
                    return Err(Error::Range(format!("t = {t} beyond the range of Θ")));
                }
                LOG_DOMAIN_END
            }
        };
        let mut lo = hi;
        while self.theta(lo)? > t {
            lo *= 0.5;
            if lo == 0.0 {
                return Ok(0.0);
            }
        }
        // bisection in log scale
        for _ in 0..400 {
            if hi - lo <= 1e-12 * hi {
                break;
            }
            let mid = (lo * hi).sqrt();
            let mid = if mid > lo && mid < hi { mid } else { 0.5 * (lo + hi) };
            if self.theta(mid)? < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `φ = (f²)⁻¹` sampled at `f²` of the given points; used only for the
    /// convexity check.
    pub fn phi_is_convex_on(&self, lambdas: &[f64]) -> Result<bool> {
        // φ(f²(λ)) = λ; convexity of φ means the secant slopes (Δλ / Δf²) increase
        let mut pts = Vec::with_capacity(lambdas.len());
        for &l in lambdas {
            pts.push((self.eval(l)?.powi(2), l));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let slopes: Vec<f64> = pts.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
        Ok(slopes.windows(2).all(|s| s[1] >= s[0] * (1.0 - 1e-9)))
    }
}

/// Squared error bound `C̄² δ² / Θ⁻¹(C̄ δ / (2‖s‖))`.
pub fn rate_bound(f: &RateFunction, delta: f64, s_norm: f64, c_bar: f64) -> Result<f64> {
    if !(delta > 0.0) || !(s_norm > 0.0) || !(c_bar > 0.0) {
        return Err(Error::Range("rate bound needs δ, ‖s‖ and C̄ positive".into()));
    }
    let lam = f.theta_inverse(c_bar * delta / (2.0 * s_norm))?;
    Ok(c_bar * c_bar * delta * delta / lam)
}

/// The second form of the same bound, `4‖s‖² f²(Θ⁻¹(C̄ δ / (2‖s‖)))`.
pub fn rate_bound_alt(f: &RateFunction, delta: f64, s_norm: f64, c_bar: f64) -> Result<f64> {
    let lam = f.theta_inverse(c_bar * delta / (2.0 * s_norm))?;
    Ok(4.0 * s_norm * s_norm * f.eval(lam)?.powi(2))
}

/// `q† = q_0 + f(TᵀT) s` by the spectral decomposition of `TᵀT`.
pub fn manufacture_source(t: &DMatrix<f64>, f: &RateFunction, s: &[f64], q0: &[f64]) -> Result<Vec<f64>> {
    if s.len() != t.ncols() || q0.len() != t.ncols() {
        return Err(Error::invalid("source element and prior must match the columns of T"));
    }
    let eig = SymmetricEigen::new(t.tr_mul(t));
    let fl: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| f.eval(l.max(0.0)))
        .collect::<Result<_>>()?;
    let coeff = eig.eigenvectors.tr_mul(&DVector::from_column_slice(s));
    let scaled = DVector::from_fn(coeff.len(), |i, _| fl[i] * coeff[i]);
    let dq = &eig.eigenvectors * scaled;
    Ok(q0.iter().zip(dq.iter()).map(|(a, b)| a + b).collect())
}

// ---------------------------------------------------------------------------
// Sampled checks

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assumption1Report {
    pub samples: usize,
    /// Largest `|S(y, ỹ) - S(ỹ, y)|`.
    pub symmetry_defect: f64,
    /// Largest `|S(y, y)|`.
    pub identity_defect: f64,
    /// Smallest `S(y, ỹ)`.
    pub min_value: f64,
    /// Smallest `½(S(y_1, ỹ) + S(y_2, ỹ)) - S(½(y_1 + y_2), ỹ)`.
    pub convexity_margin: f64,
    /// Largest `S(y, ỹ) / (S(y, ŷ) + S(ŷ, ỹ))`, the empirical quasi-triangle constant.
    pub c_s: f64,
}

impl Assumption1Report {
    pub fn passes(&self, tol: f64) -> bool {
        self.symmetry_defect <= tol && self.identity_defect <= tol && self.min_value >= -tol && self.convexity_margin >= -tol
    }
}

/// Samples `n` quadruples from `sampler` and checks symmetry, `S(y, y) = 0`,
/// nonnegativity, convexity in the first argument and the quasi-triangle
/// inequality.
pub fn check_assumption1(
    s: &dyn MisfitS,
    mut sampler: impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
    n: usize,
    seed: u64,
) -> Result<Assumption1Report> {
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quads: Vec<[Vec<f64>; 4]> =
        (0..n).map(|_| [sampler(&mut rng), sampler(&mut rng), sampler(&mut rng), sampler(&mut rng)]).collect();
    let rows = par::map_slice(&quads, |[y, yt, yh, y2]| {
        let a = s.eval(y, yt);
        let sym = (a - s.eval(yt, y)).abs();
        let id = s.eval(y, y).abs();
        let mid: Vec<f64> = y.iter().zip(y2).map(|(a, b)| 0.5 * (a + b)).collect();
        let conv = 0.5 * (a + s.eval(y2, yt)) - s.eval(&mid, yt);
        let den = s.eval(y, yh) + s.eval(yh, yt);
        let ratio = if den > 0.0 { a / den } else { 0.0 };
        (sym, id, a, conv, ratio)
    });
    Ok(rows.iter().fold(
        Assumption1Report {
            samples: n,
            symmetry_defect: 0.0,
            identity_defect: 0.0,
            min_value: f64::INFINITY,
            convexity_margin: f64::INFINITY,
            c_s: 0.0,
        },
        |mut r, &(sym, id, a, conv, ratio)| {
            r.symmetry_defect = r.symmetry_defect.max(sym);
            r.identity_defect = r.identity_defect.max(id);
            r.min_value = r.min_value.min(a);
            r.convexity_margin = r.convexity_margin.min(conv);
            r.c_s = r.c_s.max(ratio);
            r
        },
    ))
}

/// Smallest midpoint convexity margin of `R` over sampled pairs.
pub fn penalty_convexity_margin(
    r: &dyn PenaltyR,
    mut sampler: impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
    n: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (a, b) = (sampler(&mut rng), sampler(&mut rng));
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            0.5 * (r.eval(&a) + r.eval(&b)) - r.eval(&mid)
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bregman_examples() {
        let quad = QuadraticPenalty::new(vec![0.0, 0.0]);
        assert_eq!(bregman_distance(&quad, &[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]), 0.5);
        assert_eq!(bregman_distance(&quad, &[0.3, 0.1], &[0.3, 0.1], &quad.subgradient(&[0.3, 0.1])), 0.0);
        let l1 = L1Penalty { lambda: 1.0 };
        assert_eq!(bregman_distance(&l1, &[1.0, -1.0], &[0.0, 0.0], &[0.0, 0.0]), 2.0);
    }

    #[test]
    fn manufactured_sources_on_diagonal() {
        let t = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5]));
        let q = manufacture_source(&t, &RateFunction::holder(1.0).unwrap(), &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-12 && (q[1] - 0.25).abs() < 1e-12);
        let q = manufacture_source(&t, &RateFunction::holder(0.5).unwrap(), &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-12 && (q[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn holder_half_bound_is_linear() {
        let f = RateFunction::holder(0.5).unwrap();
        let b = rate_bound(&f, 1e-3, 2.0, 3.0).unwrap();
        assert!((b - 2.0 * 2.0 * 3.0 * 1e-3).abs() < 1e-10 * b);
    }

    #[test]
    fn log_rate_outside_domain_is_an_error() {
        let f = RateFunction::logarithmic(1.0).unwrap();
        assert!(f.eval(0.5).is_err());
        assert!(f.theta_inverse(10.0).is_err());
    }
}
