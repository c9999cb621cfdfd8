//! Brute-force references for testing: dense normal equations, an
//! independently assembled dense KKT system, fine-mesh quantities of
//! interest and finite-difference checks. Nothing here is fast.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::FeFunction;
use crate::gnstep::gn_solve;
use crate::linalg;
use crate::mesh::Mesh1D;
use crate::problem::{linearize_at, FemMesh, FemProblem, InverseProblem, Reaction};

/// `argmin ‖T q - g‖² + (1/β) ‖q - q_0‖²` from the normal equations.
pub fn dense_tikhonov(t: &DMatrix<f64>, g: &[f64], q0: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return Err(Error::invalid("β must be positive"));
    }
    let n = t.ncols();
    let a = t.tr_mul(t) + DMatrix::identity(n, n) / beta;
    let b = t.tr_mul(&DVector::from_column_slice(g)) + DVector::from_column_slice(q0) / beta;
    let lu = a.lu();
    if !lu.is_invertible() {
        return Err(Error::Singular { column: 0 });
    }
    Ok(lu.solve(&b).ok_or(Error::Singular { column: 0 })?.as_slice().to_vec())
}

/// `‖T q - g‖²` at the Tikhonov solution for `β`.
pub fn dense_residual(t: &DMatrix<f64>, g: &[f64], q: &[f64]) -> f64 {
    let r = t * DVector::from_column_slice(q) - DVector::from_column_slice(g);
    r.norm_squared()
}

/// β with `‖T q_β - g‖² = target` by bisection in `log β`; the residual is
/// decreasing in β.
pub fn dense_beta_bisection(t: &DMatrix<f64>, g: &[f64], q0: &[f64], target: f64) -> Result<f64> {
    let res = |b: f64| dense_tikhonov(t, g, q0, b).map(|q| dense_residual(t, g, &q));
    let (mut lo, mut hi) = (1e-12, 1e12);
    if res(lo)? < target || res(hi)? > target {
        return Err(Error::Range("target residual outside the reachable range".into()));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if res(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-14 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Iterates of the linear IRGNM for a given β sequence: every step is the
/// Tikhonov solution with prior `q_0`, whatever the previous iterate.
pub fn replay_linear(t: &DMatrix<f64>, g: &[f64], q0: &[f64], betas: &[f64]) -> Result<Vec<Vec<f64>>> {
    betas.iter().map(|&b| dense_tikhonov(t, g, q0, b)).collect()
}

// ---------------------------------------------------------------------------
// Dense FEM KKT reference for the coefficient problem `-u'' + q u = f`

fn hat(xs: &[f64], i: usize, x: f64) -> (f64, f64) {
    let n = xs.len();
    if i > 0 && x >= xs[i - 1] && x <= xs[i] {
        let h = xs[i] - xs[i - 1];
        return ((x - xs[i - 1]) / h, 1.0 / h);
    }
    if i + 1 < n && x >= xs[i] && x <= xs[i + 1] {
        let h = xs[i + 1] - xs[i];
        return ((xs[i + 1] - x) / h, -1.0 / h);
    }
    (0.0, 0.0)
}

fn interp(xs: &[f64], v: &[f64], x: f64) -> f64 {
    let k = match xs.partition_point(|&a| a <= x) {
        0 => 1,
        k if k >= xs.len() => xs.len() - 1,
        k => k,
    };
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    (1.0 - t) * v[k - 1] + t * v[k]
}

/// Solution of the Gauss-Newton KKT system for the coefficient problem,
/// assembled densely with Simpson's rule on the common refinement of the
/// working and data meshes (exact for the cubic integrands involved).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseKktReference {
    pub q: Vec<f64>,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub i2: f64,
}

/// `q_old`, `u_old` and `prior` are nodal values on all vertices of `mesh`
/// (`u_old` vanishing at the end points); the data are P1 on `data_mesh`.
pub fn coefficient_kkt_reference(
    mesh: &Mesh1D,
    data_mesh: &Mesh1D,
    data: &[f64],
    q_old: &[f64],
    u_old: &[f64],
    prior: &[f64],
    beta: f64,
) -> Result<DenseKktReference> {
    let xs = mesh.vertices();
    let nv = xs.len();
    let (nq, nu) = (nv, nv - 2);
    let mut bps: Vec<f64> = xs.iter().chain(data_mesh.vertices()).copied().collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
    let mut mq = DMatrix::zeros(nq, nq);
    let mut mg = DMatrix::<f64>::zeros(nu, nu);
    let mut k = DMatrix::zeros(nu, nu);
    let mut bm = DMatrix::zeros(nu, nq);
    let mut gl = DVector::zeros(nu);
    let dx = data_mesh.vertices();
    for s in bps.windows(2) {
        let (a, b) = (s[0], s[1]);
        let h = b - a;
        let pts = [(a, h / 6.0), (0.5 * (a + b), 4.0 * h / 6.0), (b, h / 6.0)];
        let xm = 0.5 * (a + b);
        // hats that live on this subinterval: the two vertices of the containing cell
        let c = xs.partition_point(|&x| x <= xm) - 1;
        let active = [c, c + 1];
        for &(x, w) in &pts {
            let qv = interp(xs, q_old, x);
            let uv = interp(xs, u_old, x);
            let gv = interp(dx, data, x);
            for &i in &active {
                let (pi, _) = hat(xs, i, x);
                for &j in &active {
                    let (pj, _) = hat(xs, j, x);
                    mq[(i, j)] += w * pi * pj;
                }
            }
            for &i in &active {
                if i == 0 || i == nv - 1 {
                    continue;
                }
                let (pi, _) = hat(xs, i, x);
                gl[i - 1] += w * gv * pi;
                for &j in &active {
                    let (pj, _) = hat(xs, j, x);
                    bm[(i - 1, j)] += w * uv * pj * pi;
                    if j == 0 || j == nv - 1 {
                        continue;
                    }
                    mg[(i - 1, j - 1)] += w * pi * pj;
                    k[(i - 1, j - 1)] += w * qv * pi * pj;
                }
            }
        }
        // stiffness with midpoint derivatives (constant per subinterval)
        for &i in &active {
            if i == 0 || i == nv - 1 {
                continue;
            }
            let (_, di) = hat(xs, i, xm);
            for &j in &active {
                if j == 0 || j == nv - 1 {
                    continue;
                }
                let (_, dj) = hat(xs, j, xm);
                k[(i - 1, j - 1)] += h * di * dj;
            }
        }
    }
    let n = nq + 2 * nu;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (nq, nq)).copy_from(&(&mq * (2.0 / beta)));
    a.view_mut((0, nq + nu), (nq, nu)).copy_from(&bm.transpose());
    a.view_mut((nq, nq), (nu, nu)).copy_from(&(&mg * 2.0));
    a.view_mut((nq, nq + nu), (nu, nu)).copy_from(&k.transpose());
    a.view_mut((nq + nu, 0), (nu, nq)).copy_from(&bm);
    a.view_mut((nq + nu, nq), (nu, nu)).copy_from(&k);
    let uo = DVector::from_column_slice(&u_old[1..nv - 1]);
    let mut rhs = DVector::zeros(n);
    rhs.rows_mut(0, nq).copy_from(&(&mq * DVector::from_column_slice(prior) * (2.0 / beta)));
    rhs.rows_mut(nq, nu).copy_from(&((&gl - &mg * &uo) * 2.0));
    rhs.rows_mut(nq + nu, nu).copy_from(&(&bm * DVector::from_column_slice(q_old)));
    let x = a.lu().solve(&rhs).ok_or(Error::Singular { column: 0 })?;
    let q = x.rows(0, nq).iter().copied().collect::<Vec<_>>();
    let w = x.rows(nq, nu).iter().copied().collect::<Vec<_>>();
    let v = x.rows(nq + nu, nu).iter().copied().collect::<Vec<_>>();
    // ‖u_old + w - g‖² on the same breakpoints, Simpson on the quadratic integrand
    let mut lin = vec![0.0; nv];
    for i in 1..nv - 1 {
        lin[i] = u_old[i] + w[i - 1];
    }
    let i2 = bps
        .windows(2)
        .map(|s| {
            let (a, b) = (s[0], s[1]);
            let e = |x: f64| (interp(xs, &lin, x) - interp(dx, data, x)).powi(2);
            (b - a) / 6.0 * (e(a) + 4.0 * e(0.5 * (a + b)) + e(b))
        })
        .sum();
    Ok(DenseKktReference { q, w, v, i2 })
}

// ---------------------------------------------------------------------------
// Fine-mesh references

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferenceSolution {
    pub fine_factor: usize,
    pub fine_cells: usize,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
    /// Reference Gauss-Newton iterate, nodal on the fine mesh.
    pub q: Vec<f64>,
}

/// Re-solves the step on `mesh` refined uniformly `fine_factor` times
/// (a power of two, at least 4), with `q_old` prolonged exactly.
pub fn reference_qoi<R: Reaction>(
    p: &FemProblem<R>,
    mesh: &Arc<FemMesh>,
    q_old: &[f64],
    beta: f64,
    fine_factor: usize,
) -> Result<ReferenceSolution> {
    if fine_factor < 4 || !fine_factor.is_power_of_two() {
        return Err(Error::invalid(format!("fine factor must be a power of two >= 4, got {fine_factor}")));
    }
    let fine = p.discretize(mesh.mesh.refine_uniformly(fine_factor.trailing_zeros())?)?;
    let q_fine = p.transfer_control(q_old, mesh, &fine)?;
    let lin = Arc::new(linearize_at(p, &q_fine, &fine)?);
    let state = gn_solve(p, lin.clone(), &fine, beta)?;
    let u_new = p.solve_state(&state.q, &fine)?;
    Ok(ReferenceSolution {
        fine_factor,
        fine_cells: fine.mesh.n_cells(),
        i1: state.i1,
        i2: state.i2,
        i3: lin.i3,
        i4: p.misfit(&u_new, &fine),
        q: FeFunction::from_dofs(fine.mesh.clone(), crate::fem::Boundary::Free, &state.q).nodal().to_vec(),
    })
}

/// Fine-mesh reference for `‖C(S(q)) - g^δ‖²` alone.
pub fn reference_misfit<R: Reaction>(p: &FemProblem<R>, mesh: &Arc<FemMesh>, q: &[f64], fine_factor: usize) -> Result<f64> {
    if fine_factor < 4 || !fine_factor.is_power_of_two() {
        return Err(Error::invalid(format!("fine factor must be a power of two >= 4, got {fine_factor}")));
    }
    let fine = p.discretize(mesh.mesh.refine_uniformly(fine_factor.trailing_zeros())?)?;
    let q_fine = p.transfer_control(q, mesh, &fine)?;
    let u = p.solve_state(&q_fine, &fine)?;
    Ok(p.misfit(&u, &fine))
}

/// Best relative error of central differences of `f` at `x` in direction
/// `dir` against the claimed directional derivative.
pub fn fd_check(f: impl Fn(&[f64]) -> Vec<f64>, derivative: &[f64], x: &[f64], dir: &[f64], steps: &[f64]) -> f64 {
    let dn = linalg::norm2(derivative);
    steps
        .iter()
        .map(|&h| {
            let xp: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + h * d).collect();
            let xm: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a - h * d).collect();
            let fd: Vec<f64> = f(&xp).iter().zip(f(&xm)).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let err = linalg::norm2(&linalg::sub(&fd, derivative));
            if dn > 0.0 {
                err / dn
            } else {
                err
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Scalar version of [`fd_check`].
pub fn fd_check_scalar(f: impl Fn(f64) -> f64, derivative: f64, x: f64, steps: &[f64]) -> f64 {
    fd_check(|v| vec![f(v[0])], &[derivative], &[x], &[1.0], steps)
}
