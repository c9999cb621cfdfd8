//! Piecewise linear finite elements on [`Mesh1D`], the patchwise quadratic
//! reconstruction, quadrature and assembly.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{SparseMatrix, Triplets};
use crate::mesh::{Mesh1D, VertexOrigin};

/// Three-point Gauss rule on the unit interval.
pub const GAUSS_T: [f64; 3] = [
    0.5 - 0.387_298_334_620_741_7,
    0.5,
    0.5 + 0.387_298_334_620_741_7,
];
pub const GAUSS_W: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Homogeneous Dirichlet values at both end points (state and adjoint spaces).
    Dirichlet,
    /// No boundary constraint (parameter space).
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Degree {
    P1,
    P2,
}

/// Number of coefficients of a P1 space on `m`.
pub fn n_dofs(m: &Mesh1D, boundary: Boundary) -> usize {
    match boundary {
        Boundary::Free => m.n_vertices(),
        Boundary::Dirichlet => m.n_vertices() - 2,
    }
}

/// Coefficient index of vertex `v`, if it carries one.
#[inline]
pub fn dof_of(m: &Mesh1D, v: usize, boundary: Boundary) -> Option<usize> {
    match boundary {
        Boundary::Free => Some(v),
        Boundary::Dirichlet => (v > 0 && v + 1 < m.n_vertices()).then(|| v - 1),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadPoint {
    pub x: f64,
    /// Local coordinate in the owning cell.
    pub t: f64,
    pub w: f64,
    /// Cell of the secondary mesh containing this point (the cell itself for
    /// plain Gauss rules) and the local coordinate there.
    pub other_cell: usize,
    pub other_t: f64,
}

/// Quadrature points grouped by cell.
#[derive(Clone, Debug)]
pub struct CellQuadrature {
    pub cells: Vec<Vec<QuadPoint>>,
}

impl CellQuadrature {
    pub fn gauss(m: &Mesh1D) -> Self {
        let cells = (0..m.n_cells())
            .map(|c| {
                let (x0, x1) = m.cell(c);
                let h = x1 - x0;
                (0..3)
                    .map(|q| QuadPoint {
                        x: x0 + h * GAUSS_T[q],
                        t: GAUSS_T[q],
                        w: h * GAUSS_W[q],
                        other_cell: c,
                        other_t: GAUSS_T[q],
                    })
                    .collect()
            })
            .collect();
        CellQuadrature { cells }
    }

    /// Gauss rule on the common refinement of `m` and `other`, so that products
    /// of piecewise polynomials on the two meshes integrate exactly.
    pub fn merged(m: &Mesh1D, other: &Mesh1D) -> Result<Self> {
        if m.domain() != other.domain() {
            return Err(Error::Mesh("meshes cover different intervals".into()));
        }
        let ov = other.vertices();
        let mut j = 0usize;
        let mut cells = Vec::with_capacity(m.n_cells());
        for c in 0..m.n_cells() {
            let (x0, x1) = m.cell(c);
            let h = x1 - x0;
            while j + 1 < other.n_cells() && ov[j + 1] <= x0 {
                j += 1;
            }
            let mut pts = Vec::new();
            let mut a = x0;
            let mut k = j;
            loop {
                let b = ov[k + 1].min(x1);
                if b > a {
                    let (o0, o1) = other.cell(k);
                    for q in 0..3 {
                        let x = a + (b - a) * GAUSS_T[q];
                        pts.push(QuadPoint {
                            x,
                            t: (x - x0) / h,
                            w: (b - a) * GAUSS_W[q],
                            other_cell: k,
                            other_t: (x - o0) / (o1 - o0),
                        });
                    }
                }
                if ov[k + 1] >= x1 || k + 1 == other.n_cells() {
                    break;
                }
                a = b;
                k += 1;
            }
            cells.push(pts);
        }
        Ok(CellQuadrature { cells })
    }

    pub fn n_points(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }
}

/// P1 shape values and reference derivatives at local coordinate `t`.
#[inline]
pub fn p1_shape(t: f64) -> ([f64; 2], [f64; 2]) {
    ([1.0 - t, t], [-1.0, 1.0])
}

/// Finite element function: nodal values at every vertex plus, for P2, one
/// value at every cell midpoint. Dirichlet functions store explicit zeros at
/// the end points.
#[derive(Clone, Debug)]
pub struct FeFunction {
    mesh: Arc<Mesh1D>,
    degree: Degree,
    boundary: Boundary,
    nodal: Vec<f64>,
    mid: Vec<f64>,
}

impl FeFunction {
    pub fn zero(mesh: Arc<Mesh1D>, boundary: Boundary) -> Self {
        let n = mesh.n_vertices();
        FeFunction { mesh, degree: Degree::P1, boundary, nodal: vec![0.0; n], mid: Vec::new() }
    }

    pub fn from_nodal(mesh: Arc<Mesh1D>, boundary: Boundary, nodal: Vec<f64>) -> Result<Self> {
        if nodal.len() != mesh.n_vertices() {
            return Err(Error::invalid(format!(
                "{} nodal values for {} vertices",
                nodal.len(),
                mesh.n_vertices()
            )));
        }
        if boundary == Boundary::Dirichlet && (nodal[0] != 0.0 || *nodal.last().unwrap() != 0.0) {
            return Err(Error::invalid("Dirichlet function with nonzero boundary values"));
        }
        Ok(FeFunction { mesh, degree: Degree::P1, boundary, nodal, mid: Vec::new() })
    }

    /// Builds a P1 function from its coefficient vector (interior values for
    /// Dirichlet spaces).
    pub fn from_dofs(mesh: Arc<Mesh1D>, boundary: Boundary, dofs: &[f64]) -> Self {
        assert_eq!(dofs.len(), n_dofs(&mesh, boundary), "coefficient vector length");
        let nodal = match boundary {
            Boundary::Free => dofs.to_vec(),
            Boundary::Dirichlet => {
                let mut v = Vec::with_capacity(dofs.len() + 2);
                v.push(0.0);
                v.extend_from_slice(dofs);
                v.push(0.0);
                v
            }
        };
        FeFunction { mesh, degree: Degree::P1, boundary, nodal, mid: Vec::new() }
    }

    pub fn interpolate(mesh: Arc<Mesh1D>, boundary: Boundary, f: impl Fn(f64) -> f64) -> Self {
        let mut nodal: Vec<f64> = mesh.vertices().iter().map(|&x| f(x)).collect();
        if boundary == Boundary::Dirichlet {
            nodal[0] = 0.0;
            *nodal.last_mut().unwrap() = 0.0;
        }
        FeFunction { mesh, degree: Degree::P1, boundary, nodal, mid: Vec::new() }
    }

    pub fn mesh(&self) -> &Arc<Mesh1D> {
        &self.mesh
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn nodal(&self) -> &[f64] {
        &self.nodal
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.mid
    }

    /// Coefficient vector of a P1 function.
    pub fn dofs(&self) -> Vec<f64> {
        debug_assert_eq!(self.degree, Degree::P1);
        match self.boundary {
            Boundary::Free => self.nodal.clone(),
            Boundary::Dirichlet => self.nodal[1..self.nodal.len() - 1].to_vec(),
        }
    }

    /// Value and x-derivative on cell `c` at local coordinate `t`.
    #[inline]
    pub fn eval(&self, c: usize, t: f64) -> (f64, f64) {
        let a = self.nodal[c];
        let b = self.nodal[c + 1];
        let h = self.mesh.width(c);
        match self.degree {
            Degree::P1 => (a + t * (b - a), (b - a) / h),
            Degree::P2 => {
                let m = self.mid[c];
                let l0 = 2.0 * (t - 0.5) * (t - 1.0);
                let l1 = -4.0 * t * (t - 1.0);
                let l2 = 2.0 * t * (t - 0.5);
                let d0 = 4.0 * t - 3.0;
                let d1 = 4.0 - 8.0 * t;
                let d2 = 4.0 * t - 1.0;
                (a * l0 + m * l1 + b * l2, (a * d0 + m * d1 + b * d2) / h)
            }
        }
    }

    pub fn value_at(&self, x: f64) -> Option<f64> {
        let c = self.mesh.locate(x)?;
        let (x0, x1) = self.mesh.cell(c);
        Some(self.eval(c, (x - x0) / (x1 - x0)).0)
    }

    fn same_space(&self, other: &FeFunction) -> Result<()> {
        if !Arc::ptr_eq(&self.mesh, &other.mesh) && *self.mesh != *other.mesh {
            return Err(Error::invalid("functions live on different meshes"));
        }
        Ok(())
    }

    fn mids_or_linear(&self) -> Vec<f64> {
        match self.degree {
            Degree::P2 => self.mid.clone(),
            Degree::P1 => (0..self.mesh.n_cells()).map(|c| 0.5 * (self.nodal[c] + self.nodal[c + 1])).collect(),
        }
    }

    /// `self + alpha * other`, promoting to P2 when either operand is P2.
    pub fn add_scaled(&self, alpha: f64, other: &FeFunction) -> Result<FeFunction> {
        self.same_space(other)?;
        let nodal = self.nodal.iter().zip(&other.nodal).map(|(a, b)| a + alpha * b).collect();
        let boundary = if self.boundary == Boundary::Dirichlet && other.boundary == Boundary::Dirichlet {
            Boundary::Dirichlet
        } else {
            Boundary::Free
        };
        let (degree, mid) = if self.degree == Degree::P2 || other.degree == Degree::P2 {
            let (ma, mb) = (self.mids_or_linear(), other.mids_or_linear());
            (Degree::P2, ma.iter().zip(&mb).map(|(a, b)| a + alpha * b).collect())
        } else {
            (Degree::P1, Vec::new())
        };
        Ok(FeFunction { mesh: self.mesh.clone(), degree, boundary, nodal, mid })
    }

    pub fn scaled(&self, alpha: f64) -> FeFunction {
        let mut f = self.clone();
        f.nodal.iter_mut().for_each(|v| *v *= alpha);
        f.mid.iter_mut().for_each(|v| *v *= alpha);
        f
    }
}

/// Interpolates a P1 function onto a nested finer mesh (exact).
pub fn prolong(f: &FeFunction, fine: &Arc<Mesh1D>) -> Result<FeFunction> {
    if f.degree != Degree::P1 {
        return Err(Error::invalid("prolongation is defined for P1 functions"));
    }
    let origin = fine.prolong_indices(f.mesh())?;
    let nodal = origin
        .iter()
        .map(|o| match *o {
            VertexOrigin::Vertex(i) => f.nodal[i],
            VertexOrigin::Interior { cell, t } => f.eval(cell, t).0,
        })
        .collect();
    Ok(FeFunction { mesh: fine.clone(), degree: Degree::P1, boundary: f.boundary, nodal, mid: Vec::new() })
}

/// Patchwise quadratic reconstruction: on each two-cell patch, the quadratic
/// interpolating the three patch vertices.
pub fn reconstruct_pi_h(f: &FeFunction) -> Result<FeFunction> {
    if f.degree != Degree::P1 {
        return Err(Error::invalid("reconstruction needs a P1 function"));
    }
    let m = f.mesh();
    let patches = m.patches()?;
    let v = m.vertices();
    let mut mid = vec![0.0; m.n_cells()];
    for [c0, c1] in patches {
        let (x0, x1, x2) = (v[c0], v[c1], v[c1 + 1]);
        let (f0, f1, f2) = (f.nodal[c0], f.nodal[c1], f.nodal[c1 + 1]);
        let p = |x: f64| {
            f0 * (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2))
                + f1 * (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2))
                + f2 * (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1))
        };
        mid[c0] = p(0.5 * (x0 + x1));
        mid[c1] = p(0.5 * (x1 + x2));
    }
    Ok(FeFunction { mesh: f.mesh.clone(), degree: Degree::P2, boundary: f.boundary, nodal: f.nodal.clone(), mid })
}

/// `pi_h f - f`, a function vanishing at every vertex.
pub fn defect(f: &FeFunction) -> Result<FeFunction> {
    reconstruct_pi_h(f)?.add_scaled(-1.0, f).map(|mut d| {
        d.boundary = f.boundary;
        d
    })
}

pub fn l2_inner(f: &FeFunction, g: &FeFunction) -> Result<f64> {
    let quad = CellQuadrature::merged(f.mesh(), g.mesh())?;
    let mut s = 0.0;
    for (c, pts) in quad.cells.iter().enumerate() {
        for p in pts {
            s += p.w * f.eval(c, p.t).0 * g.eval(p.other_cell, p.other_t).0;
        }
    }
    Ok(s)
}

pub fn l2_norm(f: &FeFunction) -> f64 {
    let quad = CellQuadrature::gauss(f.mesh());
    integrate(f.mesh(), &quad, |c, _, p| f.eval(c, p.t).0.powi(2)).sqrt()
}

pub fn h1_seminorm(f: &FeFunction) -> f64 {
    let quad = CellQuadrature::gauss(f.mesh());
    integrate(f.mesh(), &quad, |c, _, p| f.eval(c, p.t).1.powi(2)).sqrt()
}

/// Sum over cells of the weighted integrand.
pub fn integrate(m: &Mesh1D, quad: &CellQuadrature, f: impl Fn(usize, usize, &QuadPoint) -> f64) -> f64 {
    cell_integrals(m, quad, f).iter().sum()
}

/// Per-cell integrals of `f`.
pub fn cell_integrals(m: &Mesh1D, quad: &CellQuadrature, f: impl Fn(usize, usize, &QuadPoint) -> f64) -> Vec<f64> {
    debug_assert_eq!(quad.cells.len(), m.n_cells());
    quad.cells.iter().enumerate().map(|(c, pts)| pts.iter().enumerate().map(|(k, p)| p.w * f(c, k, p)).sum()).collect()
}

/// Assembles `∫ a φ_j φ_i + b φ_j' φ_i'` where `(a, b) = kernel(cell, point)`.
pub fn assemble_bilinear(
    m: &Mesh1D,
    quad: &CellQuadrature,
    rows: Boundary,
    cols: Boundary,
    kernel: impl Fn(usize, usize, &QuadPoint) -> (f64, f64),
) -> SparseMatrix {
    let mut t = Triplets::new(n_dofs(m, rows), n_dofs(m, cols));
    for (c, pts) in quad.cells.iter().enumerate() {
        let h = m.width(c);
        let mut local = [[0.0; 2]; 2];
        for (k, p) in pts.iter().enumerate() {
            let (a, b) = kernel(c, k, p);
            let (phi, dphi) = p1_shape(p.t);
            for i in 0..2 {
                for j in 0..2 {
                    local[i][j] += p.w * (a * phi[i] * phi[j] + b * dphi[i] * dphi[j] / (h * h));
                }
            }
        }
        for i in 0..2 {
            let Some(r) = dof_of(m, c + i, rows) else { continue };
            for j in 0..2 {
                if let Some(s) = dof_of(m, c + j, cols) {
                    t.push(r, s, local[i][j]);
                }
            }
        }
    }
    t.build()
}

/// Assembles `∫ a φ_i + b φ_i'` where `(a, b) = kernel(cell, point)`.
pub fn assemble_linear(
    m: &Mesh1D,
    quad: &CellQuadrature,
    rows: Boundary,
    kernel: impl Fn(usize, usize, &QuadPoint) -> (f64, f64),
) -> Vec<f64> {
    let mut out = vec![0.0; n_dofs(m, rows)];
    for (c, pts) in quad.cells.iter().enumerate() {
        let h = m.width(c);
        let mut local = [0.0; 2];
        for (k, p) in pts.iter().enumerate() {
            let (a, b) = kernel(c, k, p);
            let (phi, dphi) = p1_shape(p.t);
            for i in 0..2 {
                local[i] += p.w * (a * phi[i] + b * dphi[i] / h);
            }
        }
        for i in 0..2 {
            if let Some(r) = dof_of(m, c + i, rows) {
                out[r] += local[i];
            }
        }
    }
    out
}

pub fn assemble_mass(m: &Mesh1D, boundary: Boundary) -> SparseMatrix {
    assemble_bilinear(m, &CellQuadrature::gauss(m), boundary, boundary, |_, _, _| (1.0, 0.0))
}

pub fn assemble_stiffness(m: &Mesh1D, boundary: Boundary) -> SparseMatrix {
    assemble_bilinear(m, &CellQuadrature::gauss(m), boundary, boundary, |_, _, _| (0.0, 1.0))
}

/// `∫ w φ_j φ_i` with the weight given as a finite element function on `m`.
pub fn assemble_weighted_mass(m: &Mesh1D, weight: &FeFunction, rows: Boundary, cols: Boundary) -> SparseMatrix {
    assemble_bilinear(m, &CellQuadrature::gauss(m), rows, cols, |c, _, p| (weight.eval(c, p.t).0, 0.0))
}
