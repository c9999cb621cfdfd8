//! Sparse matrices and a banded direct solver.
//!
//! All systems in this crate come from 1D meshes or small dense instances, so a
//! band LU with partial pivoting after a reverse Cuthill-McKee reordering is
//! fast enough and keeps the symmetric indefinite KKT systems stable.

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.entries.push((i, j, v));
    }

    /// Copies `m` into the block starting at `(r0, c0)`, optionally transposed.
    pub fn push_block(&mut self, r0: usize, c0: usize, m: &SparseMatrix, transpose: bool) {
        for i in 0..m.nrows {
            for (j, v) in m.row(i) {
                if transpose {
                    self.push(r0 + j, c0 + i, v);
                } else {
                    self.push(r0 + i, c0 + j, v);
                }
            }
        }
    }

    pub fn build(mut self) -> SparseMatrix {
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &self.entries {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, cols, vals }
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 1.0);
        }
        t.build()
    }

    pub fn from_dense(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut t = Triplets::new(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = f(i, j);
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        t.build()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn tmul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    /// `x^T A y`.
    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(alpha: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| alpha * x).collect()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Reverse Cuthill-McKee ordering of the symmetrised pattern. Returns `perm`
/// with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseMatrix) -> Vec<usize> {
    let n = a.nrows;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, _) in a.row(i) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (adj[i].len(), i))
            .unwrap();
        visited[start] = true;
        let mut head = order.len();
        order.push(start);
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (adj[u].len(), u));
            for u in next {
                visited[u] = true;
                order.push(u);
            }
        }
    }
    order.reverse();
    order
}

/// LU factorisation with partial pivoting of a band matrix.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
    perm: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with_order(a, perm)
    }

    pub fn factor_with_order(a: &SparseMatrix, perm: Vec<usize>) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::invalid("banded LU needs a square matrix"));
        }
        let n = a.nrows;
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for i in 0..n {
            for (j, _) in a.row(i) {
                let (r, c) = (inv[i], inv[j]);
                if r > c {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        // row r stores columns r-kl ..= r+kl+ku
        let width = 2 * kl + ku + 1;
        let mut lu = BandedLu { n, kl, ku, width, ab: vec![0.0; n * width], piv: vec![0; n], perm };
        for i in 0..n {
            for (j, v) in a.row(i) {
                *lu.at_mut(inv[i], inv[j]) += v;
            }
        }
        let amax = a.max_abs();
        lu.eliminate(amax)?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.kl >= r && c <= r + self.kl + self.ku);
        r * self.width + (c + self.kl - r)
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.ab[self.idx(r, c)]
    }

    #[inline]
    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        let k = self.idx(r, c);
        &mut self.ab[k]
    }

    fn eliminate(&mut self, amax: f64) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let tiny = amax * 1e-15;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.at(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.at(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tiny || !best.is_finite() {
                return Err(Error::Singular { column: self.perm[k] });
            }
            self.piv[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.ab.swap(a, b);
                }
            }
            let d = self.at(k, k);
            for i in k + 1..=last_row {
                let l = self.at(i, k) / d;
                *self.at_mut(i, k) = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let u = self.at(k, j);
                        *self.at_mut(i, j) -= l * u;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    x[i] -= self.at(i, k) * xk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..=(i + kl + ku).min(n - 1) {
                s -= self.at(i, j) * x[j];
            }
            x[i] = s / self.at(i, i);
        }
        let mut out = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }

    /// Solves `A^T x = b` with the same factors.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in i.saturating_sub(kl + ku)..i {
                s -= self.at(j, i) * x[j];
            }
            x[i] = s / self.at(i, i);
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                s -= self.at(i, k) * x[i];
            }
            x[k] = s;
            x.swap(k, self.piv[k]);
        }
        let mut out = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_sparse(n: usize, band: usize, seed: u64) -> SparseMatrix {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            for j in i.saturating_sub(band)..(i + band + 1).min(n) {
                t.push(i, j, next());
            }
        }
        t.build()
    }

    #[test]
    fn banded_solve_matches_dense() {
        for seed in 0..5 {
            let a = random_sparse(30, 3, seed);
            let x: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
            let b = a.mul_vec(&x);
            let lu = BandedLu::factor(&a).unwrap();
            let y = lu.solve(&b);
            let err = norm2(&sub(&x, &y));
            assert!(err < 1e-9, "err {err}");
            let bt = a.tmul_vec(&x);
            let yt = lu.solve_transpose(&bt);
            assert!(norm2(&sub(&x, &yt)) < 1e-9);
        }
    }

    #[test]
    fn indefinite_zero_diagonal_needs_pivoting() {
        // [[0, 1], [1, 0]]
        let a = SparseMatrix::from_dense(2, 2, |i, j| if i != j { 1.0 } else { 0.0 });
        let lu = BandedLu::factor(&a).unwrap();
        assert_eq!(lu.solve(&[2.0, 3.0]), vec![3.0, 2.0]);
    }

    #[test]
    fn singular_is_reported() {
        let a = SparseMatrix::from_dense(2, 2, |_, _| 1.0);
        assert!(matches!(BandedLu::factor(&a), Err(Error::Singular { .. })));
    }

    #[test]
    fn duplicates_are_summed() {
        let mut t = Triplets::new(1, 1);
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.5);
        assert_eq!(t.build().get(0, 0), 3.5);
    }
}
