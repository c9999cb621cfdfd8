//! Nested 1D interval meshes with bisection refinement.
//!
//! Every cell remembers its position in the refinement tree (root cell, level,
//! offset within the root), which is enough to find siblings, test nestedness
//! and build the two-cell patches used for higher-order reconstruction.

use serde::Serialize;

use crate::error::{Error, Result};

/// Position of a cell in the refinement forest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct CellTag {
    pub root: u32,
    pub level: u32,
    pub offset: u64,
}

impl CellTag {
    fn children(self) -> [CellTag; 2] {
        let c = |o| CellTag { root: self.root, level: self.level + 1, offset: o };
        [c(2 * self.offset), c(2 * self.offset + 1)]
    }

    /// True when `self` equals `other` or lies inside it.
    pub fn is_within(self, other: CellTag) -> bool {
        self.root == other.root
            && self.level >= other.level
            && (self.offset >> (self.level - other.level)) == other.offset
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh1D {
    a: f64,
    b: f64,
    n_root: usize,
    vertices: Vec<f64>,
    tags: Vec<CellTag>,
}

/// Where a vertex of a fine mesh sits relative to a coarser mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VertexOrigin {
    Vertex(usize),
    Interior { cell: usize, t: f64 },
}

/// Cells selected for bisection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkSet {
    marked: Vec<bool>,
}

impl MarkSet {
    pub fn none(n_cells: usize) -> Self {
        MarkSet { marked: vec![false; n_cells] }
    }

    pub fn all(n_cells: usize) -> Self {
        MarkSet { marked: vec![true; n_cells] }
    }

    pub fn from_cells(n_cells: usize, cells: &[usize]) -> Self {
        let mut m = Self::none(n_cells);
        for &c in cells {
            m.marked[c] = true;
        }
        m
    }

    pub fn mark(&mut self, cell: usize) {
        self.marked[cell] = true;
    }

    pub fn is_marked(&self, cell: usize) -> bool {
        self.marked[cell]
    }

    pub fn count(&self) -> usize {
        self.marked.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.marked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn cells(&self) -> Vec<usize> {
        (0..self.marked.len()).filter(|&i| self.marked[i]).collect()
    }

    /// Adds the patch partner of every marked cell, so that refining a
    /// patch-compatible mesh keeps it patch-compatible.
    pub fn close_patches(&mut self, m: &Mesh1D) {
        for c in self.cells() {
            if let Some(p) = m.patch_partner(c) {
                self.marked[p] = true;
            }
        }
    }
}

impl Mesh1D {
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::Mesh("uniform mesh needs at least one cell".into()));
        }
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Mesh(format!("empty or invalid interval [{a}, {b}]")));
        }
        let h = (b - a) / n as f64;
        let mut vertices: Vec<f64> = (0..=n).map(|i| a + h * i as f64).collect();
        vertices[n] = b;
        let tags = (0..n).map(|r| CellTag { root: r as u32, level: 0, offset: 0 }).collect();
        Ok(Mesh1D { a, b, n_root: n, vertices, tags })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn n_cells(&self) -> usize {
        self.tags.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_root(&self) -> usize {
        self.n_root
    }

    pub fn vertices(&self) -> &[f64] {
        &self.vertices
    }

    pub fn tags(&self) -> &[CellTag] {
        &self.tags
    }

    pub fn cell(&self, c: usize) -> (f64, f64) {
        (self.vertices[c], self.vertices[c + 1])
    }

    pub fn width(&self, c: usize) -> f64 {
        self.vertices[c + 1] - self.vertices[c]
    }

    pub fn h_max(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.width(c)).fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.width(c)).fold(f64::INFINITY, f64::min)
    }

    /// Index of the cell containing `x`; the right end point maps to the last cell.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x >= self.a && x <= self.b) {
            return None;
        }
        let i = self.vertices.partition_point(|&v| v <= x);
        Some(i.saturating_sub(1).min(self.n_cells() - 1))
    }

    pub fn refine(&self, marks: &MarkSet) -> Result<Self> {
        if marks.len() != self.n_cells() {
            return Err(Error::Mesh(format!(
                "mark set has {} entries for a mesh with {} cells",
                marks.len(),
                self.n_cells()
            )));
        }
        let extra = marks.count();
        let mut vertices = Vec::with_capacity(self.n_vertices() + extra);
        let mut tags = Vec::with_capacity(self.n_cells() + extra);
        for c in 0..self.n_cells() {
            let (x0, x1) = self.cell(c);
            vertices.push(x0);
            if marks.is_marked(c) {
                let mid = 0.5 * (x0 + x1);
                if !(mid > x0 && mid < x1) {
                    return Err(Error::Mesh(format!("cell {c} too small to bisect")));
                }
                vertices.push(mid);
                tags.extend(self.tags[c].children());
            } else {
                tags.push(self.tags[c]);
            }
        }
        vertices.push(self.b);
        Ok(Mesh1D { a: self.a, b: self.b, n_root: self.n_root, vertices, tags })
    }

    /// Bisects every cell `levels` times.
    pub fn refine_uniformly(&self, levels: u32) -> Result<Self> {
        let mut m = self.clone();
        for _ in 0..levels {
            m = m.refine(&MarkSet::all(m.n_cells()))?;
        }
        Ok(m)
    }

    /// True when every cell of `self` lies inside a cell of `coarse`.
    pub fn is_refinement_of(&self, coarse: &Mesh1D) -> bool {
        if self.a != coarse.a || self.b != coarse.b || self.n_root != coarse.n_root {
            return false;
        }
        let mut j = 0;
        for &t in &self.tags {
            while j < coarse.n_cells() && !t.is_within(coarse.tags[j]) {
                j += 1;
            }
            if j == coarse.n_cells() {
                return false;
            }
        }
        true
    }

    /// For every vertex of `self`, its location in the nested coarser mesh.
    pub fn prolong_indices(&self, coarse: &Mesh1D) -> Result<Vec<VertexOrigin>> {
        if !self.is_refinement_of(coarse) {
            return Err(Error::Mesh("meshes are not nested".into()));
        }
        let mut out = Vec::with_capacity(self.n_vertices());
        let mut c = 0;
        for &x in &self.vertices {
            while c + 1 < coarse.n_cells() && x >= coarse.vertices[c + 1] {
                c += 1;
            }
            let (x0, x1) = coarse.cell(c);
            if x == x0 {
                out.push(VertexOrigin::Vertex(c));
            } else if x == x1 {
                out.push(VertexOrigin::Vertex(c + 1));
            } else {
                out.push(VertexOrigin::Interior { cell: c, t: (x - x0) / (x1 - x0) });
            }
        }
        Ok(out)
    }

    /// The cell that forms a reconstruction patch with `c`, if it is a leaf.
    pub fn patch_partner(&self, c: usize) -> Option<usize> {
        let t = self.tags[c];
        let (partner, left) = if t.level > 0 {
            (CellTag { offset: t.offset ^ 1, ..t }, t.offset % 2 == 1)
        } else {
            if (t.root as usize ^ 1) >= self.n_root {
                return None;
            }
            (CellTag { root: t.root ^ 1, ..t }, t.root % 2 == 1)
        };
        let p = if left { c.checked_sub(1)? } else { c + 1 };
        (p < self.n_cells() && self.tags[p] == partner).then_some(p)
    }

    /// Disjoint two-cell patches covering the mesh, ordered left to right.
    pub fn patches(&self) -> Result<Vec<[usize; 2]>> {
        let mut out = Vec::with_capacity(self.n_cells() / 2);
        let mut c = 0;
        while c < self.n_cells() {
            match self.patch_partner(c) {
                Some(p) if p == c + 1 => {
                    out.push([c, p]);
                    c += 2;
                }
                _ => {
                    return Err(Error::Mesh(format!(
                        "cell {c} has no leaf partner; mesh is not patch-compatible"
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Plain-text dump: a `cells N` header followed by one vertex per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("cells {}\n", self.n_cells());
        for v in &self.vertices {
            s.push_str(&format!("{v:.17e}\n"));
        }
        s
    }

    pub fn vertices_from_text(text: &str) -> Result<Vec<f64>> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Mesh("empty mesh dump".into()))?;
        let n: usize = header
            .strip_prefix("cells ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Mesh(format!("bad header {header:?}")))?;
        let v: Vec<f64> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|e| Error::Mesh(format!("{l:?}: {e}"))))
            .collect::<Result<_>>()?;
        if v.len() != n + 1 {
            return Err(Error::Mesh(format!("expected {} vertices, found {}", n + 1, v.len())));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refine_first_cell() {
        let m = Mesh1D::uniform(0.0, 1.0, 2).unwrap();
        let r = m.refine(&MarkSet::from_cells(2, &[0])).unwrap();
        assert_eq!(r.vertices(), &[0.0, 0.25, 0.5, 1.0]);
        assert!(r.is_refinement_of(&m));
        assert!(!m.is_refinement_of(&r));
    }

    #[test]
    fn uniform_rejects_bad_input() {
        assert!(Mesh1D::uniform(0.0, 1.0, 0).is_err());
        assert!(Mesh1D::uniform(1.0, 1.0, 4).is_err());
    }

    #[test]
    fn orphan_cells_break_patches_until_closed() {
        let m = Mesh1D::uniform(0.0, 1.0, 2).unwrap();
        let r = m.refine(&MarkSet::from_cells(2, &[0])).unwrap();
        assert!(r.patches().is_err());
        let mut marks = MarkSet::from_cells(2, &[0]);
        marks.close_patches(&m);
        let r = m.refine(&marks).unwrap();
        assert_eq!(r.patches().unwrap(), vec![[0, 1], [2, 3]]);
    }

    #[test]
    fn prolong_indices_midpoints() {
        let m = Mesh1D::uniform(0.0, 1.0, 2).unwrap();
        let f = m.refine_uniformly(1).unwrap();
        let idx = f.prolong_indices(&m).unwrap();
        assert_eq!(idx[0], VertexOrigin::Vertex(0));
        assert_eq!(idx[1], VertexOrigin::Interior { cell: 0, t: 0.5 });
        assert_eq!(idx[2], VertexOrigin::Vertex(1));
        assert!(m.prolong_indices(&f).is_err());
    }

    #[test]
    fn text_round_trip() {
        let m = Mesh1D::uniform(0.0, 1.0, 4).unwrap().refine(&MarkSet::from_cells(4, &[1])).unwrap();
        assert_eq!(Mesh1D::vertices_from_text(&m.to_text()).unwrap(), m.vertices());
    }

    #[test]
    fn locate_end_points() {
        let m = Mesh1D::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(m.locate(0.0), Some(0));
        assert_eq!(m.locate(1.0), Some(3));
        assert_eq!(m.locate(0.5), Some(2));
        assert_eq!(m.locate(1.5), None);
    }
}
