//! Grid-sampled scalar, vector and Q-tensor fields, ghost filling, and the
//! cell-volume weighted inner products.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::tensor::{contract, dof, SymTraceless};

/// What a field's components mean; determines the component count and the
/// pointwise contraction used by inner products.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Scalar,
    Vector,
    /// Symmetric traceless tensor in independent-component storage.
    Tensor,
    /// Full `d x d` matrix, row-major components (`i * d + j`).
    Matrix,
}

impl FieldKind {
    pub fn ncomp(self, dim: usize) -> usize {
        match self {
            FieldKind::Scalar => 1,
            FieldKind::Vector => dim,
            FieldKind::Tensor => dof(dim),
            FieldKind::Matrix => dim * dim,
        }
    }
}

/// Cell-centered samples stored component-major: component `c` of cell `i`
/// lives at `data[c * ncells + i]`.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    kind: FieldKind,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>, kind: FieldKind) -> Self {
        let len = kind.ncomp(grid.dim) * grid.ncells();
        Field { grid: grid.clone(), kind, data: vec![0.0; len] }
    }

    pub fn from_data(grid: &Arc<Grid>, kind: FieldKind, data: Vec<f64>) -> Result<Self> {
        let len = kind.ncomp(grid.dim) * grid.ncells();
        if data.len() != len {
            return Err(Error::FieldMismatch(format!("expected {len} values, got {}", data.len())));
        }
        Ok(Field { grid: grid.clone(), kind, data })
    }

    /// Samples `f(x, out)` at every cell center; `out` has one slot per component.
    pub fn from_fn(grid: &Arc<Grid>, kind: FieldKind, f: impl Fn([f64; 3], &mut [f64])) -> Self {
        let mut field = Field::zeros(grid, kind);
        let nc = field.ncomp();
        let n = grid.ncells();
        let mut buf = vec![0.0; nc];
        for cell in 0..n {
            buf.iter_mut().for_each(|v| *v = 0.0);
            f(grid.center(cell), &mut buf);
            for c in 0..nc {
                field.data[c * n + cell] = buf[c];
            }
        }
        field
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn ncomp(&self) -> usize {
        self.kind.ncomp(self.grid.dim)
    }

    pub fn ncells(&self) -> usize {
        self.grid.ncells()
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        let n = self.ncells();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.ncells();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, cell: usize) -> f64 {
        self.data[c * self.ncells() + cell]
    }

    pub fn tensor_at(&self, cell: usize) -> SymTraceless {
        debug_assert_eq!(self.kind, FieldKind::Tensor);
        let n = self.ncells();
        let mut t = SymTraceless::zeros(self.dim());
        for c in 0..self.ncomp() {
            t.c[c] = self.data[c * n + cell];
        }
        t
    }

    pub fn set_tensor(&mut self, cell: usize, t: &SymTraceless) {
        let n = self.ncells();
        for c in 0..self.ncomp() {
            self.data[c * n + cell] = t.c[c];
        }
    }

    pub fn vector_at(&self, cell: usize) -> [f64; 3] {
        let n = self.ncells();
        let mut v = [0.0; 3];
        for (c, slot) in v.iter_mut().enumerate().take(self.ncomp().min(3)) {
            *slot = self.data[c * n + cell];
        }
        v
    }

    fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.kind != other.kind {
            return Err(Error::FieldMismatch(format!("{:?} vs {:?}", self.kind, other.kind)));
        }
        if !self.grid.same_as(&other.grid) {
            return Err(Error::FieldMismatch("fields live on different grids".into()));
        }
        Ok(())
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Field) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `a * self + b * other` as a new field.
    pub fn lin_comb(&self, a: f64, other: &Field, b: f64) -> Field {
        let mut out = self.clone();
        for (o, y) in out.data.iter_mut().zip(&other.data) {
            *o = a * *o + b * y;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean_comp(&self, c: usize) -> f64 {
        self.comp(c).iter().sum::<f64>() / self.ncells() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Discrete `L^2` inner product: cell volume times the sum over cells of the
/// pointwise contraction (full-matrix `Q:P` for tensors).
pub fn inner_product_h(a: &Field, b: &Field) -> Result<f64> {
    a.check_compatible(b)?;
    Ok(inner_unchecked(a, b))
}

pub(crate) fn inner_unchecked(a: &Field, b: &Field) -> f64 {
    let vol = a.grid.cell_volume();
    let n = a.ncells();
    let s = match a.kind {
        FieldKind::Tensor => {
            let dim = a.dim();
            let nc = a.ncomp();
            let mut s = 0.0;
            let mut ta = [0.0; 5];
            let mut tb = [0.0; 5];
            for cell in 0..n {
                for c in 0..nc {
                    ta[c] = a.data[c * n + cell];
                    tb[c] = b.data[c * n + cell];
                }
                s += contract(dim, &ta, &tb);
            }
            s
        }
        _ => a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum(),
    };
    s * vol
}

pub fn norm_h(a: &Field) -> f64 {
    inner_unchecked(a, a).sqrt()
}

/// Maximum over cells of the pointwise magnitude (Euclidean for vectors,
/// Frobenius of the full matrix for tensors).
pub fn linf_norm(a: &Field) -> f64 {
    let n = a.ncells();
    let nc = a.ncomp();
    let dim = a.dim();
    let mut m: f64 = 0.0;
    let mut t = [0.0; 9];
    for cell in 0..n {
        for c in 0..nc {
            t[c] = a.data[c * n + cell];
        }
        let sq = match a.kind {
            FieldKind::Tensor => contract(dim, &t, &t),
            _ => t[..nc].iter().map(|v| v * v).sum(),
        };
        m = m.max(sq);
    }
    m.sqrt()
}

/// Boundary values stored at the ghost positions of the padded layout.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub ncomp: usize,
    pub values: Vec<f64>,
}

impl BoundaryData {
    /// Evaluates `f` on the wall face next to every ghost cell.
    pub fn from_fn(grid: &Grid, kind: FieldKind, f: impl Fn([f64; 3], &mut [f64])) -> Self {
        let nc = kind.ncomp(grid.dim);
        let plen = grid.padded_len();
        let mut values = vec![0.0; nc * plen];
        let mut buf = vec![0.0; nc];
        let map = grid.to_padded();
        for axis in 0..grid.dim {
            let s = grid.pstride[axis];
            for high in [false, true] {
                for (cell, &p) in map.iter().enumerate() {
                    let ik = grid.index3(cell)[axis];
                    let on_face = if high { ik == grid.n[axis] - 1 } else { ik == 0 };
                    if !on_face {
                        continue;
                    }
                    let ghost = if high { p + s } else { p - s };
                    buf.iter_mut().for_each(|v| *v = 0.0);
                    f(grid.ghost_face_point(cell, axis, high), &mut buf);
                    for c in 0..nc {
                        values[c * plen + ghost] = buf[c];
                    }
                }
            }
        }
        BoundaryData { ncomp: nc, values }
    }
}

/// Ghost-fill rule for wall grids; ignored on periodic grids, which wrap.
#[derive(Debug, Clone, Copy)]
pub enum Ghost<'a> {
    /// Ghost = -interior (no-slip velocity, homogeneous Dirichlet).
    Odd,
    /// Ghost = interior (homogeneous Neumann).
    Even,
    /// Linear extrapolation, turning the central difference at the first
    /// cell into a one-sided difference.
    Extrapolate,
    /// Ghost = 2 * boundary value - interior.
    Dirichlet(&'a BoundaryData),
}

impl Ghost<'_> {
    /// The same rule with zero boundary data.
    pub fn homogeneous(self) -> Ghost<'static> {
        match self {
            Ghost::Odd | Ghost::Dirichlet(_) => Ghost::Odd,
            Ghost::Even => Ghost::Even,
            Ghost::Extrapolate => Ghost::Extrapolate,
        }
    }
}

/// Boundary rule selector used by the checked [`fill_ghosts`] entry point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GhostRule {
    Odd,
    Even,
    Extrapolate,
    Dirichlet,
}

/// Field copy with a one-cell ghost layer.
#[derive(Debug, Clone)]
pub struct Padded {
    pub ncomp: usize,
    pub plen: usize,
    pub data: Vec<f64>,
}

impl Padded {
    pub fn comp(&self, c: usize) -> &[f64] {
        &self.data[c * self.plen..(c + 1) * self.plen]
    }
}

/// Checked ghost fill; Dirichlet requires boundary data with matching width.
pub fn fill_ghosts(f: &Field, rule: GhostRule, data: Option<&BoundaryData>) -> Result<Padded> {
    let ghost = match rule {
        GhostRule::Odd => Ghost::Odd,
        GhostRule::Even => Ghost::Even,
        GhostRule::Extrapolate => Ghost::Extrapolate,
        GhostRule::Dirichlet => {
            let d = data.ok_or(Error::MissingBoundaryData)?;
            if d.ncomp != f.ncomp() || d.values.len() != d.ncomp * f.grid().padded_len() {
                return Err(Error::FieldMismatch("boundary data does not match field".into()));
            }
            Ghost::Dirichlet(d)
        }
    };
    Ok(pad(f, ghost))
}

pub fn pad(f: &Field, ghost: Ghost<'_>) -> Padded {
    let grid = f.grid();
    let nc = f.ncomp();
    let plen = grid.padded_len();
    let mut p = Padded { ncomp: nc, plen, data: vec![0.0; nc * plen] };
    pad_into(f.data.as_slice(), nc, grid, ghost, &mut p.data);
    p
}

/// Fills `out` (padded layout, `nc` components) from interior data `src`.
pub(crate) fn pad_into(src: &[f64], nc: usize, grid: &Grid, ghost: Ghost<'_>, out: &mut [f64]) {
    let n = grid.ncells();
    let plen = grid.padded_len();
    let map = grid.to_padded();
    for c in 0..nc {
        let s = &src[c * n..(c + 1) * n];
        let o = &mut out[c * plen..(c + 1) * plen];
        for (cell, &p) in map.iter().enumerate() {
            o[p] = s[cell];
        }
        for axis in 0..grid.dim {
            let st = grid.pstride[axis];
            let (lo, hi) = grid.faces(axis);
            if grid.is_periodic() {
                let wrap = (grid.n[axis] - 1) * st;
                for &p in lo {
                    o[p - st] = o[p + wrap];
                }
                for &p in hi {
                    o[p + st] = o[p - wrap];
                }
                continue;
            }
            match ghost {
                Ghost::Odd => {
                    for &p in lo {
                        o[p - st] = -o[p];
                    }
                    for &p in hi {
                        o[p + st] = -o[p];
                    }
                }
                Ghost::Even => {
                    for &p in lo {
                        o[p - st] = o[p];
                    }
                    for &p in hi {
                        o[p + st] = o[p];
                    }
                }
                Ghost::Extrapolate => {
                    for &p in lo {
                        o[p - st] = 2.0 * o[p] - o[p + st];
                    }
                    for &p in hi {
                        o[p + st] = 2.0 * o[p] - o[p - st];
                    }
                }
                Ghost::Dirichlet(bd) => {
                    let b = &bd.values[c * plen..(c + 1) * plen];
                    for &p in lo {
                        o[p - st] = 2.0 * b[p - st] - o[p];
                    }
                    for &p in hi {
                        o[p + st] = 2.0 * b[p + st] - o[p];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, GridSpec};

    fn grid(bc: Boundary) -> Arc<Grid> {
        Grid::new(GridSpec::uniform(2, 8, 1.0, bc)).unwrap()
    }

    #[test]
    fn ones_have_unit_mass() {
        let g = grid(Boundary::Periodic);
        let mut f = Field::zeros(&g, FieldKind::Scalar);
        f.data.iter_mut().for_each(|v| *v = 1.0);
        assert!((inner_product_h(&f, &f).unwrap() - 1.0).abs() < 1e-14);
        assert!((norm_h(&f) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mismatch_is_an_error() {
        let g = grid(Boundary::Periodic);
        let a = Field::zeros(&g, FieldKind::Scalar);
        let b = Field::zeros(&g, FieldKind::Vector);
        assert!(inner_product_h(&a, &b).is_err());
        let g2 = Grid::new(GridSpec::uniform(2, 16, 1.0, Boundary::Periodic)).unwrap();
        let c = Field::zeros(&g2, FieldKind::Scalar);
        assert!(inner_product_h(&a, &c).is_err());
    }

    #[test]
    fn tensor_norm_uses_full_contraction() {
        let g = grid(Boundary::Periodic);
        let q = Field::from_fn(&g, FieldKind::Tensor, |_, o| {
            o[0] = 0.5;
            o[1] = 0.0;
        });
        // |Q|^2 = 2 * 0.25
        assert!((linf_norm(&q) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((norm_h(&q) - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn neumann_ghosts_copy_interior() {
        let g = grid(Boundary::Wall);
        let f = Field::from_fn(&g, FieldKind::Scalar, |_, o| o[0] = 3.0);
        let p = fill_ghosts(&f, GhostRule::Even, None).unwrap();
        let (lo, _) = g.faces(0);
        for &c in lo {
            assert_eq!(p.data[c - 1], 3.0);
        }
    }

    #[test]
    fn dirichlet_needs_data() {
        let g = grid(Boundary::Wall);
        let f = Field::zeros(&g, FieldKind::Tensor);
        assert!(matches!(fill_ghosts(&f, GhostRule::Dirichlet, None), Err(Error::MissingBoundaryData)));
        let bd = BoundaryData::from_fn(&g, FieldKind::Tensor, |_, o| {
            o[0] = 0.25;
            o[1] = -0.1;
        });
        let f = Field::from_fn(&g, FieldKind::Tensor, |_, o| {
            o[0] = 0.25;
            o[1] = -0.1;
        });
        let p = fill_ghosts(&f, GhostRule::Dirichlet, Some(&bd)).unwrap();
        for axis in 0..2 {
            let st = g.pstride[axis];
            let (lo, hi) = g.faces(axis);
            for (&l, &h) in lo.iter().zip(hi) {
                assert!((p.comp(0)[l - st] - 0.25).abs() < 1e-15);
                assert!((p.comp(1)[h + st] + 0.1).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn no_slip_linear_profile_vanishes_at_wall() {
        let g = grid(Boundary::Wall);
        // u(y) = y, wall at y = 0.
        let u = Field::from_fn(&g, FieldKind::Vector, |x, o| o[0] = x[1]);
        let p = fill_ghosts(&u, GhostRule::Odd, None).unwrap();
        let st = g.pstride[1];
        let (lo, _) = g.faces(1);
        for &c in lo {
            let ghost = p.comp(0)[c - st];
            let first = p.comp(0)[c];
            assert!((ghost + first).abs() < 1e-15);
            assert!((0.5 * (ghost + first)).abs() < 1e-15);
        }
    }

    #[test]
    fn periodic_wraps() {
        let g = grid(Boundary::Periodic);
        let f = Field::from_fn(&g, FieldKind::Scalar, |x, o| o[0] = x[0]);
        let p = pad(&f, Ghost::Odd);
        let (lo, hi) = g.faces(0);
        for (&l, &h) in lo.iter().zip(hi) {
            assert_eq!(p.data[l - 1], p.data[h]);
            assert_eq!(p.data[h + 1], p.data[l]);
        }
    }
}
