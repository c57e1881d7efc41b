//! Uniform cell-centered grids and the ghost-padded index layout used by the
//! stencil operators.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Domain boundary treatment, shared by all fields on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    /// Solid walls on every face of the box.
    Wall,
}

/// User-facing grid description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub n: [usize; 3],
    pub len: [f64; 3],
    pub bc: Boundary,
}

impl GridSpec {
    /// Square/cubic grid with `n` cells per axis on a box of side `len`.
    pub fn uniform(dim: usize, n: usize, len: f64, bc: Boundary) -> Self {
        let mut ns = [1; 3];
        let mut ls = [1.0; 3];
        for k in 0..dim.min(3) {
            ns[k] = n;
            ls[k] = len;
        }
        GridSpec { dim, n: ns, len: ls, bc }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::InvalidParam { name: "dim", reason: format!("must be 2 or 3, got {}", self.dim) });
        }
        for k in 0..self.dim {
            if self.n[k] < 4 {
                return Err(Error::InvalidParam { name: "n", reason: format!("axis {k} has {} < 4 cells", self.n[k]) });
            }
            if !(self.len[k] > 0.0) {
                return Err(Error::InvalidParam { name: "L", reason: format!("axis {k} has length {}", self.len[k]) });
            }
        }
        Ok(())
    }
}

/// Validated grid with cached index maps. Shared between fields via `Arc`.
#[derive(Debug)]
pub struct Grid {
    pub dim: usize,
    pub n: [usize; 3],
    pub len: [f64; 3],
    pub h: [f64; 3],
    pub bc: Boundary,
    ncells: usize,
    /// Padded extent per axis (`n + 2` on active axes, 1 otherwise).
    pub pn: [usize; 3],
    pub pstride: [usize; 3],
    plen: usize,
    to_padded: Vec<usize>,
    /// Padded indices of boundary cells, per axis: (low face, high face).
    faces: Vec<(Vec<usize>, Vec<usize>)>,
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Arc<Grid>> {
        spec.validate()?;
        let dim = spec.dim;
        let mut n = [1usize; 3];
        let mut len = [1.0; 3];
        let mut h = [1.0; 3];
        let mut pn = [1usize; 3];
        for k in 0..dim {
            n[k] = spec.n[k];
            len[k] = spec.len[k];
            h[k] = len[k] / n[k] as f64;
            pn[k] = n[k] + 2;
        }
        let pstride = [1, pn[0], pn[0] * pn[1]];
        let plen = pn[0] * pn[1] * pn[2];
        let ncells = n[0] * n[1] * n[2];
        let off = |k: usize| usize::from(k < dim);
        let mut to_padded = Vec::with_capacity(ncells);
        for i2 in 0..n[2] {
            for i1 in 0..n[1] {
                for i0 in 0..n[0] {
                    to_padded.push(
                        (i0 + off(0)) * pstride[0] + (i1 + off(1)) * pstride[1] + (i2 + off(2)) * pstride[2],
                    );
                }
            }
        }
        let mut faces = Vec::with_capacity(dim);
        for k in 0..dim {
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for (cell, &p) in to_padded.iter().enumerate() {
                let ik = Self::axis_index_of(&n, cell, k);
                if ik == 0 {
                    lo.push(p);
                }
                if ik == n[k] - 1 {
                    hi.push(p);
                }
            }
            faces.push((lo, hi));
        }
        Ok(Arc::new(Grid { dim, n, len, h, bc: spec.bc, ncells, pn, pstride, plen, to_padded, faces }))
    }

    fn axis_index_of(n: &[usize; 3], cell: usize, k: usize) -> usize {
        match k {
            0 => cell % n[0],
            1 => (cell / n[0]) % n[1],
            _ => cell / (n[0] * n[1]),
        }
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec { dim: self.dim, n: self.n, len: self.len, bc: self.bc }
    }

    pub fn ncells(&self) -> usize {
        self.ncells
    }

    pub fn padded_len(&self) -> usize {
        self.plen
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|k| self.h[k]).product()
    }

    pub fn is_periodic(&self) -> bool {
        self.bc == Boundary::Periodic
    }

    pub fn to_padded(&self) -> &[usize] {
        &self.to_padded
    }

    pub fn faces(&self, axis: usize) -> (&[usize], &[usize]) {
        let (lo, hi) = &self.faces[axis];
        (lo, hi)
    }

    /// Multi-index of a cell.
    pub fn index3(&self, cell: usize) -> [usize; 3] {
        [
            Self::axis_index_of(&self.n, cell, 0),
            Self::axis_index_of(&self.n, cell, 1),
            Self::axis_index_of(&self.n, cell, 2),
        ]
    }

    pub fn cell_of(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.n[0] * (idx[1] + self.n[1] * idx[2])
    }

    /// Cell-center coordinates.
    pub fn center(&self, cell: usize) -> [f64; 3] {
        let idx = self.index3(cell);
        let mut x = [0.0; 3];
        for k in 0..self.dim {
            x[k] = (idx[k] as f64 + 0.5) * self.h[k];
        }
        x
    }

    /// Position of the wall face associated with a ghost cell: the boundary
    /// neighbor's center moved half a cell towards the ghost.
    pub fn ghost_face_point(&self, cell: usize, axis: usize, high: bool) -> [f64; 3] {
        let mut x = self.center(cell);
        x[axis] = if high { self.len[axis] } else { 0.0 };
        x
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || self.spec() == other.spec()
    }
}
