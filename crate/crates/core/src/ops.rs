//! Finite-difference operators on cell-centered fields.
//!
//! `grad_c`/`div_c` use second-order central differences and are mutually
//! adjoint on periodic grids. `laplace5` is the compact `(2d+1)`-point
//! Laplacian, whose quadratic form equals minus the forward-difference
//! gradient energy computed by [`forward_grad_sq`].

use crate::field::{pad, Field, FieldKind, Ghost, Padded};
use crate::grid::Grid;
use crate::tensor::contract;

/// `out[cell] (+)= scale * (p[cell + e_k] - p[cell - e_k])`.
#[inline]
fn central_into(grid: &Grid, p: &[f64], axis: usize, scale: f64, out: &mut [f64], accumulate: bool) {
    let st = grid.pstride[axis];
    let map = grid.to_padded();
    if accumulate {
        for (o, &i) in out.iter_mut().zip(map) {
            *o += scale * (p[i + st] - p[i - st]);
        }
    } else {
        for (o, &i) in out.iter_mut().zip(map) {
            *o = scale * (p[i + st] - p[i - st]);
        }
    }
}

/// Central derivative along `axis` of every component of a padded field.
pub(crate) fn partial_padded(f: &Field, p: &Padded, axis: usize) -> Field {
    let grid = f.grid();
    let mut out = Field::zeros(grid, f.kind());
    let scale = 0.5 / grid.h[axis];
    for c in 0..p.ncomp {
        central_into(grid, p.comp(c), axis, scale, out.comp_mut(c), false);
    }
    out
}

/// Central derivative of each component along `axis`; same kind as `f`.
pub fn partial(f: &Field, ghost: Ghost<'_>, axis: usize) -> Field {
    let p = pad(f, ghost);
    partial_padded(f, &p, axis)
}

/// Central gradient of a scalar field.
pub fn grad_c(f: &Field, ghost: Ghost<'_>) -> Field {
    debug_assert_eq!(f.kind(), FieldKind::Scalar);
    let grid = f.grid();
    let p = pad(f, ghost);
    let mut out = Field::zeros(grid, FieldKind::Vector);
    for k in 0..grid.dim {
        central_into(grid, &p.data, k, 0.5 / grid.h[k], out.comp_mut(k), false);
    }
    out
}

/// Central velocity gradient, `out[i*d + j] = d_j v_i`.
pub fn grad_vector(v: &Field, ghost: Ghost<'_>) -> Field {
    debug_assert_eq!(v.kind(), FieldKind::Vector);
    let grid = v.grid();
    let d = grid.dim;
    let p = pad(v, ghost);
    let mut out = Field::zeros(grid, FieldKind::Matrix);
    for i in 0..d {
        for j in 0..d {
            central_into(grid, p.comp(i), j, 0.5 / grid.h[j], out.comp_mut(i * d + j), false);
        }
    }
    out
}

/// Central divergence of a vector field.
pub fn div_c(v: &Field, ghost: Ghost<'_>) -> Field {
    debug_assert_eq!(v.kind(), FieldKind::Vector);
    let grid = v.grid();
    let p = pad(v, ghost);
    let mut out = Field::zeros(grid, FieldKind::Scalar);
    for k in 0..grid.dim {
        central_into(grid, p.comp(k), k, 0.5 / grid.h[k], &mut out.data, k > 0);
    }
    out
}

/// Row-wise divergence of a matrix field, `(div m)_i = sum_j d_j m_ij`.
pub fn div_matrix(m: &Field, ghost: Ghost<'_>) -> Field {
    debug_assert_eq!(m.kind(), FieldKind::Matrix);
    let grid = m.grid();
    let d = grid.dim;
    let p = pad(m, ghost);
    let mut out = Field::zeros(grid, FieldKind::Vector);
    for i in 0..d {
        for j in 0..d {
            central_into(grid, p.comp(i * d + j), j, 0.5 / grid.h[j], out.comp_mut(i), j > 0);
        }
    }
    out
}

/// Compact Laplacian of a padded component into `out`.
pub(crate) fn laplace_into(grid: &Grid, p: &[f64], scale: f64, out: &mut [f64]) {
    let map = grid.to_padded();
    let d = grid.dim;
    let w: Vec<f64> = (0..d).map(|k| scale / (grid.h[k] * grid.h[k])).collect();
    let st = grid.pstride;
    match d {
        2 => {
            let (s0, s1) = (st[0], st[1]);
            let (w0, w1) = (w[0], w[1]);
            for (o, &i) in out.iter_mut().zip(map) {
                let c = p[i];
                *o = w0 * (p[i + s0] - 2.0 * c + p[i - s0]) + w1 * (p[i + s1] - 2.0 * c + p[i - s1]);
            }
        }
        _ => {
            for (o, &i) in out.iter_mut().zip(map) {
                let c = p[i];
                let mut acc = 0.0;
                for k in 0..d {
                    acc += w[k] * (p[i + st[k]] - 2.0 * c + p[i - st[k]]);
                }
                *o = acc;
            }
        }
    }
}

/// Compact `(2d+1)`-point Laplacian, componentwise.
pub fn laplace5(f: &Field, ghost: Ghost<'_>) -> Field {
    let grid = f.grid();
    let p = pad(f, ghost);
    let mut out = Field::zeros(grid, f.kind());
    for c in 0..f.ncomp() {
        laplace_into(grid, p.comp(c), 1.0, out.comp_mut(c));
    }
    out
}

/// Convective transport `sum_k u_k d_k f` with central differences.
pub fn advect(u: &Field, f: &Field, ghost_f: Ghost<'_>) -> Field {
    debug_assert_eq!(u.kind(), FieldKind::Vector);
    let grid = f.grid();
    let p = pad(f, ghost_f);
    let map = grid.to_padded();
    let mut out = Field::zeros(grid, f.kind());
    for c in 0..f.ncomp() {
        let pc = p.comp(c);
        let o = out.comp_mut(c);
        for k in 0..grid.dim {
            let st = grid.pstride[k];
            let s = 0.5 / grid.h[k];
            let uk = u.comp(k);
            for ((o, &i), &uv) in o.iter_mut().zip(map).zip(uk) {
                *o += uv * s * (pc[i + st] - pc[i - st]);
            }
        }
    }
    out
}

/// Skew-symmetric transport `1/2 [u.grad f + div(u f)]`, whose pairing with
/// `f` vanishes identically on periodic grids.
pub fn advect_skew(u: &Field, ghost_u: Ghost<'_>, f: &Field, ghost_f: Ghost<'_>) -> Field {
    let pu = pad(u, ghost_u);
    advect_skew_padded(&pu, f, ghost_f)
}

pub(crate) fn advect_skew_padded(pu: &Padded, f: &Field, ghost_f: Ghost<'_>) -> Field {
    let grid = f.grid();
    let p = pad(f, ghost_f);
    let map = grid.to_padded();
    let mut out = Field::zeros(grid, f.kind());
    for c in 0..f.ncomp() {
        let pc = p.comp(c);
        let o = out.comp_mut(c);
        for k in 0..grid.dim {
            let st = grid.pstride[k];
            let s = 0.25 / grid.h[k];
            let uk = pu.comp(k);
            for (o, &i) in o.iter_mut().zip(map) {
                let conv = uk[i] * (pc[i + st] - pc[i - st]);
                let flux = uk[i + st] * pc[i + st] - uk[i - st] * pc[i - st];
                *o += s * (conv + flux);
            }
        }
    }
    out
}

/// `sum over cell faces of |forward difference|^2` times cell volume, using
/// the full-matrix contraction for tensors. On wall grids the ghost faces of
/// every axis are included with half weight.
pub fn forward_grad_sq(f: &Field, ghost: Ghost<'_>) -> f64 {
    let grid = f.grid();
    let p = pad(f, ghost);
    let map = grid.to_padded();
    let nc = f.ncomp();
    let dim = grid.dim;
    let tensor = f.kind() == FieldKind::Tensor;
    let mut total = 0.0;
    let mut diff = [0.0; 9];
    let mut face = |i: usize, j: usize, inv_h2: f64| {
        for (c, dv) in diff.iter_mut().enumerate().take(nc) {
            let pc = p.comp(c);
            *dv = pc[j] - pc[i];
        }
        let sq = if tensor { contract(dim, &diff, &diff) } else { diff[..nc].iter().map(|v| v * v).sum() };
        total += sq * inv_h2;
    };
    for k in 0..dim {
        let st = grid.pstride[k];
        let inv_h2 = 1.0 / (grid.h[k] * grid.h[k]);
        let wall = !grid.is_periodic();
        for (cell, &i) in map.iter().enumerate() {
            let high = wall && grid.index3(cell)[k] == grid.n[k] - 1;
            face(i, i + st, if high { 0.5 * inv_h2 } else { inv_h2 });
        }
        if wall {
            // Wall faces sit half a cell from the first center.
            for &i in grid.faces(k).0 {
                face(i - st, i, 0.5 * inv_h2);
            }
        }
    }
    total * grid.cell_volume()
}
