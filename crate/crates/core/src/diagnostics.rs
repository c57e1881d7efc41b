//! Director extraction, defect winding numbers, Cauchy errors and
//! convergence tables.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::field::{norm_h, Field, FieldKind};
use crate::stepper::SchemeState;
use crate::tensor::{dof, SymTraceless};

/// Largest eigenvalues below this are treated as isotropic.
const ISOTROPIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Director {
    /// Unit eigenvector of the largest eigenvalue, first nonzero component
    /// positive; zero when `isotropic`.
    pub n: [f64; 3],
    /// Scalar order parameter `s` of `Q = s (n n^T - I/d)`.
    pub s: f64,
    pub isotropic: bool,
}

pub fn director(q: &SymTraceless) -> Director {
    let (lambda, mut n) = if q.dim == 2 {
        let (a, b) = (q.c[0], q.c[1]);
        let lambda = a.hypot(b);
        let theta = 0.5 * b.atan2(a);
        (lambda, [theta.cos(), theta.sin(), 0.0])
    } else {
        let m = q.to_mat();
        let dense = Matrix3::from_fn(|i, j| m.a[i][j]);
        let eig = SymmetricEigen::new(dense);
        let k = eig.eigenvalues.imax();
        let v = eig.eigenvectors.column(k);
        (eig.eigenvalues[k], [v[0], v[1], v[2]])
    };
    if lambda < ISOTROPIC_TOL {
        return Director { n: [0.0; 3], s: 0.0, isotropic: true };
    }
    if let Some(first) = n.iter().copied().find(|v| v.abs() > 1e-14) {
        if first < 0.0 {
            n.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let d = q.dim as f64;
    Director { n, s: lambda * d / (d - 1.0), isotropic: false }
}

/// Director vectors and order parameters of a tensor field.
pub fn director_field(q: &Field) -> (Field, Field) {
    let g = q.grid();
    let d = g.dim;
    let mut n = Field::zeros(g, FieldKind::Vector);
    let mut s = Field::zeros(g, FieldKind::Scalar);
    let cells = g.ncells();
    for c in 0..cells {
        let dir = director(&q.tensor_at(c));
        for k in 0..d {
            n.data[k * cells + c] = dir.n[k];
        }
        s.data[c] = dir.s;
    }
    (n, s)
}

/// Winding number of the 2D director around the square circuit of cell
/// centers enclosing the disc of radius `radius` about `center`.
///
/// The director angle is half the phase of `(q11, q12)`, so a full turn of
/// the director adds `4 pi` to the accumulated phase.
pub fn winding_number(q: &Field, center: [f64; 2], radius: f64) -> Result<f64> {
    let g = q.grid();
    if g.dim != 2 || q.kind() != FieldKind::Tensor {
        return Err(Error::FieldMismatch("winding number needs a 2D tensor field".into()));
    }
    let mut lo = [0i64; 2];
    let mut hi = [0i64; 2];
    for k in 0..2 {
        let c = center[k] / g.h[k] - 0.5;
        let m = radius / g.h[k];
        lo[k] = (c - m).floor() as i64;
        hi[k] = (c + m).ceil() as i64;
        if hi[k] - lo[k] < 2 {
            return Err(Error::InvalidParam { name: "radius", reason: "circuit must span at least two cells".into() });
        }
        if !g.is_periodic() && (lo[k] < 0 || hi[k] >= g.n[k] as i64) {
            return Err(Error::InvalidParam { name: "radius", reason: "circuit leaves the domain".into() });
        }
    }
    let mut path = Vec::new();
    for i in lo[0]..hi[0] {
        path.push((i, lo[1]));
    }
    for j in lo[1]..hi[1] {
        path.push((hi[0], j));
    }
    for i in (lo[0] + 1..=hi[0]).rev() {
        path.push((i, hi[1]));
    }
    for j in (lo[1] + 1..=hi[1]).rev() {
        path.push((lo[0], j));
    }
    let phase = |(i, j): (i64, i64)| {
        let ii = i.rem_euclid(g.n[0] as i64) as usize;
        let jj = j.rem_euclid(g.n[1] as i64) as usize;
        let t = q.tensor_at(g.cell_of([ii, jj, 0]));
        t.c[1].atan2(t.c[0])
    };
    let mut total = 0.0;
    let mut prev = phase(path[0]);
    for k in 1..=path.len() {
        let cur = phase(path[k % path.len()]);
        let mut step = cur - prev;
        while step > PI {
            step -= 2.0 * PI;
        }
        while step <= -PI {
            step += 2.0 * PI;
        }
        total += step;
        prev = cur;
    }
    Ok(total / (4.0 * PI))
}

/// `|| a - b ||_h` for two fields on the same grid.
pub fn cauchy_error(a: &Field, b: &Field) -> Result<f64> {
    if a.kind() != b.kind() || !a.grid().same_as(b.grid()) {
        return Err(Error::FieldMismatch("Cauchy error needs fields of one kind on one grid".into()));
    }
    Ok(norm_h(&a.lin_comb(1.0, b, -1.0)))
}

/// Discrete `L^2` norm of the difference of one stored component.
pub fn component_cauchy_error(a: &Field, b: &Field, comp: usize) -> Result<f64> {
    if a.kind() != b.kind() || !a.grid().same_as(b.grid()) || comp >= a.ncomp() {
        return Err(Error::FieldMismatch("component Cauchy error: incompatible inputs".into()));
    }
    let vol = a.grid().cell_volume();
    let s: f64 = a.comp(comp).iter().zip(b.comp(comp)).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((s * vol).sqrt())
}

/// `log2(coarse / fine)`, defined only when both errors are positive.
pub fn order(coarse: f64, fine: f64) -> Option<f64> {
    (coarse > 0.0 && fine > 0.0).then(|| (coarse / fine).log2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub dt: f64,
    /// One Cauchy error per column.
    pub errors: Vec<f64>,
    /// Order against the previous row; `None` on the first row.
    pub orders: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub columns: Vec<String>,
    pub rows: Vec<ConvergenceRow>,
}

/// Column names: independent `Q` components, velocity components, `r`.
pub fn variable_names(dim: usize) -> Vec<String> {
    let q: &[&str] = if dim == 2 { &["Q11", "Q12"] } else { &["Q11", "Q12", "Q13", "Q22", "Q23"] };
    let u: &[&str] = if dim == 2 { &["u", "v"] } else { &["u", "v", "w"] };
    q.iter().chain(u).chain(&["r"]).map(|s| s.to_string()).collect()
}

/// Cauchy errors between consecutive runs (`dt` halving each time) and
/// the observed orders. Row `k` holds `|f_{dt_k} - f_{dt_k/2}|`.
pub fn convergence_table(runs: &[(f64, SchemeState)]) -> Result<ConvergenceTable> {
    if runs.len() < 3 {
        return Err(Error::Experiment(format!("need at least 3 runs for an order, got {}", runs.len())));
    }
    for w in runs.windows(2) {
        let ratio = w[0].0 / w[1].0;
        if (ratio - 2.0).abs() > 1e-9 {
            return Err(Error::Experiment(format!("time steps must halve, got {} then {}", w[0].0, w[1].0)));
        }
    }
    let dim = runs[0].1.q.dim();
    let nq = dof(dim);
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for w in runs.windows(2) {
        let (a, b) = (&w[0].1, &w[1].1);
        let mut errors = Vec::with_capacity(nq + dim + 1);
        for c in 0..nq {
            errors.push(component_cauchy_error(&a.q, &b.q, c)?);
        }
        for c in 0..dim {
            errors.push(component_cauchy_error(&a.u, &b.u, c)?);
        }
        errors.push((a.r - b.r).abs());
        let orders = match rows.last() {
            Some(prev) => prev.errors.iter().zip(&errors).map(|(&c, &f)| order(c, f)).collect(),
            None => vec![None; errors.len()],
        };
        rows.push(ConvergenceRow { dt: w[0].0, errors, orders });
    }
    Ok(ConvergenceTable { columns: variable_names(dim), rows })
}

impl ConvergenceTable {
    /// Every order of every row after the first.
    pub fn all_orders(&self) -> Vec<f64> {
        self.rows.iter().skip(1).flat_map(|r| r.orders.iter().flatten().copied()).collect()
    }

    /// CSV with columns `dt,Q11_err,Q11_order,...,r_err,r_order`; orders to
    /// two decimals, empty where undefined.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["dt".to_string()];
        for c in &self.columns {
            header.push(format!("{c}_err"));
            header.push(format!("{c}_order"));
        }
        out.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![format!("{:e}", row.dt)];
            for (e, o) in row.errors.iter().zip(&row.orders) {
                rec.push(format!("{e:.6e}"));
                rec.push(o.map(|v| format!("{v:.2}")).unwrap_or_default());
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}
