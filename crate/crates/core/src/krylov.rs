//! Matrix-free Krylov solvers: restarted GMRES with right preconditioning
//! and preconditioned conjugate gradients.

use std::fmt;

use crate::error::{Error, Result};

/// A linear map on flat `f64` vectors.
pub trait LinOp {
    fn size(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Wraps a closure as a [`LinOp`].
pub struct FnOp<F: Fn(&[f64], &mut [f64])> {
    pub size: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64])> LinOp for FnOp<F> {
    fn size(&self) -> usize {
        self.size
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// Identity map of a given size.
pub struct Identity(pub usize);

impl LinOp for Identity {
    fn size(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// True residual `|A x - b| / |b|` at return.
    pub relative_residual: f64,
    pub converged: bool,
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} iterations, relative residual {:.3e}, converged: {}",
            self.iterations, self.relative_residual, self.converged
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig { tol: 1e-10, max_iter: 500, restart: 30 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(op: &dyn LinOp, x: &[f64], b: &[f64], r: &mut [f64]) {
    op.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// Restarted GMRES for `op(x) = rhs`, right-preconditioned by `precond`
/// when given (solves `A M^{-1} y = b`, `x = M^{-1} y`).
///
/// Returns the iterate and a report; exhausting `max_iter` is reported via
/// `converged = false`, not as an error. Non-finite residuals are errors.
pub fn krylov_solve(
    op: &dyn LinOp,
    rhs: &[f64],
    precond: Option<&dyn LinOp>,
    x0: Option<&[f64]>,
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = op.size();
    assert_eq!(rhs.len(), n, "rhs length does not match operator size");
    let bnorm = norm(rhs);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveReport { iterations: 0, relative_residual: 0.0, converged: true }));
    }
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let m = cfg.restart.max(1).min(n);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut total = 0usize;

    loop {
        residual(op, &x, rhs, &mut r);
        let beta = norm(&r);
        let rel = beta / bnorm;
        if !rel.is_finite() {
            return Err(Error::NonFinite { iterations: total });
        }
        if rel <= cfg.tol {
            return Ok((x, SolveReport { iterations: total, relative_residual: rel, converged: true }));
        }
        if total >= cfg.max_iter {
            return Ok((x, SolveReport { iterations: total, relative_residual: rel, converged: false }));
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for j in 0..m {
            if total >= cfg.max_iter {
                break;
            }
            match precond {
                Some(p) => {
                    p.apply(&basis[j], &mut z);
                    op.apply(&z, &mut w);
                }
                None => op.apply(&basis[j], &mut w),
            }
            total += 1;
            // Modified Gram-Schmidt.
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                hess[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
            let hnext = norm(&w);
            hess[j + 1][j] = hnext;
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let denom = hess[j][j].hypot(hess[j + 1][j]);
            if denom == 0.0 || !denom.is_finite() {
                if !denom.is_finite() {
                    return Err(Error::NonFinite { iterations: total });
                }
                k_used = j;
                break;
            }
            cs[j] = hess[j][j] / denom;
            sn[j] = hess[j + 1][j] / denom;
            hess[j][j] = denom;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            k_used = j + 1;
            let est = g[j + 1].abs() / bnorm;
            if !est.is_finite() {
                return Err(Error::NonFinite { iterations: total });
            }
            if est <= cfg.tol || hnext == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }

        // Back substitution for the least-squares coefficients.
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in i + 1..k_used {
                s -= hess[i][l] * y[l];
            }
            y[i] = s / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, v) in y.iter().zip(&basis) {
            for (u, vk) in update.iter_mut().zip(v) {
                *u += yi * vk;
            }
        }
        match precond {
            Some(p) => {
                p.apply(&update, &mut z);
                for (xi, zi) in x.iter_mut().zip(&z) {
                    *xi += zi;
                }
            }
            None => {
                for (xi, ui) in x.iter_mut().zip(&update) {
                    *xi += ui;
                }
            }
        }
        if k_used == 0 {
            // Breakdown without progress; report the current state.
            residual(op, &x, rhs, &mut r);
            let rel = norm(&r) / bnorm;
            return Ok((x, SolveReport { iterations: total, relative_residual: rel, converged: rel <= cfg.tol }));
        }
    }
}

/// Preconditioned conjugate gradients for symmetric semi-definite systems.
/// `project`, when given, removes null-space components from every iterate
/// and residual (e.g. the constant mode of a Neumann Laplacian).
pub fn cg_solve(
    op: &dyn LinOp,
    rhs: &[f64],
    precond: Option<&dyn LinOp>,
    project: Option<&dyn Fn(&mut [f64])>,
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = op.size();
    let mut b = rhs.to_vec();
    if let Some(p) = project {
        p(&mut b);
    }
    let bnorm = norm(&b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveReport { iterations: 0, relative_residual: 0.0, converged: true }));
    }
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z = vec![0.0; n];
    let apply_prec = |r: &[f64], z: &mut [f64]| {
        match precond {
            Some(pc) => pc.apply(r, z),
            None => z.copy_from_slice(r),
        }
        if let Some(p) = project {
            p(z);
        }
    };
    apply_prec(&r, &mut z);
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let mut ad = vec![0.0; n];
    let mut it = 0;
    loop {
        let rel = norm(&r) / bnorm;
        if !rel.is_finite() {
            return Err(Error::NonFinite { iterations: it });
        }
        if rel <= cfg.tol || it >= cfg.max_iter {
            // Confirm with the true residual.
            let mut tr = vec![0.0; n];
            residual(op, &x, &b, &mut tr);
            if let Some(p) = project {
                p(&mut tr);
            }
            let true_rel = norm(&tr) / bnorm;
            return Ok((x, SolveReport { iterations: it, relative_residual: true_rel, converged: true_rel <= cfg.tol }));
        }
        op.apply(&d, &mut ad);
        let dad = dot(&d, &ad);
        if dad == 0.0 {
            return Err(Error::NonFinite { iterations: it });
        }
        let alpha = rz / dad;
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * ad[i];
        }
        if let Some(p) = project {
            p(&mut r);
        }
        apply_prec(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            d[i] = z[i] + beta * d[i];
        }
        it += 1;
    }
}
