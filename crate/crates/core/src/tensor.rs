//! Pointwise Q-tensor algebra and the constitutive terms of the
//! Landau-de Gennes hydrodynamic model.
//!
//! Everything here works for `d = 2` and `d = 3`. The isotropic parts of the
//! constitutive relations use `I/d` and `2a/d`, so traceless inputs always
//! produce traceless outputs in either dimension.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Number of independent components of a symmetric traceless `dim x dim` tensor.
pub const fn dof(dim: usize) -> usize {
    dim * (dim + 1) / 2 - 1
}

/// Dense `d x d` matrix stored in a fixed 3x3 buffer; entries outside
/// `dim x dim` are kept at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat {
    pub dim: usize,
    pub a: [[f64; 3]; 3],
}

impl Mat {
    pub fn zeros(dim: usize) -> Self {
        debug_assert!(dim == 2 || dim == 3);
        Mat { dim, a: [[0.0; 3]; 3] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Mat::zeros(dim);
        for i in 0..dim {
            m.a[i][i] = 1.0;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.a[i][j] = f(i, j);
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.dim, |i, j| self.a[j][i])
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.a[i][i]).sum()
    }

    /// Componentwise double contraction `sum_ij A_ij B_ij`.
    #[inline]
    pub fn ddot(&self, other: &Mat) -> f64 {
        // Entries outside `dim x dim` are zero, so fixed bounds are exact.
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += self.a[i][j] * other.a[i][j];
            }
        }
        s
    }

    #[inline]
    pub fn matmul(&self, other: &Mat) -> Mat {
        let mut m = Mat::zeros(self.dim);
        for i in 0..3 {
            for k in 0..3 {
                let aik = self.a[i][k];
                for j in 0..3 {
                    m.a[i][j] += aik * other.a[k][j];
                }
            }
        }
        m
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Mat {
        let mut m = *self;
        for row in m.a.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        m
    }

    pub fn frobenius(&self) -> f64 {
        self.ddot(self).sqrt()
    }
}

impl Add for Mat {
    type Output = Mat;
    #[inline]
    fn add(self, rhs: Mat) -> Mat {
        let mut m = self;
        for i in 0..3 {
            for j in 0..3 {
                m.a[i][j] += rhs.a[i][j];
            }
        }
        m
    }
}

impl Sub for Mat {
    type Output = Mat;
    #[inline]
    fn sub(self, rhs: Mat) -> Mat {
        let mut m = self;
        for i in 0..3 {
            for j in 0..3 {
                m.a[i][j] -= rhs.a[i][j];
            }
        }
        m
    }
}

impl Mul<f64> for Mat {
    type Output = Mat;
    fn mul(self, rhs: f64) -> Mat {
        self.scale(rhs)
    }
}

impl Neg for Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

/// Symmetric traceless tensor parameterized by its independent entries:
/// `(q11, q12)` in 2D and `(q11, q12, q13, q22, q23)` in 3D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymTraceless {
    pub dim: usize,
    pub c: [f64; 5],
}

impl SymTraceless {
    pub fn zeros(dim: usize) -> Self {
        debug_assert!(dim == 2 || dim == 3);
        SymTraceless { dim, c: [0.0; 5] }
    }

    pub fn from_components(dim: usize, comps: &[f64]) -> Self {
        let mut t = SymTraceless::zeros(dim);
        t.c[..dof(dim)].copy_from_slice(&comps[..dof(dim)]);
        t
    }

    pub fn components(&self) -> &[f64] {
        &self.c[..dof(self.dim)]
    }

    /// Reads the independent entries of a matrix that is assumed to be
    /// symmetric and traceless; only the upper triangle is used.
    pub fn from_mat(m: &Mat) -> Self {
        let mut t = SymTraceless::zeros(m.dim);
        if m.dim == 2 {
            t.c[0] = m.a[0][0];
            t.c[1] = m.a[0][1];
        } else {
            t.c = [m.a[0][0], m.a[0][1], m.a[0][2], m.a[1][1], m.a[1][2]];
        }
        t
    }

    /// Symmetric traceless part of an arbitrary matrix.
    pub fn project(m: &Mat) -> Self {
        let d = m.dim;
        let tr = m.trace() / d as f64;
        let sym = Mat::from_fn(d, |i, j| {
            0.5 * (m.a[i][j] + m.a[j][i]) - if i == j { tr } else { 0.0 }
        });
        SymTraceless::from_mat(&sym)
    }

    pub fn to_mat(&self) -> Mat {
        let c = &self.c;
        let mut m = Mat::zeros(self.dim);
        if self.dim == 2 {
            m.a[0][0] = c[0];
            m.a[0][1] = c[1];
            m.a[1][0] = c[1];
            m.a[1][1] = -c[0];
        } else {
            m.a = [
                [c[0], c[1], c[2]],
                [c[1], c[3], c[4]],
                [c[2], c[4], -c[0] - c[3]],
            ];
        }
        m
    }

    /// Full-matrix double contraction `Q : P`.
    pub fn ddot(&self, other: &SymTraceless) -> f64 {
        contract(self.dim, &self.c, &other.c)
    }

    /// `tr(Q^2) = Q : Q`.
    pub fn tr_sq(&self) -> f64 {
        self.ddot(self)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut t = *self;
        for v in t.c.iter_mut() {
            *v *= s;
        }
        t
    }

    pub fn axpy(&self, s: f64, other: &SymTraceless) -> Self {
        let mut t = *self;
        for (v, o) in t.c.iter_mut().zip(other.c.iter()) {
            *v += s * o;
        }
        t
    }
}

/// Full-matrix double contraction of two component vectors.
#[inline]
pub fn contract(dim: usize, a: &[f64], b: &[f64]) -> f64 {
    if dim == 2 {
        2.0 * (a[0] * b[0] + a[1] * b[1])
    } else {
        let diag = a[0] * b[0] + a[3] * b[3] + (a[0] + a[3]) * (b[0] + b[3]);
        diag + 2.0 * (a[1] * b[1] + a[2] * b[2] + a[4] * b[4])
    }
}

/// Full `d x d` velocity gradient, `g[i][j] = du_i/dx_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityGradient(pub Mat);

impl VelocityGradient {
    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn divergence(&self) -> f64 {
        self.0.trace()
    }
}

/// Physical and scheme constants of the non-dimensional model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Elastic constant.
    pub k: f64,
    /// Mobility.
    pub m: f64,
    /// Viscosity.
    pub eta: f64,
    /// Molecular shape parameter.
    pub a: f64,
    /// Stabilization constant.
    pub s_q: f64,
    /// Shift keeping `E1` positive.
    pub c0: f64,
}

impl Default for ModelParams {
    /// Parameter set of the reference experiments; `beta` plays no role in
    /// 2D and defaults to zero.
    fn default() -> Self {
        ModelParams {
            alpha: -0.2,
            beta: 0.0,
            gamma: 1.0,
            k: 0.001,
            m: 1.0,
            eta: 1.0,
            a: 1.0,
            s_q: 30.0,
            c0: 10.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("K", self.k),
            ("M", self.m),
            ("eta", self.eta),
            ("a", self.a),
            ("S_Q", self.s_q),
            ("C0", self.c0),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                return Err(Error::InvalidParam { name, reason: format!("{v} is not finite") });
            }
        }
        let positive = [
            ("gamma", self.gamma),
            ("K", self.k),
            ("M", self.m),
            ("eta", self.eta),
            ("C0", self.c0),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                return Err(Error::InvalidParam { name, reason: format!("must be > 0, got {v}") });
            }
        }
        if self.s_q < 0.0 {
            return Err(Error::InvalidParam {
                name: "S_Q",
                reason: format!("must be >= 0, got {}", self.s_q),
            });
        }
        if !(-1.0..=1.0).contains(&self.a) {
            return Err(Error::InvalidParam {
                name: "a",
                reason: format!("must lie in [-1, 1], got {}", self.a),
            });
        }
        Ok(())
    }
}

/// `F_B(Q) = alpha/2 tr(Q^2) + beta/3 tr(Q^3) + gamma/4 tr(Q^2)^2`.
pub fn bulk_energy_density(q: &SymTraceless, p: &ModelParams) -> f64 {
    let tr2 = q.tr_sq();
    let tr3 = if q.dim == 2 {
        0.0
    } else {
        let m = q.to_mat();
        m.matmul(&m).ddot(&m.transpose())
    };
    0.5 * p.alpha * tr2 + p.beta / 3.0 * tr3 + 0.25 * p.gamma * tr2 * tr2
}

/// `f_B(Q) = alpha Q + beta (Q^2 - tr(Q^2)/d I) + gamma tr(Q^2) Q`.
pub fn bulk_force(q: &SymTraceless, p: &ModelParams) -> SymTraceless {
    let tr2 = q.tr_sq();
    let mut out = q.scale(p.alpha + p.gamma * tr2);
    // In 2D the beta term is identically zero.
    if q.dim == 3 && p.beta != 0.0 {
        let m = q.to_mat();
        let sq = SymTraceless::from_mat(&(m.matmul(&m) - Mat::identity(3).scale(tr2 / 3.0)));
        out = out.axpy(p.beta, &sq);
    }
    out
}

/// `g(Q) = f_B(Q) - S_Q Q`.
pub fn stabilized_force(q: &SymTraceless, p: &ModelParams) -> SymTraceless {
    bulk_force(q, p).axpy(-p.s_q, q)
}

/// Rate of strain `D` and vorticity `W` of a velocity gradient.
pub fn strain_and_vorticity(gu: &VelocityGradient) -> (Mat, Mat) {
    let g = &gu.0;
    let d = Mat::from_fn(g.dim, |i, j| 0.5 * (g.a[i][j] + g.a[j][i]));
    let w = Mat::from_fn(g.dim, |i, j| 0.5 * (g.a[i][j] - g.a[j][i]));
    (d, w)
}

/// Gordon-Schowalter stretching term
/// `S = WQ - QW + a(QD + DQ) + 2a/d (D - div u/d I) - 2a (D:Q)(Q + I/d)`.
pub fn s_term(gu: &VelocityGradient, q: &SymTraceless, p: &ModelParams) -> SymTraceless {
    let dim = q.dim;
    let dn = dim as f64;
    let (d, w) = strain_and_vorticity(gu);
    let qm = q.to_mat();
    let a = p.a;
    let dq = d.ddot(&qm);
    let div = gu.divergence();
    let id = Mat::identity(dim);
    let s = w.matmul(&qm) - qm.matmul(&w)
        + (qm.matmul(&d) + d.matmul(&qm)).scale(a)
        + (d - id.scale(div / dn)).scale(2.0 * a / dn)
        - (qm + id.scale(1.0 / dn)).scale(2.0 * a * dq);
    SymTraceless::from_mat(&s)
}

/// Elastic stress `sigma = QG - GQ - a(GQ + QG) - 2a/d G + 2a (Q:G)(Q + I/d)`;
/// not symmetric in general.
pub fn sigma_term(q: &SymTraceless, g: &SymTraceless, p: &ModelParams) -> Mat {
    let dim = q.dim;
    let dn = dim as f64;
    let qm = q.to_mat();
    let gm = g.to_mat();
    let a = p.a;
    let qg = qm.matmul(&gm);
    let gq = gm.matmul(&qm);
    let id = Mat::identity(dim);
    qg - gq - (gq + qg).scale(a) - gm.scale(2.0 * a / dn)
        + (qm + id.scale(1.0 / dn)).scale(2.0 * a * q.ddot(g))
}

/// `sigma - 2a/d (Q:G) I`. Differs from the stress by an isotropic part,
/// which only redefines the pressure, and pairs with `S` to zero for every
/// velocity gradient, divergence-free or not.
pub fn sigma_shifted(q: &SymTraceless, g: &SymTraceless, p: &ModelParams) -> Mat {
    let dim = q.dim;
    let qm = q.to_mat();
    let gm = g.to_mat();
    let a = p.a;
    let qg = qm.matmul(&gm);
    let gq = gm.matmul(&qm);
    qg - gq - (gq + qg).scale(a) - gm.scale(2.0 * a / dim as f64) + qm.scale(2.0 * a * q.ddot(g))
}
