//! Pressure Poisson solves for the projection step.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{Field, FieldKind, Ghost};
use crate::grid::Grid;
use crate::krylov::{cg_solve, FnOp, KrylovConfig, LinOp, SolveReport};
use crate::ops::{div_c, grad_c, laplace5};
use crate::spectral::{DiagonalInverse, Parity, Spectral};

/// How the projection step removes the gradient part on wall grids.
/// Periodic grids always use the exact solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// `div_c grad_c psi = div_c v`, solved in the cosine basis: `div_c` of
    /// the result vanishes to round-off and the map is idempotent.
    Exact,
    /// `laplace5 psi = div_c v` with Neumann ghosts: approximate, leaves an
    /// O(h^2) divergence every step.
    Laplace5,
}

/// Poisson solves behind the projection step.
///
/// [`Projector::pressure_poisson_solve`] solves `div_c grad_c psi = rhs`
/// (periodic, exact, Nyquist and mean modes filtered) or `laplace5 psi = rhs`
/// with homogeneous Neumann ghosts (walls, preconditioned CG with the
/// cosine-basis inverse, mean pinned to zero).
pub struct Projector {
    grid: Arc<Grid>,
    spectral: Arc<Spectral>,
    wide: DiagonalInverse,
    compact: Option<DiagonalInverse>,
    cg: KrylovConfig,
    mode: Projection,
}

impl std::fmt::Debug for Projector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Projector").field("grid", &self.grid.spec()).field("mode", &self.mode).finish()
    }
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

impl Projector {
    pub fn new(spectral: Arc<Spectral>, cg: KrylovConfig, mode: Projection) -> Result<Self> {
        let grid = spectral.grid().clone();
        let wide = DiagonalInverse::new(&spectral.wide_laplace_symbol(), &spectral.wide_null_modes())?;
        let compact = if grid.is_periodic() {
            None
        } else {
            Some(DiagonalInverse::new(&spectral.laplace_symbol(Parity::Even), &[0])?)
        };
        Ok(Projector { grid, spectral, wide, compact, cg, mode })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn check_rhs(&self, rhs: &Field) -> Result<()> {
        if rhs.kind() != FieldKind::Scalar || !rhs.grid().same_as(&self.grid) {
            return Err(Error::FieldMismatch("Poisson right-hand side must be a scalar on the solver grid".into()));
        }
        Ok(())
    }

    /// Mean-free solution of `div_c grad_c psi = rhs` by one diagonal solve.
    fn wide_solve(&self, rhs: &Field) -> Result<Field> {
        let mut b = rhs.data.clone();
        remove_mean(&mut b);
        let psi = self.spectral.apply_inverse(&self.wide, Parity::Even, &b);
        Field::from_data(&self.grid, FieldKind::Scalar, psi)
    }

    /// The potential used by [`Self::project`] and the stepper: the exact wide
    /// solve, or [`Self::pressure_poisson_solve`] under [`Projection::Laplace5`].
    pub fn projection_solve(&self, rhs: &Field) -> Result<Field> {
        self.check_rhs(rhs)?;
        match self.mode {
            Projection::Exact => self.wide_solve(rhs),
            Projection::Laplace5 => Ok(self.pressure_poisson_solve(rhs)?.0),
        }
    }

    pub fn pressure_poisson_solve(&self, rhs: &Field) -> Result<(Field, SolveReport)> {
        self.check_rhs(rhs)?;
        let Some(compact) = &self.compact else {
            let psi = self.wide_solve(rhs)?;
            return Ok((psi, SolveReport { iterations: 1, relative_residual: 0.0, converged: true }));
        };
        let grid = self.grid.clone();
        let op = FnOp {
            size: grid.ncells(),
            f: |x: &[f64], y: &mut [f64]| {
                let f = Field::from_data(&grid, FieldKind::Scalar, x.to_vec()).expect("size checked");
                y.copy_from_slice(&laplace5(&f, Ghost::Even).data);
            },
        };
        let prec = FnOp {
            size: grid.ncells(),
            f: |x: &[f64], y: &mut [f64]| {
                // The Neumann Laplacian is negative semi-definite; CG runs on
                // its negation, so the preconditioner flips sign as well.
                let z = self.spectral.apply_inverse(compact, Parity::Even, x);
                for (yi, zi) in y.iter_mut().zip(z) {
                    *yi = -zi;
                }
            },
        };
        let neg = FnOp {
            size: grid.ncells(),
            f: |x: &[f64], y: &mut [f64]| {
                op.apply(x, y);
                y.iter_mut().for_each(|v| *v = -*v);
            },
        };
        let b: Vec<f64> = rhs.data.iter().map(|v| -v).collect();
        let (x, report) = cg_solve(&neg, &b, Some(&prec), Some(&remove_mean), &self.cg)?;
        if !report.converged {
            return Err(Error::NotConverged { context: "pressure Poisson", report });
        }
        Ok((Field::from_data(&self.grid, FieldKind::Scalar, x)?, report))
    }

    /// Removes the discrete gradient part of `v`: returns `(v - grad_c psi, psi)`
    /// with `psi` solving the Poisson problem for `div_c v`.
    pub fn project(&self, v: &Field) -> Result<(Field, Field)> {
        let div = div_c(v, Ghost::Odd);
        let psi = self.projection_solve(&div)?;
        let g = grad_c(&psi, Ghost::Even);
        Ok((v.lin_comb(1.0, &g, -1.0), psi))
    }
}
