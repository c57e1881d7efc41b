//! First-order SAV time stepper: coupled linear solve for `(Q, r, u~)`,
//! velocity projection, and modified-energy bookkeeping.

use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{inner_unchecked, linf_norm, pad, BoundaryData, Field, FieldKind, Ghost, Padded};
use crate::grid::Grid;
use crate::krylov::{krylov_solve, FnOp, KrylovConfig, LinOp, SolveReport};
use crate::ops::{advect_skew_padded, div_c, div_matrix, forward_grad_sq, grad_c, grad_vector, laplace5, partial_padded};
use crate::poisson::{Projection, Projector};
use crate::spectral::{DiagonalInverse, Parity, Spectral};
use crate::tensor::{bulk_energy_density, s_term, sigma_shifted, sigma_term, stabilized_force, Mat, ModelParams, SymTraceless, VelocityGradient};

/// Boundary condition for `Q` on wall grids. Ignored on periodic grids.
#[derive(Debug, Clone)]
pub enum QBoundary {
    /// Prescribed values on the wall faces.
    Dirichlet(BoundaryData),
    /// Zero normal derivative.
    Neumann,
}

/// Which stress enters the momentum equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StressForm {
    /// The model stress as written. Its work cancels the stretching term
    /// only for divergence-free velocity gradients, so the intermediate
    /// velocity leaves a residual in the discrete energy law.
    Model,
    /// The stress minus its `2a/d (Q:G) I` part, absorbed by the pressure;
    /// the cancellation, and the discrete energy law, become exact.
    PressureAbsorbed,
}

/// What to do when a step violates the discrete energy inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditMode {
    Warn,
    Abort,
}

#[derive(Debug, Clone)]
pub struct StepperConfig {
    pub krylov: KrylovConfig,
    pub audit: AuditMode,
    /// Block-diagonal spectral preconditioner for the coupled solve.
    pub precondition: bool,
    pub stress: StressForm,
    pub projection: Projection,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            krylov: KrylovConfig::default(),
            audit: AuditMode::Warn,
            precondition: true,
            stress: StressForm::PressureAbsorbed,
            projection: Projection::Exact,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SchemeState {
    pub q: Field,
    /// End-of-step (projected) velocity.
    pub u: Field,
    pub p: Field,
    pub r: f64,
    pub t: f64,
    pub step: usize,
    /// Recent coupled-solve solutions, used only as an initial guess.
    pub warm: Option<WarmStart>,
}

/// Stacked `(Q, u~)` solutions of the last one or two steps taken with `dt`.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub dt: f64,
    pub last: Vec<f64>,
    pub prev: Option<Vec<f64>>,
}

impl WarmStart {
    /// Linear extrapolation when two solutions are known.
    fn guess(&self) -> Vec<f64> {
        match &self.prev {
            Some(p) => self.last.iter().zip(p).map(|(a, b)| 2.0 * a - b).collect(),
            None => self.last.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Step1Output {
    pub q: Field,
    pub r: f64,
    pub u_tilde: Field,
    pub g: Field,
    pub report: SolveReport,
    /// Stacked `(Q, u~)` solver solution.
    pub solution: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub solver: SolveReport,
    pub energy_before: f64,
    pub energy_after: f64,
    /// `E_new - E_old + eta dt |grad u~|^2 + M dt |G|^2`; nonpositive up to
    /// solver error on periodic grids.
    pub dissipation_residual: f64,
    pub audit_tol: f64,
    pub audit_passed: bool,
    pub grad_u_norm_sq: f64,
    pub g_norm_sq: f64,
    /// `|r - sqrt(E1(Q))|` after the step.
    pub r_consistency: f64,
    /// `r_new - r_old - (V, Q_new - Q_old)_h / 2`.
    pub r_update_residual: f64,
    /// Sum of the squared increments dropped by the scheme (always >= 0).
    pub numerical_dissipation: f64,
    /// `dt 2a/d (Q_old:G, div_c u~)_h` with the model stress, zero with the
    /// pressure-absorbed stress: the stress work not cancelled because `u~`
    /// is not divergence-free.
    pub trace_term: f64,
    /// `dissipation_residual + numerical_dissipation + trace_term`; zero up
    /// to solver error on periodic grids.
    pub identity_defect: f64,
    pub div_max: f64,
    /// Relative max-norm mismatch of `u + dt grad p` before and after projection.
    pub reassembly_residual: f64,
    pub linf_q: f64,
}

/// `E1(Q) = sum (F_B - S_Q/2 tr Q^2) vol + C0`; must be positive.
pub fn compute_e1(q: &Field, p: &ModelParams) -> Result<f64> {
    let e1 = bulk_integral(q, p) + p.c0;
    if !(e1 > 0.0) {
        return Err(Error::NonPositiveE1 { value: e1 });
    }
    Ok(e1)
}

fn bulk_integral(q: &Field, p: &ModelParams) -> f64 {
    let vol = q.grid().cell_volume();
    (0..q.ncells())
        .map(|c| {
            let t = q.tensor_at(c);
            bulk_energy_density(&t, p) - 0.5 * p.s_q * t.tr_sq()
        })
        .sum::<f64>()
        * vol
}

/// `V = g(Q) / sqrt(E1(Q))`.
pub fn compute_v(q: &Field, p: &ModelParams) -> Result<Field> {
    let scale = 1.0 / compute_e1(q, p)?.sqrt();
    let mut v = Field::zeros(q.grid(), FieldKind::Tensor);
    for c in 0..q.ncells() {
        v.set_tensor(c, &stabilized_force(&q.tensor_at(c), p).scale(scale));
    }
    Ok(v)
}

struct Preconditioner {
    dt: f64,
    q: DiagonalInverse,
    u: DiagonalInverse,
}

pub struct SavStepper {
    grid: Arc<Grid>,
    params: ModelParams,
    qbc: QBoundary,
    cfg: StepperConfig,
    spectral: Arc<Spectral>,
    projector: Projector,
    lap_q: Vec<f64>,
    lap_u: Vec<f64>,
    precond: RefCell<Option<Preconditioner>>,
}

impl std::fmt::Debug for SavStepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SavStepper").field("grid", &self.grid.spec()).field("params", &self.params).finish()
    }
}

/// Per-step data frozen at the old time level.
struct Frozen {
    q0: Field,
    q0_cells: Vec<SymTraceless>,
    dq0: Vec<Field>,
    pu0: Padded,
    v0: Field,
    /// `G = G_lin(Q_new) + g_aff`.
    g_aff: Field,
    dt: f64,
}

impl SavStepper {
    pub fn new(grid: &Arc<Grid>, params: ModelParams, qbc: QBoundary, cfg: StepperConfig) -> Result<Self> {
        params.validate()?;
        if let QBoundary::Dirichlet(bd) = &qbc {
            let nc = FieldKind::Tensor.ncomp(grid.dim);
            if bd.ncomp != nc || bd.values.len() != nc * grid.padded_len() {
                return Err(Error::FieldMismatch("Q boundary data does not match grid".into()));
            }
        }
        let spectral = Arc::new(Spectral::new(grid));
        let projector = Projector::new(spectral.clone(), cfg.krylov, cfg.projection)?;
        let q_parity = match qbc {
            QBoundary::Dirichlet(_) => Parity::Odd,
            QBoundary::Neumann => Parity::Even,
        };
        let lap_q = spectral.laplace_symbol(q_parity);
        let lap_u = spectral.laplace_symbol(Parity::Odd);
        Ok(SavStepper {
            grid: grid.clone(),
            params,
            qbc,
            cfg,
            spectral,
            projector,
            lap_q,
            lap_u,
            precond: RefCell::new(None),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    fn q_ghost(&self) -> Ghost<'_> {
        match &self.qbc {
            QBoundary::Dirichlet(bd) => Ghost::Dirichlet(bd),
            QBoundary::Neumann => Ghost::Even,
        }
    }

    fn q_parity(&self) -> Parity {
        match self.qbc {
            QBoundary::Dirichlet(_) => Parity::Odd,
            QBoundary::Neumann => Parity::Even,
        }
    }

    fn check_field(&self, f: &Field, kind: FieldKind, what: &str) -> Result<()> {
        if f.kind() != kind || !f.grid().same_as(&self.grid) {
            return Err(Error::FieldMismatch(format!("{what} has the wrong kind or grid")));
        }
        Ok(())
    }

    /// Initial state: `p = 0`, `r = sqrt(E1(Q0))`; on periodic grids `u0`
    /// is projected onto discretely divergence-free fields.
    pub fn init_state(&self, q0: Field, u0: Field) -> Result<SchemeState> {
        self.check_field(&q0, FieldKind::Tensor, "Q0")?;
        self.check_field(&u0, FieldKind::Vector, "u0")?;
        let r = compute_e1(&q0, &self.params)?.sqrt();
        let u = if self.grid.is_periodic() { self.projector.project(&u0)?.0 } else { u0 };
        Ok(SchemeState { q: q0, u, p: Field::zeros(&self.grid, FieldKind::Scalar), r, t: 0.0, step: 0, warm: None })
    }

    /// `K/2 |grad+ Q|^2 + S_Q/2 |Q|^2 + |u|^2/2 + dt^2/2 |grad_c p|^2 + r^2 - C0`.
    pub fn modified_energy(&self, s: &SchemeState, dt: f64) -> f64 {
        let p = &self.params;
        let gp = grad_c(&s.p, Ghost::Even);
        0.5 * p.k * forward_grad_sq(&s.q, self.q_ghost())
            + 0.5 * p.s_q * inner_unchecked(&s.q, &s.q)
            + 0.5 * inner_unchecked(&s.u, &s.u)
            + 0.5 * dt * dt * inner_unchecked(&gp, &gp)
            + s.r * s.r
            - p.c0
    }

    /// `K L Q - S_Q Q - (V0, Q)_h V0 / 2` with homogeneous boundary ghosts.
    fn g_lin(&self, fz: &Frozen, q: &Field) -> Field {
        let p = &self.params;
        let mut g = laplace5(q, self.q_ghost().homogeneous());
        g.scale(p.k);
        g.axpy(-p.s_q, q);
        g.axpy(-0.5 * inner_unchecked(&fz.v0, q), &fz.v0);
        g
    }

    fn freeze(&self, s: &SchemeState, dt: f64) -> Result<Frozen> {
        let p = &self.params;
        let d = self.grid.dim;
        let v0 = compute_v(&s.q, p)?;
        let pq = pad(&s.q, self.q_ghost());
        let dq0 = (0..d).map(|k| partial_padded(&s.q, &pq, k)).collect();
        let q0_cells = (0..s.q.ncells()).map(|c| s.q.tensor_at(c)).collect();
        let c_r = s.r - 0.5 * inner_unchecked(&v0, &s.q);
        let mut g_aff = laplace5(&Field::zeros(&self.grid, FieldKind::Tensor), self.q_ghost());
        g_aff.scale(p.k);
        g_aff.axpy(-c_r, &v0);
        Ok(Frozen { q0: s.q.clone(), q0_cells, dq0, pu0: pad(&s.u, Ghost::Odd), v0, g_aff, dt })
    }

    fn stress_at(&self, q0: &SymTraceless, g: &SymTraceless) -> Mat {
        match self.cfg.stress {
            StressForm::Model => sigma_term(q0, g, &self.params),
            StressForm::PressureAbsorbed => sigma_shifted(q0, g, &self.params),
        }
    }

    /// `sigma(Q0, G)` as a matrix field.
    fn stress(&self, fz: &Frozen, g: &Field) -> Field {
        let d = self.grid.dim;
        let n = self.grid.ncells();
        let mut sig = Field::zeros(&self.grid, FieldKind::Matrix);
        for c in 0..n {
            let m = self.stress_at(&fz.q0_cells[c], &g.tensor_at(c));
            for i in 0..d {
                for j in 0..d {
                    sig.data[(i * d + j) * n + c] = m.a[i][j];
                }
            }
        }
        sig
    }

    /// `(grad_c Q0) : G`, one entry per axis.
    fn grad_q_dot(&self, fz: &Frozen, g: &Field) -> Field {
        let d = self.grid.dim;
        let n = self.grid.ncells();
        let mut out = Field::zeros(&self.grid, FieldKind::Vector);
        for c in 0..n {
            let gc = g.tensor_at(c);
            for k in 0..d {
                out.data[k * n + c] = fz.dq0[k].tensor_at(c).ddot(&gc);
            }
        }
        out
    }

    fn apply_operator(&self, fz: &Frozen, x: &[f64], y: &mut [f64]) {
        let grid = &self.grid;
        let p = &self.params;
        let d = grid.dim;
        let n = grid.ncells();
        let nq = FieldKind::Tensor.ncomp(d) * n;
        let dt = fz.dt;
        let q1 = Field::from_data(grid, FieldKind::Tensor, x[..nq].to_vec()).expect("size");
        let ut = Field::from_data(grid, FieldKind::Vector, x[nq..].to_vec()).expect("size");
        let g = self.g_lin(fz, &q1);
        let gu = grad_vector(&ut, Ghost::Odd);

        let (yq, yu) = y.split_at_mut(nq);
        let mut sig = Field::zeros(grid, FieldKind::Matrix);
        let mut gqd = vec![0.0; d * n];
        for c in 0..n {
            let gm = Mat::from_fn(d, |i, j| gu.data[(i * d + j) * n + c]);
            let q0 = &fz.q0_cells[c];
            let gc = g.tensor_at(c);
            let s = s_term(&VelocityGradient(gm), q0, p);
            for (comp, sv) in s.components().iter().enumerate() {
                let i = comp * n + c;
                let mut adv = 0.0;
                for k in 0..d {
                    adv += ut.data[k * n + c] * fz.dq0[k].data[i];
                }
                yq[i] = q1.data[i] / dt + adv - sv - p.m * g.data[i];
            }
            let m = self.stress_at(q0, &gc);
            for i in 0..d {
                for j in 0..d {
                    sig.data[(i * d + j) * n + c] = m.a[i][j];
                }
                gqd[i * n + c] = fz.dq0[i].tensor_at(c).ddot(&gc);
            }
        }

        let div_sigma = div_matrix(&sig, Ghost::Extrapolate);
        let skew = advect_skew_padded(&fz.pu0, &ut, Ghost::Odd);
        let lap = laplace5(&ut, Ghost::Odd);
        for i in 0..d * n {
            yu[i] = ut.data[i] / dt + skew.data[i] - p.eta * lap.data[i] - div_sigma.data[i] + gqd[i];
        }
    }

    fn rhs(&self, s: &SchemeState, fz: &Frozen) -> Vec<f64> {
        let p = &self.params;
        let dt = fz.dt;
        let mut bq = s.q.clone();
        bq.scale(1.0 / dt);
        bq.axpy(p.m, &fz.g_aff);
        let mut bu = s.u.clone();
        bu.scale(1.0 / dt);
        bu.axpy(-1.0, &grad_c(&s.p, Ghost::Even));
        bu.axpy(1.0, &div_matrix(&self.stress(fz, &fz.g_aff), Ghost::Extrapolate));
        bu.axpy(-1.0, &self.grad_q_dot(fz, &fz.g_aff));
        let mut b = bq.data;
        b.extend_from_slice(&bu.data);
        b
    }

    fn ensure_preconditioner(&self, dt: f64) -> Result<()> {
        let mut slot = self.precond.borrow_mut();
        if slot.as_ref().is_some_and(|pc| pc.dt == dt) {
            return Ok(());
        }
        let p = &self.params;
        let sq: Vec<f64> = self.lap_q.iter().map(|l| 1.0 / dt + p.m * p.s_q - p.m * p.k * l).collect();
        let su: Vec<f64> = self.lap_u.iter().map(|l| 1.0 / dt - p.eta * l).collect();
        *slot = Some(Preconditioner { dt, q: DiagonalInverse::new(&sq, &[])?, u: DiagonalInverse::new(&su, &[])? });
        Ok(())
    }

    fn apply_preconditioner(&self, x: &[f64], y: &mut [f64]) {
        let slot = self.precond.borrow();
        let pc = slot.as_ref().expect("preconditioner prepared");
        let n = self.grid.ncells();
        let nq = FieldKind::Tensor.ncomp(self.grid.dim) * n;
        for (c, chunk) in x.chunks(n).enumerate() {
            let z = if c * n < nq {
                self.spectral.apply_inverse(&pc.q, self.q_parity(), chunk)
            } else {
                self.spectral.apply_inverse(&pc.u, Parity::Odd, chunk)
            };
            y[c * n..(c + 1) * n].copy_from_slice(&z);
        }
    }

    /// Coupled solve for `(Q_new, r_new, u~)` with `r_new` eliminated.
    pub fn step1_solve(&self, s: &SchemeState, dt: f64) -> Result<Step1Output> {
        let fz = self.freeze(s, dt)?;
        self.step1_with(s, &fz)
    }

    fn step1_with(&self, s: &SchemeState, fz: &Frozen) -> Result<Step1Output> {
        let dt = fz.dt;
        if !(dt > 0.0) {
            return Err(Error::InvalidParam { name: "dt", reason: format!("must be > 0, got {dt}") });
        }
        let grid = &self.grid;
        let n = grid.ncells();
        let nq = FieldKind::Tensor.ncomp(grid.dim) * n;
        let size = nq + grid.dim * n;
        let b = self.rhs(s, fz);
        let op = FnOp { size, f: |x: &[f64], y: &mut [f64]| self.apply_operator(fz, x, y) };
        let prec = FnOp { size, f: |x: &[f64], y: &mut [f64]| self.apply_preconditioner(x, y) };
        let precond: Option<&dyn LinOp> = if self.cfg.precondition {
            self.ensure_preconditioner(dt)?;
            Some(&prec)
        } else {
            None
        };
        let x0 = match &s.warm {
            Some(w) if w.dt == dt => w.guess(),
            _ => {
                let mut x0 = s.q.data.clone();
                x0.extend_from_slice(&s.u.data);
                x0
            }
        };
        let (x, report) = krylov_solve(&op, &b, precond, Some(&x0), &self.cfg.krylov)?;
        if !report.converged {
            return Err(Error::NotConverged { context: "coupled Q/u solve", report });
        }
        let q = Field::from_data(grid, FieldKind::Tensor, x[..nq].to_vec())?;
        let u_tilde = Field::from_data(grid, FieldKind::Vector, x[nq..].to_vec())?;
        let dq = q.lin_comb(1.0, &fz.q0, -1.0);
        let r = s.r + 0.5 * inner_unchecked(&fz.v0, &dq);
        let p = &self.params;
        let mut g = laplace5(&q, self.q_ghost());
        g.scale(p.k);
        g.axpy(-p.s_q, &q);
        g.axpy(-r, &fz.v0);
        Ok(Step1Output { q, r, u_tilde, g, report, solution: x })
    }

    /// Projection: `u_new = u~ - dt grad_c psi`, `p_new = p + psi`.
    pub fn step2_project(&self, u_tilde: &Field, p: &Field, dt: f64) -> Result<(Field, Field)> {
        let mut rhs = div_c(u_tilde, Ghost::Odd);
        rhs.scale(1.0 / dt);
        let psi = self.projector.projection_solve(&rhs)?;
        let mut u = u_tilde.clone();
        u.axpy(-dt, &grad_c(&psi, Ghost::Even));
        Ok((u, p.lin_comb(1.0, &psi, 1.0)))
    }

    pub fn audit_tol(&self, energy_before: f64, r_before: f64) -> f64 {
        (10.0 * self.cfg.krylov.tol * (energy_before.abs() + r_before * r_before)).max(1e-10)
    }

    /// One full step with the energy audit.
    pub fn advance(&self, s: &SchemeState, dt: f64) -> Result<(SchemeState, StepReport)> {
        let p = &self.params;
        let d = self.grid.dim as f64;
        let fz = self.freeze(s, dt)?;
        let out = self.step1_with(s, &fz)?;
        let (u, pr) = self.step2_project(&out.u_tilde, &s.p, dt)?;
        let prev = s.warm.as_ref().filter(|w| w.dt == dt).map(|w| w.last.clone());
        let warm = Some(WarmStart { dt, last: out.solution, prev });
        let next = SchemeState { q: out.q, u, p: pr, r: out.r, t: s.t + dt, step: s.step + 1, warm };

        let energy_before = self.modified_energy(s, dt);
        let energy_after = self.modified_energy(&next, dt);
        let grad_u_norm_sq = forward_grad_sq(&out.u_tilde, Ghost::Odd);
        let g_norm_sq = inner_unchecked(&out.g, &out.g);
        let dissipation_residual = energy_after - energy_before + p.eta * dt * grad_u_norm_sq + p.m * dt * g_norm_sq;

        let dq = next.q.lin_comb(1.0, &s.q, -1.0);
        let du = out.u_tilde.lin_comb(1.0, &s.u, -1.0);
        let dr = next.r - s.r;
        let numerical_dissipation = 0.5 * p.k * forward_grad_sq(&dq, self.q_ghost().homogeneous())
            + 0.5 * p.s_q * inner_unchecked(&dq, &dq)
            + 0.5 * inner_unchecked(&du, &du)
            + dr * dr;
        let trace_term = match self.cfg.stress {
            StressForm::Model => {
                let div_ut = div_c(&out.u_tilde, Ghost::Odd);
                let mut qg = Field::zeros(&self.grid, FieldKind::Scalar);
                for c in 0..qg.ncells() {
                    qg.data[c] = fz.q0_cells[c].ddot(&out.g.tensor_at(c));
                }
                dt * 2.0 * p.a / d * inner_unchecked(&qg, &div_ut)
            }
            StressForm::PressureAbsorbed => 0.0,
        };
        let identity_defect = dissipation_residual + numerical_dissipation + trace_term;
        let r_update_residual = next.r - s.r - 0.5 * inner_unchecked(&fz.v0, &dq);
        let r_consistency = (next.r - (bulk_integral(&next.q, p) + p.c0).max(0.0).sqrt()).abs();

        let mut before = out.u_tilde.clone();
        before.axpy(dt, &grad_c(&s.p, Ghost::Even));
        let mut after = next.u.clone();
        after.axpy(dt, &grad_c(&next.p, Ghost::Even));
        let reassembly_residual = linf_norm(&after.lin_comb(1.0, &before, -1.0)) / linf_norm(&before).max(f64::MIN_POSITIVE);

        let audit_tol = self.audit_tol(energy_before, s.r);
        let audit_passed = dissipation_residual <= audit_tol;
        let report = StepReport {
            solver: out.report,
            energy_before,
            energy_after,
            dissipation_residual,
            audit_tol,
            audit_passed,
            grad_u_norm_sq,
            g_norm_sq,
            r_consistency,
            r_update_residual,
            numerical_dissipation,
            trace_term,
            identity_defect,
            div_max: div_c(&next.u, Ghost::Odd).max_abs(),
            reassembly_residual,
            linf_q: linf_norm(&next.q),
        };
        if !next.q.is_finite() || !next.u.is_finite() {
            return Err(Error::NonFinite { iterations: report.solver.iterations });
        }
        if !audit_passed {
            match self.cfg.audit {
                AuditMode::Abort => {
                    return Err(Error::AuditFailed { step: next.step, residual: dissipation_residual, tol: audit_tol })
                }
                AuditMode::Warn => log::warn!(
                    "step {}: dissipation residual {:.3e} exceeds {:.3e}",
                    next.step,
                    dissipation_residual,
                    audit_tol
                ),
            }
        }
        Ok((next, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{inner_product_h, norm_h};
    use crate::grid::{Boundary, GridSpec};
    use crate::ops::grad_c;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(n: usize, bc: Boundary) -> Arc<Grid> {
        Grid::new(GridSpec::uniform(2, n, 1.0, bc)).unwrap()
    }

    fn stepper(g: &Arc<Grid>) -> SavStepper {
        SavStepper::new(g, ModelParams::default(), QBoundary::Neumann, StepperConfig::default()).unwrap()
    }

    fn defect(x: [f64; 3], eps: f64, o: &mut [f64]) {
        let (a, b) = (x[0] - 0.25, x[1] - 0.25);
        let s = a * a + b * b;
        let den = s + eps * eps;
        o[0] = (a * a - 0.5 * s) / den;
        o[1] = a * b / den;
    }

    fn accuracy_ic(x: [f64; 3], o: &mut [f64]) {
        let n0 = (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin();
        o[0] = 0.5 * n0 * n0;
        o[1] = 0.0;
    }

    fn smooth_state(g: &Arc<Grid>) -> (Field, Field) {
        let q = Field::from_fn(g, FieldKind::Tensor, |x, o| {
            o[0] = 0.3 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos();
            o[1] = 0.2 * (2.0 * PI * x[0]).cos();
        });
        let u = Field::from_fn(g, FieldKind::Vector, |x, o| {
            o[0] = 0.1 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos();
            o[1] = -0.1 * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin();
        });
        (q, u)
    }

    fn random_field(g: &Arc<Grid>, kind: FieldKind, amp: f64, rng: &mut ChaCha8Rng) -> Field {
        let mut f = Field::zeros(g, kind);
        f.data.iter_mut().for_each(|v| *v = rng.gen_range(-amp..amp));
        f
    }

    /// Midpoint quadrature of the 2D bulk part of `E1` written out in
    /// components: `(alpha - S_Q)/2 t + gamma/4 t^2`, `t = 2 (q11^2 + q12^2)`.
    fn e1_oracle(n: usize, p: &ModelParams, q: impl Fn([f64; 3], &mut [f64])) -> f64 {
        let h = 1.0 / n as f64;
        let mut sum = 0.0;
        let mut o = [0.0; 2];
        for j in 0..n {
            for i in 0..n {
                q([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, 0.0], &mut o);
                let t = 2.0 * (o[0] * o[0] + o[1] * o[1]);
                sum += 0.5 * (p.alpha - p.s_q) * t + 0.25 * p.gamma * t * t;
            }
        }
        sum * h * h + p.c0
    }

    #[test]
    fn e1_of_zero_is_c0() {
        let g = grid(8, Boundary::Periodic);
        let z = Field::zeros(&g, FieldKind::Tensor);
        assert_eq!(compute_e1(&z, &ModelParams::default()).unwrap(), 10.0);
        let p = ModelParams { s_q: 0.0, c0: 3.5, ..ModelParams::default() };
        assert_eq!(compute_e1(&z, &p).unwrap(), 3.5);
    }

    #[test]
    fn e1_rejects_insufficient_shift() {
        let g = grid(8, Boundary::Periodic);
        let q = Field::from_fn(&g, FieldKind::Tensor, |_, o| o[0] = 0.5);
        let p = ModelParams { c0: 1e-3, ..ModelParams::default() };
        assert!(matches!(compute_e1(&q, &p), Err(Error::NonPositiveE1 { .. })));
        assert!(compute_v(&q, &p).is_err());
    }

    #[test]
    fn e1_of_defect_matches_refined_quadrature() {
        let p = ModelParams::default();
        let n = 64;
        let eps = 1.0 / n as f64;
        let g = grid(n, Boundary::Periodic);
        let q = Field::from_fn(&g, FieldKind::Tensor, |x, o| defect(x, eps, o));
        let e1 = compute_e1(&q, &p).unwrap();
        let fine = e1_oracle(256, &p, |x, o| defect(x, eps, o));
        let h = 1.0 / n as f64;
        assert!((e1 - fine).abs() <= 10.0 * h * h, "{e1} vs {fine}");
        // Same-resolution oracle agrees to rounding.
        let same = e1_oracle(n, &p, |x, o| defect(x, eps, o));
        assert!((e1 - same).abs() <= 1e-12 * e1);
    }

    #[test]
    fn v_reassembles_stabilized_force() {
        let p = ModelParams::default();
        let g = grid(16, Boundary::Periodic);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = random_field(&g, FieldKind::Tensor, 0.4, &mut rng);
        let v = compute_v(&q, &p).unwrap();
        let root = compute_e1(&q, &p).unwrap().sqrt();
        for c in 0..g.ncells() {
            let (a, b) = (q.at(0, c), q.at(1, c));
            let t = 2.0 * (a * a + b * b);
            let f = p.alpha + p.gamma * t - p.s_q;
            for (k, comp) in [a, b].iter().enumerate() {
                let expect = f * comp;
                assert!((v.at(k, c) * root - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            }
        }
        let z = compute_v(&Field::zeros(&g, FieldKind::Tensor), &p).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn init_state_sets_auxiliary_and_projects() {
        let g = grid(16, Boundary::Periodic);
        let st = stepper(&g);
        let s = st.init_state(Field::zeros(&g, FieldKind::Tensor), Field::zeros(&g, FieldKind::Vector)).unwrap();
        assert!((s.r - 10f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.p.max_abs(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = random_field(&g, FieldKind::Scalar, 1.0, &mut rng);
        let s = st.init_state(Field::zeros(&g, FieldKind::Tensor), grad_c(&f, Ghost::Even)).unwrap();
        assert!(s.u.max_abs() <= 1e-11);
        assert!(st.init_state(Field::zeros(&g, FieldKind::Vector), Field::zeros(&g, FieldKind::Vector)).is_err());
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        for bc in [Boundary::Periodic, Boundary::Wall] {
            let g = grid(16, bc);
            let st = stepper(&g);
            let s = st.init_state(Field::zeros(&g, FieldKind::Tensor), Field::zeros(&g, FieldKind::Vector)).unwrap();
            let out = st.step1_solve(&s, 0.1).unwrap();
            assert_eq!(out.q.max_abs(), 0.0);
            assert_eq!(out.u_tilde.max_abs(), 0.0);
            assert_eq!(out.g.max_abs(), 0.0);
            assert_eq!(out.r, s.r);
            assert!(st.modified_energy(&s, 0.1).abs() <= 1e-14);
            let (n, rep) = st.advance(&s, 0.1).unwrap();
            assert_eq!(n.q.max_abs() + n.u.max_abs() + n.p.max_abs(), 0.0);
            assert_eq!(rep.dissipation_residual, 0.0);
            assert_eq!(n.step, 1);
        }
    }

    #[test]
    fn r_update_holds_and_energy_identity_is_exact() {
        let g = grid(32, Boundary::Periodic);
        let eps = g.h[0];
        let st = stepper(&g);
        let q = Field::from_fn(&g, FieldKind::Tensor, |x, o| defect(x, eps, o));
        let mut s = st.init_state(q, Field::zeros(&g, FieldKind::Vector)).unwrap();
        for dt in [1e-4, 1e-2, 0.1, 1.0] {
            let (n, rep) = st.advance(&s, dt).unwrap();
            assert!(rep.solver.relative_residual <= 1e-10);
            assert!(rep.r_update_residual.abs() <= 1e-13, "{}", rep.r_update_residual);
            assert!(rep.dissipation_residual <= rep.audit_tol);
            assert!(rep.numerical_dissipation >= 0.0);
            assert!(rep.identity_defect.abs() <= rep.audit_tol, "{dt}: {}", rep.identity_defect);
            assert!(rep.div_max <= 1e-10);
            assert!(rep.reassembly_residual <= 1e-12);
            assert!(rep.energy_after <= rep.energy_before);
            s = n;
        }
    }

    #[test]
    fn model_stress_defect_is_the_trace_term() {
        let g = grid(32, Boundary::Periodic);
        let eps = g.h[0];
        let cfg = StepperConfig { stress: StressForm::Model, ..StepperConfig::default() };
        let st = SavStepper::new(&g, ModelParams::default(), QBoundary::Neumann, cfg).unwrap();
        let q = Field::from_fn(&g, FieldKind::Tensor, |x, o| defect(x, eps, o));
        let s = st.init_state(q, Field::zeros(&g, FieldKind::Vector)).unwrap();
        let (_, rep) = st.advance(&s, 1e-3).unwrap();
        assert!(rep.trace_term.abs() > 1e3 * rep.audit_tol);
        assert!(rep.identity_defect.abs() <= rep.audit_tol);
    }

    #[test]
    fn one_step_local_error_is_second_order() {
        // One step of size dt against 64 steps of dt/64; the local error of a
        // first-order scheme scales like dt^2.
        let g = grid(32, Boundary::Periodic);
        let st = stepper(&g);
        let (q, u) = smooth_state(&g);
        let s0 = st.init_state(q, u).unwrap();
        let local = |dt: f64| {
            let (one, _) = st.advance(&s0, dt).unwrap();
            let mut r = s0.clone();
            for _ in 0..64 {
                r = st.advance(&r, dt / 64.0).unwrap().0;
            }
            (norm_h(&one.q.lin_comb(1.0, &r.q, -1.0)), norm_h(&one.u.lin_comb(1.0, &r.u, -1.0)))
        };
        let (eq1, eu1) = local(2e-3);
        let (eq2, eu2) = local(1e-3);
        assert!(eq1 > 0.0 && eu1 > 0.0);
        let (rq, ru) = (eq1 / eq2, eu1 / eu2);
        assert!((3.2..4.8).contains(&rq), "Q ratio {rq}");
        assert!((3.2..4.8).contains(&ru), "u ratio {ru}");
    }

    #[test]
    fn projection_examples() {
        let g = grid(32, Boundary::Periodic);
        let st = stepper(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p0 = random_field(&g, FieldKind::Scalar, 1.0, &mut rng);
        let (_, u) = smooth_state(&g);
        let (u_div_free, _) = st.projector.project(&u).unwrap();
        let (u1, p1) = st.step2_project(&u_div_free, &p0, 0.1).unwrap();
        assert!(u1.lin_comb(1.0, &u_div_free, -1.0).max_abs() <= 1e-12);
        assert!(p1.lin_comb(1.0, &p0, -1.0).max_abs() <= 1e-10);

        let mut f = random_field(&g, FieldKind::Scalar, 1.0, &mut rng);
        let m = f.mean_comp(0);
        f.data.iter_mut().for_each(|v| *v -= m);
        let (u1, _) = st.step2_project(&grad_c(&f, Ghost::Even), &p0, 0.05).unwrap();
        assert!(u1.max_abs() <= 1e-11);

        let dt = 0.05;
        let ut = random_field(&g, FieldKind::Vector, 1.0, &mut rng);
        let (u1, p1) = st.step2_project(&ut, &p0, dt).unwrap();
        assert!(div_c(&u1, Ghost::Odd).max_abs() <= 1e-10);
        let mut lhs = u1.clone();
        lhs.axpy(dt, &grad_c(&p1, Ghost::Even));
        let mut rhs = ut.clone();
        rhs.axpy(dt, &grad_c(&p0, Ghost::Even));
        assert!(lhs.lin_comb(1.0, &rhs, -1.0).max_abs() <= 1e-12 * rhs.max_abs());
    }

    /// Continuous `K/2 |grad Q|^2 + int F_B` for the accuracy initial data,
    /// by midpoint quadrature with the analytic gradient.
    fn accuracy_energy_oracle(n: usize, p: &ModelParams) -> f64 {
        let h = 1.0 / n as f64;
        let mut sum = 0.0;
        for j in 0..n {
            for i in 0..n {
                let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                let (sx, cx, sy, cy) = ((2.0 * PI * x).sin(), (2.0 * PI * x).cos(), (2.0 * PI * y).sin(), (2.0 * PI * y).cos());
                let n0 = sx * sy;
                let q11 = 0.5 * n0 * n0;
                // d q11 = n0 d n0; |grad Q|^2 = 2 |grad q11|^2 (q12 = 0).
                let gx = n0 * 2.0 * PI * cx * sy;
                let gy = n0 * 2.0 * PI * sx * cy;
                let t = 2.0 * q11 * q11;
                sum += 0.5 * p.k * 2.0 * (gx * gx + gy * gy) + 0.5 * p.alpha * t + 0.25 * p.gamma * t * t;
            }
        }
        sum * h * h
    }

    #[test]
    fn modified_energy_matches_refined_quadrature() {
        let p = ModelParams::default();
        let oracle = accuracy_energy_oracle(1024, &p);
        let err = |n: usize| {
            let g = grid(n, Boundary::Wall);
            let bd = BoundaryData::from_fn(&g, FieldKind::Tensor, accuracy_ic);
            let st = SavStepper::new(&g, p, QBoundary::Dirichlet(bd), StepperConfig::default()).unwrap();
            let q = Field::from_fn(&g, FieldKind::Tensor, accuracy_ic);
            let s = st.init_state(q, Field::zeros(&g, FieldKind::Vector)).unwrap();
            (st.modified_energy(&s, 1e-3) - oracle).abs()
        };
        let (e32, e64) = (err(32), err(64));
        let h = 1.0 / 64.0;
        assert!(e64 < 0.1 * h * h, "{e64}");
        assert!(e32 / e64 > 3.5, "{e32} {e64}");
    }

    #[test]
    fn wall_energy_is_non_increasing() {
        let g = grid(32, Boundary::Wall);
        let bd = BoundaryData::from_fn(&g, FieldKind::Tensor, accuracy_ic);
        let st = SavStepper::new(&g, ModelParams::default(), QBoundary::Dirichlet(bd), StepperConfig::default()).unwrap();
        let q = Field::from_fn(&g, FieldKind::Tensor, accuracy_ic);
        let mut s = st.init_state(q, Field::zeros(&g, FieldKind::Vector)).unwrap();
        for _ in 0..20 {
            let (n, rep) = st.advance(&s, 8e-5).unwrap();
            assert!(rep.energy_after <= rep.energy_before);
            assert!(rep.r_update_residual.abs() <= 1e-13);
            s = n;
        }
    }

    #[test]
    fn audit_abort_mode_reports_violations() {
        let g = grid(64, Boundary::Periodic);
        let cfg = StepperConfig { stress: StressForm::Model, audit: AuditMode::Abort, ..StepperConfig::default() };
        let st = SavStepper::new(&g, ModelParams::default(), QBoundary::Neumann, cfg).unwrap();
        let eps = g.h[0];
        let q = Field::from_fn(&g, FieldKind::Tensor, |x, o| defect(x, eps, o));
        let mut s = st.init_state(q, Field::zeros(&g, FieldKind::Vector)).unwrap();
        let mut failed = false;
        for _ in 0..5 {
            match st.advance(&s, 1e-4) {
                Ok((n, rep)) => {
                    assert!(rep.audit_passed);
                    s = n;
                }
                Err(Error::AuditFailed { residual, tol, .. }) => {
                    assert!(residual > tol);
                    failed = true;
                    break;
                }
                Err(e) => panic!("{e}"),
            }
        }
        assert!(failed, "the literal stress should trip the audit at small dt");
    }

    #[test]
    fn three_dimensional_smoke() {
        let g = Grid::new(GridSpec::uniform(3, 8, 1.0, Boundary::Periodic)).unwrap();
        let st = stepper(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let q = random_field(&g, FieldKind::Tensor, 0.2, &mut rng);
        let u = random_field(&g, FieldKind::Vector, 0.1, &mut rng);
        let mut s = st.init_state(q, u).unwrap();
        for _ in 0..3 {
            let (n, rep) = st.advance(&s, 0.01).unwrap();
            assert!(rep.identity_defect.abs() <= rep.audit_tol);
            assert!(rep.div_max <= 1e-10);
            s = n;
        }
        let p = ModelParams { beta: 0.5, ..ModelParams::default() };
        let st = SavStepper::new(&g, p, QBoundary::Neumann, StepperConfig::default()).unwrap();
        let (_, rep) = st.advance(&st.init_state(s.q.clone(), s.u.clone()).unwrap(), 0.01).unwrap();
        assert!(rep.identity_defect.abs() <= rep.audit_tol);
        let _ = inner_product_h(&s.q, &s.q).unwrap();
    }
}
