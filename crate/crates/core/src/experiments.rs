//! The reproduction experiments: time-step sweeps for temporal accuracy,
//! defect dynamics, and the energy audit over a range of step sizes.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::config::{Experiment, ExperimentConfig, Initial, QBc};
use crate::diagnostics::{convergence_table, director_field, winding_number, ConvergenceTable};
use crate::error::{Error, Result};
use crate::field::{linf_norm, BoundaryData, Field, FieldKind};
use crate::grid::{Boundary, Grid};
use crate::io::{snapshot_name, write_series_file, write_vtk_file, SeriesRecord};
use crate::stepper::{QBoundary, SavStepper, SchemeState, StepReport};

/// Writes `Q0` for the initial condition `init` at `x` into `o`.
///
/// Every family is `w (n n^T - |n|^2/d I)` for a planar `n`; the defect
/// uses `w = 1 / (|n|^2 + eps^2)`, the smooth families `w = 1`.
pub fn initial_q(init: Initial, dim: usize, len: [f64; 3], eps: f64, x: [f64; 3], o: &mut [f64]) {
    use std::f64::consts::PI;
    let (sx, sy) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin());
    let (cx, cy) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos());
    let (n, w) = match init {
        Initial::Accuracy1 => ([sx * sy, 0.0], 1.0),
        Initial::Accuracy2 => ([sx * sy, cx * cy], 1.0),
        Initial::Defect => {
            let n = [x[0] - 0.25 * len[0], x[1] - 0.25 * len[1]];
            (n, 1.0 / (n[0] * n[0] + n[1] * n[1] + eps * eps))
        }
    };
    let iso = (n[0] * n[0] + n[1] * n[1]) / dim as f64;
    o[0] = w * (n[0] * n[0] - iso);
    o[1] = w * n[0] * n[1];
    if dim == 3 {
        o[2] = 0.0;
        o[3] = w * (n[1] * n[1] - iso);
        o[4] = 0.0;
    }
}

/// Counters and extremes over the steps of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub dt: f64,
    pub steps: usize,
    pub energy_initial: f64,
    pub energy_final: f64,
    /// Steps where the modified energy went up at all.
    pub energy_increases: usize,
    /// Steps that failed the audit.
    pub audit_failures: usize,
    /// Largest `dissipation_residual - audit_tol`.
    pub worst_audit_margin: f64,
    pub max_iterations: usize,
    pub max_solver_residual: f64,
    pub unconverged: usize,
    pub max_div: f64,
    pub max_reassembly: f64,
    pub max_r_update: f64,
    pub linf_initial: f64,
    pub linf_max: f64,
    pub r_consistency_final: f64,
}

impl RunStats {
    fn new(dt: f64, energy: f64, linf: f64) -> Self {
        RunStats {
            dt,
            steps: 0,
            energy_initial: energy,
            energy_final: energy,
            energy_increases: 0,
            audit_failures: 0,
            worst_audit_margin: f64::NEG_INFINITY,
            max_iterations: 0,
            max_solver_residual: 0.0,
            unconverged: 0,
            max_div: 0.0,
            max_reassembly: 0.0,
            max_r_update: 0.0,
            linf_initial: linf,
            linf_max: linf,
            r_consistency_final: 0.0,
        }
    }

    fn record(&mut self, rep: &StepReport) {
        self.steps += 1;
        self.energy_final = rep.energy_after;
        self.energy_increases += usize::from(rep.energy_after > rep.energy_before);
        self.audit_failures += usize::from(!rep.audit_passed);
        self.worst_audit_margin = self.worst_audit_margin.max(rep.dissipation_residual - rep.audit_tol);
        self.max_iterations = self.max_iterations.max(rep.solver.iterations);
        self.max_solver_residual = self.max_solver_residual.max(rep.solver.relative_residual);
        self.unconverged += usize::from(!rep.solver.converged);
        self.max_div = self.max_div.max(rep.div_max);
        self.max_reassembly = self.max_reassembly.max(rep.reassembly_residual);
        self.max_r_update = self.max_r_update.max(rep.r_update_residual.abs());
        self.linf_max = self.linf_max.max(rep.linf_q);
        self.r_consistency_final = rep.r_consistency;
    }
}

/// Stepper and initial state for a config.
pub fn setup(cfg: &ExperimentConfig) -> Result<(SavStepper, SchemeState)> {
    cfg.validate()?;
    let grid = Grid::new(cfg.grid_spec())?;
    let eps = cfg.epsilon.unwrap_or(grid.h[0]);
    let (init, dim, len) = (cfg.initial, grid.dim, grid.len);
    let ic = move |x: [f64; 3], o: &mut [f64]| initial_q(init, dim, len, eps, x, o);
    let q0 = Field::from_fn(&grid, FieldKind::Tensor, ic);
    let qbc = match (grid.bc, cfg.q_bc) {
        (Boundary::Wall, QBc::Dirichlet) => QBoundary::Dirichlet(BoundaryData::from_fn(&grid, FieldKind::Tensor, ic)),
        _ => QBoundary::Neumann,
    };
    let stepper = SavStepper::new(&grid, cfg.params, qbc, cfg.stepper_config())?;
    let state = stepper.init_state(q0, Field::zeros(&grid, FieldKind::Vector))?;
    Ok((stepper, state))
}

/// Number of steps of size `dt` reaching `t`; `t` must be a multiple of `dt`.
pub fn steps_to(t: f64, dt: f64) -> Result<usize> {
    let n = (t / dt).round();
    if (n * dt - t).abs() > 1e-9 * t.abs().max(dt) {
        return Err(Error::Experiment(format!("time {t} is not a multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

/// Runs `nsteps` steps, calling `each` after every step. Errors are tagged
/// with `dt`.
fn integrate(
    stepper: &SavStepper,
    mut state: SchemeState,
    dt: f64,
    nsteps: usize,
    log_every: usize,
    mut each: impl FnMut(&SchemeState, &StepReport) -> Result<()>,
) -> Result<(SchemeState, RunStats)> {
    let tag = |e: Error| Error::Run { dt, source: Box::new(e) };
    let mut stats = RunStats::new(dt, stepper.modified_energy(&state, dt), linf_norm(&state.q));
    for k in 0..nsteps {
        let (next, rep) = stepper.advance(&state, dt).map_err(tag)?;
        stats.record(&rep);
        each(&next, &rep).map_err(tag)?;
        if log_every > 0 && (k + 1) % log_every == 0 {
            log::info!(
                "dt = {dt:e}: step {}/{nsteps}, t = {:.6}, E = {:.9e}, {} iterations",
                k + 1,
                next.t,
                rep.energy_after,
                rep.solver.iterations
            );
        }
        state = next;
    }
    Ok((state, stats))
}

fn prepare_output(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AccuracyOutcome {
    pub table: ConvergenceTable,
    /// One entry per run, largest step first.
    pub runs: Vec<RunStats>,
    pub table_path: PathBuf,
}

/// Time-step sweep `dt / 2^k`, `k < levels`, to `t_end`; writes `table.csv`
/// and `runs.csv`.
pub fn run_accuracy(cfg: &ExperimentConfig) -> Result<AccuracyOutcome> {
    if !matches!(cfg.experiment, Experiment::Accuracy1 | Experiment::Accuracy2) {
        return Err(Error::Experiment(format!("run_accuracy called for {}", cfg.experiment)));
    }
    cfg.validate()?;
    prepare_output(&cfg.output)?;
    let dts: Vec<f64> = (0..cfg.levels).map(|k| cfg.dt / f64::powi(2.0, k as i32)).collect();
    let counts = dts.iter().map(|&dt| steps_to(cfg.t_end, dt)).collect::<Result<Vec<_>>>()?;
    // Runs are independent: hand them out to worker threads, each with its
    // own stepper. Results are stored by level, so output does not depend
    // on scheduling.
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<(SchemeState, RunStats)>>>> = Mutex::new((0..cfg.levels).map(|_| None).collect());
    let workers = cfg.threads.clamp(1, cfg.levels);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let (stepper, s0) = match setup(cfg) {
                    Ok(v) => v,
                    Err(e) => {
                        let k = next.fetch_add(1, Ordering::SeqCst);
                        if k < dts.len() {
                            results.lock().unwrap()[k] = Some(Err(Error::Run { dt: dts[k], source: Box::new(e) }));
                        }
                        return;
                    }
                };
                loop {
                    let k = next.fetch_add(1, Ordering::SeqCst);
                    if k >= dts.len() {
                        break;
                    }
                    log::info!("{}: dt = {:e}, {} steps", cfg.experiment, dts[k], counts[k]);
                    let res = integrate(&stepper, s0.clone(), dts[k], counts[k], cfg.log_every, |_, _| Ok(()));
                    let failed = res.is_err();
                    results.lock().unwrap()[k] = Some(res);
                    if failed {
                        // Stop handing out work; the sweep is aborted.
                        next.store(dts.len(), Ordering::SeqCst);
                    }
                }
            });
        }
    });
    let mut finals = Vec::with_capacity(cfg.levels);
    let mut runs = Vec::with_capacity(cfg.levels);
    for (k, res) in results.into_inner().unwrap().into_iter().enumerate() {
        match res {
            Some(Ok((state, stats))) => {
                finals.push((dts[k], state));
                runs.push(stats);
            }
            Some(Err(e)) => return Err(e),
            None => return Err(Error::Experiment(format!("run with dt = {:e} was not completed", dts[k]))),
        }
    }
    let table = convergence_table(&finals)?;
    let table_path = cfg.output.join("table.csv");
    table.write_csv(fs::File::create(&table_path)?)?;
    write_runs(&cfg.output.join("runs.csv"), &runs)?;
    Ok(AccuracyOutcome { table, runs, table_path })
}

fn write_runs(path: &Path, runs: &[RunStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "dt",
        "steps",
        "energy_initial",
        "energy_final",
        "energy_increases",
        "audit_failures",
        "max_iterations",
        "max_solver_residual",
        "max_div",
        "linf_initial",
        "linf_max",
        "r_consistency_final",
    ])?;
    for r in runs {
        w.write_record([
            format!("{:e}", r.dt),
            r.steps.to_string(),
            format!("{:e}", r.energy_initial),
            format!("{:e}", r.energy_final),
            r.energy_increases.to_string(),
            r.audit_failures.to_string(),
            r.max_iterations.to_string(),
            format!("{:e}", r.max_solver_residual),
            format!("{:e}", r.max_div),
            format!("{:e}", r.linf_initial),
            format!("{:e}", r.linf_max),
            format!("{:e}", r.r_consistency_final),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrajectoryOutcome {
    pub series: Vec<SeriesRecord>,
    pub stats: RunStats,
    pub snapshots: Vec<PathBuf>,
    /// Director winding number about the defect site at `t = 0` (defect
    /// initial condition in 2D only).
    pub initial_winding: Option<f64>,
    pub final_state: SchemeState,
}

impl TrajectoryOutcome {
    /// `|E(t_end) - E(t_end/2)| / |E(0) - E(t_end)|`: the share of the total
    /// energy decay that happened in the second half of the run.
    pub fn plateau_ratio(&self) -> f64 {
        let n = self.series.len();
        if n < 2 {
            return f64::NAN;
        }
        let e_end = self.series[n - 1].energy;
        let e_half = self.series[n / 2 - 1].energy;
        (e_end - e_half).abs() / (self.stats.energy_initial - e_end).abs()
    }
}

fn write_snapshot(dir: &Path, s: &SchemeState, t: f64) -> Result<PathBuf> {
    let (n, order) = director_field(&s.q);
    let path = dir.join(snapshot_name(t));
    let title = format!("t = {t}");
    write_vtk_file(&path, &title, s.q.grid(), &[("director", &n), ("s", &order), ("Q", &s.q), ("u", &s.u), ("p", &s.p)])?;
    Ok(path)
}

/// Integrates to `t_end` with step `dt`; writes `series.csv` and a VTK
/// snapshot at each requested time. Used by the defect and custom runs.
pub fn run_trajectory(cfg: &ExperimentConfig) -> Result<TrajectoryOutcome> {
    let (stepper, s0) = setup(cfg)?;
    prepare_output(&cfg.output)?;
    let dt = cfg.dt;
    let nsteps = steps_to(cfg.t_end, dt)?;
    let mut snap_steps: Vec<(usize, f64)> =
        cfg.snapshots.iter().map(|&t| steps_to(t, dt).map(|k| (k, t))).collect::<Result<_>>()?;
    snap_steps.sort_by(|a, b| a.0.cmp(&b.0));

    let grid: &Arc<Grid> = stepper.grid();
    let initial_winding = if cfg.initial == Initial::Defect && grid.dim == 2 {
        let center = [0.25 * grid.len[0], 0.25 * grid.len[1]];
        Some(winding_number(&s0.q, center, 0.1 * grid.len[0].min(grid.len[1]))?)
    } else {
        None
    };

    let mut snapshots = Vec::new();
    for &(_, t) in snap_steps.iter().filter(|(k, _)| *k == 0) {
        snapshots.push(write_snapshot(&cfg.output, &s0, t)?);
    }
    let mut series = Vec::with_capacity(nsteps);
    let out = &cfg.output;
    let (final_state, stats) = integrate(&stepper, s0, dt, nsteps, cfg.log_every, |s, rep| {
        series.push(SeriesRecord::from_report(dt, s.step, s.t, s.r, rep));
        for &(_, t) in snap_steps.iter().filter(|(k, _)| *k == s.step) {
            snapshots.push(write_snapshot(out, s, t)?);
        }
        Ok(())
    })?;
    write_series_file(&cfg.output.join("series.csv"), &series)?;
    Ok(TrajectoryOutcome { series, stats, snapshots, initial_winding, final_state })
}

/// The defect experiment: [`run_trajectory`] from the regularized +1 defect.
pub fn run_defect(cfg: &ExperimentConfig) -> Result<TrajectoryOutcome> {
    if cfg.bc != Boundary::Periodic {
        return Err(Error::Experiment("the defect run needs a periodic box".into()));
    }
    let mut c = cfg.clone();
    c.initial = Initial::Defect;
    run_trajectory(&c)
}

#[derive(Debug, Clone)]
pub struct AuditOutcome {
    /// Every step of every step size, in order.
    pub records: Vec<SeriesRecord>,
    pub runs: Vec<RunStats>,
}

impl AuditOutcome {
    pub fn failures(&self) -> usize {
        self.runs.iter().map(|r| r.audit_failures).sum()
    }
}

/// `steps` steps from the defect state for each entry of `dt_list`; writes
/// every step to `series.csv`.
pub fn run_energy_audit(cfg: &ExperimentConfig) -> Result<AuditOutcome> {
    if cfg.bc != Boundary::Periodic {
        return Err(Error::Experiment("the energy audit needs a periodic box".into()));
    }
    let mut c = cfg.clone();
    c.initial = Initial::Defect;
    let (stepper, s0) = setup(&c)?;
    prepare_output(&cfg.output)?;
    let mut records = Vec::new();
    let mut runs = Vec::new();
    for &dt in &cfg.dt_list {
        log::info!("energy audit: dt = {dt:e}, {} steps", cfg.steps);
        let (_, stats) = integrate(&stepper, s0.clone(), dt, cfg.steps, cfg.log_every, |s, rep| {
            records.push(SeriesRecord::from_report(dt, s.step, s.t, s.r, rep));
            Ok(())
        })?;
        runs.push(stats);
    }
    write_series_file(&cfg.output.join("series.csv"), &records)?;
    Ok(AuditOutcome { records, runs })
}
