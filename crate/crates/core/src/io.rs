//! Legacy VTK snapshots and CSV time series.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Field, FieldKind};
use crate::grid::Grid;
use crate::stepper::StepReport;

/// Writes cell-centered fields as legacy ASCII `STRUCTURED_POINTS` point
/// data. Tensors are split into one `SCALARS` array per stored component;
/// 2D vectors get a zero third component.
pub fn write_vtk<W: Write>(mut w: W, title: &str, grid: &Grid, fields: &[(&str, &Field)]) -> Result<()> {
    let n = grid.n;
    let h = grid.h;
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", n[0], n[1], n[2])?;
    let origin: Vec<f64> = (0..3).map(|k| if k < grid.dim { 0.5 * h[k] } else { 0.0 }).collect();
    writeln!(w, "ORIGIN {:e} {:e} {:e}", origin[0], origin[1], origin[2])?;
    writeln!(w, "SPACING {:e} {:e} {:e}", h[0], h[1], h[2])?;
    writeln!(w, "POINT_DATA {}", grid.ncells())?;
    for (name, f) in fields {
        if !f.grid().same_as(grid) {
            return Err(Error::FieldMismatch(format!("field {name} is on another grid")));
        }
        let name = name.replace(char::is_whitespace, "_");
        match f.kind() {
            FieldKind::Scalar => write_scalars(&mut w, &name, f.comp(0))?,
            FieldKind::Vector => {
                writeln!(w, "VECTORS {name} double")?;
                for c in 0..grid.ncells() {
                    let v = f.vector_at(c);
                    writeln!(w, "{:e} {:e} {:e}", v[0], v[1], if grid.dim == 3 { v[2] } else { 0.0 })?;
                }
            }
            FieldKind::Tensor => {
                let labels: &[&str] = if grid.dim == 2 { &["11", "12"] } else { &["11", "12", "13", "22", "23"] };
                for (c, l) in labels.iter().enumerate() {
                    write_scalars(&mut w, &format!("{name}{l}"), f.comp(c))?;
                }
            }
            FieldKind::Matrix => {
                for c in 0..f.ncomp() {
                    write_scalars(&mut w, &format!("{name}{}{}", c / grid.dim + 1, c % grid.dim + 1), f.comp(c))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_scalars<W: Write>(w: &mut W, name: &str, data: &[f64]) -> Result<()> {
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in data {
        writeln!(w, "{v:e}")?;
    }
    Ok(())
}

pub fn write_vtk_file(path: &Path, title: &str, grid: &Grid, fields: &[(&str, &Field)]) -> Result<()> {
    write_vtk(BufWriter::new(File::create(path)?), title, grid, fields)
}

/// File name of the snapshot at time `t`, e.g. `snap_0.5.vtk`.
pub fn snapshot_name(t: f64) -> String {
    format!("snap_{t}.vtk")
}

/// One time-series row.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRecord {
    pub dt: f64,
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub grad_u_norm_sq: f64,
    pub g_norm_sq: f64,
    pub r: f64,
    pub linf_q: f64,
    pub dissipation_residual: f64,
    pub audit_tol: f64,
    pub iterations: usize,
    pub solver_residual: f64,
    pub div_max: f64,
    pub r_consistency: f64,
}

impl SeriesRecord {
    pub const HEADER: [&'static str; 14] = [
        "dt",
        "step",
        "t",
        "energy",
        "grad_u_norm_sq",
        "G_norm_sq",
        "r",
        "linf_Q",
        "dissipation_residual",
        "audit_tol",
        "iterations",
        "solver_residual",
        "div_max",
        "r_consistency",
    ];

    pub fn from_report(dt: f64, step: usize, t: f64, r: f64, rep: &StepReport) -> Self {
        SeriesRecord {
            dt,
            step,
            t,
            energy: rep.energy_after,
            grad_u_norm_sq: rep.grad_u_norm_sq,
            g_norm_sq: rep.g_norm_sq,
            r,
            linf_q: rep.linf_q,
            dissipation_residual: rep.dissipation_residual,
            audit_tol: rep.audit_tol,
            iterations: rep.solver.iterations,
            solver_residual: rep.solver.relative_residual,
            div_max: rep.div_max,
            r_consistency: rep.r_consistency,
        }
    }

    fn fields(&self) -> [String; 14] {
        [
            format!("{:e}", self.dt),
            self.step.to_string(),
            format!("{:e}", self.t),
            format!("{:e}", self.energy),
            format!("{:e}", self.grad_u_norm_sq),
            format!("{:e}", self.g_norm_sq),
            format!("{:e}", self.r),
            format!("{:e}", self.linf_q),
            format!("{:e}", self.dissipation_residual),
            format!("{:e}", self.audit_tol),
            self.iterations.to_string(),
            format!("{:e}", self.solver_residual),
            format!("{:e}", self.div_max),
            format!("{:e}", self.r_consistency),
        ]
    }
}

pub fn write_series<W: Write>(w: W, records: &[SeriesRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SeriesRecord::HEADER)?;
    for r in records {
        out.write_record(r.fields())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_series_file(path: &Path, records: &[SeriesRecord]) -> Result<()> {
    write_series(BufWriter::new(File::create(path)?), records)
}
