//! Fast inversion of constant-coefficient stencil operators.
//!
//! On periodic grids the stencils are diagonal in the discrete Fourier basis.
//! On wall grids, the compact Laplacian with odd (ghost = -interior) ghosts is
//! diagonal in the DST-II basis and with even ghosts in the DCT-II basis.

use std::sync::Arc;

use num_complex::Complex64;
use rustdct::{DctPlanner, TransformType2And3};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Ghost parity of a wall-grid field, selecting its sine or cosine basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

enum Plans {
    Periodic { fwd: Vec<Arc<dyn Fft<f64>>>, inv: Vec<Arc<dyn Fft<f64>>> },
    Wall { trig: Vec<Arc<dyn TransformType2And3<f64>>> },
}

/// Transform plans for one grid.
pub struct Spectral {
    grid: Arc<Grid>,
    plans: Plans,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.grid.n).field("bc", &self.grid.bc).finish()
    }
}

/// Applies `f` to every line of `data` along `axis`, with a scratch buffer
/// of `scratch_len` elements.
fn for_each_line<T: Copy + Default>(
    grid: &Grid,
    data: &mut [T],
    axis: usize,
    scratch_len: usize,
    mut f: impl FnMut(&mut [T], &mut [T]),
) {
    let n = grid.n;
    let len = n[axis];
    let mut scratch = vec![T::default(); scratch_len];
    if axis == 0 {
        for line in data.chunks_exact_mut(len) {
            f(line, &mut scratch);
        }
        return;
    }
    let stride: usize = n[..axis].iter().product();
    let mut line = vec![T::default(); len];
    for block in data.chunks_exact_mut(len * stride) {
        for inner in 0..stride {
            for (i, l) in line.iter_mut().enumerate() {
                *l = block[inner + i * stride];
            }
            f(&mut line, &mut scratch);
            for (i, l) in line.iter().enumerate() {
                block[inner + i * stride] = *l;
            }
        }
    }
}

impl Spectral {
    pub fn new(grid: &Arc<Grid>) -> Self {
        let plans = if grid.is_periodic() {
            let mut planner = FftPlanner::new();
            let fwd = (0..grid.dim).map(|k| planner.plan_fft_forward(grid.n[k])).collect();
            let inv = (0..grid.dim).map(|k| planner.plan_fft_inverse(grid.n[k])).collect();
            Plans::Periodic { fwd, inv }
        } else {
            let mut planner = DctPlanner::new();
            let trig = (0..grid.dim).map(|k| planner.plan_dct2(grid.n[k])).collect();
            Plans::Wall { trig }
        };
        Spectral { grid: grid.clone(), plans }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Mode multi-index, laid out like cells.
    fn mode_index(&self, m: usize) -> [usize; 3] {
        self.grid.index3(m)
    }

    /// Eigenvalues of the compact Laplacian, one per mode. `parity` is
    /// ignored on periodic grids.
    pub fn laplace_symbol(&self, parity: Parity) -> Vec<f64> {
        let g = &self.grid;
        (0..g.ncells())
            .map(|m| {
                let idx = self.mode_index(m);
                (0..g.dim)
                    .map(|k| {
                        let n = g.n[k] as f64;
                        let h2 = g.h[k] * g.h[k];
                        let theta = if g.is_periodic() {
                            std::f64::consts::PI * idx[k] as f64 / n
                        } else {
                            match parity {
                                Parity::Even => std::f64::consts::PI * idx[k] as f64 / (2.0 * n),
                                Parity::Odd => std::f64::consts::PI * (idx[k] + 1) as f64 / (2.0 * n),
                            }
                        };
                        -4.0 * theta.sin().powi(2) / h2
                    })
                    .sum()
            })
            .collect()
    }

    /// Eigenvalues of the wide Laplacian `div_c grad_c`. On wall grids this is
    /// `div_c` with odd ghosts after `grad_c` with even ghosts, in the cosine
    /// basis: both reflections are exact there, so the operator is diagonal.
    pub fn wide_laplace_symbol(&self) -> Vec<f64> {
        let g = &self.grid;
        let turn = if g.is_periodic() { 2.0 } else { 1.0 };
        (0..g.ncells())
            .map(|m| {
                let idx = self.mode_index(m);
                (0..g.dim)
                    .map(|k| {
                        let theta = turn * std::f64::consts::PI * idx[k] as f64 / g.n[k] as f64;
                        -theta.sin().powi(2) / (g.h[k] * g.h[k])
                    })
                    .sum()
            })
            .collect()
    }

    /// Modes where [`Self::wide_laplace_symbol`] vanishes: the central null
    /// modes when periodic, only the constant on walls.
    pub fn wide_null_modes(&self) -> Vec<usize> {
        if self.grid.is_periodic() {
            self.central_null_modes()
        } else {
            vec![0]
        }
    }

    /// Modes where every axis wavenumber is 0 or Nyquist; the central
    /// difference symbol vanishes on all of them.
    pub fn central_null_modes(&self) -> Vec<usize> {
        let g = &self.grid;
        (0..g.ncells())
            .filter(|&m| {
                let idx = self.mode_index(m);
                (0..g.dim).all(|k| idx[k] == 0 || 2 * idx[k] == g.n[k])
            })
            .collect()
    }

    fn forward_periodic(&self, rhs: &[f64]) -> Vec<Complex64> {
        let Plans::Periodic { fwd, .. } = &self.plans else { unreachable!() };
        let mut buf: Vec<Complex64> = rhs.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for (k, plan) in fwd.iter().enumerate() {
            for_each_line(&self.grid, &mut buf, k, plan.get_inplace_scratch_len(), |line, sc| {
                plan.process_with_scratch(line, sc)
            });
        }
        buf
    }

    fn inverse_periodic(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        let Plans::Periodic { inv, .. } = &self.plans else { unreachable!() };
        for (k, plan) in inv.iter().enumerate() {
            for_each_line(&self.grid, &mut buf, k, plan.get_inplace_scratch_len(), |line, sc| {
                plan.process_with_scratch(line, sc)
            });
        }
        let scale = 1.0 / self.grid.ncells() as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    fn forward_wall(&self, parity: Parity, data: &mut [f64]) {
        let Plans::Wall { trig } = &self.plans else { unreachable!() };
        for (k, plan) in trig.iter().enumerate() {
            for_each_line(&self.grid, data, k, plan.get_scratch_len(), |line, sc| match parity {
                Parity::Even => plan.process_dct2_with_scratch(line, sc),
                Parity::Odd => plan.process_dst2_with_scratch(line, sc),
            });
        }
    }

    fn inverse_wall(&self, parity: Parity, data: &mut [f64]) {
        let Plans::Wall { trig } = &self.plans else { unreachable!() };
        let mut scale = 1.0;
        for (k, plan) in trig.iter().enumerate() {
            for_each_line(&self.grid, data, k, plan.get_scratch_len(), |line, sc| match parity {
                Parity::Even => plan.process_dct3_with_scratch(line, sc),
                Parity::Odd => plan.process_dst3_with_scratch(line, sc),
            });
            scale *= 2.0 / self.grid.n[k] as f64;
        }
        data.iter_mut().for_each(|v| *v *= scale);
    }

    /// Inverts a mode-diagonal operator on a periodic grid: transform, divide
    /// by `symbol`, zero `null_modes`, transform back.
    pub fn dft_diag_solve(&self, symbol: &[Complex64], rhs: &[f64], null_modes: &[usize]) -> Result<Vec<f64>> {
        if !self.grid.is_periodic() {
            return Err(Error::FieldMismatch("dft_diag_solve needs a periodic grid".into()));
        }
        check_lengths(self.grid.ncells(), symbol.len(), rhs.len())?;
        let mut is_null = vec![false; symbol.len()];
        for &m in null_modes {
            is_null[m] = true;
        }
        let mut hat = self.forward_periodic(rhs);
        for (m, (h, s)) in hat.iter_mut().zip(symbol).enumerate() {
            if is_null[m] {
                *h = Complex64::new(0.0, 0.0);
            } else if s.norm() == 0.0 {
                return Err(Error::SingularSymbol { mode: m });
            } else {
                *h /= s;
            }
        }
        Ok(self.inverse_periodic(hat))
    }

    /// Wall-grid counterpart of [`Self::dft_diag_solve`] in the sine or cosine basis.
    pub fn trig_diag_solve(&self, parity: Parity, symbol: &[f64], rhs: &[f64], null_modes: &[usize]) -> Result<Vec<f64>> {
        if self.grid.is_periodic() {
            return Err(Error::FieldMismatch("trig_diag_solve needs a wall grid".into()));
        }
        check_lengths(self.grid.ncells(), symbol.len(), rhs.len())?;
        let inv = DiagonalInverse::new(symbol, null_modes)?;
        let mut out = rhs.to_vec();
        self.forward_wall(parity, &mut out);
        inv.apply_in_place(&mut out);
        self.inverse_wall(parity, &mut out);
        Ok(out)
    }

    /// Applies a prepared diagonal inverse to `rhs`. The basis follows the
    /// grid (Fourier when periodic, else by `parity`).
    pub fn apply_inverse(&self, inv: &DiagonalInverse, parity: Parity, rhs: &[f64]) -> Vec<f64> {
        if self.grid.is_periodic() {
            let mut hat = self.forward_periodic(rhs);
            for (h, &s) in hat.iter_mut().zip(&inv.inv) {
                *h *= s;
            }
            self.inverse_periodic(hat)
        } else {
            let mut out = rhs.to_vec();
            self.forward_wall(parity, &mut out);
            inv.apply_in_place(&mut out);
            self.inverse_wall(parity, &mut out);
            out
        }
    }
}

fn check_lengths(n: usize, symbol: usize, rhs: usize) -> Result<()> {
    if symbol != n || rhs != n {
        return Err(Error::FieldMismatch(format!("expected {n} modes, got symbol {symbol} / rhs {rhs}")));
    }
    Ok(())
}

/// Reciprocal of a real mode symbol with declared null modes mapped to zero.
#[derive(Debug, Clone)]
pub struct DiagonalInverse {
    inv: Vec<f64>,
}

impl DiagonalInverse {
    pub fn new(symbol: &[f64], null_modes: &[usize]) -> Result<Self> {
        let mut inv: Vec<f64> = Vec::with_capacity(symbol.len());
        for (m, &s) in symbol.iter().enumerate() {
            if s == 0.0 && !null_modes.contains(&m) {
                return Err(Error::SingularSymbol { mode: m });
            }
            inv.push(if s == 0.0 { 0.0 } else { 1.0 / s });
        }
        for &m in null_modes {
            inv[m] = 0.0;
        }
        Ok(DiagonalInverse { inv })
    }

    fn apply_in_place(&self, data: &mut [f64]) {
        for (d, s) in data.iter_mut().zip(&self.inv) {
            *d *= s;
        }
    }
}
