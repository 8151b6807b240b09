//! First reconstruction stage: a matrix-valued field `A` on the grid is fit
//! to the phase-space samples, `s_k ~ I[A](r_k) v_k`, with a smoothness
//! penalty, and its pointwise trace is returned.
//!
//! The quadratic objective is
//! `J[A] = (lambda/N) ||D A||^2 + (1/L) sum_k |s_k - I[A](r_k) v_k|^2`
//! where `I` is tensor-product cubic Lagrange interpolation and `D` holds
//! forward differences (edges leaving the grid are dropped). `J` is minimized
//! by the conjugate residual method on `G A = b`, whose residual norms are
//! non-increasing.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cg::conjugate_residual;
use crate::error::{Error, Result};
use crate::geometry::ScanSample;
use crate::grid::{DenseField, Grid, Mat2, Vec2};

/// Cubic Lagrange weights for nodes `-1, 0, 1, 2` at offset `s`.
pub fn lagrange_weights(s: f64) -> [f64; 4] {
    [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -s * (s + 1.0) * (s - 2.0) / 2.0,
        s * (s + 1.0) * (s - 1.0) / 6.0,
    ]
}

/// The 4x4 interpolation stencil around a point: clamped cell indices along
/// each axis and their weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub ix: [u32; 4],
    pub iy: [u32; 4],
    pub wx: [f64; 4],
    pub wy: [f64; 4],
}

fn axis_stencil(x: f64, lo: f64, h: f64, n: usize) -> ([u32; 4], [f64; 4]) {
    let i = (((x - lo) / h).floor().max(0.0) as usize).min(n - 1);
    let s = (x - (lo + (i as f64 + 0.5) * h)) / h;
    let mut idx = [0u32; 4];
    for (k, v) in idx.iter_mut().enumerate() {
        *v = (i as i64 + k as i64 - 1).clamp(0, n as i64 - 1) as u32;
    }
    (idx, lagrange_weights(s))
}

impl Stencil {
    /// Stencil of the cell containing `r`. Indices beyond the grid replicate
    /// the nearest edge cell.
    pub fn locate(grid: &Grid, r: &Vec2) -> Result<Self> {
        if !grid.domain.contains(r) {
            return Err(Error::OutsideDomain { x: r.x, y: r.y });
        }
        let d = grid.domain;
        let (ix, wx) = axis_stencil(r.x, d.x_min, grid.hx(), grid.nx);
        let (iy, wy) = axis_stencil(r.y, d.y_min, grid.hy(), grid.ny);
        Ok(Stencil { ix, iy, wx, wy })
    }

    /// Calls `f(flat_index, weight)` for all 16 stencil entries.
    #[inline]
    pub fn for_each(&self, ny: usize, mut f: impl FnMut(usize, f64)) {
        for a in 0..4 {
            let row = self.ix[a] as usize * ny;
            for b in 0..4 {
                f(row + self.iy[b] as usize, self.wx[a] * self.wy[b]);
            }
        }
    }

    fn flat_range(&self, ny: usize) -> (usize, usize) {
        let lo = self.ix[0] as usize * ny + self.iy[0] as usize;
        let hi = self.ix[3] as usize * ny + self.iy[3] as usize;
        (lo, hi + 1)
    }
}

/// Bicubic interpolation of a scalar field at `r`.
pub fn interpolate(field: &DenseField, r: &Vec2) -> Result<f64> {
    let g = field.grid();
    let st = Stencil::locate(g, r)?;
    let mut acc = 0.0;
    st.for_each(g.ny, |k, w| acc += w * field.values()[k]);
    Ok(acc)
}

/// A 2x2 matrix per grid cell, stored cell by cell as `[a11, a12, a21, a22]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreOperatorField {
    grid: Grid,
    data: Vec<f64>,
}

impl CoreOperatorField {
    pub fn zeros(grid: Grid) -> Self {
        CoreOperatorField { grid, data: vec![0.0; 4 * grid.len()] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(Vec2) -> Mat2) -> Self {
        let mut out = Self::zeros(grid);
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                out.set(i, j, f(grid.center(i, j)));
            }
        }
        out
    }

    pub fn from_data(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != 4 * grid.len() {
            return Err(Error::LengthMismatch { expected: 4 * grid.len(), found: data.len() });
        }
        Ok(CoreOperatorField { grid, data })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Mat2 {
        let k = 4 * self.grid.index(i, j);
        Mat2::new(self.data[k], self.data[k + 1], self.data[k + 2], self.data[k + 3])
    }

    pub fn set(&mut self, i: usize, j: usize, m: Mat2) {
        let k = 4 * self.grid.index(i, j);
        self.data[k..k + 4].copy_from_slice(&[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]);
    }

    /// Pointwise trace `a11 + a22`.
    pub fn trace(&self) -> DenseField {
        let v = self.data.chunks_exact(4).map(|c| c[0] + c[3]).collect();
        DenseField::from_values(self.grid, v).expect("length matches grid")
    }

    pub fn interpolate(&self, r: &Vec2) -> Result<Mat2> {
        let st = Stencil::locate(&self.grid, r)?;
        Ok(gather(&self.data, &st, self.grid.ny))
    }

    pub fn inner(&self, other: &Self) -> f64 {
        crate::grid::dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        crate::grid::norm(&self.data)
    }
}

#[inline]
fn gather(data: &[f64], st: &Stencil, ny: usize) -> Mat2 {
    let mut m = [0.0; 4];
    st.for_each(ny, |k, w| {
        let c = &data[4 * k..4 * k + 4];
        for p in 0..4 {
            m[p] += w * c[p];
        }
    });
    Mat2::new(m[0], m[1], m[2], m[3])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1Config {
    pub lambda: f64,
    /// Relative residual target `||G A - b|| <= tol ||b||`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config { lambda: 5.0, tol: 1e-12, max_iters: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Diagnostics {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct Stage1Output {
    pub a: CoreOperatorField,
    pub trace: DenseField,
    pub diagnostics: Stage1Diagnostics,
}

const CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy)]
struct Chunk {
    start: usize,
    end: usize,
    lo: usize,
    hi: usize,
}

/// Samples bound to a grid, with cached interpolation stencils.
///
/// Samples are put in a canonical order on construction and all sums run in
/// fixed chunks merged in chunk order, so results are independent of the
/// input order and of the number of threads.
#[derive(Debug, Clone)]
pub struct Stage1Problem {
    grid: Grid,
    samples: Vec<ScanSample>,
    stencils: Vec<Stencil>,
    chunks: Vec<Chunk>,
}

fn canonical_order(a: &(usize, ScanSample), b: &(usize, ScanSample)) -> Ordering {
    let (ca, sa) = a;
    let (cb, sb) = b;
    let fields = |s: &ScanSample| {
        [s.t, s.position.x, s.position.y, s.velocity.x, s.velocity.y, s.signal.x, s.signal.y]
    };
    ca.cmp(cb)
        .then(sa.patch.cmp(&sb.patch))
        .then_with(|| {
            fields(sa)
                .iter()
                .zip(fields(sb).iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

impl Stage1Problem {
    pub fn new(samples: &[ScanSample], grid: Grid) -> Result<Self> {
        let mut keyed = samples
            .iter()
            .map(|s| {
                let (i, j) = grid.cell_of(&s.position).ok_or(Error::OutsideDomain { x: s.position.x, y: s.position.y })?;
                Ok((grid.index(i, j), *s))
            })
            .collect::<Result<Vec<_>>>()?;
        keyed.sort_by(canonical_order);
        let samples: Vec<ScanSample> = keyed.into_iter().map(|(_, s)| s).collect();
        let stencils = samples.iter().map(|s| Stencil::locate(&grid, &s.position)).collect::<Result<Vec<_>>>()?;
        let chunks = (0..stencils.len())
            .step_by(CHUNK)
            .map(|start| {
                let end = (start + CHUNK).min(stencils.len());
                let (lo, hi) = stencils[start..end]
                    .iter()
                    .map(|s| s.flat_range(grid.ny))
                    .fold((usize::MAX, 0), |(a, b), (c, d)| (a.min(c), b.max(d)));
                Chunk { start, end, lo, hi }
            })
            .collect();
        Ok(Stage1Problem { grid, samples, stencils, chunks })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Applies `f(sample, stencil, partial)` per sample into per-chunk partial
    /// fields covering only the cells each chunk touches, then merges them.
    fn scatter(&self, f: impl Fn(&ScanSample, &Stencil, &mut [f64], usize) + Sync) -> Vec<f64> {
        let ny = self.grid.ny;
        let partials: Vec<(usize, Vec<f64>)> = self
            .chunks
            .par_iter()
            .map(|c| {
                let mut buf = vec![0.0; 4 * (c.hi - c.lo)];
                for k in c.start..c.end {
                    f(&self.samples[k], &self.stencils[k], &mut buf, c.lo);
                }
                (c.lo, buf)
            })
            .collect();
        let mut out = vec![0.0; 4 * self.grid.len()];
        for (lo, buf) in partials {
            for (o, v) in out[4 * lo..4 * lo + buf.len()].iter_mut().zip(&buf) {
                *o += v;
            }
        }
        let _ = ny;
        out
    }

    fn scale(&self) -> f64 {
        2.0 / self.samples.len().max(1) as f64
    }

    /// Right-hand side `b = (2/L) sum_k I^T(s_k v_k^T)`.
    pub fn rhs(&self) -> CoreOperatorField {
        let c = self.scale();
        let ny = self.grid.ny;
        let data = self.scatter(|s, st, buf, lo| {
            let g = [s.signal.x * s.velocity.x, s.signal.x * s.velocity.y, s.signal.y * s.velocity.x, s.signal.y * s.velocity.y];
            st.for_each(ny, |k, w| {
                let o = &mut buf[4 * (k - lo)..4 * (k - lo) + 4];
                for p in 0..4 {
                    o[p] += c * w * g[p];
                }
            });
        });
        CoreOperatorField { grid: self.grid, data }
    }

    /// Data part of `G A`.
    fn apply_data(&self, a: &[f64]) -> Vec<f64> {
        let c = self.scale();
        let ny = self.grid.ny;
        self.scatter(|s, st, buf, lo| {
            let m = gather(a, st, ny);
            let y = m * s.velocity;
            let g = [y.x * s.velocity.x, y.x * s.velocity.y, y.y * s.velocity.x, y.y * s.velocity.y];
            st.for_each(ny, |k, w| {
                let o = &mut buf[4 * (k - lo)..4 * (k - lo) + 4];
                for p in 0..4 {
                    o[p] += c * w * g[p];
                }
            });
        })
    }

    /// Adds `(2 lambda / N) D^T D a` to `out`.
    fn add_regularizer(&self, a: &[f64], lambda: f64, out: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let n = self.grid.len() as f64;
        let cx = 2.0 * lambda / (n * self.grid.hx().powi(2));
        let cy = 2.0 * lambda / (n * self.grid.hy().powi(2));
        for i in 0..nx {
            for j in 0..ny {
                let k = 4 * (i * ny + j);
                for p in 0..4 {
                    let v = a[k + p];
                    let mut acc = 0.0;
                    if i > 0 {
                        acc += cx * (v - a[k - 4 * ny + p]);
                    }
                    if i + 1 < nx {
                        acc += cx * (v - a[k + 4 * ny + p]);
                    }
                    if j > 0 {
                        acc += cy * (v - a[k - 4 + p]);
                    }
                    if j + 1 < ny {
                        acc += cy * (v - a[k + 4 + p]);
                    }
                    out[k + p] += acc;
                }
            }
        }
    }

    fn apply_raw(&self, a: &[f64], lambda: f64) -> Vec<f64> {
        let mut out = self.apply_data(a);
        self.add_regularizer(a, lambda, &mut out);
        out
    }

    /// The Hessian `G` of `J` applied to `a`.
    pub fn apply_g(&self, a: &CoreOperatorField, lambda: f64) -> Result<CoreOperatorField> {
        self.grid.check_same(&a.grid)?;
        Ok(CoreOperatorField { grid: self.grid, data: self.apply_raw(&a.data, lambda) })
    }

    /// The objective `J[A]`.
    pub fn objective(&self, a: &CoreOperatorField, lambda: f64) -> Result<f64> {
        self.grid.check_same(&a.grid)?;
        let ny = self.grid.ny;
        let misfit: f64 = self
            .samples
            .iter()
            .zip(&self.stencils)
            .map(|(s, st)| (s.signal - gather(&a.data, st, ny) * s.velocity).norm_squared())
            .sum();
        let (nx, hx, hy) = (self.grid.nx, self.grid.hx(), self.grid.hy());
        let mut reg = 0.0;
        for i in 0..nx {
            for j in 0..ny {
                let k = 4 * (i * ny + j);
                for p in 0..4 {
                    if i + 1 < nx {
                        reg += ((a.data[k + 4 * ny + p] - a.data[k + p]) / hx).powi(2);
                    }
                    if j + 1 < ny {
                        reg += ((a.data[k + 4 + p] - a.data[k + p]) / hy).powi(2);
                    }
                }
            }
        }
        Ok(lambda / self.grid.len() as f64 * reg + misfit / self.samples.len().max(1) as f64)
    }

    /// Runs CG from `warm` (or zero).
    pub fn solve(&self, config: &Stage1Config, warm: Option<&CoreOperatorField>) -> Result<Stage1Output> {
        if !(config.lambda >= 0.0 && config.tol >= 0.0) {
            return Err(Error::InvalidParameter("lambda and tol must be >= 0".into()));
        }
        if self.samples.is_empty() {
            return Err(Error::InvalidParameter("stage 1 needs at least one sample".into()));
        }
        if let Some(w) = warm {
            self.grid.check_same(&w.grid)?;
        }
        let b = self.rhs();
        let bnorm = b.norm();
        let out = conjugate_residual(
            |x, y| y.copy_from_slice(&self.apply_raw(x, config.lambda)),
            &b.data,
            warm.map(|w| w.data.as_slice()),
            config.tol,
            config.max_iters,
        );
        if out.x.iter().any(|v| !v.is_finite()) || out.residuals.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverDivergence { solver: "stage 1 conjugate residual", iteration: out.iterations });
        }
        let rel = if bnorm > 0.0 { out.final_residual() / bnorm } else { 0.0 };
        let a = CoreOperatorField { grid: self.grid, data: out.x };
        Ok(Stage1Output {
            trace: a.trace(),
            a,
            diagnostics: Stage1Diagnostics {
                iterations: out.iterations,
                relative_residual: rel,
                converged: out.converged,
                residual_history: out.residuals,
                samples: self.samples.len(),
            },
        })
    }
}

/// Reconstructs the core operator field and its trace from scan samples.
pub fn solve_stage1(samples: &[ScanSample], grid: Grid, config: &Stage1Config) -> Result<Stage1Output> {
    Stage1Problem::new(samples, grid)?.solve(config, None)
}
