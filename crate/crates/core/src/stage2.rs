//! Second reconstruction stage: deconvolution of the trace field with the
//! Langevin kernel under a smoothed total-variation penalty, an l1 penalty
//! and a positivity constraint.
//!
//! The minimized objective is
//! `1/2 ||K rho - u||^2 + mu R_delta[rho] + beta ||rho||_1 + i_+(rho)`,
//! where `R_delta = sum sqrt(W + delta)` over all cells and `W` averages squared
//! forward and backward differences (zero padding outside the grid). The
//! solver is generalized forward-backward splitting with one proximal branch
//! for the l1 term and one for positivity.

use std::sync::Arc;

use rand::Rng;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dot, norm, DenseField, Grid, Vec2};
use crate::physics::{kernel_scalar, Resolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage2Config {
    pub mu: f64,
    pub beta: f64,
    pub delta: f64,
    pub gamma: f64,
    /// Relaxation `lambda_k`, held constant.
    pub relaxation: f64,
    /// Stop once `||rho_{k+1} - rho_k|| / ||rho_k|| <= tol`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config { mu: 1e-4, beta: 1.0, delta: 1e-16, gamma: 1e-3, relaxation: 1.0, tol: 5e-6, max_iters: 100_000 }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu >= 0.0
            && self.beta >= 0.0
            && self.delta > 0.0
            && self.gamma > 0.0
            && self.relaxation > 0.0
            && self.tol >= 0.0
            && [self.mu, self.beta, self.delta, self.gamma, self.relaxation].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid stage 2 parameters {self:?}")))
        }
    }
}

/// Objective is recorded every this many iterations.
pub const OBJECTIVE_EVERY: usize = 100;

/// Real 2D transform of a zero-padded `px x py` array. The spectrum holds
/// the `py / 2 + 1` nonredundant columns, each of length `px`, one after
/// the other.
struct Fft2 {
    px: usize,
    py: usize,
    pc: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fx: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(px: usize, py: usize) -> Self {
        let mut planner = FftPlanner::new();
        let mut real = RealFftPlanner::new();
        Fft2 {
            px,
            py,
            pc: py / 2 + 1,
            r2c: real.plan_fft_forward(py),
            c2r: real.plan_fft_inverse(py),
            fx: planner.plan_fft_forward(px),
            ix: planner.plan_fft_inverse(px),
        }
    }

    /// Spectrum of the first `rows` rows of a row-major array with `py`
    /// columns; the remaining rows are zero.
    fn forward(&self, data: &[f64], rows: usize) -> Vec<Complex<f64>> {
        let (px, py, pc) = (self.px, self.py, self.pc);
        let mut spec = vec![Complex::new(0.0, 0.0); pc * px];
        let mut inp = self.r2c.make_input_vec();
        let mut out = self.r2c.make_output_vec();
        for r in 0..rows {
            inp.copy_from_slice(&data[r * py..(r + 1) * py]);
            self.r2c.process(&mut inp, &mut out).expect("sizes match the plan");
            for (c, v) in out.iter().enumerate() {
                spec[c * px + r] = *v;
            }
        }
        self.fx.process(&mut spec);
        spec
    }

    /// First `rows x cols` block of the inverse transform, scaled by
    /// `1/(px py)`. Overwrites `spec`.
    fn inverse(&self, spec: &mut [Complex<f64>], rows: usize, cols: usize) -> Vec<f64> {
        let (px, pc) = (self.px, self.pc);
        self.ix.process(spec);
        let mut row = self.c2r.make_input_vec();
        let mut out = self.c2r.make_output_vec();
        let scale = 1.0 / (self.px * self.py) as f64;
        let mut res = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for (c, v) in row.iter_mut().enumerate() {
                *v = spec[c * px + r];
            }
            // Real input has real DC and Nyquist terms; drop rounding residue.
            row[0].im = 0.0;
            row[pc - 1].im = 0.0;
            self.c2r.process(&mut row, &mut out).expect("sizes match the plan");
            res.extend(out[..cols].iter().map(|v| v * scale));
        }
        res
    }
}

/// Midpoint-rule convolution with `kappa_h` restricted to the grid,
/// evaluated by zero-padded FFTs. Self-adjoint because the kernel is even.
pub struct ConvolutionOperator {
    grid: Grid,
    h: Resolution,
    fft: Fft2,
    spectrum: Vec<Complex<f64>>,
}

impl std::fmt::Debug for ConvolutionOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvolutionOperator")
            .field("grid", &self.grid)
            .field("h", &self.h)
            .field("padded", &(self.fft.px, self.fft.py))
            .finish()
    }
}

/// `hx hy kappa_h` at grid offset `(di, dj)`.
fn kernel_weight(grid: &Grid, h: Resolution, di: i64, dj: i64) -> f64 {
    grid.cell_area() * kernel_scalar(Vec2::new(di as f64 * grid.hx(), dj as f64 * grid.hy()), h)
}

impl ConvolutionOperator {
    pub fn new(grid: Grid, h: Resolution) -> Self {
        let n = (2 * grid.nx.max(grid.ny) - 1).next_power_of_two().max(2);
        let (px, py) = (n, n);
        let fft = Fft2::new(px, py);
        let mut buf = vec![0.0; px * py];
        let (nx, ny) = (grid.nx as i64, grid.ny as i64);
        for di in -(nx - 1)..nx {
            for dj in -(ny - 1)..ny {
                let r = di.rem_euclid(px as i64) as usize;
                let c = dj.rem_euclid(py as i64) as usize;
                buf[r * py + c] = kernel_weight(&grid, h, di, dj);
            }
        }
        let spectrum = fft.forward(&buf, px);
        ConvolutionOperator { grid, h, fft, spectrum }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn resolution(&self) -> Resolution {
        self.h
    }

    /// Padded transform size per axis.
    pub fn padded_size(&self) -> (usize, usize) {
        (self.fft.px, self.fft.py)
    }

    fn apply_raw(&self, rho: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let py = self.fft.py;
        let mut buf = vec![0.0; nx * py];
        for i in 0..nx {
            buf[i * py..i * py + ny].copy_from_slice(&rho[i * ny..(i + 1) * ny]);
        }
        let mut spec = self.fft.forward(&buf, nx);
        for (b, k) in spec.iter_mut().zip(&self.spectrum) {
            *b *= k;
        }
        self.fft.inverse(&mut spec, nx, ny)
    }

    pub fn convolve(&self, rho: &DenseField) -> Result<DenseField> {
        self.grid.check_same(rho.grid())?;
        DenseField::from_values(self.grid, self.apply_raw(rho.values()))
    }

    /// `||K^T K||_2` by power iteration from a seeded start vector.
    pub fn gram_norm(&self, seed: u64) -> f64 {
        power_iteration(self.grid.len(), |x| self.apply_raw(&self.apply_raw(x)), seed)
    }
}

/// Reference `O(N^2)` evaluation of the same quadrature as
/// [`ConvolutionOperator::convolve`].
pub fn convolve_direct(rho: &DenseField, h: Resolution) -> DenseField {
    let g = *rho.grid();
    let mut out = DenseField::zeros(g);
    for i in 0..g.nx {
        for j in 0..g.ny {
            let mut acc = 0.0;
            for k in 0..g.nx {
                for l in 0..g.ny {
                    acc += kernel_weight(&g, h, i as i64 - k as i64, j as i64 - l as i64) * rho.get(k, l);
                }
            }
            out.set(i, j, acc);
        }
    }
    out
}

/// Largest eigenvalue of a symmetric PSD operator, 100 iterations at most
/// with relative tolerance 1e-8.
pub fn power_iteration(n: usize, apply: impl Fn(&[f64]) -> Vec<f64>, seed: u64) -> f64 {
    let mut rng = crate::rng_from_seed(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nv = norm(&v);
    if nv == 0.0 {
        return 0.0;
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut est = 0.0;
    for _ in 0..100 {
        let w = apply(&v);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let done = (nw - est).abs() <= 1e-8 * nw;
        est = nw;
        v = w.into_iter().map(|x| x / nw).collect();
        if done {
            break;
        }
    }
    est
}

fn tv_parts(rho: &[f64], grid: &Grid, delta: f64) -> (Vec<f64>, f64) {
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx(), grid.hy());
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
            0.0
        } else {
            rho[i as usize * ny + j as usize]
        }
    };
    let mut g = vec![0.0; nx * ny];
    let mut sum = 0.0;
    for i in 0..nx as isize {
        for j in 0..ny as isize {
            let c = at(i, j);
            let dxp = (at(i + 1, j) - c) / hx;
            let dxm = (c - at(i - 1, j)) / hx;
            let dyp = (at(i, j + 1) - c) / hy;
            let dym = (c - at(i, j - 1)) / hy;
            let w = 0.5 * (dxp * dxp + dxm * dxm) + 0.5 * (dyp * dyp + dym * dym);
            let s = (w + delta).sqrt();
            sum += s;
            g[i as usize * ny + j as usize] = 1.0 / s;
        }
    }
    (g, sum)
}

/// `R_delta[rho] = sum sqrt(W + delta)`.
pub fn tv_value(rho: &DenseField, delta: f64) -> f64 {
    tv_parts(rho.values(), rho.grid(), delta).1
}

fn tv_gradient_raw(rho: &[f64], grid: &Grid, delta: f64) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx(), grid.hy());
    let (g, _) = tv_parts(rho, grid, delta);
    let val = |a: &[f64], i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
            0.0
        } else {
            a[i as usize * ny + j as usize]
        }
    };
    let mut out = vec![0.0; nx * ny];
    for i in 0..nx as isize {
        for j in 0..ny as isize {
            let c = val(rho, i, j);
            let gc = val(&g, i, j);
            let ax_p = 0.5 * (val(&g, i + 1, j) + gc);
            let ax_m = 0.5 * (gc + val(&g, i - 1, j));
            let ay_p = 0.5 * (val(&g, i, j + 1) + gc);
            let ay_m = 0.5 * (gc + val(&g, i, j - 1));
            let dxp = (val(rho, i + 1, j) - c) / hx;
            let dxm = (c - val(rho, i - 1, j)) / hx;
            let dyp = (val(rho, i, j + 1) - c) / hy;
            let dym = (c - val(rho, i, j - 1)) / hy;
            out[i as usize * ny + j as usize] =
                -((ax_p * dxp - ax_m * dxm) / hx + (ay_p * dyp - ay_m * dym) / hy);
        }
    }
    out
}

/// Exact gradient of [`tv_value`].
pub fn tv_gradient(rho: &DenseField, delta: f64) -> DenseField {
    DenseField::from_values(*rho.grid(), tv_gradient_raw(rho.values(), rho.grid(), delta)).expect("same grid")
}

/// A least-squares data term `1/2 ||S rho - s||^2` on a grid.
pub trait DataTerm {
    fn grid(&self) -> &Grid;
    /// Gradient `S^T (S rho - s)`.
    fn gradient(&self, rho: &[f64]) -> Vec<f64>;
    fn value(&self, rho: &[f64]) -> f64;
    /// `||S^T S||_2`.
    fn gram_norm(&self, seed: u64) -> f64;
}

/// The deconvolution data term `1/2 ||K rho - u||^2`.
pub struct ConvolutionData<'a> {
    op: &'a ConvolutionOperator,
    u: Vec<f64>,
    ku: Vec<f64>,
}

impl<'a> ConvolutionData<'a> {
    pub fn new(op: &'a ConvolutionOperator, u: &DenseField) -> Result<Self> {
        op.grid.check_same(u.grid())?;
        Ok(ConvolutionData { op, u: u.values().to_vec(), ku: op.apply_raw(u.values()) })
    }
}

impl DataTerm for ConvolutionData<'_> {
    fn grid(&self) -> &Grid {
        &self.op.grid
    }

    fn gradient(&self, rho: &[f64]) -> Vec<f64> {
        let mut out = self.op.apply_raw(&self.op.apply_raw(rho));
        for (o, k) in out.iter_mut().zip(&self.ku) {
            *o -= k;
        }
        out
    }

    fn value(&self, rho: &[f64]) -> f64 {
        let k = self.op.apply_raw(rho);
        0.5 * k.iter().zip(&self.u).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    }

    fn gram_norm(&self, seed: u64) -> f64 {
        self.op.gram_norm(seed)
    }
}

/// Gradient of the smooth part `1/2 ||K rho - u||^2 + mu R_delta[rho]`.
pub fn grad_f(rho: &DenseField, u: &DenseField, k: &ConvolutionOperator, mu: f64, delta: f64) -> Result<DenseField> {
    k.grid.check_same(rho.grid())?;
    let data = ConvolutionData::new(k, u)?;
    DenseField::from_values(k.grid, smooth_gradient(&data, rho.values(), mu, delta))
}

/// Value of the smooth part, matching [`grad_f`].
pub fn smooth_value(rho: &DenseField, u: &DenseField, k: &ConvolutionOperator, mu: f64, delta: f64) -> Result<f64> {
    let data = ConvolutionData::new(k, u)?;
    k.grid.check_same(rho.grid())?;
    Ok(data.value(rho.values()) + mu * tv_parts(rho.values(), &k.grid, delta).1)
}

fn smooth_gradient(data: &dyn DataTerm, rho: &[f64], mu: f64, delta: f64) -> Vec<f64> {
    let mut g = data.gradient(rho);
    if mu != 0.0 {
        for (o, t) in g.iter_mut().zip(tv_gradient_raw(rho, data.grid(), delta)) {
            *o += mu * t;
        }
    }
    g
}

fn objective(data: &dyn DataTerm, rho: &[f64], cfg: &Stage2Config) -> f64 {
    let tv = if cfg.mu != 0.0 { cfg.mu * tv_parts(rho, data.grid(), cfg.delta).1 } else { 0.0 };
    data.value(rho) + tv + cfg.beta * rho.iter().map(|v| v.abs()).sum::<f64>()
}

#[inline]
fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Elementwise soft threshold, the proximal map of `threshold * ||.||_1`.
pub fn prox_l1(v: &DenseField, threshold: f64) -> Result<DenseField> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::InvalidParameter(format!("threshold must be >= 0, got {threshold}")));
    }
    Ok(v.map(|x| soft(x, threshold)))
}

/// Projection onto the nonnegative orthant.
pub fn prox_nonneg(v: &DenseField) -> DenseField {
    v.map(|x| x.max(0.0))
}

/// The global Lipschitz bound for the smooth gradient together with the
/// power-iteration estimate of `||K^T K||_2` it contains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzBound {
    pub bound: f64,
    pub gram_norm: f64,
    pub c1: f64,
}

/// `C_1 = 2 sqrt(2) / (3^{3/2} sqrt(delta)) * sqrt(1/hx^2 + 1/hy^2)`.
pub fn lipschitz_c1(grid: &Grid, delta: f64) -> f64 {
    let (hx, hy) = (grid.hx(), grid.hy());
    2.0 * 2f64.sqrt() / (3f64.powf(1.5) * delta.sqrt()) * (1.0 / (hx * hx) + 1.0 / (hy * hy)).sqrt()
}

/// `mu * 2 nx ny (1/hx + 1/hy)(sqrt 2 + C_1) + ||S^T S||_2`.
pub fn lipschitz_bound_for(data: &dyn DataTerm, mu: f64, delta: f64) -> LipschitzBound {
    let g = data.grid();
    let c1 = lipschitz_c1(g, delta);
    let gram = data.gram_norm(0x5eed);
    let tv = 2.0 * (g.nx * g.ny) as f64 * (1.0 / g.hx() + 1.0 / g.hy()) * (2f64.sqrt() + c1);
    LipschitzBound { bound: mu * tv + gram, gram_norm: gram, c1 }
}

pub fn lipschitz_bound(k: &ConvolutionOperator, mu: f64, delta: f64) -> LipschitzBound {
    let u = DenseField::zeros(k.grid);
    let data = ConvolutionData::new(k, &u).expect("same grid");
    lipschitz_bound_for(&data, mu, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCheck {
    pub eta: f64,
    pub gamma_ok: bool,
    pub relaxation_ok: bool,
}

impl ConvergenceCheck {
    pub fn certified(&self) -> bool {
        self.gamma_ok && self.relaxation_ok
    }
}

/// Whether `gamma in (0, 2 eta)` and `lambda in (0, min(3/2, 1/2 + eta/gamma))`
/// with `eta = 1 / lipschitz`. Purely informative.
pub fn check_convergence_params(cfg: &Stage2Config, lipschitz: f64) -> ConvergenceCheck {
    let eta = 1.0 / lipschitz;
    let gamma_ok = cfg.gamma > 0.0 && cfg.gamma < 2.0 * eta;
    let cap = (1.5f64).min(0.5 + eta / cfg.gamma);
    ConvergenceCheck { eta, gamma_ok, relaxation_ok: cfg.relaxation > 0.0 && cfg.relaxation < cap }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Diagnostics {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// `(iteration, objective)` every [`OBJECTIVE_EVERY`] iterations.
    pub objective_trace: Vec<(usize, f64)>,
    /// Smallest entry of the last iterate before the final projection.
    pub raw_min: f64,
}

#[derive(Debug, Clone)]
pub struct Stage2Output {
    pub rho: DenseField,
    pub diagnostics: Stage2Diagnostics,
}

/// Generalized forward-backward splitting for `data + mu R_delta + beta l1 +
/// positivity`, started from `init`. The returned field is the positive part
/// of the last iterate; objectives exclude the indicator term.
pub fn solve_gfb(data: &dyn DataTerm, init: &DenseField, cfg: &Stage2Config) -> Result<Stage2Output> {
    cfg.validate()?;
    let grid = *data.grid();
    grid.check_same(init.grid())?;
    let n = grid.len();
    let mut rho = init.values().to_vec();
    let mut z1 = rho.clone();
    let mut z2 = rho.clone();
    let initial_objective = objective(data, &rho, cfg);
    let mut trace = vec![(0, initial_objective)];
    let thr = 2.0 * cfg.gamma * cfg.beta;
    let lam = cfg.relaxation;
    let mut next = vec![0.0; n];
    let mut rel = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    for k in 1..=cfg.max_iters {
        let g = smooth_gradient(data, &rho, cfg.mu, cfg.delta);
        for i in 0..n {
            let base = 2.0 * rho[i] - cfg.gamma * g[i];
            z1[i] += lam * (soft(base - z1[i], thr) - rho[i]);
            z2[i] += lam * ((base - z2[i]).max(0.0) - rho[i]);
            next[i] = 0.5 * (z1[i] + z2[i]);
        }
        let diff = next.iter().zip(&rho).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let base_norm = norm(&rho);
        if !diff.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverDivergence { solver: "forward-backward splitting", iteration: k });
        }
        rel = if base_norm > 0.0 {
            diff / base_norm
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        std::mem::swap(&mut rho, &mut next);
        iterations = k;
        if k % OBJECTIVE_EVERY == 0 {
            trace.push((k, objective(data, &rho, cfg)));
        }
        if rel <= cfg.tol {
            converged = true;
            break;
        }
    }
    let raw_min = rho.iter().copied().fold(f64::INFINITY, f64::min);
    rho.iter_mut().for_each(|v| *v = v.max(0.0));
    let final_objective = objective(data, &rho, cfg);
    if trace.last().map(|t| t.0) != Some(iterations) {
        trace.push((iterations, final_objective));
    }
    Ok(Stage2Output {
        rho: DenseField::from_values(grid, rho)?,
        diagnostics: Stage2Diagnostics {
            iterations,
            relative_residual: rel,
            converged,
            initial_objective,
            final_objective,
            objective_trace: trace,
            raw_min,
        },
    })
}

/// Deconvolves the trace `u`, starting from `u`.
pub fn solve_stage2(u: &DenseField, cfg: &Stage2Config, k: &ConvolutionOperator) -> Result<Stage2Output> {
    let data = ConvolutionData::new(k, u)?;
    solve_gfb(&data, u, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandweberDiagnostics {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Plain gradient descent `rho <- rho - gamma grad F(rho)` from `rho = u`,
/// without positivity or sparsity. Stops after `iters` steps or once the
/// relative change drops to `tol`.
pub fn solve_landweber(
    u: &DenseField,
    mu: f64,
    delta: f64,
    gamma: f64,
    k: &ConvolutionOperator,
    iters: usize,
    tol: f64,
) -> Result<(DenseField, LandweberDiagnostics)> {
    if !(gamma >= 0.0 && delta > 0.0 && mu >= 0.0) {
        return Err(Error::InvalidParameter("landweber needs gamma >= 0, delta > 0, mu >= 0".into()));
    }
    let data = ConvolutionData::new(k, u)?;
    let mut rho = u.values().to_vec();
    let mut rel = f64::INFINITY;
    let mut done = 0;
    for it in 1..=iters {
        let g = smooth_gradient(&data, &rho, mu, delta);
        let step = gamma * norm(&g);
        let base = norm(&rho);
        for (r, gi) in rho.iter_mut().zip(&g) {
            *r -= gamma * gi;
        }
        if !step.is_finite() || rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverDivergence { solver: "landweber", iteration: it });
        }
        rel = if base > 0.0 { step / base } else if step == 0.0 { 0.0 } else { f64::INFINITY };
        done = it;
        if rel <= tol {
            break;
        }
    }
    Ok((DenseField::from_values(k.grid, rho)?, LandweberDiagnostics { iterations: done, relative_residual: rel }))
}

/// `<a, b>` over field values.
pub fn inner(a: &DenseField, b: &DenseField) -> f64 {
    dot(a.values(), b.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Rect;
    use approx::assert_relative_eq;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn grid(n: usize) -> Grid {
        Grid::new(n, n, Rect::square(-0.2, 0.2).unwrap()).unwrap()
    }

    fn h() -> Resolution {
        Resolution::new(0.01).unwrap()
    }

    fn random(g: Grid, seed: u64) -> DenseField {
        let mut rng = crate::rng_from_seed(seed);
        DenseField::from_values(g, (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn rel_diff(a: &DenseField, b: &DenseField) -> f64 {
        let d: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        d / b.norm()
    }

    #[test]
    fn fft_matches_direct_sum() {
        for (n, m) in [(16, 16), (5, 9), (1, 3)] {
            let g = Grid::new(n, m, Rect::new(-0.3, 0.3, -0.1, 0.2).unwrap()).unwrap();
            let k = ConvolutionOperator::new(g, h());
            let rho = random(g, n as u64);
            assert!(rel_diff(&k.convolve(&rho).unwrap(), &convolve_direct(&rho, h())) <= 1e-12);
        }
    }

    #[test]
    fn convolution_basics() {
        let g = grid(9);
        let k = ConvolutionOperator::new(g, h());
        assert_eq!(k.padded_size(), (32, 32));
        assert!(k.convolve(&DenseField::zeros(g)).unwrap().values().iter().all(|v| v.abs() < 1e-15));
        let mut d = DenseField::zeros(g);
        d.set(4, 4, 1.0);
        let out = k.convolve(&d).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                let expect = g.cell_area() * kernel_scalar(g.center(i, j) - g.center(4, 4), h());
                assert_relative_eq!(out.get(i, j), expect, max_relative = 1e-12);
            }
        }
        assert!(k.convolve(&DenseField::zeros(grid(8))).is_err());
    }

    #[test]
    fn convolution_self_adjoint() {
        let g = grid(12);
        let k = ConvolutionOperator::new(g, h());
        for s in 0..5 {
            let (x, y) = (random(g, s), random(g, s + 100));
            let a = inner(&k.convolve(&x).unwrap(), &y);
            let b = inner(&x, &k.convolve(&y).unwrap());
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn tv_gradient_interior_zero_for_constant() {
        let g = grid(8);
        let c = DenseField::constant(g, 2.0);
        let gr = tv_gradient(&c, 1e-16);
        for i in 1..7 {
            for j in 1..7 {
                assert_eq!(gr.get(i, j), 0.0);
            }
        }
        assert!(gr.get(0, 3).abs() > 0.0);
    }

    #[test]
    fn tv_gradient_matches_finite_differences() {
        let g = grid(8);
        let rho = random(g, 1);
        let delta = 1e-16;
        let gr = tv_gradient(&rho, delta);
        for s in 0..10 {
            let dir = random(g, 50 + s);
            let eps = 1e-7 * rho.norm();
            let shift = |t: f64| DenseField::from_values(g, rho.values().iter().zip(dir.values()).map(|(a, b)| a + t * b).collect()).unwrap();
            let fd = (tv_value(&shift(eps), delta) - tv_value(&shift(-eps), delta)) / (2.0 * eps);
            let an = inner(&gr, &dir);
            assert!((fd - an).abs() <= 1e-5 * an.abs(), "{fd} vs {an}");
        }
    }

    #[test]
    fn grad_f_matches_finite_differences() {
        let g = grid(8);
        let k = ConvolutionOperator::new(g, h());
        let (rho, u) = (random(g, 2), random(g, 3));
        let (mu, delta) = (1e-4, 1e-16);
        let gr = grad_f(&rho, &u, &k, mu, delta).unwrap();
        for s in 0..20 {
            let dir = random(g, 70 + s);
            let eps = 1e-6;
            let shift = |t: f64| DenseField::from_values(g, rho.values().iter().zip(dir.values()).map(|(a, b)| a + t * b).collect()).unwrap();
            let fd = (smooth_value(&shift(eps), &u, &k, mu, delta).unwrap() - smooth_value(&shift(-eps), &u, &k, mu, delta).unwrap()) / (2.0 * eps);
            let an = inner(&gr, &dir);
            assert!((fd - an).abs() <= 1e-5 * an.abs(), "{fd} vs {an}");
        }
    }

    #[test]
    fn grad_f_special_cases() {
        let g = grid(6);
        let k = ConvolutionOperator::new(g, h());
        let rho = random(g, 4);
        let u = k.convolve(&rho).unwrap();
        let at_solution = grad_f(&rho, &u, &k, 0.0, 1e-16).unwrap();
        assert!(at_solution.norm() <= 1e-12 * u.norm());
        let zero_u = grad_f(&rho, &DenseField::zeros(g), &k, 0.0, 1e-16).unwrap();
        let kk = k.convolve(&k.convolve(&rho).unwrap()).unwrap();
        assert!(rel_diff(&zero_u, &kk) <= 1e-14);
    }

    #[test]
    fn prox_values() {
        let g = Grid::new(1, 3, Rect::square(0.0, 1.0).unwrap()).unwrap();
        let v = DenseField::from_values(g, vec![5.0, -5.0, 1.5]).unwrap();
        assert_eq!(prox_l1(&v, 2.0).unwrap().values(), &[3.0, -3.0, 0.0]);
        assert!(prox_l1(&v, -1.0).is_err());
        let w = DenseField::from_values(g, vec![-1.0, 0.0, 2.0]).unwrap();
        let p = prox_nonneg(&w);
        assert_eq!(p.values(), &[0.0, 0.0, 2.0]);
        assert_eq!(prox_nonneg(&p), p);
    }

    #[test]
    fn lipschitz_pieces() {
        let g = grid(8);
        let k = ConvolutionOperator::new(g, h());
        let b0 = lipschitz_bound(&k, 0.0, 1e-16);
        assert_eq!(b0.bound, b0.gram_norm);
        let mut l1 = 0.0;
        for di in -7i64..8 {
            for dj in -7i64..8 {
                l1 += kernel_weight(&g, h(), di, dj).abs();
            }
        }
        assert!(b0.gram_norm <= l1 * l1 * (1.0 + 1e-12));
        assert_relative_eq!(lipschitz_c1(&g, 4e-6), 0.5 * lipschitz_c1(&g, 1e-6), max_relative = 1e-14);
    }

    #[test]
    fn measured_lipschitz_below_bound() {
        let g = grid(8);
        let k = ConvolutionOperator::new(g, h());
        let (mu, delta) = (1e-4, 1e-16);
        let lb = lipschitz_bound(&k, mu, delta).bound;
        let u = random(g, 9);
        for s in 0..30 {
            let a = random(g, 200 + s);
            let b = random(g, 400 + s);
            let ga = grad_f(&a, &u, &k, mu, delta).unwrap();
            let gb = grad_f(&b, &u, &k, mu, delta).unwrap();
            let num: f64 = ga.values().iter().zip(gb.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let den: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!(num / den <= lb);
        }
    }

    #[test]
    fn convergence_certificate() {
        let cfg = |gamma| Stage2Config { gamma, ..Default::default() };
        assert!(check_convergence_params(&cfg(0.5), 2.0).certified());
        assert!(!check_convergence_params(&cfg(1.5), 2.0).certified());
        let relaxed = Stage2Config { gamma: 0.5, relaxation: 1.6, ..Default::default() };
        assert!(!check_convergence_params(&relaxed, 2.0).certified());
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = grid(10);
        let k = ConvolutionOperator::new(g, h());
        let out = solve_stage2(&DenseField::zeros(g), &Stage2Config::default(), &k).unwrap();
        assert!(out.rho.values().iter().all(|&v| v == 0.0));
        assert!(out.diagnostics.converged);
    }

    #[test]
    fn gfb_decreases_objective_and_stays_nonnegative() {
        let g = grid(12);
        let k = ConvolutionOperator::new(g, h());
        let truth = DenseField::from_fn(g, |p| if p.norm() < 0.1 { 1.0 } else { 0.0 });
        let u = k.convolve(&truth).unwrap();
        let cfg = Stage2Config { mu: 1e-5, beta: 0.01, gamma: 1e-2, max_iters: 3000, ..Default::default() };
        let out = solve_stage2(&u, &cfg, &k).unwrap();
        let d = &out.diagnostics;
        assert!(d.final_objective <= d.initial_objective);
        assert!(out.rho.min() >= 0.0);
    }

    #[test]
    fn certified_run_converges() {
        let g = Grid::new(40, 40, Rect::square(-1.0, 1.0).unwrap()).unwrap();
        let k = ConvolutionOperator::new(g, Resolution::new(0.05).unwrap());
        let truth = DenseField::from_fn(g, |p| if p.x.abs() < 0.4 && p.y.abs() < 0.2 { 1.0 } else { 0.0 });
        let u = k.convolve(&truth).unwrap();
        // Without the TV term the bound reduces to ||K^T K||, so gamma = 1/L is certified.
        let lb = lipschitz_bound(&k, 0.0, 1e-16);
        let cfg = Stage2Config { mu: 0.0, beta: 1e-3, gamma: 1.0 / lb.bound, tol: 5e-6, max_iters: 20_000, ..Default::default() };
        assert!(check_convergence_params(&cfg, lb.bound).certified());
        let out = solve_stage2(&u, &cfg, &k).unwrap();
        let d = &out.diagnostics;
        assert!(d.converged, "{} iterations, residual {}", d.iterations, d.relative_residual);
        assert!(d.final_objective <= d.initial_objective);
        let objs: Vec<f64> = d.objective_trace.iter().map(|t| t.1).collect();
        assert!(objs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{objs:?}");
    }

    #[test]
    fn landweber_basics() {
        let g = grid(8);
        let k = ConvolutionOperator::new(g, h());
        let u = random(g, 5);
        let (same, _) = solve_landweber(&u, 1e-4, 1e-16, 0.0, &k, 1, 0.0).unwrap();
        assert_eq!(same, u);

        // Least squares with a tiny quadratic: converges to the exact preimage.
        let truth = random(g, 6);
        let data = k.convolve(&truth).unwrap();
        let gram = k.gram_norm(1);
        let (sol, _) = solve_landweber(&data, 0.0, 1e-16, 1.0 / gram, &k, 20_000, 0.0).unwrap();
        let r = k.convolve(&sol).unwrap();
        assert!(rel_diff(&r, &data) < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn soft_threshold_is_the_prox(v in -5.0..5.0f64, t in 0.0..2.0f64) {
            let p = soft(v, t);
            let obj = |x: f64| t * x.abs() + 0.5 * (x - v).powi(2);
            // p is optimal against a neighbourhood
            for d in [-1e-3, 1e-3, -0.1, 0.1] {
                prop_assert!(obj(p) <= obj(p + d) + 1e-15);
            }
        }
    }
}
