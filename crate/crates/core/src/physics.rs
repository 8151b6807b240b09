//! Langevin forward model: kernel, MPI core operator and scan simulation.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ScanPlan, ScanSample};
use crate::grid::{DenseField, Mat2, Vec2};

/// Below this magnitude the Langevin function is evaluated by its Taylor
/// series. At 1e-2 the direct form still has about 12 correct digits and the
/// four-term series is exact to rounding.
pub const LANGEVIN_SERIES_THRESHOLD: f64 = 1e-2;

const DERIV_SERIES_THRESHOLD: f64 = 0.1;

/// Dimensionless resolution parameter `h > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Resolution(f64);

impl Resolution {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h.is_finite() {
            Ok(Resolution(h))
        } else {
            Err(Error::InvalidParameter(format!("resolution must be positive, got {h}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution(0.01)
    }
}

impl TryFrom<f64> for Resolution {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Resolution::new(h)
    }
}

impl From<Resolution> for f64 {
    fn from(h: Resolution) -> f64 {
        h.0
    }
}

/// Additive Gaussian noise with standard deviation `level * max_k |s_k|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub level: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel { level: 0.0, seed: 0 }
    }
}

/// Taylor branch of the Langevin function.
pub fn langevin_series(x: f64) -> f64 {
    let x2 = x * x;
    x * (1.0 / 3.0 - x2 * (1.0 / 45.0 - x2 * (2.0 / 945.0 - x2 / 4725.0)))
}

/// Closed-form branch `coth x - 1/x`.
pub fn langevin_direct(x: f64) -> f64 {
    1.0 / x.tanh() - 1.0 / x
}

/// `L(x) = coth x - 1/x`, continuous through `x = 0`.
pub fn langevin(x: f64) -> f64 {
    if x.abs() < LANGEVIN_SERIES_THRESHOLD {
        langevin_series(x)
    } else {
        langevin_direct(x)
    }
}

/// `L'(x) = 1/x^2 - 1/sinh^2 x`.
pub fn langevin_deriv(x: f64) -> f64 {
    if x.abs() < DERIV_SERIES_THRESHOLD {
        let x2 = x * x;
        1.0 / 3.0
            - x2 * (1.0 / 15.0
                - x2 * (2.0 / 189.0 - x2 * (1.0 / 675.0 - x2 * (2.0 / 10395.0 - x2 * 15202.0 / 638512875.0))))
    } else {
        let s = x.sinh();
        1.0 / (x * x) - 1.0 / (s * s)
    }
}

/// `L(x)/x`, tending to 1/3 at the origin.
fn langevin_over_x(x: f64) -> f64 {
    if x.abs() < DERIV_SERIES_THRESHOLD {
        let x2 = x * x;
        1.0 / 3.0 - x2 * (1.0 / 45.0 - x2 * (2.0 / 945.0 - x2 * (1.0 / 4725.0 - x2 * 2.0 / 93555.0)))
    } else {
        langevin(x) / x
    }
}

/// The radial kernel `kappa_h(y) = div(L(|y|/h) y/|y|)` in two dimensions.
pub fn kernel_scalar(y: Vec2, h: Resolution) -> f64 {
    let h = h.get();
    let rho = y.norm() / h;
    (langevin_deriv(rho) + langevin_over_x(rho)) / h
}

/// Jacobian of `z -> L(|z|/h) z/|z|`. Its trace is [`kernel_scalar`].
pub fn kernel_jacobian(z: Vec2, h: Resolution) -> Mat2 {
    let h = h.get();
    let n = z.norm();
    if n == 0.0 {
        return Mat2::identity() / (3.0 * h);
    }
    let rho = n / h;
    let radial = langevin_deriv(rho) / h;
    let tangential = langevin_over_x(rho) / h;
    let u = z / n;
    let p = u * u.transpose();
    radial * p + tangential * (Mat2::identity() - p)
}

/// Midpoint-rule quadrature of the MPI core operator for a fixed
/// distribution. Zero cells are skipped; the rest are summed in row-major
/// order so results do not depend on how evaluations are scheduled.
#[derive(Debug, Clone)]
pub struct CoreOperator {
    sources: Vec<(Vec2, f64)>,
    h: Resolution,
}

impl CoreOperator {
    pub fn new(rho: &DenseField, h: Resolution) -> Self {
        let g = rho.grid();
        let area = g.cell_area();
        let mut sources = Vec::new();
        for i in 0..g.nx {
            for j in 0..g.ny {
                let v = rho.get(i, j);
                if v != 0.0 {
                    sources.push((g.center(i, j), area * v));
                }
            }
        }
        CoreOperator { sources, h }
    }

    pub fn apply(&self, r: Vec2) -> Mat2 {
        self.sources
            .iter()
            .fold(Mat2::zeros(), |acc, (x, w)| acc + *w * kernel_jacobian(r - x, self.h))
    }
}

pub fn core_operator_apply(rho: &DenseField, r: Vec2, h: Resolution) -> Mat2 {
    CoreOperator::new(rho, h).apply(r)
}

/// Noise-free signals `A_h[rho](Lambda) Lambda'` at the plan's sample times,
/// keeping only samples inside the domain of `rho`.
pub fn simulate_clean(rho: &DenseField, plan: &ScanPlan, h: Resolution) -> Result<Vec<ScanSample>> {
    let pts = plan.acquisition(&rho.grid().domain)?;
    let op = CoreOperator::new(rho, h);
    Ok(pts
        .par_iter()
        .map(|p| ScanSample {
            t: p.t,
            patch: p.patch,
            signal: op.apply(p.position) * p.velocity,
            position: p.position,
            velocity: p.velocity,
        })
        .collect())
}

/// Simulated scan with additive noise of standard deviation
/// `level * max_k |s_k|`, the maximum taken over the whole acquisition.
pub fn simulate_scan(rho: &DenseField, plan: &ScanPlan, h: Resolution, noise: NoiseModel) -> Result<Vec<ScanSample>> {
    let mut samples = simulate_clean(rho, plan, h)?;
    add_noise(&mut samples, noise)?;
    Ok(samples)
}

/// Adds noise in place and returns the standard deviation used.
pub fn add_noise(samples: &mut [ScanSample], noise: NoiseModel) -> Result<f64> {
    if !(noise.level >= 0.0 && noise.level.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise level must be >= 0, got {}", noise.level)));
    }
    let eps = noise.level * peak_signal(samples);
    if eps == 0.0 {
        return Ok(0.0);
    }
    let mut rng = crate::rng_from_seed(noise.seed);
    for s in samples.iter_mut() {
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        s.signal += eps * Vec2::new(nx, ny);
    }
    Ok(eps)
}

pub fn peak_signal(samples: &[ScanSample]) -> f64 {
    samples.iter().map(|s| s.signal.norm()).fold(0.0, f64::max)
}
