//! Image quality measures.

use crate::error::{Error, Result};
use crate::grid::DenseField;
use crate::physics::Resolution;
use crate::stage2::ConvolutionOperator;

pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

pub fn mse(gt: &DenseField, rec: &DenseField) -> Result<f64> {
    gt.grid().check_same(rec.grid())?;
    let n = gt.values().len() as f64;
    Ok(gt.values().iter().zip(rec.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n)
}

/// `10 log10(max(gt)^2 / MSE)`; `+inf` for identical images.
pub fn psnr(gt: &DenseField, rec: &DenseField) -> Result<f64> {
    let peak = gt.max();
    if peak == 0.0 {
        return Err(Error::UndefinedMetric("psnr of a ground truth with zero maximum"));
    }
    let m = mse(gt, rec)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

fn gaussian_taps() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let w: Vec<f64> = (-half..=half).map(|k| (-(k * k) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Half-sample symmetric reflection of `k` into `0..n`.
fn reflect(mut k: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    k = k.rem_euclid(period);
    if k >= n {
        k = period - 1 - k;
    }
    k as usize
}

fn blur(a: &[f64], nx: usize, ny: usize, taps: &[f64]) -> Vec<f64> {
    let half = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; a.len()];
    for i in 0..nx {
        for j in 0..ny {
            tmp[i * ny + j] = taps
                .iter()
                .enumerate()
                .map(|(t, w)| w * a[i * ny + reflect(j as isize + t as isize - half, ny)])
                .sum();
        }
    }
    let mut out = vec![0.0; a.len()];
    for i in 0..nx {
        for j in 0..ny {
            out[i * ny + j] = taps
                .iter()
                .enumerate()
                .map(|(t, w)| w * tmp[reflect(i as isize + t as isize - half, nx) * ny + j])
                .sum();
        }
    }
    out
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// `K1 = 0.01`, `K2 = 0.03`, dynamic range `max(gt) - min(gt)` and
/// symmetric reflection at the borders.
pub fn ssim(gt: &DenseField, rec: &DenseField) -> Result<f64> {
    gt.grid().check_same(rec.grid())?;
    let range = gt.max() - gt.min();
    if range == 0.0 {
        return Err(Error::UndefinedMetric("ssim of a constant ground truth"));
    }
    let (nx, ny) = (gt.grid().nx, gt.grid().ny);
    let taps = gaussian_taps();
    let (x, y) = (gt.values(), rec.values());
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mx = blur(x, nx, ny, &taps);
    let my = blur(y, nx, ny, &taps);
    let mxx = blur(&prod(x, x), nx, ny, &taps);
    let myy = blur(&prod(y, y), nx, ny, &taps);
    let mxy = blur(&prod(x, y), nx, ny, &taps);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let total: f64 = (0..x.len())
        .map(|k| {
            let (ux, uy) = (mx[k], my[k]);
            let vx = mxx[k] - ux * ux;
            let vy = myy[k] - uy * uy;
            let cxy = mxy[k] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / x.len() as f64)
}

/// The ideal trace `kappa_h * rho_gt` on the ground-truth grid.
pub fn trace_reference(rho_gt: &DenseField, h: Resolution) -> DenseField {
    ConvolutionOperator::new(*rho_gt.grid(), h).convolve(rho_gt).expect("same grid")
}
