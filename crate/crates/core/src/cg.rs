//! Krylov solvers for symmetric positive (semi)definite operators.
//!
//! [`conjugate_residual`] is the conjugate-gradient variant that minimizes the
//! residual norm over the Krylov space, so `||r_k||` never increases. Plain
//! [`conjugate_gradient`] minimizes the energy norm of the error instead and
//! its residuals may oscillate.

use crate::grid::{dot, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||b - A x_k||` for every iterate, starting with the initial guess.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl CgOutcome {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&0.0)
    }
}

/// Solves `A x = b` from `x0` until `||r|| <= tol * ||b||` or `max_iters`.
///
/// Stops early, unconverged, if the operator shows a non-positive curvature
/// direction or produces non-finite values; the caller decides what to do.
pub fn conjugate_gradient(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> CgOutcome {
    let n = b.len();
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut ap = vec![0.0; n];
    let mut r = b.to_vec();
    if x0.is_some() {
        apply(&x, &mut ap);
        for (ri, a) in r.iter_mut().zip(&ap) {
            *ri -= a;
        }
    }
    let target = tol * norm(b);
    let mut rr = dot(&r, &r);
    let mut residuals = vec![rr.sqrt()];
    if rr.sqrt() <= target {
        return CgOutcome { x, iterations: 0, residuals, converged: true };
    }
    let mut p = r.clone();
    for it in 1..=max_iters {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap <= 0.0 {
            return CgOutcome { x, iterations: it - 1, residuals, converged: false };
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        residuals.push(rr_new.sqrt());
        if !rr_new.is_finite() {
            return CgOutcome { x, iterations: it, residuals, converged: false };
        }
        if rr_new.sqrt() <= target {
            return CgOutcome { x, iterations: it, residuals, converged: true };
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    CgOutcome { x, iterations: max_iters, residuals, converged: false }
}

/// Conjugate residual iteration for `A x = b`, same contract as
/// [`conjugate_gradient`].
pub fn conjugate_residual(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> CgOutcome {
    let n = b.len();
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut ar = vec![0.0; n];
    let mut r = b.to_vec();
    if x0.is_some() {
        apply(&x, &mut ar);
        for (ri, a) in r.iter_mut().zip(&ar) {
            *ri -= a;
        }
    }
    let target = tol * norm(b);
    let mut residuals = vec![norm(&r)];
    if residuals[0] <= target {
        return CgOutcome { x, iterations: 0, residuals, converged: true };
    }
    apply(&r, &mut ar);
    let mut p = r.clone();
    let mut ap = ar.clone();
    let mut rar = dot(&r, &ar);
    for it in 1..=max_iters {
        let apap = dot(&ap, &ap);
        if !(rar > 0.0 && apap > 0.0) || !rar.is_finite() || !apap.is_finite() {
            return CgOutcome { x, iterations: it - 1, residuals, converged: false };
        }
        let alpha = rar / apap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = norm(&r);
        residuals.push(rn);
        if !rn.is_finite() {
            return CgOutcome { x, iterations: it, residuals, converged: false };
        }
        if rn <= target {
            return CgOutcome { x, iterations: it, residuals, converged: true };
        }
        apply(&r, &mut ar);
        let rar_new = dot(&r, &ar);
        let beta = rar_new / rar;
        rar = rar_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
            ap[i] = ar[i] + beta * ap[i];
        }
    }
    CgOutcome { x, iterations: max_iters, residuals, converged: false }
}
