//! Parameter selection against a known ground truth.
//!
//! Stage 1 is scored by PSNR of the trace against `kappa_h * rho_gt`, Stage 2
//! and the baselines against `rho_gt` itself. The best parameter is the PSNR
//! argmax; ties keep the earlier candidate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DenseField;
use crate::metrics::{psnr, ssim};
use crate::stage1::{CoreOperatorField, Stage1Config, Stage1Problem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub param: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Records in evaluation order.
    pub records: Vec<SweepRecord>,
    pub best: SweepRecord,
    pub best_field: DenseField,
}

impl SweepResult {
    /// Records sorted by parameter.
    pub fn curve(&self) -> Vec<SweepRecord> {
        let mut c = self.records.clone();
        c.sort_by(|a, b| a.param.total_cmp(&b.param));
        c
    }
}

struct Tracker<'a> {
    gt: &'a DenseField,
    records: Vec<SweepRecord>,
    best: Option<(SweepRecord, DenseField)>,
}

impl<'a> Tracker<'a> {
    fn new(gt: &'a DenseField) -> Self {
        Tracker { gt, records: Vec::new(), best: None }
    }

    fn score(&mut self, param: f64, field: DenseField) -> Result<f64> {
        let rec = SweepRecord { param, psnr: psnr(self.gt, &field)?, ssim: ssim(self.gt, &field)? };
        self.records.push(rec);
        if self.best.as_ref().is_none_or(|(b, _)| rec.psnr > b.psnr) {
            self.best = Some((rec, field));
        }
        Ok(rec.psnr)
    }

    fn finish(self) -> Result<SweepResult> {
        let (best, best_field) = self.best.ok_or_else(|| Error::InvalidParameter("empty parameter range".into()))?;
        Ok(SweepResult { records: self.records, best, best_field })
    }
}

/// Evaluates `solve` at every parameter in order.
pub fn sweep(params: &[f64], gt: &DenseField, mut solve: impl FnMut(f64) -> Result<DenseField>) -> Result<SweepResult> {
    let mut tr = Tracker::new(gt);
    for &p in params {
        let f = solve(p)?;
        tr.score(p, f)?;
    }
    tr.finish()
}

/// The five coarse decades `1e-7 ..= 1e-3`.
pub fn mu_coarse() -> Vec<f64> {
    decades(-7, -3)
}

/// `10^lo ..= 10^hi`, one value per decade.
pub fn decades(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 10f64.powi(e)).collect()
}

/// Values around the decade `10^e` of `best`: `t 10^{e-1}` for
/// `t in {2.5, 5, 7.5}` and `s 10^e` for `s in {2, 3, 4, 5}`.
pub fn refine_around(best: f64) -> Vec<f64> {
    let e = best.log10().round() as i32;
    let below = [2.5, 5.0, 7.5].map(|t| t * 10f64.powi(e - 1));
    let above = [2.0, 3.0, 4.0, 5.0].map(|s| s * 10f64.powi(e));
    below.into_iter().chain(above).collect()
}

/// Coarse sweep, then [`refine_around`] its argmax.
pub fn decade_refine_sweep(
    coarse: &[f64],
    gt: &DenseField,
    mut solve: impl FnMut(f64) -> Result<DenseField>,
) -> Result<SweepResult> {
    let mut tr = Tracker::new(gt);
    for &p in coarse {
        let f = solve(p)?;
        tr.score(p, f)?;
    }
    let centre = tr.best.as_ref().ok_or_else(|| Error::InvalidParameter("empty parameter range".into()))?.0.param;
    for p in refine_around(centre) {
        if tr.records.iter().any(|r| (r.param - p).abs() <= 1e-12 * p.abs()) {
            continue;
        }
        let f = solve(p)?;
        tr.score(p, f)?;
    }
    tr.finish()
}

/// Stage 1 over every integer `lambda` in `lo..=hi`, each solve warm-started
/// from the previous one.
pub fn lambda_sweep(problem: &Stage1Problem, trace_gt: &DenseField, lo: u32, hi: u32, base: &Stage1Config) -> Result<SweepResult> {
    if lo > hi || lo == 0 {
        return Err(Error::InvalidParameter(format!("bad lambda range {lo}..={hi}")));
    }
    let params: Vec<f64> = (lo..=hi).map(f64::from).collect();
    let mut warm: Option<CoreOperatorField> = None;
    sweep(&params, trace_gt, |lambda| {
        let out = problem.solve(&Stage1Config { lambda, ..*base }, warm.as_ref())?;
        warm = Some(out.a);
        Ok(out.trace)
    })
}

/// Integer ternary search for the PSNR-maximizing `lambda` in `lo..=hi`,
/// assuming a unimodal curve. Each solve is warm-started from the nearest
/// evaluated `lambda`.
pub fn lambda_search(problem: &Stage1Problem, trace_gt: &DenseField, lo: u32, hi: u32, base: &Stage1Config) -> Result<SweepResult> {
    if lo > hi || lo == 0 {
        return Err(Error::InvalidParameter(format!("bad lambda range {lo}..={hi}")));
    }
    let mut tr = Tracker::new(trace_gt);
    let mut done: BTreeMap<u32, (f64, CoreOperatorField)> = BTreeMap::new();
    let mut eval = |l: u32, tr: &mut Tracker| -> Result<f64> {
        if let Some((p, _)) = done.get(&l) {
            return Ok(*p);
        }
        let warm = done
            .iter()
            .min_by_key(|(k, _)| k.abs_diff(l))
            .map(|(_, (_, a))| a.clone());
        let out = problem.solve(&Stage1Config { lambda: f64::from(l), ..*base }, warm.as_ref())?;
        let p = tr.score(f64::from(l), out.trace)?;
        done.insert(l, (p, out.a));
        Ok(p)
    };
    let (mut a, mut b) = (lo, hi);
    while b - a > 2 {
        let m1 = a + (b - a) / 3;
        let m2 = b - (b - a) / 3;
        if eval(m1, &mut tr)? < eval(m2, &mut tr)? {
            a = m1 + 1;
        } else {
            b = m2 - 1;
        }
    }
    for l in a..=b {
        eval(l, &mut tr)?;
    }
    tr.finish()
}
