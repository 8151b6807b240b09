//! End-to-end reproductions of the numerical experiments.
//!
//! Every experiment renders a phantom, simulates a noisy scan with 10 %
//! Gaussian noise, and scores reconstructions against the ground truth. Two
//! scales are available: `Paper` uses the full 200x200 grids and sample
//! counts, `Desk` shrinks them so everything runs in minutes on one core.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::{build_system_matrix, fused_lasso_with, signal_vector, stitch, tikhonov_with, GramData, SystemMatrix};
use crate::error::{Error, Result};
use crate::geometry::{make_grid_plan, make_random_plan, perturb_plan, LissajousParams, Pose, ScanPlan, ScanSample};
use crate::grid::{DenseField, Grid, Rect};
use crate::io::{write_field_with_preview, write_json, write_report, ReportRow};
use crate::metrics::{psnr, ssim, trace_reference};
use crate::phantoms::{render, resample, PhantomKind, PhantomSpec};
use crate::physics::{simulate_scan, NoiseModel, Resolution};
use crate::stage1::{Stage1Config, Stage1Problem};
use crate::stage2::{solve_landweber, solve_stage2, ConvolutionOperator, DataTerm, Stage2Config};
use crate::sweep::{decade_refine_sweep, decades, lambda_search, mu_coarse, SweepResult};

pub const NOISE_LEVEL: f64 = 0.1;
pub const LAMBDA_RANGE: (u32, u32) = (1, 50);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(Error::InvalidParameter(format!("unknown scale {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    pub grid: usize,
    pub samples_per_period: usize,
    pub patch_sets: Vec<usize>,
    pub random_patches: usize,
    /// Phantom resolution before resampling in the scan-while-moving run.
    pub moving_source: usize,
    pub moving_grid: usize,
    pub moving_periods: usize,
    /// Grid of the system-matrix comparisons.
    pub sm_grid: usize,
    pub stage2_max_iters: usize,
    pub fused_lasso_max_iters: usize,
}

impl Scale {
    pub fn config(self) -> ScaleConfig {
        match self {
            Scale::Desk => ScaleConfig {
                grid: 64,
                samples_per_period: 408,
                patch_sets: vec![2, 4, 10],
                random_patches: 143,
                moving_source: 64,
                moving_grid: 32,
                moving_periods: 250,
                sm_grid: 40,
                stage2_max_iters: 20_000,
                fused_lasso_max_iters: 5_000,
            },
            Scale::Paper => ScaleConfig {
                grid: 200,
                samples_per_period: 1632,
                patch_sets: vec![2, 4, 6, 8, 10],
                random_patches: 143,
                moving_source: 200,
                moving_grid: 100,
                moving_periods: 1000,
                sm_grid: 40,
                stage2_max_iters: 100_000,
                fused_lasso_max_iters: 20_000,
            },
        }
    }
}

/// Shared settings of one experiment run.
#[derive(Debug, Clone)]
pub struct Context {
    pub scale: Scale,
    pub config: ScaleConfig,
    pub h: Resolution,
    pub seed: u64,
}

impl Context {
    pub fn new(scale: Scale, seed: u64) -> Self {
        Context { scale, config: scale.config(), h: Resolution::default(), seed }
    }

    pub fn base(&self) -> LissajousParams {
        LissajousParams::default().with_samples(self.config.samples_per_period)
    }

    fn noise(&self) -> NoiseModel {
        NoiseModel { level: NOISE_LEVEL, seed: self.seed }
    }

    fn stage2(&self, mu: f64, beta: f64) -> Stage2Config {
        Stage2Config { mu, beta, max_iters: self.config.stage2_max_iters, ..Default::default() }
    }
}

fn big_domain() -> Rect {
    Rect::square(-2.0, 2.0).expect("valid")
}

pub fn phantom(kind: PhantomKind, n: usize, domain: Rect) -> Result<DenseField> {
    render(&PhantomSpec::new(kind, n, n, domain))
}

/// Stage 1 with the `lambda` search followed by Stage 2 with the `mu` sweep.
#[derive(Debug, Clone)]
pub struct TwoStage {
    pub samples: usize,
    pub lambda: SweepResult,
    pub mu: SweepResult,
}

impl TwoStage {
    pub fn u(&self) -> &DenseField {
        &self.lambda.best_field
    }

    pub fn rho(&self) -> &DenseField {
        &self.mu.best_field
    }
}

/// Best trace by PSNR against `kappa_h * gt`.
pub fn best_trace(gt: &DenseField, samples: &[ScanSample], h: Resolution) -> Result<SweepResult> {
    let problem = Stage1Problem::new(samples, *gt.grid())?;
    let tref = trace_reference(gt, h);
    lambda_search(&problem, &tref, LAMBDA_RANGE.0, LAMBDA_RANGE.1, &Stage1Config::default())
}

pub fn two_stage(ctx: &Context, gt: &DenseField, samples: &[ScanSample], beta: f64, coarse_mu: &[f64]) -> Result<TwoStage> {
    let lambda = best_trace(gt, samples, ctx.h)?;
    let k = ConvolutionOperator::new(*gt.grid(), ctx.h);
    let u = lambda.best_field.clone();
    let mu = decade_refine_sweep(coarse_mu, gt, |mu| Ok(solve_stage2(&u, &ctx.stage2(mu, beta), &k)?.rho))?;
    Ok(TwoStage { samples: samples.len(), lambda, mu })
}

/// One line of the experiment summary tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub phantom: String,
    pub scan: String,
    pub method: String,
    pub samples: usize,
    pub lambda: Option<f64>,
    pub u_psnr: Option<f64>,
    pub u_ssim: Option<f64>,
    pub param: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Everything one experiment produces.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub summary: Vec<SummaryRow>,
    pub report: Vec<ReportRow>,
    pub fields: Vec<(String, DenseField)>,
}

impl ExperimentOutput {
    fn push_two_stage(&mut self, exp: &str, phantom: &str, scan: &str, gt: &DenseField, ts: &TwoStage) {
        let tag = format!("{phantom}_{scan}");
        for r in &ts.lambda.records {
            self.report.push(ReportRow::new(exp, format!("u:{tag}"), format!("lambda={}", r.param), r.psnr, r.ssim));
        }
        for r in &ts.mu.records {
            self.report.push(ReportRow::new(exp, format!("rho:{tag}"), format!("mu={:e}", r.param), r.psnr, r.ssim));
        }
        self.summary.push(SummaryRow {
            experiment: exp.into(),
            phantom: phantom.into(),
            scan: scan.into(),
            method: "two-stage".into(),
            samples: ts.samples,
            lambda: Some(ts.lambda.best.param),
            u_psnr: Some(ts.lambda.best.psnr),
            u_ssim: Some(ts.lambda.best.ssim),
            param: ts.mu.best.param,
            psnr: ts.mu.best.psnr,
            ssim: ts.mu.best.ssim,
        });
        self.fields.push((format!("{tag}_gt"), gt.clone()));
        self.fields.push((format!("{tag}_u"), ts.u().clone()));
        self.fields.push((format!("{tag}_rho"), ts.rho().clone()));
    }

    fn push_single(&mut self, exp: &str, phantom: &str, scan: &str, method: &str, samples: usize, sweep: &SweepResult) {
        for r in &sweep.records {
            self.report.push(ReportRow::new(exp, format!("{method}:{phantom}_{scan}"), format!("mu={:e}", r.param), r.psnr, r.ssim));
        }
        self.summary.push(SummaryRow {
            experiment: exp.into(),
            phantom: phantom.into(),
            scan: scan.into(),
            method: method.into(),
            samples,
            lambda: None,
            u_psnr: None,
            u_ssim: None,
            param: sweep.best.param,
            psnr: sweep.best.psnr,
            ssim: sweep.best.ssim,
        });
        self.fields.push((format!("{phantom}_{scan}_{method}"), sweep.best_field.clone()));
    }

    fn extend(&mut self, other: ExperimentOutput) {
        self.summary.extend(other.summary);
        self.report.extend(other.report);
        self.fields.extend(other.fields);
    }

    /// Writes fields with previews to `dir/fields/`, plus `report.csv` and
    /// `summary.csv` and `summary.json`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let fields = dir.join("fields");
        std::fs::create_dir_all(&fields)?;
        for (name, f) in &self.fields {
            write_field_with_preview(&fields.join(name), f)?;
        }
        write_report(&dir.join("report.csv"), &self.report)?;
        let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
        for r in &self.summary {
            w.serialize(r)?;
        }
        w.flush()?;
        write_json(&dir.join("summary.json"), &self.summary)
    }
}

fn scan_label(p: usize) -> String {
    format!("{p}x{p}")
}

/// Experiment 1: vessel phantom under standard grid plans of growing size.
pub fn exp1_runs(ctx: &Context) -> Result<Vec<(usize, DenseField, TwoStage)>> {
    let domain = big_domain();
    let gt = phantom(PhantomKind::Vessel, ctx.config.grid, domain)?;
    ctx.config
        .patch_sets
        .iter()
        .map(|&p| {
            let plan = make_grid_plan(domain, ctx.base(), p, p)?;
            let samples = simulate_scan(&gt, &plan, ctx.h, ctx.noise())?;
            Ok((p, gt.clone(), two_stage(ctx, &gt, &samples, 1.0, &mu_coarse())?))
        })
        .collect()
}

pub fn exp1(ctx: &Context) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    for (p, gt, ts) in exp1_runs(ctx)? {
        out.push_two_stage("exp1", "vessel", &scan_label(p), &gt, &ts);
    }
    out.extend(random_run("exp1", ctx)?);
    Ok(out)
}

/// Priors solver against plain Landweber on one trace.
#[derive(Debug, Clone)]
pub struct Ablation {
    pub gt: DenseField,
    pub priors: TwoStage,
    pub landweber: SweepResult,
}

/// Landweber `mu` sweep on the trace of an existing two-stage run.
pub fn landweber_sweep(ctx: &Context, gt: &DenseField, u: &DenseField) -> Result<SweepResult> {
    let k = ConvolutionOperator::new(*gt.grid(), ctx.h);
    let cfg = Stage2Config::default();
    decade_refine_sweep(&mu_coarse(), gt, |mu| {
        Ok(solve_landweber(u, mu, cfg.delta, cfg.gamma, &k, ctx.config.stage2_max_iters, cfg.tol)?.0)
    })
}

pub fn ablation_from(ctx: &Context, gt: DenseField, priors: TwoStage) -> Result<Ablation> {
    let landweber = landweber_sweep(ctx, &gt, priors.u())?;
    Ok(Ablation { gt, priors, landweber })
}

/// Experiment 2: the 10x10 vessel trace deconvolved with and without priors.
pub fn exp2_run(ctx: &Context) -> Result<Ablation> {
    let domain = big_domain();
    let gt = phantom(PhantomKind::Vessel, ctx.config.grid, domain)?;
    let plan = make_grid_plan(domain, ctx.base(), 10, 10)?;
    let samples = simulate_scan(&gt, &plan, ctx.h, ctx.noise())?;
    let priors = two_stage(ctx, &gt, &samples, 1.0, &mu_coarse())?;
    ablation_from(ctx, gt, priors)
}

pub fn exp2(ctx: &Context) -> Result<ExperimentOutput> {
    let a = exp2_run(ctx)?;
    let mut out = ExperimentOutput::default();
    out.push_two_stage("exp2", "vessel", "10x10", &a.gt, &a.priors);
    out.push_single("exp2", "vessel", "10x10", "landweber", a.priors.samples, &a.landweber);
    Ok(out)
}

/// Experiment 3: randomly placed and rotated patches; samples outside the
/// domain are dropped.
pub fn exp3(ctx: &Context) -> Result<ExperimentOutput> {
    random_run("exp3", ctx)
}

fn random_run(exp: &str, ctx: &Context) -> Result<ExperimentOutput> {
    let domain = big_domain();
    let gt = phantom(PhantomKind::Vessel, ctx.config.grid, domain)?;
    let plan = make_random_plan(domain, ctx.base(), ctx.config.random_patches, ctx.seed)?;
    let samples = simulate_scan(&gt, &plan, ctx.h, ctx.noise())?;
    let ts = two_stage(ctx, &gt, &samples, 1.0, &mu_coarse())?;
    let mut out = ExperimentOutput::default();
    out.push_two_stage(exp, "vessel", &format!("random{}", ctx.config.random_patches), &gt, &ts);
    Ok(out)
}

/// Experiment 4: shape and concentration phantoms under a 10x10 plan.
pub fn exp4(ctx: &Context) -> Result<ExperimentOutput> {
    let domain = big_domain();
    let plan = make_grid_plan(domain, ctx.base(), 10, 10)?;
    let mut out = ExperimentOutput::default();
    for (kind, name, beta) in [(PhantomKind::Shape, "shape", 1.0), (PhantomKind::Concentration, "concentration", 0.1)] {
        let gt = phantom(kind, ctx.config.grid, domain)?;
        let samples = simulate_scan(&gt, &plan, ctx.h, ctx.noise())?;
        let ts = two_stage(ctx, &gt, &samples, beta, &mu_coarse())?;
        out.push_two_stage("exp4", name, "10x10", &gt, &ts);
    }
    Ok(out)
}

/// Experiment 5: 10x10 plans with random offset and angle perturbations.
pub fn exp5(ctx: &Context) -> Result<ExperimentOutput> {
    let domain = big_domain();
    let plan = make_grid_plan(domain, ctx.base(), 10, 10)?;
    let deg = std::f64::consts::PI / 180.0;
    let small = perturb_plan(&plan, 0.01, deg, ctx.seed.wrapping_add(1))?;
    let large = perturb_plan(&plan, 0.1, 2.0 * deg, ctx.seed.wrapping_add(2))?;
    let runs: [(PhantomKind, &str, &ScanPlan, &str); 4] = [
        (PhantomKind::Vessel, "vessel", &small, "10x10-perturbed"),
        (PhantomKind::Frame, "frame", &plan, "10x10"),
        (PhantomKind::Frame, "frame", &small, "10x10-perturbed"),
        (PhantomKind::Frame, "frame", &large, "10x10-perturbed-large"),
    ];
    let mut out = ExperimentOutput::default();
    for (kind, name, plan, scan) in runs {
        let gt = phantom(kind, ctx.config.grid, domain)?;
        let samples = simulate_scan(&gt, plan, ctx.h, ctx.noise())?;
        let ts = two_stage(ctx, &gt, &samples, 1.0, &mu_coarse())?;
        out.push_two_stage("exp5", name, scan, &gt, &ts);
    }
    Ok(out)
}

/// Experiment 6: a continuous left-to-right sweep over a domain the size of
/// the field of view, on a resampled vessel phantom with graded values.
pub fn exp6(ctx: &Context) -> Result<ExperimentOutput> {
    let domain = Rect::square(-1.0, 1.0)?;
    let source = phantom(PhantomKind::Vessel, ctx.config.moving_source, domain)?;
    let gt = resample(&source, ctx.config.moving_grid, ctx.config.moving_grid)?;
    let base = ctx.base();
    let start = Pose::new(domain.x_min - base.amplitude.x, 0.0, 0.0);
    let end = Pose::new(domain.x_max + base.amplitude.x, 0.0, 0.0);
    let plan = ScanPlan::linear_sweep(base, start, end, ctx.config.moving_periods)?;
    let samples = simulate_scan(&gt, &plan, ctx.h, ctx.noise())?;
    let ts = two_stage(ctx, &gt, &samples, 0.1, &decades(-13, -3))?;
    let mut out = ExperimentOutput::default();
    out.push_two_stage("exp6", "vessel", &format!("sweep{}", ctx.config.moving_periods), &gt, &ts);
    Ok(out)
}

/// Coarse Tikhonov decades; the best one is refined like the Stage 2 sweep.
pub fn tikhonov_decades() -> Vec<f64> {
    decades(-4, 8)
}

/// Per-patch Tikhonov on each disjoint field of view, stitched.
#[derive(Debug, Clone)]
pub struct StitchedBaseline {
    pub field: DenseField,
    pub patch_mu: Vec<f64>,
    pub psnr: f64,
    pub ssim: f64,
}

/// Reconstructs each patch of a disjoint plan on its own sub-grid with one
/// shared system matrix, then stitches the patches.
pub fn stitched_tikhonov(ctx: &Context, gt: &DenseField, plan: &ScanPlan, samples: &[ScanSample]) -> Result<StitchedBaseline> {
    let grid = *gt.grid();
    let amp = plan.base.amplitude;
    let (sx, sy) = ((2.0 * amp.x / grid.hx()).round() as usize, (2.0 * amp.y / grid.hy()).round() as usize);
    let local = Grid::new(sx, sy, Rect::new(-amp.x, amp.x, -amp.y, amp.y)?)?;
    let single = ScanPlan::from_patches(plan.base, vec![Pose::new(0.0, 0.0, 0.0)])?;
    let sm = build_system_matrix(local, &single, ctx.h)?;
    let ne = sm.normal_equations();
    let poses = plan.patches().ok_or_else(|| Error::InvalidParameter("stitching needs a patch plan".into()))?;
    let mut pieces = Vec::new();
    let mut patch_mu = Vec::new();
    for (xi, pose) in poses.iter().enumerate() {
        if pose.angle != 0.0 {
            return Err(Error::InvalidParameter("stitching needs unrotated patches".into()));
        }
        let own: Vec<ScanSample> = samples.iter().filter(|s| s.patch == xi).copied().collect();
        let s = signal_vector(&own);
        if s.len() != sm.matrix().nrows() {
            return Err(Error::LengthMismatch { expected: sm.matrix().nrows(), found: s.len() });
        }
        let i0 = ((pose.offset.x - amp.x - grid.domain.x_min) / grid.hx()).round() as usize;
        let j0 = ((pose.offset.y - amp.y - grid.domain.y_min) / grid.hy()).round() as usize;
        let mut sub = DenseField::zeros(local);
        for i in 0..sx {
            for j in 0..sy {
                sub.set(i, j, gt.get(i0 + i, j0 + j));
            }
        }
        let sts = sm.matrix().tr_mul(&s);
        let best = decade_refine_sweep(&tikhonov_decades(), &sub, |mu| tikhonov_with(&ne, &sts, mu))?;
        patch_mu.push(best.best.param);
        pieces.push((best.best_field, (i0, j0)));
    }
    let field = stitch(grid, &pieces)?;
    Ok(StitchedBaseline { psnr: psnr(gt, &field)?, ssim: ssim(gt, &field)?, field, patch_mu })
}

#[derive(Debug, Clone)]
pub struct BaselineComparison {
    pub gt: DenseField,
    pub two_stage: TwoStage,
    pub stitched: StitchedBaseline,
}

/// Experiment 7: plus phantom, 2x2 disjoint plan.
pub fn exp7_run(ctx: &Context) -> Result<BaselineComparison> {
    let domain = big_domain();
    let gt = phantom(PhantomKind::Plus, ctx.config.sm_grid, domain)?;
    let plan = make_grid_plan(domain, ctx.base(), 2, 2)?;
    let samples = simulate_scan(&gt, &plan, ctx.h, ctx.noise())?;
    let two_stage = two_stage(ctx, &gt, &samples, 1.0, &mu_coarse())?;
    let stitched = stitched_tikhonov(ctx, &gt, &plan, &samples)?;
    Ok(BaselineComparison { gt, two_stage, stitched })
}

pub fn exp7(ctx: &Context) -> Result<ExperimentOutput> {
    let r = exp7_run(ctx)?;
    let mut out = ExperimentOutput::default();
    out.push_two_stage("exp7", "plus", "2x2", &r.gt, &r.two_stage);
    out.summary.push(SummaryRow {
        experiment: "exp7".into(),
        phantom: "plus".into(),
        scan: "2x2".into(),
        method: "sm-tikhonov-stitched".into(),
        samples: r.two_stage.samples,
        lambda: None,
        u_psnr: None,
        u_ssim: None,
        param: f64::NAN,
        psnr: r.stitched.psnr,
        ssim: r.stitched.ssim,
    });
    for (xi, mu) in r.stitched.patch_mu.iter().enumerate() {
        out.report.push(ReportRow::new("exp7", "sm-tikhonov-stitched", format!("patch{xi}:mu={mu:e}"), r.stitched.psnr, r.stitched.ssim));
    }
    out.fields.push(("plus_2x2_sm-tikhonov-stitched".into(), r.stitched.field.clone()));
    Ok(out)
}

/// Joint system-matrix reconstructions of Experiment 8.
#[derive(Debug, Clone)]
pub struct JointBaseline {
    pub gt: DenseField,
    pub tikhonov: SweepResult,
    pub fused_lasso: SweepResult,
    pub two_stage: TwoStage,
    pub samples: usize,
}

/// Coarse decades for the fused-lasso `mu`.
pub fn fused_lasso_decades() -> Vec<f64> {
    decades(-2, 2)
}

/// Joint system-matrix Tikhonov and fused-lasso sweeps.
#[derive(Debug, Clone)]
pub struct JointSm {
    pub gt: DenseField,
    pub samples: Vec<ScanSample>,
    pub tikhonov: SweepResult,
    pub fused_lasso: SweepResult,
}

/// Experiment 8 without the two-stage reference: plus phantom, 4x4 plan.
pub fn exp8_baselines(ctx: &Context) -> Result<JointSm> {
    let domain = big_domain();
    let gt = phantom(PhantomKind::Plus, ctx.config.sm_grid, domain)?;
    let plan = make_grid_plan(domain, ctx.base(), 4, 4)?;
    let samples = simulate_scan(&gt, &plan, ctx.h, ctx.noise())?;
    let sm: SystemMatrix = build_system_matrix(*gt.grid(), &plan, ctx.h)?;
    let s = signal_vector(&samples);
    let ne = sm.normal_equations();
    let sts = sm.matrix().tr_mul(&s);
    let tikhonov = decade_refine_sweep(&tikhonov_decades(), &gt, |mu| tikhonov_with(&ne, &sts, mu))?;
    let gamma = 1.0 / GramData::new(&ne, &sm, &s)?.gram_norm(0x5eed);
    let cfg = Stage2Config { gamma, tol: 1e-5, max_iters: ctx.config.fused_lasso_max_iters, ..Default::default() };
    let fused_lasso = decade_refine_sweep(&fused_lasso_decades(), &gt, |mu| Ok(fused_lasso_with(&ne, &sm, &s, &Stage2Config { mu, ..cfg })?.rho))?;
    Ok(JointSm { gt, samples, tikhonov, fused_lasso })
}

/// Experiment 8: the joint baselines plus the two-stage pipeline on the same scan.
pub fn exp8_run(ctx: &Context) -> Result<JointBaseline> {
    let JointSm { gt, samples, tikhonov, fused_lasso } = exp8_baselines(ctx)?;
    let two_stage = two_stage(ctx, &gt, &samples, 1.0, &mu_coarse())?;
    Ok(JointBaseline { gt, tikhonov, fused_lasso, two_stage, samples: samples.len() })
}

pub fn exp8(ctx: &Context) -> Result<ExperimentOutput> {
    let r = exp8_run(ctx)?;
    let mut out = ExperimentOutput::default();
    out.push_single("exp8", "plus", "4x4", "sm-tikhonov", r.samples, &r.tikhonov);
    out.push_single("exp8", "plus", "4x4", "sm-fused-lasso", r.samples, &r.fused_lasso);
    out.push_two_stage("exp8", "plus", "4x4", &r.gt, &r.two_stage);
    Ok(out)
}

pub const EXPERIMENTS: [&str; 8] = ["exp1", "exp2", "exp3", "exp4", "exp5", "exp6", "exp7", "exp8"];

pub fn run_experiment(name: &str, ctx: &Context) -> Result<ExperimentOutput> {
    match name {
        "exp1" => exp1(ctx),
        "exp2" => exp2(ctx),
        "exp3" => exp3(ctx),
        "exp4" => exp4(ctx),
        "exp5" => exp5(ctx),
        "exp6" => exp6(ctx),
        "exp7" => exp7(ctx),
        "exp8" => exp8(ctx),
        "all" => {
            let mut out = ExperimentOutput::default();
            for n in EXPERIMENTS {
                out.extend(run_experiment(n, ctx)?);
            }
            Ok(out)
        }
        other => Err(Error::InvalidParameter(format!("unknown experiment {other:?}"))),
    }
}
