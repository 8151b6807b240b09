use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context as _, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mpi_multipatch::experiments::{run_experiment, Context, Scale, EXPERIMENTS};
use mpi_multipatch::geometry::{make_grid_plan, make_random_plan, perturb_plan, LissajousParams, Pose, ScanPlan};
use mpi_multipatch::io::{read_field, read_scan_bundle, write_field_with_preview, write_json, write_report, write_scan_bundle, ReportRow, RunManifest, ScanManifest};
use mpi_multipatch::metrics::{psnr, ssim, trace_reference};
use mpi_multipatch::phantoms::{render, PhantomKind, PhantomSpec};
use mpi_multipatch::physics::{add_noise, simulate_clean, NoiseModel, Resolution};
use mpi_multipatch::stage1::{Stage1Config, Stage1Problem};
use mpi_multipatch::stage2::{solve_landweber, solve_stage2, ConvolutionOperator, Stage2Config};
use mpi_multipatch::sweep::{decade_refine_sweep, lambda_sweep, mu_coarse, SweepResult};
use mpi_multipatch::{DenseField, Grid, Rect, RNG_NAME};

/// Two-stage multi-patch reconstruction for magnetic particle imaging.
#[derive(Parser, Debug, Serialize)]
#[command(name = "mpimp", version)]
struct Cli {
    /// Worker threads for the inner solvers.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
enum Command {
    /// Render a phantom and simulate a noisy scan bundle.
    Simulate(SimulateArgs),
    /// Run Stage 1 and Stage 2 on a scan bundle.
    Reconstruct(ReconstructArgs),
    /// Sweep lambda and/or mu against a ground truth.
    Sweep(SweepArgs),
    /// Reproduce one of the numerical experiments.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// vessel, shape, concentration, frame, plus or delta:i,j
    #[arg(long, default_value = "vessel")]
    phantom: String,
    /// Phantom grid size per axis.
    #[arg(long, default_value_t = 200)]
    grid: usize,
    /// grid:IxJ, random:N or sweep:PERIODS
    #[arg(long, default_value = "grid:10x10")]
    plan: String,
    #[arg(long, default_value = "-2,2,-2,2", allow_hyphen_values = true)]
    domain: String,
    #[arg(long, default_value = "1,1")]
    amp: String,
    #[arg(long, default_value_t = 1632)]
    samples: usize,
    /// Offset fraction and maximal angle in degrees, e.g. 0.01,1
    #[arg(long)]
    perturb: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    h: f64,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, env = "MPIMP_OUT")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
enum Stage2Solver {
    Gfb,
    Landweber,
}

#[derive(Args, Debug, Serialize)]
struct SolverArgs {
    /// Scan bundle directory.
    #[arg(long)]
    scan: PathBuf,
    /// Ground-truth field stem; also fixes the reconstruction grid.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Reconstruction grid NXxNY, required without --gt.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1e-16)]
    delta: f64,
    #[arg(long, default_value_t = 1e-3)]
    gamma: f64,
    #[arg(long, default_value_t = 5e-6)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    iters: usize,
    #[arg(long, value_enum, default_value_t = Stage2Solver::Gfb)]
    stage2: Stage2Solver,
    #[arg(long, env = "MPIMP_OUT")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ReconstructArgs {
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 5.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-4)]
    mu: f64,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    solver: SolverArgs,
    /// Integer lambda range LO:HI.
    #[arg(long)]
    lambda_range: Option<String>,
    /// Fixed lambda when no range is swept.
    #[arg(long, default_value_t = 5.0)]
    lambda: f64,
    /// Also sweep mu with the decade-then-refine schedule.
    #[arg(long)]
    mu_sweep: bool,
}

#[derive(Args, Debug, Serialize)]
struct ExperimentArgs {
    #[arg(value_parser = experiment_names())]
    name: String,
    #[arg(long, default_value = "desk")]
    scale: String,
    #[arg(long, env = "MPIMP_OUT")]
    out: PathBuf,
}

fn experiment_names() -> Vec<&'static str> {
    let mut v = EXPERIMENTS.to_vec();
    v.push("all");
    v
}

fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ValueValidation, msg).exit()
}

fn parse_list<const N: usize>(s: &str, what: &str) -> [f64; N] {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().unwrap_or_else(|_| usage_error(format!("bad {what} {s:?}")));
    v.try_into().unwrap_or_else(|_| usage_error(format!("{what} needs {N} comma-separated numbers, got {s:?}")))
}

fn parse_dims(s: &str, what: &str) -> (usize, usize) {
    let parsed = s.split_once('x').and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)));
    match parsed {
        Some((a, b)) if a > 0 && b > 0 => (a, b),
        _ => usage_error(format!("bad {what} {s:?}, expected IxJ")),
    }
}

fn build_plan(args: &SimulateArgs, domain: Rect, base: LissajousParams, seed: u64) -> Result<ScanPlan> {
    let (kind, value) = args.plan.split_once(':').unwrap_or_else(|| usage_error(format!("bad plan {:?}", args.plan)));
    let plan = match kind {
        "grid" => {
            let (i, j) = parse_dims(value, "plan");
            make_grid_plan(domain, base, i, j)?
        }
        "random" => {
            let n = value.parse().unwrap_or_else(|_| usage_error(format!("bad patch count {value:?}")));
            make_random_plan(domain, base, n, seed)?
        }
        "sweep" => {
            let periods = value.parse().unwrap_or_else(|_| usage_error(format!("bad period count {value:?}")));
            let y = domain.center().y;
            let start = Pose::new(domain.x_min - base.amplitude.x, y, 0.0);
            let end = Pose::new(domain.x_max + base.amplitude.x, y, 0.0);
            ScanPlan::linear_sweep(base, start, end, periods)?
        }
        _ => usage_error(format!("unknown plan kind {kind:?}")),
    };
    match &args.perturb {
        None => Ok(plan),
        Some(p) => {
            let [frac, deg] = parse_list::<2>(p, "perturbation");
            if plan.patches().is_none() {
                usage_error("--perturb needs a patch plan");
            }
            Ok(perturb_plan(&plan, frac, deg.to_radians(), seed.wrapping_add(1))?)
        }
    }
}

fn simulate(args: &SimulateArgs, seed: u64) -> Result<()> {
    let [x0, x1, y0, y1] = parse_list::<4>(&args.domain, "domain");
    let [ax, ay] = parse_list::<2>(&args.amp, "amplitude");
    let domain = Rect::new(x0, x1, y0, y1)?;
    let kind: PhantomKind = args.phantom.parse().unwrap_or_else(|e| usage_error(e));
    let h = Resolution::new(args.h)?;
    let base = LissajousParams::default().with_amplitude(ax, ay).with_samples(args.samples);
    let plan = build_plan(args, domain, base, seed)?;
    let spec = PhantomSpec::new(kind, args.grid, args.grid, domain);
    let rho = render(&spec)?;
    let noise = NoiseModel { level: args.noise, seed };
    let mut samples = simulate_clean(&rho, &plan, h)?;
    let eps = add_noise(&mut samples, noise)?;
    let manifest = ScanManifest::new(domain, h, noise, eps, plan, Some(spec), &samples);
    write_scan_bundle(&args.out, &manifest, &samples)?;
    write_field_with_preview(&args.out.join("phantom"), &rho)?;
    let per = &manifest.samples_per_patch;
    let (lo, hi) = (per.iter().min().copied().unwrap_or(0), per.iter().max().copied().unwrap_or(0));
    println!("patches {} samples {} (per patch {lo}..{hi}) eps {eps:.6e}", per.len(), manifest.total_samples);
    Ok(())
}

struct Loaded {
    manifest: ScanManifest,
    problem: Stage1Problem,
    gt: Option<DenseField>,
}

fn load(args: &SolverArgs) -> Result<Loaded> {
    let (manifest, samples) = read_scan_bundle(&args.scan).with_context(|| format!("reading scan bundle {}", args.scan.display()))?;
    let gt = match &args.gt {
        Some(stem) => Some(read_field(stem).with_context(|| format!("reading ground truth {}", stem.display()))?),
        None => None,
    };
    let grid = match (&gt, &args.grid) {
        (Some(g), _) => *g.grid(),
        (None, Some(s)) => {
            let (nx, ny) = parse_dims(s, "grid");
            Grid::new(nx, ny, manifest.domain)?
        }
        (None, None) => usage_error("either --gt or --grid is required"),
    };
    let problem = Stage1Problem::new(&samples, grid)?;
    Ok(Loaded { manifest, problem, gt })
}

fn stage2_config(args: &SolverArgs, mu: f64) -> Stage2Config {
    Stage2Config { mu, beta: args.beta, delta: args.delta, gamma: args.gamma, tol: args.tol, max_iters: args.iters, ..Default::default() }
}

fn ensure_finite(name: &str, f: &DenseField) -> Result<()> {
    if !f.all_finite() {
        bail!("{name} contains non-finite values");
    }
    Ok(())
}

#[derive(Serialize)]
struct ReconstructDiagnostics {
    stage1: mpi_multipatch::stage1::Stage1Diagnostics,
    stage2: serde_json::Value,
}

fn reconstruct(args: &ReconstructArgs) -> Result<()> {
    let s = &args.solver;
    let loaded = load(s)?;
    let s1 = loaded.problem.solve(&Stage1Config { lambda: args.lambda, ..Default::default() }, None)?;
    let u = s1.trace;
    ensure_finite("u", &u)?;
    let k = ConvolutionOperator::new(*u.grid(), loaded.manifest.h);
    let (rho, stage2) = match s.stage2 {
        Stage2Solver::Gfb => {
            let out = solve_stage2(&u, &stage2_config(s, args.mu), &k)?;
            (out.rho, serde_json::to_value(out.diagnostics)?)
        }
        Stage2Solver::Landweber => {
            let (rho, d) = solve_landweber(&u, args.mu, s.delta, s.gamma, &k, s.iters, s.tol)?;
            (rho, serde_json::to_value(d)?)
        }
    };
    ensure_finite("rho", &rho)?;
    std::fs::create_dir_all(&s.out)?;
    write_field_with_preview(&s.out.join("u"), &u)?;
    write_field_with_preview(&s.out.join("rho"), &rho)?;
    write_json(&s.out.join("diagnostics.json"), &ReconstructDiagnostics { stage1: s1.diagnostics, stage2 })?;
    if let Some(gt) = &loaded.gt {
        let tref = trace_reference(gt, loaded.manifest.h);
        let rows = vec![
            ReportRow::new("reconstruct", "u", format!("lambda={}", args.lambda), psnr(&tref, &u)?, ssim(&tref, &u)?),
            ReportRow::new("reconstruct", "rho", format!("mu={:e}", args.mu), psnr(gt, &rho)?, ssim(gt, &rho)?),
        ];
        for r in &rows {
            println!("{} {} psnr {:.3} ssim {:.4}", r.stage, r.param, r.psnr, r.ssim);
        }
        write_report(&s.out.join("report.csv"), &rows)?;
    }
    Ok(())
}

fn report_rows(stage: &str, name: &str, sweep: &SweepResult, fmt: impl Fn(f64) -> String) -> Vec<ReportRow> {
    println!("{stage}: best {name}={} psnr {:.3} ssim {:.4}", fmt(sweep.best.param), sweep.best.psnr, sweep.best.ssim);
    sweep.records.iter().map(|r| ReportRow::new("sweep", stage, format!("{name}={}", fmt(r.param)), r.psnr, r.ssim)).collect()
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let s = &args.solver;
    if args.lambda_range.is_none() && !args.mu_sweep {
        usage_error("nothing to sweep, give --lambda-range and/or --mu-sweep");
    }
    let range = args.lambda_range.as_ref().map(|r| {
        let parsed = r.split_once(':').and_then(|(a, b)| Some((a.parse::<u32>().ok()?, b.parse::<u32>().ok()?)));
        match parsed {
            Some((lo, hi)) if lo >= 1 && lo <= hi => (lo, hi),
            _ => usage_error(format!("empty or invalid lambda range {r:?}")),
        }
    });
    let loaded = load(s)?;
    let Some(gt) = &loaded.gt else { usage_error("sweeps need --gt") };
    std::fs::create_dir_all(&s.out)?;
    let mut rows = Vec::new();
    let u = match range {
        Some((lo, hi)) => {
            let tref = trace_reference(gt, loaded.manifest.h);
            let res = lambda_sweep(&loaded.problem, &tref, lo, hi, &Stage1Config::default())?;
            rows.extend(report_rows("u", "lambda", &res, |p| p.to_string()));
            res.best_field
        }
        None => loaded.problem.solve(&Stage1Config { lambda: args.lambda, ..Default::default() }, None)?.trace,
    };
    ensure_finite("u", &u)?;
    write_field_with_preview(&s.out.join("u"), &u)?;
    if args.mu_sweep {
        let k = ConvolutionOperator::new(*u.grid(), loaded.manifest.h);
        let res = decade_refine_sweep(&mu_coarse(), gt, |mu| match s.stage2 {
            Stage2Solver::Gfb => Ok(solve_stage2(&u, &stage2_config(s, mu), &k)?.rho),
            Stage2Solver::Landweber => Ok(solve_landweber(&u, mu, s.delta, s.gamma, &k, s.iters, s.tol)?.0),
        })?;
        ensure_finite("rho", &res.best_field)?;
        rows.extend(report_rows("rho", "mu", &res, |p| format!("{p:e}")));
        write_field_with_preview(&s.out.join("rho"), &res.best_field)?;
    }
    write_report(&s.out.join("report.csv"), &rows)?;
    Ok(())
}

fn experiment(args: &ExperimentArgs, seed: u64) -> Result<()> {
    let scale: Scale = args.scale.parse().unwrap_or_else(|e| usage_error(e));
    let ctx = Context::new(scale, seed);
    let out = run_experiment(&args.name, &ctx)?;
    for (name, f) in &out.fields {
        ensure_finite(name, f)?;
    }
    out.write_to(&args.out)?;
    for r in &out.summary {
        println!("{} {} {} {}: psnr {:.3} ssim {:.4}", r.experiment, r.phantom, r.scan, r.method, r.psnr, r.ssim);
    }
    Ok(())
}

fn out_dir(cmd: &Command) -> &Path {
    match cmd {
        Command::Simulate(a) => &a.out,
        Command::Reconstruct(a) => &a.solver.out,
        Command::Sweep(a) => &a.solver.out,
        Command::Experiment(a) => &a.out,
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.threads == 0 {
        usage_error("--threads must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
    let start = Instant::now();
    let name = match &cli.command {
        Command::Simulate(a) => {
            simulate(a, cli.seed)?;
            "simulate"
        }
        Command::Reconstruct(a) => {
            reconstruct(a)?;
            "reconstruct"
        }
        Command::Sweep(a) => {
            sweep(a)?;
            "sweep"
        }
        Command::Experiment(a) => {
            experiment(a, cli.seed)?;
            "experiment"
        }
    };
    let manifest = RunManifest {
        command: name.into(),
        args: serde_json::to_value(&cli)?,
        version: env!("CARGO_PKG_VERSION").into(),
        rng: RNG_NAME.into(),
        seed: cli.seed,
        threads: cli.threads,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let dir = out_dir(&cli.command);
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("run.json"), &manifest)?;
    Ok(())
}
