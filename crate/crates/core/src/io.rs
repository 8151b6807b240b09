//! On-disk formats.
//!
//! * Fields: `<stem>.json` header plus `<stem>.bin` holding little-endian
//!   `f64` values in row-major order (cell `(i, j)` at `i * ny + j`), and an
//!   optional 16-bit PGM preview.
//! * Scan bundles: a directory with `scan.json` and `scan.csv`
//!   (`t,patch,sx,sy,rx,ry,vx,vy`).
//! * System matrices: `<stem>.json` header (rows, cols, layout, grid) plus
//!   `<stem>.bin` with little-endian `f64` values in column-major order.
//! * Reports: CSV with `experiment,stage,param,psnr,ssim`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::SystemMatrix;
use crate::error::{Error, Result};
use crate::geometry::{ScanPlan, ScanSample};
use crate::grid::{DenseField, Grid, Rect, Vec2};
use crate::phantoms::PhantomSpec;
use crate::physics::{NoiseModel, Resolution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub nx: usize,
    pub ny: usize,
    pub domain: Rect,
    pub layout: String,
    pub dtype: String,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<stem>.json` and `<stem>.bin`.
pub fn write_field(stem: &Path, field: &DenseField) -> Result<()> {
    let g = field.grid();
    let header = FieldHeader { nx: g.nx, ny: g.ny, domain: g.domain, layout: "row-major".into(), dtype: "f64le".into() };
    fs::write(with_ext(stem, "json"), serde_json::to_vec_pretty(&header)?)?;
    let bytes: Vec<u8> = field.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(with_ext(stem, "bin"), bytes)?;
    Ok(())
}

pub fn read_field(stem: &Path) -> Result<DenseField> {
    let header: FieldHeader = serde_json::from_slice(&fs::read(with_ext(stem, "json"))?)?;
    if header.layout != "row-major" || header.dtype != "f64le" {
        return Err(Error::Format(format!("unsupported layout {} / {}", header.layout, header.dtype)));
    }
    let grid = Grid::new(header.nx, header.ny, header.domain)?;
    let bytes = fs::read(with_ext(stem, "bin"))?;
    if bytes.len() != 8 * grid.len() {
        return Err(Error::LengthMismatch { expected: 8 * grid.len(), found: bytes.len() });
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    DenseField::from_values(grid, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub rows: usize,
    pub cols: usize,
    pub layout: String,
    pub dtype: String,
    pub nx: usize,
    pub ny: usize,
    pub domain: Rect,
}

pub fn write_system_matrix(stem: &Path, sm: &SystemMatrix) -> Result<()> {
    let (g, m) = (sm.grid(), sm.matrix());
    let header = MatrixHeader {
        rows: m.nrows(),
        cols: m.ncols(),
        layout: "column-major".into(),
        dtype: "f64le".into(),
        nx: g.nx,
        ny: g.ny,
        domain: g.domain,
    };
    fs::write(with_ext(stem, "json"), serde_json::to_vec_pretty(&header)?)?;
    let mut w = BufWriter::new(fs::File::create(with_ext(stem, "bin"))?);
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_system_matrix(stem: &Path) -> Result<SystemMatrix> {
    let header: MatrixHeader = serde_json::from_slice(&fs::read(with_ext(stem, "json"))?)?;
    if header.layout != "column-major" || header.dtype != "f64le" {
        return Err(Error::Format(format!("unsupported layout {} / {}", header.layout, header.dtype)));
    }
    let bytes = fs::read(with_ext(stem, "bin"))?;
    let n = header.rows * header.cols;
    if bytes.len() != 8 * n {
        return Err(Error::LengthMismatch { expected: 8 * n, found: bytes.len() });
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let grid = Grid::new(header.nx, header.ny, header.domain)?;
    SystemMatrix::from_matrix(grid, nalgebra::DMatrix::from_vec(header.rows, header.cols, values))
}

/// 16-bit binary PGM, x to the right and y upward, linearly mapped from
/// `[min, max]` of the field.
pub fn write_pgm(path: &Path, field: &DenseField) -> Result<()> {
    let g = field.grid();
    let (lo, hi) = (field.min(), field.max());
    let scale = if hi > lo { 65535.0 / (hi - lo) } else { 0.0 };
    let mut out = format!("P5\n{} {}\n65535\n", g.nx, g.ny).into_bytes();
    for row in 0..g.ny {
        let j = g.ny - 1 - row;
        for i in 0..g.nx {
            let v = ((field.get(i, j) - lo) * scale).round().clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Field files plus `<stem>.pgm`.
pub fn write_field_with_preview(stem: &Path, field: &DenseField) -> Result<()> {
    write_field(stem, field)?;
    write_pgm(&with_ext(stem, "pgm"), field)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanManifest {
    pub domain: Rect,
    pub h: Resolution,
    pub noise: NoiseModel,
    /// Standard deviation actually applied.
    pub eps: f64,
    pub plan: ScanPlan,
    pub phantom: Option<PhantomSpec>,
    pub samples_per_patch: Vec<usize>,
    pub total_samples: usize,
}

impl ScanManifest {
    pub fn new(
        domain: Rect,
        h: Resolution,
        noise: NoiseModel,
        eps: f64,
        plan: ScanPlan,
        phantom: Option<PhantomSpec>,
        samples: &[ScanSample],
    ) -> Self {
        let mut per = vec![0; plan.patch_count()];
        for s in samples {
            if s.patch < per.len() {
                per[s.patch] += 1;
            }
        }
        ScanManifest { domain, h, noise, eps, plan, phantom, samples_per_patch: per, total_samples: samples.len() }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    t: f64,
    patch: usize,
    sx: f64,
    sy: f64,
    rx: f64,
    ry: f64,
    vx: f64,
    vy: f64,
}

pub const SCAN_MANIFEST: &str = "scan.json";
pub const SCAN_CSV: &str = "scan.csv";

/// Writes `scan.json` and `scan.csv` into `dir`, creating it if needed.
pub fn write_scan_bundle(dir: &Path, manifest: &ScanManifest, samples: &[ScanSample]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(SCAN_MANIFEST), serde_json::to_vec_pretty(manifest)?)?;
    let mut w = csv::Writer::from_path(dir.join(SCAN_CSV))?;
    for s in samples {
        w.serialize(SampleRow {
            t: s.t,
            patch: s.patch,
            sx: s.signal.x,
            sy: s.signal.y,
            rx: s.position.x,
            ry: s.position.y,
            vx: s.velocity.x,
            vy: s.velocity.y,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scan_bundle(dir: &Path) -> Result<(ScanManifest, Vec<ScanSample>)> {
    let manifest: ScanManifest = serde_json::from_slice(&fs::read(dir.join(SCAN_MANIFEST))?)?;
    let mut r = csv::Reader::from_path(dir.join(SCAN_CSV))?;
    let samples = r
        .deserialize::<SampleRow>()
        .map(|row| {
            row.map(|r| ScanSample {
                t: r.t,
                patch: r.patch,
                signal: Vec2::new(r.sx, r.sy),
                position: Vec2::new(r.rx, r.ry),
                velocity: Vec2::new(r.vx, r.vy),
            })
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if samples.len() != manifest.total_samples {
        return Err(Error::LengthMismatch { expected: manifest.total_samples, found: samples.len() });
    }
    Ok((manifest, samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub stage: String,
    pub param: String,
    pub psnr: f64,
    pub ssim: f64,
}

impl ReportRow {
    pub fn new(experiment: impl Into<String>, stage: impl Into<String>, param: impl Into<String>, psnr: f64, ssim: f64) -> Self {
        ReportRow { experiment: experiment.into(), stage: stage.into(), param: param.into(), psnr, ssim }
    }
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(path)?));
    if rows.is_empty() {
        w.write_record(["experiment", "stage", "param", "psnr", "ssim"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Record of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: serde_json::Value,
    pub version: String,
    pub rng: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
