//! Synthetic ground-truth distributions.
//!
//! Geometry is given in normalized coordinates `(u, v) in [-1, 1]^2` relative
//! to the domain, with all supports inside `|u|, |v| < 0.8`. Cells are filled
//! by evaluating the shape at their centers, and the outermost ring of cells
//! is always zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DenseField, Grid, Rect, Vec2};
use crate::stage1::interpolate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    /// A bent tube with one side branch.
    Vessel,
    /// A five-pointed star-like blob with a central hole.
    Shape,
    /// Four squares at levels 1, 0.75, 0.5 and 0.25.
    Concentration,
    /// A hollow square.
    Frame,
    /// A cross centered at the domain center.
    Plus,
    /// One nonzero cell.
    Delta { i: usize, j: usize },
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "vessel" => PhantomKind::Vessel,
            "shape" => PhantomKind::Shape,
            "concentration" => PhantomKind::Concentration,
            "frame" => PhantomKind::Frame,
            "plus" => PhantomKind::Plus,
            other => {
                let parse = || -> Option<PhantomKind> {
                    let inner = other.strip_prefix("delta:")?;
                    let (i, j) = inner.split_once(',')?;
                    Some(PhantomKind::Delta { i: i.trim().parse().ok()?, j: j.trim().parse().ok()? })
                };
                parse().ok_or_else(|| Error::InvalidParameter(format!("unknown phantom {other:?}")))?
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub nx: usize,
    pub ny: usize,
    pub domain: Rect,
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind, nx: usize, ny: usize, domain: Rect) -> Self {
        PhantomSpec { kind, nx, ny, domain }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.domain)
    }
}

const VESSEL_HALF_WIDTH: f64 = 0.07;
const PLUS_HALF_WIDTH: f64 = 0.12;
const PLUS_HALF_LENGTH: f64 = 0.6;
const FRAME_OUTER: f64 = 0.6;
const FRAME_INNER: f64 = 0.42;
const SQUARE_HALF: f64 = 0.25;
const SQUARE_OFFSET: f64 = 0.38;

fn vessel_paths() -> [Vec<(f64, f64)>; 2] {
    let main = (0..=200)
        .map(|k| {
            let u = -0.7 + 1.4 * k as f64 / 200.0;
            (u, 0.3 * (2.4 * u).sin() - 0.15 * u)
        })
        .collect();
    let branch = (0..=100)
        .map(|k| {
            let s = k as f64 / 100.0;
            let u = -0.05 + 0.5 * s;
            (u, 0.3 * (2.4 * -0.05f64).sin() + 0.0075 - 0.7 * s + 0.15 * s * s)
        })
        .collect();
    [main, branch]
}

fn dist_to_polyline(p: (f64, f64), pts: &[(f64, f64)]) -> f64 {
    pts.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

fn normalized_value(kind: PhantomKind, u: f64, v: f64, paths: &Option<[Vec<(f64, f64)>; 2]>) -> f64 {
    match kind {
        PhantomKind::Vessel => {
            let paths = paths.as_ref().expect("vessel paths");
            let d = paths.iter().map(|p| dist_to_polyline((u, v), p)).fold(f64::INFINITY, f64::min);
            if d < VESSEL_HALF_WIDTH { 1.0 } else { 0.0 }
        }
        PhantomKind::Shape => {
            let r = (u * u + v * v).sqrt();
            let theta = v.atan2(u);
            let edge = 0.45 + 0.2 * (5.0 * theta).cos();
            if r < edge && r > 0.12 { 1.0 } else { 0.0 }
        }
        PhantomKind::Concentration => {
            let inside = |cu: f64, cv: f64| (u - cu).abs() < SQUARE_HALF && (v - cv).abs() < SQUARE_HALF;
            let o = SQUARE_OFFSET;
            if inside(-o, o) {
                1.0
            } else if inside(o, o) {
                0.75
            } else if inside(-o, -o) {
                0.5
            } else if inside(o, -o) {
                0.25
            } else {
                0.0
            }
        }
        PhantomKind::Frame => {
            let m = u.abs().max(v.abs());
            if (FRAME_INNER..FRAME_OUTER).contains(&m) { 1.0 } else { 0.0 }
        }
        PhantomKind::Plus => {
            let arm = |a: f64, b: f64| a.abs() < PLUS_HALF_WIDTH && b.abs() < PLUS_HALF_LENGTH;
            if arm(u, v) || arm(v, u) { 1.0 } else { 0.0 }
        }
        PhantomKind::Delta { .. } => unreachable!(),
    }
}

/// Renders a phantom on its grid.
pub fn render(spec: &PhantomSpec) -> Result<DenseField> {
    let grid = spec.grid()?;
    if let PhantomKind::Delta { i, j } = spec.kind {
        if i >= grid.nx || j >= grid.ny {
            return Err(Error::IndexOutOfRange { i, j, nx: grid.nx, ny: grid.ny });
        }
        let mut f = DenseField::zeros(grid);
        f.set(i, j, 1.0);
        return Ok(f);
    }
    let d = grid.domain;
    let c = d.center();
    let (ax, ay) = (0.5 * d.width(), 0.5 * d.height());
    let paths = matches!(spec.kind, PhantomKind::Vessel).then(vessel_paths);
    let mut f = DenseField::from_fn(grid, |p: Vec2| normalized_value(spec.kind, (p.x - c.x) / ax, (p.y - c.y) / ay, &paths));
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            if i == 0 || j == 0 || i + 1 == grid.nx || j + 1 == grid.ny {
                f.set(i, j, 0.0);
            }
        }
    }
    Ok(f)
}

/// Bicubic resampling onto an `nx x ny` grid over the same domain, clamped
/// to `[0, 1]`.
pub fn resample(field: &DenseField, nx: usize, ny: usize) -> Result<DenseField> {
    let src = field.grid();
    if nx < 4 || ny < 4 || src.nx < 4 || src.ny < 4 {
        return Err(Error::InvalidParameter("resampling needs at least 4 cells per axis".into()));
    }
    let target = Grid::new(nx, ny, src.domain)?;
    let mut out = DenseField::zeros(target);
    for i in 0..nx {
        for j in 0..ny {
            out.set(i, j, interpolate(field, &target.center(i, j))?.clamp(0.0, 1.0));
        }
    }
    Ok(out)
}
