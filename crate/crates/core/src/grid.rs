//! Cell-centered grids over rectangular domains and scalar fields on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;

/// Axis-aligned rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let r = Rect { x_min, x_max, y_min, y_max };
        r.validate()?;
        Ok(r)
    }

    /// The square `[lo, hi]^2`.
    pub fn square(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min;
        if ok {
            Ok(())
        } else {
            Err(Error::DegenerateDomain {
                x_min: self.x_min,
                x_max: self.x_max,
                y_min: self.y_min,
                y_max: self.y_max,
            })
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    /// Closed-set membership.
    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

/// An `nx x ny` cell-centered grid. Cell `(i, j)` has center
/// `(x_min + (i + 1/2) hx, y_min + (j + 1/2) hy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub domain: Rect,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, domain: Rect) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least one cell per axis, got {nx}x{ny}"
            )));
        }
        domain.validate()?;
        Ok(Grid { nx, ny, domain })
    }

    pub fn hx(&self) -> f64 {
        self.domain.width() / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.domain.height() / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of cell `(i, j)`; `i` runs along x and is the slow index.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.domain.x_min + (i as f64 + 0.5) * self.hx(),
            self.domain.y_min + (j as f64 + 0.5) * self.hy(),
        )
    }

    /// Cell containing `p`, with points on the upper boundary assigned to
    /// the last cell. `None` outside the closed domain.
    pub fn cell_of(&self, p: &Vec2) -> Option<(usize, usize)> {
        if !self.domain.contains(p) {
            return None;
        }
        let fi = ((p.x - self.domain.x_min) / self.hx()).floor();
        let fj = ((p.y - self.domain.y_min) / self.hy()).floor();
        let i = (fi.max(0.0) as usize).min(self.nx - 1);
        let j = (fj.max(0.0) as usize).min(self.ny - 1);
        Some((i, j))
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.domain == other.domain
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}x{} on {:?} vs {}x{} on {:?}",
                self.nx, self.ny, self.domain, other.nx, other.ny, other.domain
            )))
        }
    }
}

/// Scalar field sampled at the cell centers of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseField {
    grid: Grid,
    values: Vec<f64>,
}

impl DenseField {
    pub fn zeros(grid: Grid) -> Self {
        DenseField { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        DenseField { grid, values: vec![c; grid.len()] }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), found: values.len() });
        }
        Ok(DenseField { grid, values })
    }

    /// Evaluates `f` at every cell center.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(Vec2) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                values.push(f(grid.center(i, j)));
            }
        }
        DenseField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.index(i, j);
        self.values[k] = v;
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        DenseField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Swaps the axes, so cell `(i, j)` moves to `(j, i)`.
    pub fn transpose(&self) -> Self {
        let d = self.grid.domain;
        let grid = Grid {
            nx: self.grid.ny,
            ny: self.grid.nx,
            domain: Rect { x_min: d.y_min, x_max: d.y_max, y_min: d.x_min, y_max: d.x_max },
        };
        let mut out = DenseField::zeros(grid);
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Grid {
        Grid::new(4, 2, Rect::new(-2.0, 2.0, 0.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn degenerate_domains_rejected() {
        assert!(Rect::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(Rect::new(0.0, 1.0, 2.0, 1.0).is_err());
        assert!(Rect::new(0.0, f64::NAN, 0.0, 1.0).is_err());
        assert!(Grid::new(0, 3, Rect::square(0.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn centers_and_steps() {
        let g = unit();
        assert_eq!(g.hx(), 1.0);
        assert_eq!(g.hy(), 0.5);
        assert_eq!(g.center(0, 0), Vec2::new(-1.5, 0.25));
        assert_eq!(g.center(3, 1), Vec2::new(1.5, 0.75));
        assert_eq!(g.index(2, 1), 5);
    }

    #[test]
    fn cell_lookup_clamps_upper_edge() {
        let g = unit();
        assert_eq!(g.cell_of(&Vec2::new(-2.0, 0.0)), Some((0, 0)));
        assert_eq!(g.cell_of(&Vec2::new(2.0, 1.0)), Some((3, 1)));
        assert_eq!(g.cell_of(&Vec2::new(0.1, 0.6)), Some((2, 1)));
        assert_eq!(g.cell_of(&Vec2::new(2.1, 0.5)), None);
    }

    #[test]
    fn from_values_checks_length() {
        assert!(DenseField::from_values(unit(), vec![0.0; 7]).is_err());
        let f = DenseField::from_fn(unit(), |p| p.x + 10.0 * p.y);
        assert_eq!(f.get(1, 1), -0.5 + 7.5);
    }

    #[test]
    fn transpose_swaps_axes() {
        let f = DenseField::from_fn(unit(), |p| p.x + 10.0 * p.y);
        let t = f.transpose();
        assert_eq!(t.grid().nx, 2);
        assert_eq!(t.get(1, 3), f.get(3, 1));
        assert_eq!(t.transpose(), f);
    }
}
