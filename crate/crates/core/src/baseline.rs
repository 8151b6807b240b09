//! System-matrix reconstruction used as the comparison method.
//!
//! Column `(i, j)` of the system matrix is the noiseless scan of the unit
//! delta on cell `(i, j)`, with all x components stacked above all y
//! components. Tikhonov solves use the normal equations with a cached Gram
//! matrix, so a parameter sweep costs one `S^T S` product.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cg::conjugate_gradient;
use crate::error::{Error, Result};
use crate::geometry::{ScanPlan, ScanSample, TrajectoryPoint};
use crate::grid::{DenseField, Grid};
use crate::physics::{kernel_jacobian, Resolution};
use crate::stage2::{power_iteration, solve_gfb, DataTerm, Stage2Config, Stage2Output};

#[derive(Debug, Clone)]
pub struct SystemMatrix {
    grid: Grid,
    matrix: DMatrix<f64>,
}

impl SystemMatrix {
    pub fn from_matrix(grid: Grid, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() != grid.len() || !matrix.nrows().is_multiple_of(2) {
            return Err(Error::LengthMismatch { expected: grid.len(), found: matrix.ncols() });
        }
        Ok(SystemMatrix { grid, matrix })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Number of phase-space samples, half the row count.
    pub fn samples(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn apply(&self, rho: &DenseField) -> Result<DVector<f64>> {
        self.grid.check_same(rho.grid())?;
        Ok(&self.matrix * DVector::from_column_slice(rho.values()))
    }

    /// Tikhonov operator with the Gram matrix computed once.
    pub fn normal_equations(&self) -> NormalEquations {
        NormalEquations { grid: self.grid, gram: self.matrix.tr_mul(&self.matrix) }
    }
}

/// Stacks the x components of the signals above the y components.
pub fn signal_vector(samples: &[ScanSample]) -> DVector<f64> {
    let m = samples.len();
    DVector::from_fn(2 * m, |r, _| if r < m { samples[r].signal.x } else { samples[r - m].signal.y })
}

/// Noiseless delta responses of every grid cell under `plan`, restricted to
/// trajectory points inside the grid domain.
pub fn build_system_matrix(grid: Grid, plan: &ScanPlan, h: Resolution) -> Result<SystemMatrix> {
    let pts: Vec<TrajectoryPoint> = plan.acquisition(&grid.domain)?;
    let m = pts.len();
    let area = grid.cell_area();
    let mut matrix = DMatrix::<f64>::zeros(2 * m, grid.len());
    matrix.as_mut_slice().par_chunks_mut(2 * m.max(1)).enumerate().for_each(|(col, out)| {
        let (i, j) = (col / grid.ny, col % grid.ny);
        let x = grid.center(i, j);
        for (k, p) in pts.iter().enumerate() {
            let s = area * kernel_jacobian(p.position - x, h) * p.velocity;
            out[k] = s.x;
            out[m + k] = s.y;
        }
    });
    SystemMatrix::from_matrix(grid, matrix)
}

/// `S^T S` for one system matrix, reused across regularization parameters.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    grid: Grid,
    gram: DMatrix<f64>,
}

impl NormalEquations {
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
}

pub const TIKHONOV_TOL: f64 = 1e-12;
pub const TIKHONOV_MAX_ITERS: usize = 10_000;

/// Minimizer of `||S rho - s||^2 + mu ||rho||^2` by conjugate gradients on
/// `(S^T S + mu I) rho = S^T s`.
pub fn tikhonov_solve(sm: &SystemMatrix, s: &DVector<f64>, mu: f64) -> Result<DenseField> {
    tikhonov_with(&sm.normal_equations(), &sm.matrix.tr_mul(s), mu)
}

/// As [`tikhonov_solve`] with a precomputed Gram matrix and `S^T s`.
pub fn tikhonov_with(ne: &NormalEquations, sts: &DVector<f64>, mu: f64) -> Result<DenseField> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu must be > 0, got {mu}")));
    }
    if sts.len() != ne.grid.len() {
        return Err(Error::LengthMismatch { expected: ne.grid.len(), found: sts.len() });
    }
    let n = ne.grid.len();
    let out = conjugate_gradient(
        |x, y| {
            let gx = &ne.gram * DVector::from_column_slice(x);
            for k in 0..n {
                y[k] = gx[k] + mu * x[k];
            }
        },
        sts.as_slice(),
        None,
        TIKHONOV_TOL,
        TIKHONOV_MAX_ITERS,
    );
    if out.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverDivergence { solver: "tikhonov", iteration: out.iterations });
    }
    DenseField::from_values(ne.grid, out.x)
}

/// Copies patch reconstructions into `target` at their cell offsets `(i0, j0)`.
/// Overlaps are averaged; every target cell must be covered.
pub fn stitch(target: Grid, patches: &[(DenseField, (usize, usize))]) -> Result<DenseField> {
    let mut sum = vec![0.0; target.len()];
    let mut count = vec![0usize; target.len()];
    for (field, (i0, j0)) in patches {
        let g = field.grid();
        if i0 + g.nx > target.nx || j0 + g.ny > target.ny {
            return Err(Error::GridMismatch(format!(
                "patch of {}x{} at ({i0}, {j0}) exceeds {}x{}",
                g.nx, g.ny, target.nx, target.ny
            )));
        }
        for i in 0..g.nx {
            for j in 0..g.ny {
                let k = target.index(i0 + i, j0 + j);
                sum[k] += field.get(i, j);
                count[k] += 1;
            }
        }
    }
    if let Some(k) = count.iter().position(|c| *c == 0) {
        return Err(Error::TilingGap { i: k / target.ny, j: k % target.ny });
    }
    DenseField::from_values(target, sum.iter().zip(&count).map(|(s, c)| s / *c as f64).collect())
}

/// The data term `1/2 ||S rho - s||^2` expressed through `S^T S`, `S^T s`
/// and `s^T s`.
pub struct GramData<'a> {
    ne: &'a NormalEquations,
    sts: DVector<f64>,
    ss: f64,
}

impl<'a> GramData<'a> {
    pub fn new(ne: &'a NormalEquations, sm: &SystemMatrix, s: &DVector<f64>) -> Result<Self> {
        if s.len() != sm.matrix.nrows() {
            return Err(Error::LengthMismatch { expected: sm.matrix.nrows(), found: s.len() });
        }
        Ok(GramData { ne, sts: sm.matrix.tr_mul(s), ss: s.norm_squared() })
    }
}

impl DataTerm for GramData<'_> {
    fn grid(&self) -> &Grid {
        &self.ne.grid
    }

    fn gradient(&self, rho: &[f64]) -> Vec<f64> {
        let g = &self.ne.gram * DVector::from_column_slice(rho) - &self.sts;
        g.as_slice().to_vec()
    }

    fn value(&self, rho: &[f64]) -> f64 {
        let x = DVector::from_column_slice(rho);
        let gx = &self.ne.gram * &x;
        (0.5 * (x.dot(&gx) - 2.0 * x.dot(&self.sts) + self.ss)).max(0.0)
    }

    fn gram_norm(&self, seed: u64) -> f64 {
        power_iteration(self.ne.grid.len(), |x| (&self.ne.gram * DVector::from_column_slice(x)).as_slice().to_vec(), seed)
    }
}

/// Non-negative fused lasso inversion of the system matrix, started from zero.
pub fn fused_lasso_sm_solve(sm: &SystemMatrix, s: &DVector<f64>, cfg: &Stage2Config) -> Result<Stage2Output> {
    let ne = sm.normal_equations();
    fused_lasso_with(&ne, sm, s, cfg)
}

/// As [`fused_lasso_sm_solve`] with a precomputed Gram matrix.
pub fn fused_lasso_with(ne: &NormalEquations, sm: &SystemMatrix, s: &DVector<f64>, cfg: &Stage2Config) -> Result<Stage2Output> {
    let data = GramData::new(ne, sm, s)?;
    solve_gfb(&data, &DenseField::zeros(sm.grid), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_grid_plan, LissajousParams};
    use crate::grid::Rect;
    use crate::physics::simulate_clean;
    use rand::Rng;

    fn setup(n: usize) -> (Grid, ScanPlan, Resolution) {
        let domain = Rect::square(-2.0, 2.0).unwrap();
        let base = LissajousParams::default().with_samples(96);
        (Grid::new(n, n, domain).unwrap(), make_grid_plan(domain, base, 2, 2).unwrap(), Resolution::new(0.05).unwrap())
    }

    fn random_field(g: Grid, seed: u64) -> DenseField {
        let mut rng = crate::rng_from_seed(seed);
        DenseField::from_values(g, (0..g.len()).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn matches_forward_simulation() {
        let (g, plan, h) = setup(8);
        let sm = build_system_matrix(g, &plan, h).unwrap();
        assert_eq!(sm.matrix().ncols(), 64);
        let rho = random_field(g, 1);
        let sim = signal_vector(&simulate_clean(&rho, &plan, h).unwrap());
        assert_eq!(sim.len(), sm.matrix().nrows());
        let s = sm.apply(&rho).unwrap();
        assert!((&s - &sim).norm() <= 1e-10 * sim.norm());

        let mut d = DenseField::zeros(g);
        d.set(3, 5, 1.0);
        let col = sm.matrix().column(g.index(3, 5)).into_owned();
        let scan = signal_vector(&simulate_clean(&d, &plan, h).unwrap());
        assert!((&col - &scan).norm() <= 1e-13 * scan.norm());
    }

    #[test]
    fn dimensions_single_patch() {
        let g = Grid::new(20, 20, Rect::square(-1.0, 1.0).unwrap()).unwrap();
        let plan = ScanPlan::from_patches(LissajousParams::default(), vec![crate::geometry::Pose::new(0.0, 0.0, 0.0)]).unwrap();
        let sm = build_system_matrix(g, &plan, Resolution::default()).unwrap();
        assert_eq!((sm.matrix().nrows(), sm.matrix().ncols()), (3264, 400));
    }

    #[test]
    fn tikhonov_limits() {
        let g = Grid::new(2, 2, Rect::square(0.0, 1.0).unwrap()).unwrap();
        let a = DMatrix::from_row_slice(4, 4, &[4.0, 1.0, 0.0, 0.5, 1.0, 3.0, 0.2, 0.0, 0.0, 0.2, 2.0, 0.3, 0.5, 0.0, 0.3, 5.0]);
        let sm = SystemMatrix::from_matrix(g, a.clone()).unwrap();
        let s = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let direct = a.clone().lu().solve(&s).unwrap();
        let tik = tikhonov_solve(&sm, &s, 1e-14).unwrap();
        for k in 0..4 {
            assert!((tik.values()[k] - direct[k]).abs() <= 1e-8);
        }
        assert!(tikhonov_solve(&sm, &s, 1e14).unwrap().norm() < 1e-12);
        assert!(tikhonov_solve(&sm, &s, 0.0).is_err());
    }

    #[test]
    fn normal_operator_is_spd() {
        let (g, plan, h) = setup(6);
        let sm = build_system_matrix(g, &plan, h).unwrap();
        let ne = sm.normal_equations();
        for seed in 0..5 {
            let x = DVector::from_column_slice(random_field(g, seed).values());
            let v = x.dot(&(ne.gram() * &x)) + 1e-3 * x.norm_squared();
            assert!(v > 0.0);
        }
        let diff = ne.gram() - ne.gram().transpose();
        assert!(diff.amax() <= 1e-12 * ne.gram().amax());
    }

    #[test]
    fn stitch_cases() {
        let target = Grid::new(4, 4, Rect::square(-2.0, 2.0).unwrap()).unwrap();
        let sub = Grid::new(2, 2, Rect::square(-1.0, 1.0).unwrap()).unwrap();
        let tiles = |vals: [f64; 4]| -> Vec<(DenseField, (usize, usize))> {
            [(0, 0), (0, 2), (2, 0), (2, 2)].iter().zip(vals).map(|(&o, v)| (DenseField::constant(sub, v), o)).collect()
        };
        let ones = stitch(target, &tiles([1.0; 4])).unwrap();
        assert!(ones.values().iter().all(|v| *v == 1.0));
        let blocks = stitch(target, &tiles([1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!((blocks.get(1, 1), blocks.get(0, 3), blocks.get(3, 0), blocks.get(2, 2)), (1.0, 2.0, 3.0, 4.0));
        let whole = random_field(target, 3);
        assert_eq!(stitch(target, &[(whole.clone(), (0, 0))]).unwrap(), whole);
        let mut partial = tiles([1.0; 4]);
        partial.pop();
        assert!(matches!(stitch(target, &partial), Err(Error::TilingGap { i: 2, j: 2 })));
        let overlap = vec![(DenseField::constant(target, 1.0), (0, 0)), (DenseField::constant(sub, 3.0), (1, 1))];
        let avg = stitch(target, &overlap).unwrap();
        assert_eq!((avg.get(0, 0), avg.get(1, 1)), (1.0, 2.0));
    }

    #[test]
    fn fused_lasso_cases() {
        let (g, plan, h) = setup(6);
        let sm = build_system_matrix(g, &plan, h).unwrap();
        let zero = DVector::zeros(sm.matrix().nrows());
        let cfg = Stage2Config { gamma: 1e-4, max_iters: 500, ..Default::default() };
        let out = fused_lasso_sm_solve(&sm, &zero, &cfg).unwrap();
        assert!(out.rho.values().iter().all(|v| *v == 0.0));

        let rho = random_field(g, 4);
        let s = sm.apply(&rho).unwrap();
        let ne = sm.normal_equations();
        let data = GramData::new(&ne, &sm, &s).unwrap();
        let gamma = 1.0 / data.gram_norm(1);
        let cfg = Stage2Config { mu: 1e-6, beta: 1e-6, gamma, max_iters: 2000, ..Default::default() };
        let out = fused_lasso_with(&ne, &sm, &s, &cfg).unwrap();
        assert!(out.diagnostics.final_objective <= out.diagnostics.initial_objective);
        assert!(out.rho.min() >= 0.0);
        assert!((data.value(rho.values())).abs() <= 1e-12 * s.norm_squared());
    }
}
