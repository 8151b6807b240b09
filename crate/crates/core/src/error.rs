use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate domain [{x_min}, {x_max}] x [{y_min}, {y_max}]")]
    DegenerateDomain {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },

    #[error("time {t} outside the plan interval [0, {total}]")]
    TimeOutOfRange { t: f64, total: f64 },

    #[error("point ({x}, {y}) lies outside the domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("index ({i}, {j}) out of range for a {nx}x{ny} grid")]
    IndexOutOfRange { i: usize, j: usize, nx: usize, ny: usize },

    #[error("{solver} diverged at iteration {iteration}")]
    SolverDivergence { solver: &'static str, iteration: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("patch tiling leaves cell ({i}, {j}) uncovered")]
    TilingGap { i: usize, j: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
