use thiserror::Error;

/// Errors raised by the laboratory. Budget exhaustion is never an error: it
/// is reported through the tagged outcomes of the walk and disconnection
/// routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("point {point:?} is not valid for {geometry}")]
    InvalidPoint { point: Vec<i64>, geometry: String },

    #[error("box of radius {radius} wraps around a torus of side {side}")]
    BoxWraps { radius: u64, side: u32 },

    #[error("domain has {size} states, above the configured cap of {cap}")]
    SizeGuard { size: usize, cap: usize },

    #[error("set K is not contained in U")]
    NotSubset,

    #[error("walk on Z^{dim} is recurrent; a transient lattice (dimension >= 3) is required")]
    Recurrent { dim: usize },

    #[error("iterative solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("capacity estimate is too noisy: relative error {relative:e} exceeds {tolerance:e}")]
    CapacityTolerance { relative: f64, tolerance: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no sign change of the criterion on the supplied grid")]
    NoSignChange,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
