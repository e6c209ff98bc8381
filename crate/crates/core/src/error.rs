use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inconsistent periodic pairing on axis {axis}")]
    PeriodicPairing { axis: usize },
    #[error("graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },
    #[error("reservoir rate out of range at vertex {vertex}: {detail}")]
    RateOutOfRange { vertex: usize, detail: String },
    #[error("size guard: {what} has size {size}, limit {limit}")]
    SizeGuard { what: &'static str, size: usize, limit: usize },
    #[error("Jacobi iteration did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("singular linear system ({0})")]
    SingularSystem(String),
    #[error("no bracketed root in interval {index} (omega in [{lo}, {hi}])")]
    RootNotBracketed { index: usize, lo: f64, hi: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("graph has no boundary vertices")]
    NoBoundary,
    #[error("eigenvalue {lambda} too close to zero")]
    NearZeroEigenvalue { lambda: f64 },
    #[error("nonpositive variance {0}")]
    NonpositiveVariance(f64),
    #[error("degenerate variance {0}")]
    DegenerateVariance(f64),
    #[error("sample time {0} lies before microscopic time zero")]
    ScheduleBeforeZero(f64),
    #[error("graph file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
