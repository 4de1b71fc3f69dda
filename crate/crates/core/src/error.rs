use thiserror::Error;

/// Errors raised while building, loading or checking a mesh.
#[derive(Debug, Error)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("nonmanifold face {face}: referenced by {count} cells")]
    NonManifold { face: usize, count: usize },
    #[error("face {face} is not referenced by any cell")]
    OrphanFace { face: usize },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("invalid generator input: {0}")]
    InvalidInput(String),
    #[error("mesh validation failed: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// Errors from the discretization, assembly and solve pipeline.
#[derive(Debug, Error)]
pub enum WgError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("cell {cell} is not star-shaped about its vertex average (fan tet volume {volume:e})")]
    NotStarShaped { cell: usize, volume: f64 },
    #[error("degenerate {what}: mass matrix is not positive definite")]
    Degenerate { what: String },
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error("boundary component {0} has zero measure")]
    EmptyBoundaryComponent(usize),
    #[error("solver failed ({method}): relative residual {residual:e} exceeds tolerance {tol:e}")]
    SolverFailed {
        method: String,
        residual: f64,
        tol: f64,
    },
    #[error("factorization error: {0}")]
    Factorization(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown case '{0}' (expected poly-exact, trig-cube, trig-hollow or two-material)")]
    UnknownCase(String),
}

pub type Result<T, E = WgError> = std::result::Result<T, E>;
