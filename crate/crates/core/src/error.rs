use thiserror::Error;

#[derive(Debug, Error)]
pub enum KsdError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("point is off the manifold: {0}")]
    Domain(String),

    #[error("points are at the cut locus: {0}")]
    CutLocus(String),

    #[error("iteration did not converge: {0}")]
    Convergence(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence {
        what: String,
        iterations: usize,
        last_iterate: Vec<f64>,
    },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("objective is not convex (min eigenvalue {min_eigenvalue:.3e})")]
    NonConvex {
        min_eigenvalue: f64,
        stationary: Vec<f64>,
    },

    #[error("oracle check failed: {0}")]
    Oracle(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl KsdError {
    /// True for failures of the numerical kind, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            KsdError::CutLocus(_)
                | KsdError::Convergence(_)
                | KsdError::NoConvergence { .. }
                | KsdError::NonConvex { .. }
                | KsdError::Oracle(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, KsdError>;
