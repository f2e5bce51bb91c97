use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("inadmissible anisotropic parameters: {0}")]
    Inadmissible(String),
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("zero field has no Rayleigh quotient")]
    ZeroField,
    #[error("enumeration guard: {cells} interior cells exceeds the limit of {limit}")]
    EnumerationGuard { cells: usize, limit: usize },
    #[error("dense oracle guard: {nodes} nodes exceeds the limit of {limit}")]
    SizeGuard { nodes: usize, limit: usize },
    #[error("singular system")]
    Singular,
    #[error("{what} did not converge (residual {residual:e})")]
    NotConverged { what: &'static str, residual: f64 },
}
