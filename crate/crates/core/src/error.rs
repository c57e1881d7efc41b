use thiserror::Error;

use crate::krylov::SolveReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("field mismatch: {0}")]
    FieldMismatch(String),

    #[error("missing Dirichlet boundary data for tensor field")]
    MissingBoundaryData,

    #[error("zero symbol at mode {mode} outside the declared null modes")]
    SingularSymbol { mode: usize },

    #[error("E1 = {value:.6e} is not positive; C0 insufficient for stabilization split")]
    NonPositiveE1 { value: f64 },

    #[error("{context}: Krylov solver did not converge ({report})")]
    NotConverged { context: &'static str, report: SolveReport },

    #[error("non-finite residual in Krylov solve after {iterations} iterations")]
    NonFinite { iterations: usize },

    #[error("energy audit failed at step {step}: dissipation residual {residual:.3e} > tolerance {tol:.3e}")]
    AuditFailed { step: usize, residual: f64, tol: f64 },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{0}")]
    Experiment(String),

    #[error("run with dt = {dt:e} failed: {source}")]
    Run { dt: f64, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the error, or the error it wraps, is an energy audit failure.
    pub fn is_audit_failure(&self) -> bool {
        match self {
            Error::AuditFailed { .. } => true,
            Error::Run { source, .. } => source.is_audit_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
