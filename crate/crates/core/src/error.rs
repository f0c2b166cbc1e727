use alloc::string::String;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("wrong qubit count: expected {expected}, found {found}")]
    WrongQubitCount { expected: usize, found: usize },

    #[error("matrix is not Hermitian: max |A - A^dagger| = {defect:e}")]
    NotHermitian { defect: f64 },

    #[error("trace is not one: |tr - 1| = {deviation:e}")]
    TraceNotOne { deviation: f64 },

    #[error("matrix is not positive semidefinite: min eigenvalue = {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("integration became unstable at step {step}: {reason}")]
    StepUnstable { step: usize, reason: String },

    #[error("trajectories do not share a time grid")]
    GridMismatch,

    #[error("parameter vector has length {found}, expected {expected}")]
    ParameterLength { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mean loss {0:e} is too small to build the Hessian")]
    DegenerateLoss(f64),

    #[error("linear system stayed singular after {attempts} jitter attempts")]
    SingularSystem { attempts: usize },

    #[error("no acceptable step after {retries} retries (lambda = {lambda:e})")]
    NoAcceptableStep { retries: usize, lambda: f64 },

    #[error("image of {width}x{height} is too small for {target}x{target}")]
    SourceTooSmall {
        width: usize,
        height: usize,
        target: usize,
    },

    #[error("no conjugate partner within tolerance for entry at ({row}, {col})")]
    UnpairableEntry { row: usize, col: usize },

    #[error("matrix is identically zero")]
    ZeroMatrix,
}

pub type CoreResult<T> = core::result::Result<T, CoreError>;
