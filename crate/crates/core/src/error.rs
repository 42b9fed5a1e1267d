use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NonHermitian(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("expected {expected} angles, found {found}")]
    AngleCountMismatch { expected: usize, found: usize },
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
    #[error("circuit width {circuit} does not match state width {state}")]
    WidthMismatch { circuit: usize, state: usize },
    #[error("dense simulation is capped at {cap} qubits, requested {requested}")]
    SimulatorWidth { requested: usize, cap: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("degenerate design matrix: {0}")]
    DegenerateDesign(String),
    #[error("nonlinear fit did not converge: {0}")]
    NoConvergence(String),
    #[error("at least 2 training circuits are required, got {0}")]
    InsufficientTraining(usize),
    #[error("no feasible s found below {0:e}")]
    Infeasible(f64),
    #[error("direct channel reconstruction is limited to {cap} qubits, requested {requested}")]
    TooLarge { requested: usize, cap: usize },
    #[error("PTM is singular or ill-conditioned (condition number {0:.3e})")]
    SingularPtm(f64),
    #[error("quasi-probability fit residual {0:.3e} exceeds tolerance")]
    PoorFit(f64),
    #[error("no quasi-probability decomposition available for gate {0}")]
    MissingQpd(String),
}

pub type Result<T> = std::result::Result<T, Error>;
