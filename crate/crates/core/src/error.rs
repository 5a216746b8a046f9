use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length {0} is not a perfect square")]
    NotSquare(usize),

    #[error("matrix is not square ({rows}x{cols})")]
    NonSquareMatrix { rows: usize, cols: usize },

    #[error("matrix contains NaN or infinite entries")]
    NonFinite,

    #[error("{what} is not Hermitian (residual {residual:.3e})")]
    NotHermitian { what: &'static str, residual: f64 },

    #[error("{what} is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { what: &'static str, min_eigenvalue: f64 },

    #[error("{what} is not unitary (residual {residual:.3e})")]
    NotUnitary { what: &'static str, residual: f64 },

    #[error("Kraus operators are not trace preserving (residual {residual:.3e})")]
    NotTracePreserving { residual: f64 },

    #[error("channel is not unital (residual {residual:.3e})")]
    NotUnital { residual: f64 },

    #[error("ancilla initial state must be pure (purity {purity:.6})")]
    MixedAncilla { purity: f64 },

    #[error("empty operator list")]
    Empty,

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("superoperator is not diagonalizable (eigenvector condition number {cond:.3e})")]
    NotDiagonalizable { cond: f64 },

    #[error("no metastable region: {0}")]
    NoMetastableRegion(String),

    #[error("index {index} out of range (valid {lo}..={hi})")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },

    #[error("eigenvalue {0} has no complex-conjugate partner in the index set")]
    UnpairedEigenvalue(num_complex::Complex64),

    #[error("metastable eigenvalue is complex ({0})")]
    ComplexEigenvalue(num_complex::Complex64),

    #[error("degenerate dual spread: c_max - c_min = {0:.3e}")]
    DegenerateSpread(f64),

    #[error("inconsistent result: {0}")]
    Inconsistent(String),

    #[error("spins {0} and {1} sit at the same position")]
    CoincidentPositions(usize, usize),

    #[error("conditional maps are not trace preserving on a visited state (p0 + p1 = {sum:.12})")]
    InvalidMaps { sum: f64 },

    #[error("step budget exceeded: {requested} steps requested, cap is {cap}")]
    BudgetExceeded { requested: u128, cap: u128 },

    #[error("empty polarization window")]
    EmptyWindow,

    #[error("invalid class thresholds: {0}")]
    InvalidThresholds(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
