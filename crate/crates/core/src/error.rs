use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("moment matrix is singular (smallest pivot {min_pivot:.3e} below threshold {threshold:.3e})")]
    SingularMatrix { min_pivot: f64, threshold: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("velocity v_{index} = {value:?} is not an integer multiple of lambda")]
    NonLatticeVelocity { index: usize, value: Vec<f64> },

    #[error("invalid velocity set: {0}")]
    InvalidVelocitySet(String),

    #[error("invalid moment basis: {0}")]
    InvalidBasis(String),

    #[error("relaxation rate s[{index}] is zero; Hénon parameter undefined")]
    DivisionByZero { index: usize },

    #[error("expansion order {requested} unavailable (supported: {available})")]
    OrderUnavailable { requested: usize, available: String },

    #[error("operation requires a constant relative velocity, got a space-dependent field")]
    NonConstantShift,

    #[error("operation requires zero relative velocity")]
    NonZeroShift,

    #[error("ambiguous eigenvalue branch near {hint_re:+.6e}{hint_im:+.6e}i")]
    BranchAmbiguity { hint_re: f64, hint_im: f64 },

    #[error("symbol series fit residual {residual:.3e} exceeds {threshold:.3e}")]
    PoorFit { residual: f64, threshold: f64 },

    #[error("{quantity}: relative mismatch {rel_diff:.3e} exceeds {tolerance:.3e}")]
    MismatchBeyondTolerance {
        quantity: String,
        rel_diff: f64,
        tolerance: f64,
    },

    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
