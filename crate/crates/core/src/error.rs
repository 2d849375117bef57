use thiserror::Error;

/// Errors raised by the transform, net, kernel and analysis routines.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum WalshError {
    #[error("{0} is not a supported prime base (must be a prime below 256)")]
    NotPrime(u64),

    #[error("integer {value} does not fit in {len} base-{p} digits")]
    DigitOverflow { value: u64, p: u32, len: usize },

    #[error("digit {digit} is out of range for base {p}")]
    DigitOutOfRange { digit: u32, p: u32 },

    #[error("base mismatch: {left} vs {right}")]
    BaseMismatch { left: u32, right: u32 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length {len} is not a power of {p}")]
    NotPowerOfBase { len: usize, p: u32 },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: u64, limit: u64 },

    #[error("problem size {size} exceeds the configured cap {cap}")]
    SizeCapExceeded { size: u64, cap: u64 },

    #[error("invalid generating matrices: {0}")]
    InvalidMatrices(String),

    #[error("direction-number file: {0}")]
    DirectionFile(String),

    #[error("coordinate {value} at position {coord} lies outside [0, 1)")]
    OutOfDomain { coord: usize, value: f64 },

    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),

    #[error("kernel parameters are not in factorized (beta, q) form")]
    NotFactorized,

    #[error("kernel spectrum is numerically singular at coset label {label} (|K~| = {value:e})")]
    SingularKernel { label: usize, value: f64 },

    #[error("enumeration budget exhausted; {} coset labels left unfilled", unfilled.len())]
    BudgetExceeded { unfilled: Vec<usize> },

    #[error("work limit exceeded")]
    WorkLimitExceeded,

    #[error("total variance is zero; effective dimensions are undefined")]
    ZeroVariance,

    #[error("objective returned a non-finite value {value} at iteration {iteration}")]
    NonFiniteObjective { value: f64, iteration: usize },

    #[error("every objective evaluation failed")]
    AllEvaluationsFailed,

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("{0}")]
    Parse(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl WalshError {
    /// True for errors caused by numerical breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            WalshError::SingularKernel { .. }
                | WalshError::ZeroVariance
                | WalshError::NonFiniteObjective { .. }
                | WalshError::AllEvaluationsFailed
        )
    }
}

pub type Result<T> = std::result::Result<T, WalshError>;

impl From<std::io::Error> for WalshError {
    fn from(e: std::io::Error) -> Self {
        WalshError::Io(e.to_string())
    }
}
