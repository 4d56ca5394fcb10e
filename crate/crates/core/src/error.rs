use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("qubit count mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("coefficient of {pauli} has imaginary part {imag:e} above tolerance {tol:e}")]
    HermiticityViolation { pauli: String, imag: f64, tol: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid Pauli character {0:?}")]
    InvalidPauliChar(char),

    #[error("invalid bit character {0:?} (expected 0 or 1)")]
    InvalidBitChar(char),

    #[error("unknown state preset {0:?}")]
    UnknownPreset(String),

    #[error(
        "distinct-term count {count} exceeds cap {cap} (a priori bound for this expansion: {predicted})"
    )]
    TermCountExceeded { count: usize, cap: usize, predicted: String },

    #[error("truncation order would exceed cap {cap} (Lambda = {lambda}, eps = {eps:e})")]
    OrderCapExceeded { cap: usize, lambda: f64, eps: f64 },

    #[error("{n} qubits exceeds the dense backend cap of {cap}")]
    QubitCapExceeded { n: usize, cap: usize },

    #[error("empty Pauli sum")]
    EmptySum,

    #[error("sampling distribution needs real coefficients; {pauli} has imaginary part {imag:e}")]
    ComplexCoefficient { pauli: String, imag: f64 },

    #[error("denominator estimate {value} is within its radius {radius} of zero")]
    StatisticalRefusal { value: f64, radius: f64 },

    #[error("measurement source: {0}")]
    Source(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Resource guards (term-count, order and qubit caps) as opposed to bad input.
    pub fn is_guard(&self) -> bool {
        matches!(
            self,
            Error::TermCountExceeded { .. }
                | Error::OrderCapExceeded { .. }
                | Error::QubitCapExceeded { .. }
        )
    }

    pub fn is_statistical_refusal(&self) -> bool {
        matches!(self, Error::StatisticalRefusal { .. })
    }

    pub(crate) fn check_dims(left: usize, right: usize) -> Result<()> {
        if left == right {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { left, right })
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
