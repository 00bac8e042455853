use alloc::string::String;
use core::fmt;

/// Error type shared by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Operand shapes are incompatible. Carries the offending shapes.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A precondition on an argument failed.
    InvalidArgument(String),
    /// A value became NaN or infinite where finiteness is required.
    NonFinite(&'static str),
    /// Graph structure violated an invariant (CSR, labels, masks).
    InvalidGraph(String),
    /// Training diverged (loss not finite).
    Diverged { epoch: usize },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch { op, left, right } => write!(
                f,
                "{op}: shape mismatch {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            CoreError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            CoreError::NonFinite(what) => write!(f, "non-finite value in {what}"),
            CoreError::InvalidGraph(msg) => write!(f, "invalid graph: {msg}"),
            CoreError::Diverged { epoch } => {
                write!(f, "training diverged at epoch {epoch} (loss is not finite)")
            }
        }
    }
}

impl core::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;
