use std::fmt;

use thiserror::Error;

/// Position-annotated failure from the expression parser.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset into the source text.
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    Arity {
        function: String,
        expected: usize,
        found: usize,
    },
    NonConstantExponent,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax(msg) => write!(f, "syntax error at offset {}: {msg}", self.offset),
            ParseErrorKind::UnknownIdentifier(name) => {
                write!(f, "unknown identifier `{name}` at offset {}", self.offset)
            }
            ParseErrorKind::Arity {
                function,
                expected,
                found,
            } => write!(
                f,
                "`{function}` takes {expected} argument(s) but {found} were given (offset {})",
                self.offset
            ),
            ParseErrorKind::NonConstantExponent => {
                write!(f, "exponent must be a constant expression (offset {})", self.offset)
            }
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape parameters: {0}")]
    InvalidShape(String),
    #[error("target edge length {target_h} is too coarse for {shape}")]
    TooCoarse { shape: String, target_h: f64 },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid triangle selection: {0}")]
    InvalidSelection(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("field evaluation failed: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("problem kind mismatch: {0}")]
    ProblemKind(String),
    #[error("weight e^-phi out of range: phi spans {span:.3e} over the quadrature points (limit 700)")]
    WeightOverflow { span: f64 },
    #[error("zero vector")]
    ZeroVector,
    #[error("invalid solver request: {0}")]
    InvalidRequest(String),
    #[error("factorization of the shifted matrix failed: {0}")]
    Factorization(String),
    #[error("eigensolver did not converge after {iterations} iterations (worst residual {worst:.3e})")]
    NotConverged {
        iterations: usize,
        worst: f64,
        residuals: Vec<f64>,
    },
    #[error("submesh has no interior vertex; the nodal domain is under-resolved")]
    SubmeshTooSmall,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
