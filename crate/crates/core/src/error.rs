use thiserror::Error;

use crate::expr::{EvalError, ParseError, SymbolError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in `{source_text}`: {error}")]
    Parse {
        source_text: String,
        error: ParseError,
    },
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error("{0}")]
    Eval(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration space: {0}")]
    Space(String),
    #[error("hyperregularity failed: smallest singular value {min_singular:e} of the velocity Hessian at {witness:?}")]
    NotHyperregular { min_singular: f64, witness: Vec<f64> },
    #[error("degenerate two-form: smallest singular value {0:e}")]
    DegenerateForm(f64),
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("Newton iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("second-order property violated: |dq - qdot| = {0:e}")]
    NotSecondOrder(f64),
    #[error("state blew up (max |component| = {0:e})")]
    BlowUp(f64),
    #[error("map has no inverse")]
    MissingInverse,
    #[error("inverse map check failed: |phi(phi^-1(q)) - q| = {0:e}")]
    InverseMismatch(f64),
    #[error("not reducible: {0}")]
    Irreducible(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed JSON in {path} at line {line}, column {column}: {message}")]
    Json {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{location}: {source}")]
    At {
        location: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach a location such as `force[1]` to an error.
    pub fn at(self, location: impl Into<String>) -> Error {
        Error::At {
            location: location.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping location wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::At { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<EvalError> for Error {
    fn from(e: EvalError) -> Self {
        Error::Eval(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
