use thiserror::Error;

/// Unified error type.
///
/// Variants are grouped by the caller action they demand: `Syntax` /
/// `UndeclaredVariable` mean the input text is bad, `Domain` means an
/// evaluation left the representative's domain, `Hypothesis` means a
/// precondition of an operation failed (the operation is meaningless, not the
/// input malformed), and the rest are structural misuse.
#[derive(Debug, Error)]
pub enum Error {
    /// Parse failure; `pos` is the 1-based character index of the offending
    /// token (input length + 1 when the input ended early).
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    /// Identifier used in an expression but absent from the declared variable
    /// list.
    #[error("undeclared variable `{name}` at position {pos}")]
    UndeclaredVariable { name: String, pos: usize },

    /// Numeric evaluation hit an undefined point (log of a non-positive
    /// value, division by zero, fractional power of a negative base, ...).
    #[error("domain error evaluating `{expr}`: {msg}")]
    Domain { expr: String, msg: String },

    /// Point differentiation requested where the expression is not
    /// differentiable.
    #[error("not differentiable: {0}")]
    NotDifferentiable(String),

    /// Two nets on incompatible grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Arity or dimension mismatch between objects.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A hypothesis required by an operation does not hold (division by a
    /// non-invertible net, a perturbation that is not null, a contour that
    /// does not separate from the evaluation point, a residual probe out of
    /// range, ...).  The message names the failed hypothesis.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    /// A compactness requirement failed: samples of a point or curve escape
    /// the declared compact box or the ambient domain on the tail.
    #[error("compactness violated: {0}")]
    Compactness(String),

    /// Refinement of an indicator-region integral failed to converge, so the
    /// region is suspect of not being Riemann integrable.
    #[error("integrability suspect: {0}")]
    IntegrabilitySuspect(String),

    /// Malformed serialized input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn syntax(pos: usize, msg: impl Into<String>) -> Self {
        Error::Syntax { pos, msg: msg.into() }
    }

    pub fn domain(expr: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Domain { expr: expr.into(), msg: msg.into() }
    }

    /// True for errors that report a failed mathematical hypothesis rather
    /// than malformed input; the CLI maps these to a distinct exit code.
    pub fn is_hypothesis(&self) -> bool {
        matches!(
            self,
            Error::Hypothesis(_)
                | Error::Compactness(_)
                | Error::IntegrabilitySuspect(_)
                | Error::NotDifferentiable(_)
                | Error::Domain { .. }
        )
    }
}
