use thiserror::Error;

/// Failure modes shared by every layer of the calculator.
///
/// Numeric payloads carry the offending quantity so reports can show how far
/// from the threshold an instance was.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not a contraction (largest singular value {0})")]
    NotAContraction(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular pivot (smallest singular value {0})")]
    SingularPivot(f64),
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("degenerate symbol: both shift coefficients vanish")]
    DegenerateSymbol,
    #[error("characteristic root too close to the unit circle or repeated (modulus {0})")]
    CriticalRoot(f64),
    #[error("vector is not in the operator domain: {0}")]
    NotInDomain(String),
    #[error("vector is not in the required range: {0}")]
    NotInRange(String),
    #[error("removed vectors are degenerate: rank {rank}, expected {expected}")]
    DegenerateU { rank: usize, expected: usize },
    #[error("parameter is not admissible (certificate {0})")]
    Inadmissible(f64),
    #[error("parameter is not unitary (residual {0})")]
    NotUnitary(f64),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("range compatibility violated: {0}")]
    RangeCompatibility(String),
    #[error("target specification violated: {0}")]
    SpecViolation(String),
    #[error("no catalog entry fits: {0}")]
    CatalogMiss(String),
    #[error("projection onto the deficiency subspace is degenerate (condition {0})")]
    DegenerateProjection(f64),
    #[error("unsupported evaluation point: {0}")]
    UnsupportedPoint(String),
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
