use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("region is empty")]
    EmptyRegion,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension {0} exceeds the supported maximum for exact polyhedral operations")]
    UnsupportedDimension(usize),
    #[error("unbounded region requires a truncation ball")]
    UnboundedWithoutTruncation,
    #[error("point is not in the conic hull of the gauge set")]
    NotReachable,
    #[error("gauge set has no interior at the origin")]
    GaugeUnbounded,
    #[error("complexity budget exceeded: {0}")]
    ComplexityBudgetExceeded(String),
    #[error("point lies outside the declared domain")]
    OutsideDomain,
    #[error("oracle-backed maps cannot be inverted")]
    OracleNotInvertible,
    #[error("function evaluation failed: {0}")]
    EvaluationFailure(String),
    #[error("point is not on the graph")]
    NotOnGraph,
    #[error("point is not in the set")]
    NotInSet,
    #[error("sample net leaves part of the set uncovered: {0}")]
    CoverageGap(String),
    #[error("operation requires a scalar-valued function")]
    NotScalar,
    #[error("too many sample points flagged non-differentiable")]
    InsufficientSamples,
    #[error("coderivative criterion fails: D*S(0) contains a nonzero vector")]
    CriterionFails,
    #[error("direction partition leaves directions uncovered")]
    PartitionGap,
    #[error("hypothesis failure: {0}")]
    HypothesisFailure(String),
    #[error("map cannot be represented exactly as a cone graph: {0}")]
    NotRepresentable(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
