use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("filtration partition {0} does not refine its predecessor")]
    NonRefiningFiltration(usize),
    #[error("outcome {0} has non-positive probability")]
    ZeroProbabilityOutcome(usize),
    #[error("probabilities sum to {0}, expected 1")]
    ProbabilitiesNotNormalized(f64),
    #[error("final partition does not consist of singletons")]
    FinalPartitionNotSingletons,
    #[error("malformed filtration: {0}")]
    MalformedFiltration(String),
    #[error("object belongs to a different market space")]
    SpaceMismatch,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("not a probability density: {0}")]
    NotADensity(String),
    #[error("exponent {0} outside the admissible range")]
    InvalidExponent(f64),
    #[error("empty generator set")]
    EmptySet,
    #[error("iteration budget exhausted without convergence")]
    NoConvergence,
    #[error("point is not in the convex hull of the generators")]
    NotInHull,
    #[error("linear program numerical breakdown: {0}")]
    NumericalBreakdown(&'static str),
    #[error("report carries no witness strategy")]
    NoWitness,
    #[error("risk specification has no scenarios")]
    EmptySpec,
    #[error("step positivity violated: {0}")]
    StepPositivityViolated(String),
    #[error("negative density factor at node (t={t}, atom={atom})")]
    NegativeDensity { t: usize, atom: usize },
    #[error("no feasible density within the norm cap")]
    Infeasible,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("martingale polytope has too many vertices to enumerate (limit {0})")]
    TooManyVertices(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
