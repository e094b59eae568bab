use thiserror::Error;

/// Errors raised by the toolkit. Variants mirror the failure modes of the
/// individual operations; the message carries the offending value.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("orbit escaped the basin at step {step}: {point:?}")]
    OrbitEscapesBasin { step: usize, point: Vec<f64> },

    #[error("no preimage found for {point:?}")]
    NoPreimageFound { point: Vec<f64> },

    #[error("ambiguous inverse branch: preimages {a:?} and {b:?}")]
    BranchAmbiguous { a: Vec<f64>, b: Vec<f64> },

    #[error("degenerate cocycle at step {step}")]
    DegenerateCocycle { step: usize },

    #[error("not converged: {0}")]
    NotConverged(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("adapted norm tail not converged: relative tail {tail:e}")]
    TailNotConverged { tail: f64 },

    #[error("chart condition {condition} violated at step {step}: {detail}")]
    ConditionsViolated {
        condition: &'static str,
        step: usize,
        detail: String,
    },

    #[error("graph transform fixed point diverged at step {step}")]
    FixedPointDiverged { step: usize },

    #[error("graph left its class: {0}")]
    LeftClass(String),

    #[error("unstable jacobian is rank deficient")]
    RankDeficient,

    #[error("point is not on the unstable patch: {0}")]
    NotOnPatch(String),

    #[error("backward orbit failure: {0}")]
    BackwardOrbitFailure(String),

    #[error("transversal plane misses the basin")]
    PlaneMissesBasin,

    #[error("points too far apart for the bracket: {dist:e} >= {delta:e}")]
    TooFar { dist: f64, delta: f64 },

    #[error("no intersection: {0}")]
    NoIntersection(String),

    #[error("separation budget of {0} steps exceeded")]
    KBudgetExceeded(usize),

    #[error("newton iteration diverged: {0}")]
    NewtonDiverged(String),

    #[error("refinement produced {0} rectangles, above the budget")]
    RefinementExplosion(usize),

    #[error("smallness chain violated: {0}")]
    SmallnessChainViolated(String),

    #[error("inadmissible word at position {0}")]
    InadmissibleWord(usize),

    #[error("empty cylinder intersection: {0}")]
    EmptyIntersection(String),

    #[error("reducible chain with {0} components")]
    ReducibleChain(usize),

    #[error("partition is not mixing")]
    PartitionNotMixing,

    #[error("entropy estimate still drifting: {0}")]
    EntropyNotConverged(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
