use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid economy: {0}")]
    InvalidEconomy(String),

    #[error("utility level {level} is below u(0) = {floor}")]
    UnreachableUtility { level: f64, floor: f64 },

    #[error("every consumer demands the zero bundle")]
    ZeroTotalMass,

    #[error("unknown consumer index {0}")]
    UnknownConsumer(usize),

    #[error("invalid transport path: {0}")]
    InvalidGraph(String),

    #[error("measure atom at {location:?} is not a vertex of the graph")]
    UnknownVertex { location: Vec<f64> },

    #[error("more than one directed path from source {source_index} to sink {sink}")]
    AmbiguousRoute { source_index: usize, sink: usize },

    #[error("hub location coincides with boundary point {0}")]
    HubCollision(String),

    #[error("plan is not compatible with the path: {0}")]
    IncompatiblePair(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("polytope dimension {dim} exceeds the enumeration cap {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },

    #[error("solver stalled after {iterations} iterations (residual {residual:e})")]
    SolverStall { iterations: usize, residual: f64 },

    #[error("linear program is infeasible")]
    LpInfeasible,

    #[error("linear program is unbounded")]
    LpUnbounded,

    #[error("topology search limited to k, l <= 3 and at most 2 interior vertices (got k={k}, l={l}, interior={interior})")]
    SizeLimit { k: usize, l: usize, interior: usize },

    #[error("no enumerated topology is compatible with the reference plan")]
    EmptyCandidateSet,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("schema error at {path}: {detail}")]
    Schema { path: String, detail: String },
}

impl Error {
    /// Short machine-readable tag used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidEconomy(_) => "InvalidEconomy",
            Error::UnreachableUtility { .. } => "UnreachableUtility",
            Error::ZeroTotalMass => "ZeroTotalMass",
            Error::UnknownConsumer(_) => "UnknownConsumer",
            Error::InvalidGraph(_) => "InvalidGraph",
            Error::UnknownVertex { .. } => "UnknownVertex",
            Error::AmbiguousRoute { .. } => "AmbiguousRoute",
            Error::HubCollision(_) => "HubCollision",
            Error::IncompatiblePair(_) => "IncompatiblePair",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::DimensionTooLarge { .. } => "DimensionTooLarge",
            Error::SolverStall { .. } => "SolverStall",
            Error::LpInfeasible => "LpInfeasible",
            Error::LpUnbounded => "LpUnbounded",
            Error::SizeLimit { .. } => "SizeLimit",
            Error::EmptyCandidateSet => "EmptyCandidateSet",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Schema { .. } => "SchemaError",
        }
    }

    /// Errors caused by malformed input rather than by a numerical routine.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidEconomy(_)
                | Error::InvalidGraph(_)
                | Error::UnknownVertex { .. }
                | Error::UnknownConsumer(_)
                | Error::HubCollision(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidParameter(_)
                | Error::Schema { .. }
        )
    }
}
