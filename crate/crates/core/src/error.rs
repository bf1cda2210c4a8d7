use thiserror::Error;

/// Errors raised by the grid, operator, problem and descent layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("rank mismatch: expected {expected}, found {found}")]
    RankMismatch { expected: usize, found: usize },

    #[error("axis {axis} needs at least 2 cells, got {cells}")]
    InvalidCells { axis: usize, cells: usize },

    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },

    #[error("placement mismatch: {0}")]
    PlacementMismatch(String),

    #[error("component mismatch: expected {expected}, found {found}")]
    ComponentMismatch { expected: usize, found: usize },

    #[error("grid functions live on different grids")]
    GridMismatch,

    #[error("data length {found} does not match the expected {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("multi-index must select at least one axis")]
    EmptyMultiIndex,

    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: String, message: String },

    #[error("{0}")]
    InvalidProblem(String),

    #[error("boundary mode {mode} is not supported here: {reason}")]
    UnsupportedMode { mode: &'static str, reason: String },

    #[error("critical point: the projected gradient vanishes, no descent direction exists")]
    CriticalPoint,

    #[error("degenerate isoperimetric constraint: its projected kernel vanishes")]
    DegenerateConstraint,

    #[error("not a descent direction (slope {slope})")]
    NotDescentDirection { slope: f64 },

    #[error("line search failed: step fell below {min_step}")]
    LineSearchFailure { min_step: f64 },

    #[error("invalid optimizer setting `{name}`: {message}")]
    InvalidConfig { name: &'static str, message: String },

    #[error("need at least {needed} grid levels, got {found}")]
    InsufficientLevels { needed: usize, found: usize },

    #[error("singular constraint system in the projection oracle")]
    SingularSystem,
}

pub type Result<T> = std::result::Result<T, Error>;
