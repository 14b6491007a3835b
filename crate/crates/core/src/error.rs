use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("path {id} has fewer than two distinct waypoints")]
    DegeneratePath { id: String },
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("point is {distance:.3} m from the path, corridor half-width is {limit} m")]
    OffCorridor { distance: f64, limit: f64 },
    #[error("arc length {s} outside [0, {length}]")]
    OutOfRange { s: f64, length: f64 },
    #[error("paths {a} and {b} never come within the corridor of each other")]
    NoRelation { a: String, b: String },
    #[error("invalid reference point on {path}: {reason}")]
    InvalidReferencePoint { path: String, reason: String },
    #[error("duplicate path id {0}")]
    DuplicatePath(String),
    #[error("unknown path id {0}")]
    UnknownPath(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiaError {
    #[error("agent {0} is not placed on a known reference path")]
    NoEgoPath(u32),
    #[error("projection failed: {0}")]
    Projection(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("the predicted vehicle has no front DIA")]
    NoReferenceDia,
    #[error("snapshots are not strictly increasing in time ({prev} then {next})")]
    NonMonotonicTime { prev: f64, next: f64 },
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error(transparent)]
    Dia(#[from] DiaError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("reference node has no neighbors")]
    EmptyNeighborhood,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("history is empty")]
    EmptyHistory,
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient for parameter {param} at epoch {epoch}, step {step}")]
    NonFiniteGradient { param: String, epoch: usize, step: usize },
    /// Carries the last finite parameters, encoded in the model file format.
    #[error("loss diverged at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize, last_good: Vec<u8> },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("cannot place agents: {0}")]
    SpawnFailure(String),
    #[error("the predicted vehicle never completes an insertion")]
    NoInsertion,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dia(#[from] DiaError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("json: {0}")]
    Json(String),
    #[error("{file}:{line}: {message}")]
    Csv { file: String, line: u64, message: String },
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl From<std::io::Error> for FormatError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
