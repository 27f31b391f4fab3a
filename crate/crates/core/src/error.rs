use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("face {face}: vertex index {index} out of range (mesh has {vertex_count} vertices)")]
    FaceIndexOutOfRange { face: usize, index: u32, vertex_count: usize },

    #[error("face {face} references vertex {vertex} more than once")]
    RepeatedFaceVertex { face: usize, vertex: u32 },

    #[error("edge ({a}, {b}) is shared by {count} faces; at most 2 are allowed")]
    NonManifoldEdge { a: u32, b: u32, count: usize },

    #[error("vertex {vertex} has no neighbours")]
    IsolatedVertex { vertex: usize },

    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },

    #[error("mesh has no faces")]
    EmptyMesh,

    #[error("mesh has no UV coordinates")]
    MissingUvs,

    #[error("uv of vertex {vertex} is outside [0,1]²: ({u}, {v})")]
    UvOutOfRange { vertex: usize, u: f64, v: f64 },

    #[error("{path}:{line}: {message}")]
    Obj { path: String, line: usize, message: String },

    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: String, got: String },

    #[error("ground-truth silhouette is identically zero")]
    EmptyGroundTruth,

    #[error("direction is not unit length (norm {norm})")]
    NonUnitDirection { norm: f64 },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("image of {width}x{height} is smaller than the {window}x{window} window")]
    ImageTooSmall { width: usize, height: usize, window: usize },

    #[error("non-finite gradient in block `{block}` at index {index}")]
    NonFiniteGradient { block: String, index: usize },

    #[error("{phase} phase: non-finite loss at iteration {iteration}")]
    NonFiniteLoss { phase: &'static str, iteration: usize },

    #[error("{phase} phase: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing input file {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("invalid PFM data: {0}")]
    Pfm(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: PNG decode failed: {message}")]
    Png { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn in_phase(self, phase: &'static str) -> Self {
        Error::Phase { phase, source: Box::new(self) }
    }

    /// Numerical failures (NaN/Inf) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFiniteGradient { .. } | Error::NonFiniteLoss { .. } => true,
            Error::Phase { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
