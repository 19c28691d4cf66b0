use thiserror::Error;

/// Errors produced by the reconstruction engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty mesh")]
    EmptyMesh,

    #[error("isolated vertex {0}")]
    IsolatedVertex(usize),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("illegal edit: {0}")]
    IllegalEdit(#[from] EditRejection),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error("nothing observed")]
    NothingObserved,

    #[error("no head overlap")]
    NoHeadOverlap,

    #[error("empty region")]
    EmptyRegion,

    #[error("missing data: {0}")]
    Missing(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Reason a local mesh edit was refused. The mesh is left untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EditRejection {
    #[error("no such edge")]
    NoSuchEdge,
    #[error("edit would create a non-manifold configuration")]
    NonManifold,
    #[error("edit would flip a face orientation")]
    OrientationFlip,
    #[error("flip does not improve valence")]
    NoImprovement,
    #[error("edge is on the boundary")]
    Boundary,
    #[error("collapse would create an edge above the split threshold")]
    TooLong,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
