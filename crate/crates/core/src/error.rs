use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("face references vertex {index} but mesh has {vertices} vertices")]
    InvalidIndex { index: usize, vertices: usize },
    #[error("target radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("direction is not unit length (norm {norm})")]
    NonUnitDirection { norm: f64 },
    #[error("point lies {distance} off the ray's line")]
    OffLine { distance: f64 },
    #[error("pixel ({x}, {y}) outside {width}x{height}")]
    PixelOutOfRange {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite value in network input")]
    NonFiniteInput,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("tape does not match the network it is replayed against")]
    StaleTape,
    #[error("schedule step {step} outside 0..={total}")]
    StepOutOfRange { step: usize, total: usize },
    #[error("invalid corruption level {0}")]
    InvalidLevel(f64),
    #[error("observed point coincides with its viewpoint")]
    CoincidentPoint,
    #[error("no viewpoints given")]
    EmptyViewpoints,
    #[error("no points given")]
    EmptyPoints,
    #[error("encoding mode mismatch: model uses {expected}, got {got}")]
    ModeMismatch {
        expected: &'static str,
        got: &'static str,
    },
    #[error("unknown shape id {0}")]
    UnknownShapeId(usize),
    #[error("shape ids must be given exactly when the model has latent codes")]
    ShapeIdsRequired,
    #[error("model has no latent codes")]
    LatentFree,
    #[error("model has no color head")]
    MissingColorHead,
    #[error("point set is empty")]
    EmptySet,
    #[error("image resolution mismatch: expected {}x{}, got {}x{}", expected.0, expected.1, got.0, got.1)]
    ResolutionMismatch {
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("mesh is not closed; sign unreliable (unsigned distance {unsigned})")]
    OpenMesh { unsigned: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
