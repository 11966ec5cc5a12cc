use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} outside its domain ({domain})")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("unknown transmittance model `{0}`")]
    UnknownModel(String),

    #[error("missing parameter `{param}` for model `{model}`")]
    MissingParameter { model: String, param: String },

    #[error("splat samples not sorted by depth at index {index}")]
    Unsorted { index: usize },

    #[error("forward pass was produced by {found}, backward expects {expected}")]
    ModelMismatch { expected: String, found: String },

    #[error("opacity {alpha} at splat {index} too close to 1 for exponential replay")]
    ReplaySingularity { index: usize, alpha: f64 },

    #[error("no analytic adjoint for {0}")]
    UnsupportedModel(String),

    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] ::image::ImageError),
}
