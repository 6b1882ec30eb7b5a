use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported layer kind `{0}` (only linear layers and ReLU can be keyed)")]
    UnsupportedLayer(String),

    #[error("unsupported padding mode `{0}` (only zero padding is supported)")]
    UnsupportedPadding(String),

    #[error("wrong-sensor: image was encoded under key {found}, keynet expects {expected}")]
    WrongSensor { expected: String, found: String },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("key with alpha = {0} has no exact optical realization")]
    UnsupportedExact(usize),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("integrity check failed for {0}")]
    Integrity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
