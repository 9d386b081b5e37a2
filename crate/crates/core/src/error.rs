use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value encountered in {0}")]
    NumericFailure(&'static str),
    #[error("label {label} out of range for {channels} channels")]
    LabelOutOfRange { label: u32, channels: usize },
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("image has zero size")]
    EmptyImage,
    #[error("pixel value {0} outside [0, 1]")]
    PixelRange(f64),
    #[error("class {0} absent from ground truth; metric undefined")]
    ClassAbsent(&'static str),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn shape(
        op: &'static str,
        expected: impl core::fmt::Display,
        got: impl core::fmt::Display,
    ) -> Self {
        use alloc::string::ToString;
        Error::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
