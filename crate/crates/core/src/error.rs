use std::path::PathBuf;

/// Error type shared by every module in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: dimension mismatch on {axis}: expected {expected}, got {got}")]
    DimMismatch {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: {msg}")]
    InvalidConfig { op: &'static str, msg: String },

    #[error("parameter '{name}' has no gradient buffer; was it created with requires_grad?")]
    MissingGradient { name: String },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("loss tensor is not the output of any operation recorded on this tape")]
    LossNotOnTape,

    #[error("batch norm used in eval mode before any training batch initialized its running statistics")]
    BatchNormUninitialized,

    #[error(
        "input too small: axis {axis} has size {size} at stage {stage}; \
         the configured depth of {stages} stages needs at least {min_size} voxels per axis"
    )]
    VolumeTooSmall {
        axis: &'static str,
        size: usize,
        stage: usize,
        stages: usize,
        min_size: usize,
    },

    #[error("ground truth mask is empty; regional statistics are undefined")]
    EmptyGroundTruth,

    #[error("{which} surface is empty; the distance is undefined")]
    EmptySurface { which: &'static str },

    #[error("target mask is not binary: voxel {index} holds {value}")]
    NonBinaryTarget { index: usize, value: f64 },

    #[error("{path}: bad magic, expected '{expected}', found '{found}'")]
    MagicMismatch {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },

    #[error("{path}: payload size mismatch: header implies {expected} bytes, payload has {got}")]
    PayloadSizeMismatch {
        path: PathBuf,
        expected: usize,
        got: usize,
    },

    #[error("{path}: unsupported dtype '{dtype}'")]
    UnsupportedDtype { path: PathBuf, dtype: String },

    #[error("{path}: malformed header: {msg}")]
    MalformedHeader { path: PathBuf, msg: String },

    #[error("phantom geometry exits the volume: {msg}")]
    PhantomGeometry { msg: String },

    #[error(
        "loss became non-finite at epoch {epoch}, sample {sample}: \
         mse={mse}, dice_term={dice_term}"
    )]
    NonFiniteLoss {
        epoch: usize,
        sample: usize,
        mse: f64,
        dice_term: f64,
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad inputs or configuration, as opposed to
    /// failures that occur mid-run. The CLI maps the former to exit code 1
    /// and the latter to exit code 2.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::NonFiniteLoss { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
