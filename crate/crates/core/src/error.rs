use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("signal of {len} samples is shorter than one frame of {n_dft}")]
    SignalTooShort { len: usize, n_dft: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("channel {0} has zero energy")]
    ZeroEnergy(usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("sample rate mismatch: expected {expected} Hz, got {got} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },
    #[error("rt60 of {rt60} s is not achievable in this room (minimum {min_rt60:.4} s)")]
    Rt60Unachievable { rt60: f64, min_rt60: f64 },
    #[error("point ({x}, {y}, {z}) lies outside the room")]
    OutsideRoom { x: f64, y: f64, z: f64 },
    #[error("source and microphone coincide")]
    CoincidentPoints,
    #[error("insufficient decay range: {0}")]
    InsufficientDecay(String),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("microphone wall order mismatch: {0}")]
    WallOrderMismatch(String),
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("backward was already run on this graph")]
    BackwardTwice,
    #[error("model: {0}")]
    Model(String),
}

pub type Result<T> = core::result::Result<T, Error>;
