use thiserror::Error;

/// Errors raised anywhere in the analysis chain.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("time grid must be strictly increasing and inside [0, T]")]
    NonMonotoneTimes,
    #[error("peak Doppler {doppler_hz:.1} Hz reaches the Nyquist limit {nyquist_hz:.1} Hz")]
    Aliasing { doppler_hz: f64, nyquist_hz: f64 },
    #[error("duplicate subject id `{0}`")]
    DuplicateSubject(String),
    #[error("signal of {len} samples is shorter than the window length {window}")]
    SignalTooShort { len: usize, window: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no gait periodicity in the step-rate band")]
    NoGaitPeriodicity,
    #[error("insufficient steps: found {found}, need {needed}")]
    InsufficientSteps { found: usize, needed: usize },
    #[error("step length {step} exceeds window width {window}")]
    StepWiderThanWindow { step: usize, window: usize },
    #[error("template {template:?} does not fit into window {window:?}")]
    TemplateTooLarge {
        template: (usize, usize),
        window: (usize, usize),
    },
    #[error("image size mismatch: {0:?} vs {1:?}")]
    SizeMismatch((usize, usize), (usize, usize)),
    #[error("image {image:?} smaller than the {window}x{window} SSIM window")]
    ImageTooSmall { image: (usize, usize), window: usize },
    #[error("empty region")]
    EmptyRegion,
    #[error("both classes must be present")]
    SingleClass,
    #[error("missing predictor `{0}`")]
    MissingPredictor(String),
    #[error("subject `{0}` not found")]
    UnknownSubject(String),
    #[error("malformed measurement file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
