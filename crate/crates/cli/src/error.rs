//! Error classes of the command-line harness and their exit codes.

use std::fmt;

use gaitasym::error::Error;

/// A fatal failure, split by whose fault it is.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad configuration or arguments (exit code 2).
    Validation(String),
    /// Missing, corrupt or unusable data (exit code 3).
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    pub fn data(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        CliError::Data(format!("{context}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if is_validation(&e) {
            CliError::Validation(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

/// Errors caused by the configuration rather than by the data.
pub fn is_validation(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidConfig(_)
            | Error::NonMonotoneTimes
            | Error::Aliasing { .. }
            | Error::DuplicateSubject(_)
            | Error::UnknownSubject(_)
            | Error::MissingPredictor(_)
    )
}

/// Short snake-case name of an error, used in flag columns.
pub fn kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidConfig(_) => "invalid_config",
        Error::NonMonotoneTimes => "non_monotone_times",
        Error::Aliasing { .. } => "aliasing",
        Error::DuplicateSubject(_) => "duplicate_subject",
        Error::SignalTooShort { .. } => "signal_too_short",
        Error::Degenerate(_) => "degenerate",
        Error::NoGaitPeriodicity => "no_gait_periodicity",
        Error::InsufficientSteps { .. } => "insufficient_steps",
        Error::StepWiderThanWindow { .. } => "step_wider_than_window",
        Error::TemplateTooLarge { .. } => "template_too_large",
        Error::SizeMismatch(..) => "size_mismatch",
        Error::ImageTooSmall { .. } => "image_too_small",
        Error::EmptyRegion => "empty_region",
        Error::SingleClass => "single_class",
        Error::MissingPredictor(_) => "missing_predictor",
        Error::UnknownSubject(_) => "unknown_subject",
        Error::Format(_) => "corrupt_file",
        Error::Io(_) => "unreadable_file",
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
