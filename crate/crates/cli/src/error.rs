use std::fmt;
use std::process::ExitCode;

use vortex::bench::BenchError;
use vortex::classifiers::ClassifierError;
use vortex::extractors::ExtractError;
use vortex::interchange::{InterchangeError, ManifestError};
use vortex::registry::UnknownStrategy;

/// Process exit codes, one per error family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Exit {
    Ok = 0,
    /// Bad flags, unknown strategy names, invalid values, unreadable config.
    Usage = 2,
    /// File system errors.
    Io = 3,
    /// Malformed VTE, VTD or model files.
    Format = 4,
    /// Invalid or inconsistent split manifest, or records it names are missing.
    Manifest = 5,
    /// A record could not be encoded.
    Encode = 6,
    /// Fitting or applying a classifier failed.
    Classifier = 7,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e as u8)
    }
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            exit: Exit::Usage,
            message: message.into(),
        }
    }

    pub fn new(exit: Exit, message: impl fmt::Display) -> Self {
        Self {
            exit,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(Exit::Io, e)
    }
}

impl From<InterchangeError> for CliError {
    fn from(e: InterchangeError) -> Self {
        match e {
            InterchangeError::Io(_) => Self::new(Exit::Io, e),
            _ => Self::new(Exit::Format, e),
        }
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Io(_) => Self::new(Exit::Io, e),
            _ => Self::new(Exit::Manifest, e),
        }
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::Io(_) => Self::new(Exit::Io, e),
            ClassifierError::Format(_) => Self::new(Exit::Format, e),
            _ => Self::new(Exit::Classifier, e),
        }
    }
}

impl From<ExtractError> for CliError {
    fn from(e: ExtractError) -> Self {
        Self::new(Exit::Encode, e)
    }
}

impl From<UnknownStrategy> for CliError {
    fn from(e: UnknownStrategy) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Interchange(inner) => inner.into(),
            BenchError::Manifest(inner) => inner.into(),
            BenchError::MissingRecords { .. } => Self::new(Exit::Manifest, e),
            BenchError::Extract { .. } => Self::new(Exit::Encode, e),
            BenchError::Classifier { ref source, .. } => {
                let exit = match source {
                    ClassifierError::Io(_) => Exit::Io,
                    _ => Exit::Classifier,
                };
                Self::new(exit, e)
            }
            BenchError::UnknownStrategy(_) | BenchError::InvalidArgument(_) => Self::usage(e.to_string()),
        }
    }
}
