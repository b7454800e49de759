use skinspec_core::Error as CoreError;

/// Failures grouped by process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed input file (exit 2).
    #[error("parse error: {0}")]
    Parse(String),
    /// Missing or invalid configuration (exit 3).
    #[error("config error: {0}")]
    Config(String),
    /// Fitting failed on most of the image (exit 4).
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Anything else (exit 1).
    #[error("{0}")]
    Other(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Config(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Other(format!("{}: {e}", path.display()))
    }

    /// Classifies a core error raised while reading `what`.
    pub fn input(what: &str, e: CoreError) -> Self {
        match e {
            CoreError::Io(e) => CliError::Other(format!("{what}: {e}")),
            e => CliError::Parse(format!("{what}: {e}")),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::ParseLine { .. }
            | CoreError::ParseOffset { .. }
            | CoreError::NotMonotonic { .. }
            | CoreError::NegativeRadiance { .. }
            | CoreError::UnsupportedVersion { .. }
            | CoreError::InvalidEdit(_)
            | CoreError::Image(_) => CliError::Parse(e.to_string()),
            e => CliError::Other(e.to_string()),
        }
    }
}
