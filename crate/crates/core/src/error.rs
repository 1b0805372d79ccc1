use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("histogram has zero total")]
    ZeroTotal,

    #[error("value {value} outside [{min}, {max}] for {what}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("expected a standard chart, got {0}")]
    NotStandardChart(String),

    #[error("insufficient measurements: {0}")]
    InsufficientPatches(String),

    #[error("characterization is rank deficient: primaries never exercised: {}", .missing.join(", "))]
    RankDeficient { missing: Vec<String> },

    #[error("patch id not found: {0}")]
    MissingPatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("comparison graph is disconnected: {}", format_components(.components))]
    Disconnected { components: Vec<Vec<String>> },

    /// `line` is 1-based; 0 when the input has no lines, as in binary files.
    #[error("parse error{}: {message}", at_line(*.line))]
    Parse { line: usize, message: String },

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("{}: {error}", .path.display())]
    Io { path: PathBuf, error: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

fn at_line(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" at line {line}")
    }
}

fn format_components(components: &[Vec<String>]) -> String {
    components
        .iter()
        .map(|c| format!("{{{}}}", c.join(", ")))
        .collect::<Vec<_>>()
        .join(" ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, error: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            error,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
