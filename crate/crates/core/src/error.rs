use thiserror::Error;

/// Errors raised by the library. Each variant maps onto one CLI exit class
/// through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFiniteData(String),

    #[error("singular Gramian: {0}")]
    SingularGramian(String),

    #[error("budget {budget} out of range 1..={max}")]
    BadBudget { budget: usize, max: usize },

    #[error("reference representation {0} has zero norm")]
    ZeroReference(String),

    #[error("edge ({0}, {1}) is not in the sheaf")]
    UnknownEdge(usize, usize),

    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonFiniteData(_) => "NonFiniteData",
            Error::SingularGramian(_) => "SingularGramian",
            Error::BadBudget { .. } => "BadBudget",
            Error::ZeroReference(_) => "ZeroReference",
            Error::UnknownEdge(..) => "UnknownEdge",
            Error::BadSpec(_) => "BadSpec",
            Error::Config(_) => "ConfigError",
            Error::Format(_) => "FormatError",
            Error::Checksum(_) => "ChecksumError",
            Error::ManifestMismatch(_) => "ManifestMismatch",
            Error::Io { .. } => "IoError",
            Error::Json(_) => "JsonError",
        }
    }

    /// 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::BadBudget { .. } | Error::BadSpec(_) => 1,
            Error::SingularGramian(_) | Error::ZeroReference(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
