use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments to a numeric or model operation.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("schema error in {location}: {detail}")]
    Schema { location: String, detail: String },

    #[error("unknown {field} value {value:?} in {location}")]
    Vocabulary {
        field: &'static str,
        value: String,
        location: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing prerequisite artifact {}: {hint}", path.display())]
    Prerequisite { path: PathBuf, hint: String },

    /// A loss or intermediate quantity left the finite range.
    #[error("numeric failure in {stage}: {detail}")]
    Numeric { stage: String, detail: String },

    /// A metric that needs both classes was asked for on single-class data.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(
        "rejection sampler exhausted after {tries} tries for {target} \
         (observed acceptance rate {rate:.4}, 95% upper bound {upper:.4})"
    )]
    RareCondition {
        target: String,
        tries: usize,
        rate: f64,
        upper: f64,
    },

    #[error("io error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {location}: {source}")]
    Json {
        location: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numeric(stage: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            stage: stage.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(location: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            location: location.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    ///
    /// 2 configuration/input, 3 missing prerequisite, 4 numeric failure,
    /// 5 undefined metric, 1 for I/O and anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Input(_)
            | Error::Schema { .. }
            | Error::Vocabulary { .. }
            | Error::Json { .. } => 2,
            Error::Prerequisite { .. } => 3,
            Error::Numeric { .. } | Error::RareCondition { .. } => 4,
            Error::UndefinedMetric(_) => 5,
            Error::Io { .. } => 1,
        }
    }

    /// Stable machine-readable tag printed alongside the exit code.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Schema { .. } => "schema",
            Error::Vocabulary { .. } => "vocabulary",
            Error::Config(_) => "config",
            Error::Prerequisite { .. } => "prerequisite",
            Error::Numeric { .. } => "numeric",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::RareCondition { .. } => "rare_condition",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }
}
