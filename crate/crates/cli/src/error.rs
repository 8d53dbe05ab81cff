use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A bad value in the scenario file, tagged with its `section.key`.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        source: std::io::Error,
    },

    /// The computation ran but a check did not hold.
    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Core(#[from] jcm_core::Error),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Usage(_) | Self::Output { .. } => 2,
            Self::Core(jcm_core::Error::Config(_)) | Self::Core(jcm_core::Error::Truncation(_)) => {
                2
            }
            Self::Verification(_) | Self::Core(_) => 1,
        }
    }
}

/// Message of a core error without its category prefix.
pub fn core_message(e: jcm_core::Error) -> String {
    match e {
        jcm_core::Error::Config(msg) => msg,
        other => other.to_string(),
    }
}
