//! Experiment harness, file formats and command-line plumbing on top of
//! [`energybeam_core`].

pub mod commands;
pub mod config;
pub mod experiments;
pub mod output;

pub use energybeam_core as core;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad configuration or input; the CLI exits with status 2.
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] energybeam_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Process exit status: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_)
            | Self::Core(energybeam_core::Error::InvalidConfig(_))
            | Self::Core(energybeam_core::Error::InsufficientTrainingLength(_)) => 2,
            _ => 1,
        }
    }
}
