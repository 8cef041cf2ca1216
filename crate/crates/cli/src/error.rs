use std::path::PathBuf;

use fedrobust_core::Error as CoreError;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Process exit codes.
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("{}: byte {offset}: {reason}", path.display())]
    ModelFile { path: PathBuf, offset: usize, reason: String },

    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<CliError>,
    },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::ModelFile { .. } => EXIT_DATA,
            CliError::Output { .. } => EXIT_RUNTIME,
            CliError::Stage { source, .. } => source.exit_code(),
            CliError::Core(e) => match e {
                CoreError::InvalidConfig { .. } => EXIT_CONFIG,
                CoreError::Idx(_) | CoreError::IdxFile { .. } | CoreError::Io { .. } | CoreError::Csv(_) | CoreError::LabelOutOfRange { .. } => {
                    EXIT_DATA
                }
                _ => EXIT_RUNTIME,
            },
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        CliError::Stage { stage: stage.into(), source: Box::new(self) }
    }
}

/// Tags errors from a pipeline stage with the stage name.
pub trait StageExt<T> {
    fn stage(self, name: &str) -> Result<T>;
}

impl<T, E: Into<CliError>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, name: &str) -> Result<T> {
        self.map_err(|e| e.into().in_stage(name))
    }
}
