use std::path::PathBuf;

use fredo_core::baseline::BaselineError;
use fredo_core::dataio::DataError;
use fredo_core::dgpsim::DgpError;
use fredo_core::eval::EvalError;
use fredo_core::model::ModelError;
use fredo_core::spectral::SpectralError;
use thiserror::Error;

/// Process exit codes. Usage errors exit with 2 (reported by the argument
/// parser before any work starts).
pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const MISSING_FILE: i32 = 4;
    pub const DATA: i32 = 5;
    pub const MODEL: i32 = 6;
    pub const EVAL: i32 = 7;
    pub const LOCKED: i32 = 8;
    pub const OUTPUT: i32 = 9;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("could not read {}: {source}", path.display())]
    Input {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(DataError),
    #[error(transparent)]
    Spectral(SpectralError),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Eval(EvalError),
    #[error("output directory {} is in use by another run (lockfile {})", .0.display(), .0.join(crate::run::LOCK_NAME).display())]
    Locked(PathBuf),
    #[error("could not write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::MissingFile(_) => exit::MISSING_FILE,
            CliError::Input { .. } | CliError::Data(_) | CliError::Spectral(_) => exit::DATA,
            CliError::Model(_) => exit::MODEL,
            CliError::Eval(_) => exit::EVAL,
            CliError::Locked(_) => exit::LOCKED,
            CliError::Output { .. } => exit::OUTPUT,
            CliError::Internal(_) => exit::INTERNAL,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::MissingFile(p) => CliError::MissingFile(p),
            e => CliError::Data(e),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Data(d) => d.into(),
            ModelError::Config(msg) => CliError::Config(msg),
            e => CliError::Model(e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Data(d) => d.into(),
            EvalError::Model(m) => m.into(),
            e => CliError::Eval(e),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::InvalidConfig { .. } | BaselineError::NoCandidates => {
                CliError::Config(e.to_string())
            }
            e => CliError::Model(e.into()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        CliError::Spectral(e)
    }
}

impl From<DgpError> for CliError {
    fn from(e: DgpError) -> Self {
        CliError::Config(e.to_string())
    }
}
