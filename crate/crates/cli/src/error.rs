use thiserror::Error;

use tautpath_core::extract::ExtractError;
use tautpath_core::heightfield::HeightFieldError;
use tautpath_core::mesh::MeshError;
use tautpath_core::obj::ObjError;
use tautpath_core::oracle::OracleError;
use tautpath_core::relax::SolveError;
use tautpath_core::render::RenderError;
use tautpath_core::truss::TrussError;

/// Failure of a command, classified by the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Extraction(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Extraction(_) => 5,
            CliError::Verification(_) => 6,
        }
    }

    pub fn input(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{context}: {err}"))
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}

input_error!(
    HeightFieldError,
    MeshError,
    ObjError,
    TrussError,
    RenderError,
    serde_json::Error
);

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::AnchorsDisconnected(..) => CliError::Infeasible(e.to_string()),
            SolveError::InvalidParams(_) => CliError::Input(e.to_string()),
            SolveError::NonConvergence { .. } | SolveError::NumericalBlowup => {
                CliError::Solver(e.to_string())
            }
        }
    }
}

impl From<ExtractError> for CliError {
    fn from(e: ExtractError) -> Self {
        match e {
            ExtractError::NoChain { .. } | ExtractError::NotTaut(_) => {
                CliError::Extraction(e.to_string())
            }
            ExtractError::Mismatch(_) | ExtractError::SplitNetwork | ExtractError::Truss(_) => {
                CliError::Input(e.to_string())
            }
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Unreachable { .. } => CliError::Infeasible(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}
