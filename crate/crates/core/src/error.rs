use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Machine-readable reason attached to every validation failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReasonCode {
    MissingFile,
    Schema,
    GridIncompatible,
    Coverage,
    SeriesGap,
    NegativeSeries,
    UnknownNode,
    NonPositiveWeight,
    UnknownParent,
    GroupCycle,
    DuplicateId,
    SocBounds,
    Efficiency,
    FuelBounds,
    FuelCoefficients,
    Rating,
    Policy,
    EmptyWindow,
    HorizonMismatch,
    InfeasibleByConstruction,
}

impl ReasonCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonCode::MissingFile => "missing_file",
            ReasonCode::Schema => "schema",
            ReasonCode::GridIncompatible => "grid_incompatible",
            ReasonCode::Coverage => "coverage",
            ReasonCode::SeriesGap => "series_gap",
            ReasonCode::NegativeSeries => "negative_series",
            ReasonCode::UnknownNode => "unknown_node",
            ReasonCode::NonPositiveWeight => "non_positive_weight",
            ReasonCode::UnknownParent => "unknown_parent",
            ReasonCode::GroupCycle => "group_cycle",
            ReasonCode::DuplicateId => "duplicate_id",
            ReasonCode::SocBounds => "soc_bounds",
            ReasonCode::Efficiency => "efficiency",
            ReasonCode::FuelBounds => "fuel_bounds",
            ReasonCode::FuelCoefficients => "fuel_coefficients",
            ReasonCode::Rating => "rating",
            ReasonCode::Policy => "policy",
            ReasonCode::EmptyWindow => "empty_window",
            ReasonCode::HorizonMismatch => "horizon_mismatch",
            ReasonCode::InfeasibleByConstruction => "infeasible_by_construction",
        }
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("[{code}] {message}")]
    Invalid { code: ReasonCode, message: String },
    #[error("model error: {0}")]
    Model(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl Error {
    pub fn invalid(code: ReasonCode, message: impl Into<String>) -> Self {
        Error::Invalid {
            code,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn reason(&self) -> Option<ReasonCode> {
        match self {
            Error::Invalid { code, .. } => Some(*code),
            _ => None,
        }
    }

    /// Process exit code used by the CLI: 2 config/validation, 3 I/O,
    /// 4 infeasible model, 5 solver failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid { .. } => 2,
            Error::Io { .. } => 3,
            Error::Infeasible(_) => 4,
            Error::Model(_) | Error::Solver(_) => 5,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
