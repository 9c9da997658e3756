use thiserror::Error;

use crate::model::Arm;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("record {id}: {reason}")]
    MalformedRecord { id: u64, reason: String },

    #[error("inconsistent counts: {0}")]
    Inconsistent(String),

    #[error("no data: {0}")]
    NoData(String),

    /// A conditional proportion has an empty denominator.
    #[error("degenerate cell: denominator of {parameter} is zero")]
    DegenerateCell { parameter: &'static str },

    #[error("no switch data for arm {0}: estimated sampling fraction is zero")]
    NoSwitchData(Arm),

    #[error("cannot compose reports: {0}")]
    Composition(String),

    #[error("degenerate stratum: {0} has no observed continuous outcomes")]
    DegenerateStratum(&'static str),

    #[error("bootstrap failed: {rejected} of {attempts} resamples were degenerate")]
    BootstrapFailure { rejected: usize, attempts: usize },

    #[error("invalid {field}: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures that come from the data rather than from malformed input:
    /// empty cells, missing strata, resampling breakdowns.
    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::NoData(_)
                | Error::DegenerateCell { .. }
                | Error::NoSwitchData(_)
                | Error::DegenerateStratum(_)
                | Error::BootstrapFailure { .. }
        )
    }

    /// Stable short code used in machine-readable error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedRecord { .. } => "malformed-record",
            Error::Inconsistent(_) => "inconsistent-counts",
            Error::NoData(_) => "no-data",
            Error::DegenerateCell { .. } => "degenerate-cell",
            Error::NoSwitchData(_) => "no-switch-data",
            Error::Composition(_) => "composition",
            Error::DegenerateStratum(_) => "degenerate-stratum",
            Error::BootstrapFailure { .. } => "bootstrap-failure",
            Error::InvalidInput { .. } => "invalid-input",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
