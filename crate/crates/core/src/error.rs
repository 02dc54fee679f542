use thiserror::Error;

use crate::metric::MetricReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid metric space: {0}")]
    InvalidMetric(MetricReport),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid retraction system: {0}")]
    InvalidSystem(String),

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("unknown point label {0:?}")]
    UnknownLabel(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("size cap exceeded: {what} = {value} > {cap}")]
    CapExceeded { what: &'static str, value: usize, cap: usize },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("linear program is unbounded")]
    Unbounded,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { location: location.into(), message: message.into() }
    }
}
