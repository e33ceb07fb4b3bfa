use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("query contains no searchable terms")]
    EmptyQuery,

    #[error("malformed url `{url}`: {reason}")]
    MalformedUrl { url: String, reason: String },

    #[error("no engines registered")]
    NoEnginesRegistered,

    #[error("observed relevance {0} is outside [0, 1]")]
    OutOfRangeRelevance(f64),

    #[error("cannot build a representative from an empty sample")]
    EmptySample,

    #[error("budget of {total} cannot give {min_per_engine} results to each of {engines} engines")]
    BudgetTooSmall {
        total: usize,
        min_per_engine: usize,
        engines: usize,
    },

    #[error("template error for engine `{engine_id}`: {reason}")]
    TemplateError { engine_id: String, reason: String },

    #[error("failed to parse response from `{engine_id}`: {reason}")]
    ParseFailure { engine_id: String, reason: String },

    #[error("invalid overlap fraction: {0}")]
    InvalidFraction(String),

    #[error("relevant set is empty")]
    EmptyRelevantSet,

    #[error("overlap needs at least two lists, got {0}")]
    TooFewLists(usize),

    #[error("unknown fusion method `{0}`")]
    UnknownFusion(String),

    #[error("unknown mode `{0}`")]
    UnknownMode(String),

    #[error("invalid engine descriptor `{engine_id}`: {reason}")]
    InvalidDescriptor { engine_id: String, reason: String },

    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),

    #[error("failed to bind simulated engine: {0}")]
    BindFailure(String),

    #[error("dispatch failed: {0}")]
    Dispatch(String),
}
