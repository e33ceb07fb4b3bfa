use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use metafuse_core::api::ApiError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error("query contains no searchable terms")]
    EmptyQuery,

    #[error("unknown engine `{0}`")]
    UnknownEngine(String),

    #[error("no engines available: {0}")]
    NoEnginesAvailable(String),

    #[error("{0}")]
    BadRequest(String),

    #[error("cannot persist stats: {0}")]
    PersistFailure(String),

    #[error("cannot bind listener: {0}")]
    Bind(String),

    #[error(transparent)]
    Core(#[from] metafuse_core::Error),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        use metafuse_core::Error as Core;
        match self {
            ServiceError::EmptyQuery | ServiceError::BadRequest(_) | ServiceError::ConfigInvalid { .. } => StatusCode::BAD_REQUEST,
            ServiceError::UnknownEngine(_) => StatusCode::NOT_FOUND,
            ServiceError::NoEnginesAvailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Core(Core::EmptyQuery) => StatusCode::BAD_REQUEST,
            ServiceError::Core(Core::NoEnginesRegistered) => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Core(
                Core::ScenarioInvalid(_)
                | Core::InvalidFraction(_)
                | Core::EmptyRelevantSet
                | Core::UnknownFusion(_)
                | Core::UnknownMode(_),
            ) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        use metafuse_core::Error as Core;
        match self {
            ServiceError::ConfigInvalid { .. } => "config_invalid",
            ServiceError::EmptyQuery | ServiceError::Core(Core::EmptyQuery) => "empty_query",
            ServiceError::UnknownEngine(_) => "unknown_engine",
            ServiceError::NoEnginesAvailable(_) | ServiceError::Core(Core::NoEnginesRegistered) => "no_engines_available",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::PersistFailure(_) => "persist_failure",
            ServiceError::Bind(_) => "bind_failure",
            ServiceError::Core(Core::ScenarioInvalid(_) | Core::InvalidFraction(_) | Core::EmptyRelevantSet) => "scenario_invalid",
            ServiceError::Core(_) => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ApiError {
            error: self.code().to_string(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}
