use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use sparsebo::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    NotFound,
    Conflict,
    Invalid,
    ModelFailure,
}

/// Body of every non-2xx response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub campaign_id: Option<String>,
}

impl ApiError {
    pub fn new(code: ErrorCode, campaign_id: &str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            campaign_id: (!campaign_id.is_empty()).then(|| campaign_id.to_string()),
        }
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(ErrorCode::NotFound, id, format!("campaign {id:?} does not exist"))
    }

    pub fn invalid(id: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Invalid, id, message)
    }

    pub fn conflict(id: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Conflict, id, message)
    }

    pub fn internal(id: &str, err: impl std::fmt::Display) -> Self {
        Self::new(ErrorCode::ModelFailure, id, format!("storage failure: {err}"))
    }

    pub fn from_engine(id: &str, err: Error) -> Self {
        let code = match &err {
            Error::PendingSuggestionExists | Error::NoPendingSuggestion | Error::PointMismatch => ErrorCode::Conflict,
            Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::NonFiniteValue(_)
            | Error::OutOfBounds
            | Error::SchemaVersion { .. }
            | Error::Parse(_) => ErrorCode::Invalid,
            Error::UnsupportedKernel(_) | Error::NumericalFailure { .. } | Error::Io(_) => ErrorCode::ModelFailure,
        };
        Self::new(code, id, err.to_string())
    }

    pub fn status(&self) -> StatusCode {
        match self.code {
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::Invalid => StatusCode::BAD_REQUEST,
            ErrorCode::ModelFailure => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}
