use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use aoglab::Error;

/// Error body: `{"error": {"status", "code", "message", "field"}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub status: u16,
    pub code: String,
    pub message: String,
    /// Path of the offending input, e.g. `rectangles[2]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, field: Option<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                status: status.as_u16(),
                code: code.into(),
                message: message.into(),
                field,
            },
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message, None)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message, None)
    }

    pub fn unprocessable(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message, Some(field.into()))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, None)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        let field = |f: &str| Some(f.to_string());
        let (status, code, field) = match &e {
            Error::MissingFeatures(_) => (StatusCode::NOT_FOUND, "unknown_image", None),
            Error::UnknownPattern(_) => (StatusCode::NOT_FOUND, "unknown_pattern", None),
            Error::Invalid { field, .. } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid", Some(field.clone())),
            Error::AlreadyPruned(_) => (StatusCode::UNPROCESSABLE_ENTITY, "already_pruned", field("pattern_ids")),
            Error::UndoUnderflow { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "undo_underflow", field("k")),
            Error::NoParse(_) => (StatusCode::UNPROCESSABLE_ENTITY, "no_parse", field("image_id")),
            Error::EmptyAog => (StatusCode::UNPROCESSABLE_ENTITY, "empty_aog", field("aog")),
            Error::Io { .. } | Error::Png(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", None),
            _ => (StatusCode::UNPROCESSABLE_ENTITY, "invalid", None),
        };
        ApiError::new(status, code, msg, field)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.body }))).into_response()
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;
