use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

pub type Result<T, E = RatingError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("not found: {0}")]
    NotFound(String),

    #[error("invalid rating: {0}")]
    Invalid(String),

    #[error("conflict: {0}")]
    Conflict(String),

    /// Unreadable playlist or dataset layout at startup.
    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("journal error: {0}")]
    Journal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl RatingError {
    pub fn status(&self) -> StatusCode {
        match self {
            RatingError::NotFound(_) => StatusCode::NOT_FOUND,
            RatingError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            RatingError::Conflict(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for RatingError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}
