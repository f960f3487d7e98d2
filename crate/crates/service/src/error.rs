use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] combitrial::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("bad request: {0}")]
    BadRequest(String),

    #[error("refit failed: {0}")]
    Refit(String),
}

impl ServiceError {
    /// Process exit code: 2 for configuration errors, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ServiceError::Core(combitrial::Error::Config { .. }) | ServiceError::BadRequest(_) => 2,
            _ => 3,
        }
    }

    fn status(&self) -> StatusCode {
        use combitrial::Error as E;
        match self {
            ServiceError::Core(E::Config { .. } | E::Domain(_)) | ServiceError::BadRequest(_) => {
                StatusCode::BAD_REQUEST
            }
            ServiceError::Core(E::NotFound(_)) => StatusCode::NOT_FOUND,
            ServiceError::Core(E::Conflict(_) | E::Precondition(_)) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        let body = match &self {
            ServiceError::Core(combitrial::Error::Config { path, message }) => {
                json!({"error": "config", "path": path, "message": message})
            }
            ServiceError::Core(combitrial::Error::Conflict(m)) => json!({"error": "conflict", "message": m}),
            ServiceError::Core(combitrial::Error::NotFound(m)) => json!({"error": "not_found", "message": m}),
            ServiceError::BadRequest(m) => json!({"error": "bad_request", "message": m}),
            e => json!({"error": "internal", "message": e.to_string()}),
        };
        (status, Json(body)).into_response()
    }
}
