use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use flowscribe_core::dsl::Diagnostic;
use serde_json::json;

#[derive(Debug, Clone, PartialEq)]
pub enum ApiError {
    NotFound(String),
    Conflict(String),
    /// Bad request content; spec errors carry their diagnostics.
    Unprocessable {
        message: String,
        diagnostics: Vec<Diagnostic>,
    },
    /// Synthesis gave up; the model transcript is returned.
    SynthesisFailed {
        message: String,
        transcript: Vec<String>,
        dont_entry: Option<String>,
    },
    Upstream(String),
    Internal(String),
}

impl ApiError {
    pub fn unprocessable(message: impl Into<String>) -> ApiError {
        ApiError::Unprocessable {
            message: message.into(),
            diagnostics: Vec::new(),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Unprocessable { .. } | ApiError::SynthesisFailed { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Upstream(_) => StatusCode::BAD_GATEWAY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> serde_json::Value {
        match self {
            ApiError::NotFound(m) => json!({"error": "not_found", "message": m}),
            ApiError::Conflict(m) => json!({"error": "conflict", "message": m}),
            ApiError::Unprocessable { message, diagnostics } => {
                json!({"error": "invalid", "message": message, "diagnostics": diagnostics})
            }
            ApiError::SynthesisFailed {
                message,
                transcript,
                dont_entry,
            } => json!({
                "error": "synthesis_failed",
                "message": message,
                "transcript": transcript,
                "dont_entry": dont_entry,
            }),
            ApiError::Upstream(m) => json!({"error": "upstream", "message": m}),
            ApiError::Internal(m) => json!({"error": "internal", "message": m}),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.body())).into_response()
    }
}
