use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::Value;

use procrm_core::Error;

/// JSON error body. Every engine error maps to exactly one `code`.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
            detail: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} '{id}' not found"))
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let status = match &err {
            Error::InvalidConfig(_) | Error::Validation { .. } => StatusCode::BAD_REQUEST,
            Error::Conflict { .. } => StatusCode::CONFLICT,
            Error::TrialComplete { .. }
            | Error::NotReady(_)
            | Error::State(_)
            | Error::Numerical { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Integrity { .. } | Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let detail = match &err {
            Error::Validation { seq, .. } | Error::Integrity { seq, .. } => {
                Some(serde_json::json!({ "seq": seq }))
            }
            Error::Conflict { expected, got } => {
                Some(serde_json::json!({ "expected_seq": expected, "got_seq": got }))
            }
            _ => None,
        };
        let api = ApiError::new(status, err.code(), err.to_string());
        match detail {
            Some(d) => api.with_detail(d),
            None => api,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}
