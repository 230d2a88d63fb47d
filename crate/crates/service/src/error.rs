use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::Value;

/// Error body returned by every endpoint: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

pub type ApiResult<T> = Result<T, ApiError>;

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.into(), message: message.into(), detail: Value::Null } }
    }

    pub fn with_detail(mut self, detail: impl Serialize) -> Self {
        self.body.detail = serde_json::to_value(detail).unwrap_or(Value::Null);
        self
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.body.code, self.status.as_u16(), self.body.message)
    }
}

impl std::error::Error for ApiError {}

/// Library errors surface as invalid input unless they are I/O trouble.
impl From<edgequery::Error> for ApiError {
    fn from(e: edgequery::Error) -> Self {
        use edgequery::Error as E;
        match &e {
            E::InvalidGraph(violations) => {
                ApiError::bad_request("invalid_graph", e.to_string()).with_detail(
                    violations.iter().map(ToString::to_string).collect::<Vec<_>>(),
                )
            }
            E::InvalidDistribution(_) => ApiError::bad_request("invalid_distribution", e.to_string()),
            E::UnknownEdge(edge) => ApiError::unprocessable("unknown_edge", e.to_string()).with_detail(edge),
            E::IllegalQuerySet(reason) => ApiError::unprocessable("illegal_query", e.to_string()).with_detail(reason),
            E::Config(_) => ApiError::bad_request("invalid_config", e.to_string()),
            E::Io(_) | E::Json(_) | E::Csv(_) => ApiError::internal(e.to_string()),
            _ => ApiError::unprocessable("invalid_request", e.to_string()),
        }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::internal(format!("storage: {e}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
