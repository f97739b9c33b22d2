use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde_json::json;
use thiserror::Error;

use crate::engine::EngineError;

/// Failures of repository operations, each with a fixed HTTP status.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApiError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{0} is not a property")]
    NotAProperty(String),
    #[error("{0} is not an operation")]
    NotAnOperation(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("invalid package: {0}")]
    InvalidPackage(String),
    #[error("model is read-only")]
    ReadOnly,
    #[error("already hosted: {0}")]
    Duplicate(String),
    #[error("delegation failed: {0}")]
    DelegationFailed(String),
    #[error("service crashed: {0}")]
    ServiceCrashed(String),
    #[error("service failed: {0}")]
    ServiceFailed(String),
    #[error("service rejected input: {0}")]
    InvalidInput(String),
    #[error("resource exceeded: {0}")]
    ResourceExceeded(String),
    #[error("sandbox violation: {0}")]
    SandboxViolation(String),
    #[error("operation {0} is not bound to a service")]
    Unbound(String),
    #[error("feature unavailable in this runtime: {0}")]
    FeatureUnavailable(String),
    #[error("missing or invalid bearer token")]
    Unauthorized,
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::NotAProperty(_) | ApiError::NotAnOperation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::TypeMismatch(_)
            | ApiError::SchemaMismatch(_)
            | ApiError::BadRequest(_)
            | ApiError::InvalidPackage(_)
            | ApiError::InvalidInput(_) => StatusCode::BAD_REQUEST,
            ApiError::ReadOnly => StatusCode::METHOD_NOT_ALLOWED,
            ApiError::Duplicate(_) => StatusCode::CONFLICT,
            ApiError::DelegationFailed(_) => StatusCode::BAD_GATEWAY,
            ApiError::ServiceCrashed(_) | ApiError::ServiceFailed(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::ResourceExceeded(_) => StatusCode::GATEWAY_TIMEOUT,
            ApiError::SandboxViolation(_) => StatusCode::FORBIDDEN,
            ApiError::Unbound(_) | ApiError::FeatureUnavailable(_) => StatusCode::NOT_IMPLEMENTED,
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
        }
    }

    /// Machine-readable error name used in response bodies.
    pub fn name(&self) -> &'static str {
        match self {
            ApiError::NotFound(_) => "NotFound",
            ApiError::NotAProperty(_) => "NotAProperty",
            ApiError::NotAnOperation(_) => "NotAnOperation",
            ApiError::TypeMismatch(_) => "TypeMismatch",
            ApiError::SchemaMismatch(_) => "SchemaMismatch",
            ApiError::BadRequest(_) => "BadRequest",
            ApiError::InvalidPackage(_) => "InvalidPackage",
            ApiError::ReadOnly => "ReadOnly",
            ApiError::Duplicate(_) => "Duplicate",
            ApiError::DelegationFailed(_) => "DelegationFailed",
            ApiError::ServiceCrashed(_) => "ServiceCrashed",
            ApiError::ServiceFailed(_) => "ServiceFailed",
            ApiError::InvalidInput(_) => "InvalidInput",
            ApiError::ResourceExceeded(_) => "ResourceExceeded",
            ApiError::SandboxViolation(_) => "SandboxViolation",
            ApiError::Unbound(_) => "Unbound",
            ApiError::FeatureUnavailable(_) => "FeatureUnavailable",
            ApiError::Unauthorized => "Unauthorized",
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::SchemaMismatch(m) => ApiError::SchemaMismatch(m),
            EngineError::ResourceExceeded(limit) => ApiError::ResourceExceeded(limit.to_string()),
            EngineError::SandboxViolation(what) => ApiError::SandboxViolation(what),
            EngineError::ServiceCrashed { .. } => ApiError::ServiceCrashed(e.to_string()),
            EngineError::Pipeline(p) => ApiError::InvalidInput(p.to_string()),
            other => ApiError::ServiceFailed(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.name(), "message": self.to_string() });
        (self.status(), axum::Json(body)).into_response()
    }
}
