use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("missing, invalid or expired token")]
    Unauthorized,
    #[error("invalid credentials")]
    InvalidCredentials,
    #[error("too many failed attempts, retry later")]
    RateLimited,
    #[error("not allowed for this account")]
    Forbidden,
    #[error("{0} not found")]
    NotFound(&'static str),
    #[error("pairing unknown or inactive")]
    UnknownPairing,
    #[error("session is finalized")]
    SessionFinalized,
    #[error("session is already finalized")]
    AlreadyFinalized,
    #[error("session needs frames from both feet")]
    EmptySession,
    #[error("batch of {0} frames exceeds the limit of {1}")]
    PayloadTooLarge(usize, usize),
    #[error("report not ready")]
    NotReady,
    #[error("report not available: {0}")]
    NotAvailable(String),
    #[error("unknown report kind {0}")]
    UnknownKind(String),
    #[error("username already taken")]
    UsernameTaken,
    #[error("{0}")]
    Invalid(String),
    #[error("storage failure: {0}")]
    Storage(#[from] StoreError),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        use ApiError::*;
        match self {
            Unauthorized | InvalidCredentials => StatusCode::UNAUTHORIZED,
            RateLimited => StatusCode::TOO_MANY_REQUESTS,
            Forbidden => StatusCode::FORBIDDEN,
            NotFound(_) | UnknownKind(_) | NotAvailable(_) => StatusCode::NOT_FOUND,
            SessionFinalized | AlreadyFinalized | NotReady | UsernameTaken => StatusCode::CONFLICT,
            UnknownPairing | EmptySession | Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            PayloadTooLarge(..) => StatusCode::PAYLOAD_TOO_LARGE,
            Storage(_) | Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        use ApiError::*;
        match self {
            Unauthorized => "unauthorized",
            InvalidCredentials => "invalid_credentials",
            RateLimited => "rate_limited",
            Forbidden => "forbidden",
            NotFound(_) => "not_found",
            UnknownPairing => "unknown_pairing",
            SessionFinalized => "session_finalized",
            AlreadyFinalized => "already_finalized",
            EmptySession => "empty_session",
            PayloadTooLarge(..) => "payload_too_large",
            NotReady => "not_ready",
            NotAvailable(_) => "not_available",
            UnknownKind(_) => "unknown_kind",
            UsernameTaken => "username_taken",
            Invalid(_) => "invalid_request",
            Storage(_) => "storage_error",
            Internal(_) => "internal_error",
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (self.status(), Json(body)).into_response()
    }
}
