//! HTTP front end over one registry.
//!
//! | method | path              | body / result                          |
//! |--------|-------------------|----------------------------------------|
//! | POST   | `/register`       | [`RegisterRequest`] -> [`RegisterView`] |
//! | POST   | `/verify`         | [`VerifyRequest`] -> `Verdict`          |
//! | GET    | `/stats`          | `RegistryStats`                         |
//! | GET    | `/root`           | [`RootView`]                            |
//! | GET    | `/proof/{prefix}` | `InclusionProof`                        |
//!
//! Errors are `{"error": "...", "kind": "..."}` with a 4xx/5xx status.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, PoisonError, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use phashreg::{EntryId, EntryMetadata, PrefixKey, Registry};
use serde::{Deserialize, Serialize};

use crate::{exit, exit_code, hash_from_request, RegisterView, RootView};

/// Metadata key under which a registration's `request_id` is stored.
pub const REQUEST_ID_KEY: &str = "request_id";

const BODY_LIMIT: usize = 16 << 20;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterRequest {
    pub hash: Option<String>,
    pub image_base64: Option<String>,
    pub platform_id: String,
    pub created_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    /// Retrying with the same id returns the original entry instead of
    /// registering twice.
    pub request_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyRequest {
    pub hash: Option<String>,
    pub image_base64: Option<String>,
    pub tau: Option<u32>,
    pub tolerance: Option<u32>,
}

struct Inner {
    registry: Registry,
    requests: HashMap<String, EntryId>,
}

#[derive(Clone)]
pub struct AppState(Arc<RwLock<Inner>>);

impl AppState {
    pub fn new(registry: Registry) -> Self {
        let requests = registry
            .entries()
            .iter()
            .filter_map(|e| Some((e.extra.get(REQUEST_ID_KEY)?.clone(), e.entry_id)))
            .collect();
        Self(Arc::new(RwLock::new(Inner { registry, requests })))
    }

    /// Run `f` against the registry under a read lock.
    pub fn read<T>(&self, f: impl FnOnce(&Registry) -> T) -> T {
        f(&self.0.read().unwrap_or_else(PoisonError::into_inner).registry)
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    kind: &'static str,
}

pub struct ApiError(StatusCode, &'static str, String);

impl From<anyhow::Error> for ApiError {
    fn from(err: anyhow::Error) -> Self {
        let (status, kind) = match exit_code(&err) {
            exit::INVALID_INPUT => (StatusCode::BAD_REQUEST, "invalid_input"),
            exit::NOT_FOUND => (StatusCode::NOT_FOUND, "not_found"),
            exit::STORAGE => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError(status, kind, format!("{err:#}"))
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rej: JsonRejection) -> Self {
        ApiError(rej.status(), "invalid_input", rej.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.2,
            kind: self.1,
        };
        (self.0, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/register", post(register))
        .route("/verify", post(verify))
        .route("/stats", get(stats))
        .route("/root", get(root))
        .route("/proof/{prefix}", get(proof))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

async fn register(
    State(state): State<AppState>,
    body: Result<Json<RegisterRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<RegisterView>)> {
    let Json(req) = body?;
    let hash = hash_from_request(req.hash.as_deref(), req.image_base64.as_deref())?;
    if req.metadata.contains_key(REQUEST_ID_KEY) {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            "invalid_input",
            format!("metadata key {REQUEST_ID_KEY:?} is reserved"),
        ));
    }

    let mut guard = state.0.write().unwrap_or_else(PoisonError::into_inner);
    let inner = &mut *guard;
    if let Some(id) = req.request_id.as_ref().and_then(|r| inner.requests.get(r)) {
        let entry = inner.registry.entry(*id).expect("indexed ids exist").clone();
        if entry.hash != hash {
            return Err(ApiError(
                StatusCode::CONFLICT,
                "conflict",
                format!("request_id already used for entry {}", entry.entry_id),
            ));
        }
        let view = RegisterView {
            entry,
            root: inner.registry.root(),
            replayed: true,
        };
        return Ok((StatusCode::OK, Json(view)));
    }

    let mut meta = EntryMetadata::new(req.platform_id);
    meta.created_at = req.created_at;
    meta.extra = req.metadata;
    if let Some(r) = &req.request_id {
        meta.extra.insert(REQUEST_ID_KEY.into(), r.clone());
    }
    let entry = inner.registry.register(hash, meta).map_err(anyhow::Error::from)?;
    if let Some(r) = req.request_id {
        inner.requests.insert(r, entry.entry_id);
    }
    let view = RegisterView {
        entry,
        root: inner.registry.root(),
        replayed: false,
    };
    Ok((StatusCode::CREATED, Json(view)))
}

async fn verify(
    State(state): State<AppState>,
    body: Result<Json<VerifyRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body?;
    let hash = hash_from_request(req.hash.as_deref(), req.image_base64.as_deref())?;
    let verdict = state.read(|reg| {
        let cfg = reg.config();
        reg.verify_with(
            hash,
            req.tolerance.unwrap_or(cfg.flip_tolerance),
            req.tau.unwrap_or(cfg.tau),
        )
    });
    Ok(Json(verdict.map_err(anyhow::Error::from)?).into_response())
}

async fn stats(State(state): State<AppState>) -> Response {
    Json(state.read(Registry::stats)).into_response()
}

async fn root(State(state): State<AppState>) -> Json<RootView> {
    Json(state.read(RootView::of))
}

async fn proof(State(state): State<AppState>, Path(prefix): Path<String>) -> ApiResult<Response> {
    let prefix = PrefixKey::from_hex(&prefix).map_err(anyhow::Error::from)?;
    let proof = state.read(|reg| reg.prove(prefix)).map_err(anyhow::Error::from)?;
    Ok(Json(proof).into_response())
}
