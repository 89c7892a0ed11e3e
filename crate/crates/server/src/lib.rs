//! HTTP front end for the document vault.
//!
//! Every handler hands its work to the blocking pool: the vault talks to
//! SQLite and the filesystem synchronously.

pub mod api;

use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::Serialize;

use docvault_core::orchestrate::events::{events_for, Event};
use docvault_core::orchestrate::{
    auth, DocumentView, FactReport, NotaryQueueItem, NotaryReview, OrchestrateError, Principal, ShareLink, ShareView,
    Vault, VerificationReport,
};
use docvault_core::store::Scope;

use api::*;

/// Largest accepted request body; uploads arrive base64 encoded.
pub const BODY_LIMIT: usize = 32 * 1024 * 1024;

#[derive(Debug)]
pub struct ApiError(OrchestrateError);

impl From<OrchestrateError> for ApiError {
    fn from(e: OrchestrateError) -> Self {
        Self(e)
    }
}

impl ApiError {
    fn status(&self) -> (StatusCode, &'static str) {
        match &self.0 {
            OrchestrateError::InvalidInput(_) => (StatusCode::BAD_REQUEST, "invalid_input"),
            OrchestrateError::InvalidImage(_) => (StatusCode::BAD_REQUEST, "invalid_image"),
            OrchestrateError::InvalidZone(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_zone"),
            OrchestrateError::Unauthorized(_) => (StatusCode::FORBIDDEN, "unauthorized"),
            OrchestrateError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            OrchestrateError::Expired(_) => (StatusCode::GONE, "expired"),
            OrchestrateError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            OrchestrateError::StateViolation(_) => (StatusCode::CONFLICT, "state_violation"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.status();
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %self.0, "request failed");
        }
        let body = ErrorBody {
            error: code.into(),
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

struct Unauthenticated(String);

impl IntoResponse for Unauthenticated {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: "unauthenticated".into(),
            message: self.0,
        };
        (StatusCode::UNAUTHORIZED, [(header::WWW_AUTHENTICATE, "Bearer")], Json(body)).into_response()
    }
}

type Shared = Arc<Vault>;
type ApiResult<T> = Result<T, Response>;

async fn blocking<T, F>(vault: &Shared, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Vault) -> Result<T, OrchestrateError> + Send + 'static,
{
    let v = Arc::clone(vault);
    match tokio::task::spawn_blocking(move || f(&v)).await {
        Ok(r) => r.map_err(|e| ApiError(e).into_response()),
        Err(e) => Err(ApiError(OrchestrateError::Internal(e.to_string())).into_response()),
    }
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    let v = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    v.strip_prefix("Bearer ").map(|t| t.trim().to_string())
}

async fn principal(vault: &Shared, headers: &HeaderMap) -> ApiResult<Principal> {
    let token = bearer(headers).ok_or_else(|| Unauthenticated("bearer token required".into()).into_response())?;
    let v = Arc::clone(vault);
    match tokio::task::spawn_blocking(move || v.authenticate(&token)).await {
        Ok(Ok(p)) => Ok(p),
        Ok(Err(OrchestrateError::Unauthorized(m))) => Err(Unauthenticated(m).into_response()),
        Ok(Err(e)) => Err(ApiError(e).into_response()),
        Err(e) => Err(ApiError(OrchestrateError::Internal(e.to_string())).into_response()),
    }
}

fn created<T: Serialize>(body: T) -> Response {
    (StatusCode::CREATED, Json(body)).into_response()
}

pub fn router(vault: Arc<Vault>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/auth/register", post(register))
        .route("/auth/login", post(login))
        .route("/auth/logout", post(logout))
        .route("/admin/notaries", post(register_notary))
        .route("/documents", post(upload).get(list_documents))
        .route("/documents/{id}", get(get_document))
        .route("/documents/{id}/events", get(document_events))
        .route("/documents/{id}/shares", post(create_share).get(list_shares))
        .route("/documents/{id}/prune", post(prune))
        .route("/shares/{uuid}", delete(revoke_share))
        .route("/share/{uuid}", get(resolve_share))
        .route("/verify/{reference}", get(verify))
        .route("/notary/queue", get(notary_queue))
        .route("/notary/{doc}/claim", post(notary_claim))
        .route("/notary/{doc}/decision", post(notary_decision))
        .route("/facts/{subject}", get(facts_for_subject))
        .route("/facts/{hash}/revoke", post(revoke_fact))
        .layer(axum::extract::DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(vault)
}

async fn register(
    State(vault): State<Shared>,
    headers: HeaderMap,
    Json(req): Json<RegisterRequest>,
) -> ApiResult<Response> {
    let mut scopes = req.scopes.clone();
    if scopes.is_empty() {
        scopes.push(Scope::Owner);
    }
    if scopes.iter().any(|s| *s != Scope::Owner) {
        let admin = principal(&vault, &headers).await?;
        if !admin.is_admin() {
            return Err(ApiError(OrchestrateError::Unauthorized("admin scope required".into())).into_response());
        }
    }
    let p = blocking(&vault, move |v| v.register_user(&req.username, &req.password, &scopes)).await?;
    Ok(created(RegisterResponse {
        user_id: p.user_id,
        username: p.username,
        scopes: p.scopes.into_iter().collect(),
    }))
}

async fn login(State(vault): State<Shared>, Json(req): Json<LoginRequest>) -> ApiResult<Json<LoginResponse>> {
    let (token, p) = blocking(&vault, move |v| v.login(&req.username, &req.password))
        .await
        .map_err(|r| {
            if r.status() == StatusCode::FORBIDDEN {
                Unauthenticated("bad credentials".into()).into_response()
            } else {
                r
            }
        })?;
    Ok(Json(LoginResponse {
        token,
        user_id: p.user_id,
        scopes: p.scopes.into_iter().collect(),
    }))
}

async fn logout(State(vault): State<Shared>, headers: HeaderMap) -> ApiResult<StatusCode> {
    let token = bearer(&headers).ok_or_else(|| Unauthenticated("bearer token required".into()).into_response())?;
    blocking(&vault, move |v| auth::logout(v.metadata(), &token)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn register_notary(
    State(vault): State<Shared>,
    headers: HeaderMap,
    Json(req): Json<NotaryRegistration>,
) -> ApiResult<Response> {
    let admin = principal(&vault, &headers).await?;
    let notary_id = blocking(&vault, move |v| v.register_notary(&admin, &req.user_id)).await?;
    Ok(created(NotaryRegistered { notary_id }))
}

async fn upload(
    State(vault): State<Shared>,
    headers: HeaderMap,
    Json(req): Json<UploadRequest>,
) -> ApiResult<Response> {
    let owner = principal(&vault, &headers).await?;
    let png = B64
        .decode(req.image_png.as_bytes())
        .map_err(|e| ApiError(OrchestrateError::InvalidImage(format!("image_png is not base64: {e}"))).into_response())?;
    let key = req.idempotency_key.or_else(|| {
        headers
            .get("idempotency-key")
            .and_then(|h| h.to_str().ok())
            .map(str::to_string)
    });
    let (id, state) =
        blocking(&vault, move |v| v.create_document(&owner, &png, &req.description, key.as_deref())).await?;
    Ok(created(UploadResponse { id, state }))
}

async fn list_documents(State(vault): State<Shared>, headers: HeaderMap) -> ApiResult<Json<Vec<DocumentView>>> {
    let who = principal(&vault, &headers).await?;
    Ok(Json(blocking(&vault, move |v| v.list_documents(&who)).await?))
}

async fn get_document(
    State(vault): State<Shared>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<DocumentView>> {
    let who = principal(&vault, &headers).await?;
    Ok(Json(blocking(&vault, move |v| v.get_document(&who, &id)).await?))
}

async fn document_events(
    State(vault): State<Shared>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<Vec<Event>>> {
    let who = principal(&vault, &headers).await?;
    Ok(Json(
        blocking(&vault, move |v| {
            v.get_document(&who, &id)?;
            events_for(v.metadata(), &id)
        })
        .await?,
    ))
}

async fn create_share(
    State(vault): State<Shared>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<ShareRequest>,
) -> ApiResult<Response> {
    let owner = principal(&vault, &headers).await?;
    let link = blocking(&vault, move |v| v.create_share(&owner, &id, &req.zones, req.mode)).await?;
    Ok(created(link))
}

async fn list_shares(
    State(vault): State<Shared>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<Vec<ShareLink>>> {
    let owner = principal(&vault, &headers).await?;
    Ok(Json(blocking(&vault, move |v| v.shares_for(&owner, &id)).await?))
}

async fn prune(
    State(vault): State<Shared>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<PruneRequest>,
) -> ApiResult<Json<PruneResponse>> {
    let owner = principal(&vault, &headers).await?;
    let remaining = blocking(&vault, move |v| v.prune_zones(&owner, &id, &req.zones)).await?;
    Ok(Json(PruneResponse { remaining }))
}

async fn revoke_share(
    State(vault): State<Shared>,
    headers: HeaderMap,
    UrlPath(uuid): UrlPath<String>,
) -> ApiResult<StatusCode> {
    let owner = principal(&vault, &headers).await?;
    blocking(&vault, move |v| v.revoke_share(&owner, &uuid)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn resolve_share(State(vault): State<Shared>, UrlPath(uuid): UrlPath<String>) -> ApiResult<Json<ShareView>> {
    Ok(Json(blocking(&vault, move |v| v.resolve_share(&uuid)).await?))
}

async fn verify(
    State(vault): State<Shared>,
    UrlPath(reference): UrlPath<String>,
) -> ApiResult<Json<VerificationReport>> {
    Ok(Json(blocking(&vault, move |v| v.verify_public(&reference)).await?))
}

async fn notary_queue(State(vault): State<Shared>, headers: HeaderMap) -> ApiResult<Json<Vec<NotaryQueueItem>>> {
    let who = principal(&vault, &headers).await?;
    Ok(Json(blocking(&vault, move |v| v.notary_queue(&who)).await?))
}

async fn notary_claim(
    State(vault): State<Shared>,
    headers: HeaderMap,
    UrlPath(doc): UrlPath<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let who = principal(&vault, &headers).await?;
    let state = blocking(&vault, move |v| v.notary_claim(&who, &doc)).await?;
    Ok(Json(serde_json::json!({ "state": state })))
}

async fn notary_decision(
    State(vault): State<Shared>,
    headers: HeaderMap,
    UrlPath(doc): UrlPath<String>,
    Json(review): Json<NotaryReview>,
) -> ApiResult<Response> {
    let who = principal(&vault, &headers).await?;
    let record = blocking(&vault, move |v| v.notary_decide(&who, &doc, review)).await?;
    Ok(Json(record).into_response())
}

async fn facts_for_subject(
    State(vault): State<Shared>,
    headers: HeaderMap,
    UrlPath(subject): UrlPath<String>,
) -> ApiResult<Json<Vec<FactReport>>> {
    let who = principal(&vault, &headers).await?;
    Ok(Json(blocking(&vault, move |v| v.facts_for_subject(&who, &subject)).await?))
}

async fn revoke_fact(
    State(vault): State<Shared>,
    headers: HeaderMap,
    UrlPath(hash): UrlPath<String>,
    Json(req): Json<RevokeFactRequest>,
) -> ApiResult<Response> {
    let who = principal(&vault, &headers).await?;
    let entry = blocking(&vault, move |v| v.revoke_fact(&who, &hash, &req.reason)).await?;
    Ok(Json(entry).into_response())
}

/// Sends tracing output to stderr and to `logs/server.log`.
pub fn init_logging(logs_dir: &Path) -> std::io::Result<()> {
    use tracing_subscriber::layer::SubscriberExt;
    use tracing_subscriber::util::SubscriberInitExt;
    use tracing_subscriber::{fmt, EnvFilter};

    std::fs::create_dir_all(logs_dir)?;
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(logs_dir.join("server.log"))?;
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info"));
    let _ = tracing_subscriber::registry()
        .with(filter)
        .with(fmt::layer().with_writer(std::io::stderr))
        .with(fmt::layer().with_ansi(false).with_writer(std::sync::Mutex::new(file)))
        .try_init();
    Ok(())
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(vault: Arc<Vault>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(vault))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
