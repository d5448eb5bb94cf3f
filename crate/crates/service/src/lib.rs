//! Annotation backend: consent-gated sessions, on-the-fly task assignment
//! aiming at two annotations per question, and a JSONL export.

pub mod policy;
pub mod store;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{FromRequestParts, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use qaforge_core::corpus::{to_jsonl, IndexSet};

pub use store::{DocumentSnapshot, Store, StoreError, TaskAssignment};

pub const ADMIN_TOKEN_ENV: &str = "QAFORGE_ADMIN_TOKEN";
pub const DEFAULT_TTL_MINUTES: i64 = 60;
const CONSENT_V1: &str = include_str!("../data/consent.v1.txt");

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_store() -> PathBuf {
    PathBuf::from("annotations.sqlite")
}

fn default_ttl() -> i64 {
    DEFAULT_TTL_MINUTES
}

fn default_consent_version() -> String {
    "v1".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_store")]
    pub store_path: PathBuf,
    #[serde(default = "default_ttl")]
    pub assignment_ttl_minutes: i64,
    #[serde(default = "default_consent_version")]
    pub consent_version: String,
    /// Replaces the bundled consent text.
    #[serde(default)]
    pub consent_file: Option<PathBuf>,
    /// Static files (the annotation UI) served under `/`.
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    /// Seed for task selection; drawn from the OS when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: default_bind(),
            store_path: default_store(),
            assignment_ttl_minutes: DEFAULT_TTL_MINUTES,
            consent_version: default_consent_version(),
            consent_file: None,
            static_dir: None,
            seed: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid service config: {0}")]
    Toml(#[from] toml::de::Error),
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn consent_text(&self) -> Result<String, ConfigError> {
        match &self.consent_file {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.display().to_string(),
                source,
            }),
            None => Ok(CONSENT_V1.to_string()),
        }
    }
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    rng: Arc<Mutex<ChaCha8Rng>>,
    clock: Clock,
    ttl: chrono::Duration,
    consent_version: String,
    consent_text: Arc<String>,
    admin_token: Option<String>,
}

impl AppState {
    pub fn new(store: Store, config: &ServiceConfig) -> Result<Self, ConfigError> {
        let rng = match config.seed {
            Some(s) => ChaCha8Rng::seed_from_u64(s),
            None => ChaCha8Rng::from_entropy(),
        };
        Ok(AppState {
            store: Arc::new(store),
            rng: Arc::new(Mutex::new(rng)),
            clock: Arc::new(Utc::now),
            ttl: chrono::Duration::minutes(config.assignment_ttl_minutes),
            consent_version: config.consent_version.clone(),
            consent_text: Arc::new(config.consent_text()?),
            admin_token: std::env::var(ADMIN_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_admin_token(mut self, token: Option<String>) -> Self {
        self.admin_token = token;
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }
}

/// HTTP-facing error.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    details: Option<serde_json::Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.code, "message": self.message});
        if let Some(d) = self.details {
            body["violations"] = d;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::UnknownSession => ApiError::new(StatusCode::UNAUTHORIZED, "unknown_session", msg),
            StoreError::ConsentRequired | StoreError::ConsentVersion { .. } => {
                ApiError::new(StatusCode::FORBIDDEN, "consent_required", msg)
            }
            StoreError::UnknownAssignment(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_assignment", msg)
            }
            StoreError::Expired(_) => ApiError::new(StatusCode::CONFLICT, "assignment_expired", msg),
            StoreError::NotActive(_) => ApiError::new(StatusCode::CONFLICT, "assignment_closed", msg),
            StoreError::Duplicate { .. } => ApiError::new(StatusCode::CONFLICT, "duplicate_annotation", msg),
            StoreError::Invalid(ref v) => ApiError {
                details: Some(json!(v)),
                ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_annotation", msg)
            },
            StoreError::Db(_) | StoreError::Corrupt(_) | StoreError::MissingDocument { .. } => {
                log::error!("{msg}");
                ApiError::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "storage",
                    "internal storage error",
                )
            }
        }
    }
}

/// The caller's session token from `Authorization: Bearer <token>`.
pub struct Annotator(pub String);

fn bearer(headers: &HeaderMap) -> Option<String> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
}

impl<S: Send + Sync> FromRequestParts<S> for Annotator {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        bearer(&parts.headers).map(Annotator).ok_or_else(|| {
            ApiError::new(
                StatusCode::FORBIDDEN,
                "consent_required",
                "start a session and give consent first",
            )
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionRequest {
    pub consent: bool,
    pub consent_text_version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionResponse {
    pub annotator_id: String,
    pub consent_text_version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub assignment_id: String,
    #[serde(default)]
    pub selected: IndexSet,
    #[serde(default)]
    pub no_answer: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipRequest {
    pub assignment_id: String,
}

async fn health(State(s): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let c = s.store.counts()?;
    Ok(Json(json!({
        "status": "ok",
        "questions": c.questions,
        "annotations": c.annotations,
        "sessions": c.sessions,
    })))
}

async fn consent(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({"version": s.consent_version, "text": *s.consent_text}))
}

async fn create_session(
    State(s): State<AppState>,
    Json(req): Json<SessionRequest>,
) -> Result<(StatusCode, Json<SessionResponse>), ApiError> {
    if !req.consent {
        return Err(StoreError::ConsentRequired.into());
    }
    if req.consent_text_version != s.consent_version {
        return Err(StoreError::ConsentVersion {
            given: req.consent_text_version,
            current: s.consent_version.clone(),
        }
        .into());
    }
    let id = s.store.create_session(&s.consent_version, (s.clock)())?;
    Ok((
        StatusCode::CREATED,
        Json(SessionResponse {
            annotator_id: id,
            consent_text_version: s.consent_version.clone(),
        }),
    ))
}

async fn next_task(State(s): State<AppState>, Annotator(a): Annotator) -> Result<Response, ApiError> {
    let task = {
        let mut rng = s.rng.lock().unwrap_or_else(|p| p.into_inner());
        s.store
            .next_task(&a, &s.consent_version, (s.clock)(), s.ttl, &mut *rng)?
    };
    Ok(match task {
        Some(t) => Json(t).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit(
    State(s): State<AppState>,
    Annotator(a): Annotator,
    Json(req): Json<AnnotationRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let record = s.store.submit(
        &a,
        &s.consent_version,
        &req.assignment_id,
        req.selected,
        req.no_answer,
        (s.clock)(),
    )?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn skip(
    State(s): State<AppState>,
    Annotator(a): Annotator,
    Json(req): Json<SkipRequest>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let qid = s
        .store
        .skip(&a, &s.consent_version, &req.assignment_id, (s.clock)())?;
    Ok(Json(json!({"skipped": qid})))
}

async fn export(State(s): State<AppState>, headers: HeaderMap) -> Result<Response, ApiError> {
    let Some(expected) = &s.admin_token else {
        return Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "export_disabled",
            format!("set {ADMIN_TOKEN_ENV} to enable exports"),
        ));
    };
    if bearer(&headers).as_deref() != Some(expected.as_str()) {
        return Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "admin_required",
            "admin token required",
        ));
    }
    let records = s.store.export()?;
    let body = to_jsonl(&records)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "export", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/consent", get(consent))
        .route("/session", post(create_session))
        .route("/task", get(next_task))
        .route("/task/skip", post(skip))
        .route("/annotation", post(submit))
        .route("/export/annotations", get(export))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Opens the store, binds and serves until ctrl-c.
pub async fn serve(config: &ServiceConfig, state: AppState) -> std::io::Result<()> {
    let addr: SocketAddr = config.bind.parse().map_err(|e| {
        std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("bind {}: {e}", config.bind),
        )
    })?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, config.static_dir.as_deref()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let c = ServiceConfig::from_toml("bind = \"0.0.0.0:9000\"\nassignment_ttl_minutes = 30\n").unwrap();
        assert_eq!(c.bind, "0.0.0.0:9000");
        assert_eq!(c.assignment_ttl_minutes, 30);
        assert_eq!(c.store_path, PathBuf::from("annotations.sqlite"));
        assert_eq!(ServiceConfig::from_toml("").unwrap(), ServiceConfig::default());
        assert!(ServiceConfig::from_toml("bind = 3").is_err());
    }

    #[test]
    fn bundled_consent_text() {
        let text = ServiceConfig::default().consent_text().unwrap();
        assert!(text.contains("voluntary"));
    }
}
