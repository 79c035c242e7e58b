//! JSON request handling shared by the HTTP service and the `score`/`explain` commands.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use propensity::artifact::{ModelArtifact, TrainingMetadata, FORMAT_VERSION};
use propensity::beta::Estimator;
use propensity::data::compose_text;
use propensity::explain::{attribute, auto_k, check_compatible, top_k, Attribution, Objective, Scheme};
use propensity::featurize::tokenize;
use propensity::models::PropensityModel;
use propensity::Error;

use crate::failure::Failure;

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ScoreRequest {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
}

/// Predictive distribution for one text. Point models fill only `mean` (their
/// prediction) and leave the Beta fields empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreResponse {
    pub model_kind: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub mean: f64,
    pub mode: Option<f64>,
    pub mode_fallback: bool,
    /// `[y, density]` pairs.
    pub pdf: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExplainRequest {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
    pub scheme: String,
    #[serde(default)]
    pub objective: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainResponse {
    pub scheme: Scheme,
    pub objective: Objective,
    pub fallback: bool,
    pub k: usize,
    /// Positions of the `k` strongest tokens, strongest first.
    pub top: Vec<usize>,
    /// One entry per token, in text order.
    pub attributions: Vec<Attribution>,
}

pub fn score_text(model: &PropensityModel, title: &str, body: &str, points: usize) -> Result<ScoreResponse, Error> {
    let tokens = tokenize(&compose_text(title, body));
    let kind = model.kind().artifact_name().to_string();
    match model.predict_params(&tokens)? {
        Some(p) => {
            let mode = p.mode();
            let pdf = p.pdf_curve(points)?.points.into_iter().map(|(y, d)| [y, d]).collect();
            Ok(ScoreResponse {
                model_kind: kind,
                alpha: Some(p.alpha()),
                beta: Some(p.beta()),
                mean: p.mean(),
                mode: Some(mode.value),
                mode_fallback: mode.fallback,
                pdf,
            })
        }
        None => {
            let s = model.score_tokens(&tokens, Estimator::Mean)?;
            Ok(ScoreResponse {
                model_kind: kind,
                alpha: None,
                beta: None,
                mean: s.value,
                mode: None,
                mode_fallback: false,
                pdf: Vec::new(),
            })
        }
    }
}

pub fn explain_text(
    model: &PropensityModel,
    title: &str,
    body: &str,
    scheme: Scheme,
    objective: Objective,
    k: Option<usize>,
) -> Result<ExplainResponse, Error> {
    if k == Some(0) {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let tokens = tokenize(&compose_text(title, body));
    let e = attribute(model, &tokens, scheme, objective)?;
    let k = k.unwrap_or_else(|| auto_k(e.attributions.len())).min(e.attributions.len());
    let top = top_k(&e.attributions, k).into_iter().map(|i| e.attributions[i].position).collect();
    Ok(ExplainResponse { scheme, objective: e.objective, fallback: e.fallback, k, top, attributions: e.attributions })
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn malformed(e: serde_json::Error) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed_body", e.to_string())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Self::new(StatusCode::BAD_REQUEST, "invalid_field", m),
            Error::Parse(m) => Self::new(StatusCode::BAD_REQUEST, "invalid_field", m),
            Error::DegenerateInput(m) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "degenerate_input", m),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

/// The loaded model; requests take a snapshot, a reload swaps the pointer.
#[derive(Debug)]
pub struct AppState {
    model: RwLock<Arc<ModelArtifact>>,
}

impl AppState {
    pub fn new(artifact: ModelArtifact) -> Arc<Self> {
        Arc::new(Self { model: RwLock::new(Arc::new(artifact)) })
    }

    pub fn current(&self) -> Arc<ModelArtifact> {
        Arc::clone(&self.model.read().expect("model lock poisoned"))
    }

    pub fn swap(&self, artifact: ModelArtifact) {
        *self.model.write().expect("model lock poisoned") = Arc::new(artifact);
    }
}

type Shared = Arc<AppState>;

pub const PDF_POINTS: usize = 101;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/score", post(score))
        .route("/explain", post(explain))
        .route("/health", get(health))
        .route("/model/info", get(info))
        .with_state(state)
}

async fn run_blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn score(State(state): State<Shared>, body: Bytes) -> Result<Json<ScoreResponse>, ApiError> {
    let req: ScoreRequest = serde_json::from_slice(&body).map_err(ApiError::malformed)?;
    let artifact = state.current();
    let resp = run_blocking(move || Ok(score_text(&artifact.model, &req.title, &req.body, PDF_POINTS)?)).await?;
    Ok(Json(resp))
}

async fn explain(State(state): State<Shared>, body: Bytes) -> Result<Json<ExplainResponse>, ApiError> {
    let req: ExplainRequest = serde_json::from_slice(&body).map_err(ApiError::malformed)?;
    let scheme: Scheme = req
        .scheme
        .parse()
        .map_err(|e: Error| ApiError::new(StatusCode::BAD_REQUEST, "invalid_scheme", e.to_string()))?;
    let objective: Objective = match &req.objective {
        Some(o) => {
            o.parse().map_err(|e: Error| ApiError::new(StatusCode::BAD_REQUEST, "invalid_objective", e.to_string()))?
        }
        None => Objective::Mean,
    };
    let artifact = state.current();
    check_compatible(&artifact.model, scheme)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "incompatible_scheme", e.to_string()))?;
    let resp =
        run_blocking(move || Ok(explain_text(&artifact.model, &req.title, &req.body, scheme, objective, req.k)?))
            .await?;
    Ok(Json(resp))
}

#[derive(Debug, Serialize)]
struct Health {
    status: &'static str,
    model_kind: String,
    version: &'static str,
    format_version: u32,
}

async fn health(State(state): State<Shared>) -> Json<Health> {
    Json(Health {
        status: "ok",
        model_kind: state.current().kind().artifact_name().to_string(),
        version: env!("CARGO_PKG_VERSION"),
        format_version: FORMAT_VERSION,
    })
}

#[derive(Debug, Serialize)]
struct Info {
    model_kind: String,
    format_version: u32,
    metadata: TrainingMetadata,
}

async fn info(State(state): State<Shared>) -> Json<Info> {
    let a = state.current();
    Json(Info {
        model_kind: a.kind().artifact_name().to_string(),
        format_version: FORMAT_VERSION,
        metadata: a.metadata.clone(),
    })
}

pub fn load(path: &Path) -> Result<ModelArtifact, Failure> {
    ModelArtifact::load(path).map_err(|e| Failure::data(path.display(), e))
}

/// Serves until Ctrl-C; on Unix, SIGHUP reloads the artifact from `path`.
pub async fn serve(path: PathBuf, host: &str, port: u16) -> Result<(), Failure> {
    let state = AppState::new(load(&path)?);
    let addr: SocketAddr =
        format!("{host}:{port}").parse().map_err(|e| Failure::Usage(format!("bad address {host}:{port}: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Failure::data(addr, e))?;
    tracing::info!(%addr, kind = %state.current().kind(), "serving");
    #[cfg(unix)]
    tokio::spawn(reload_on_hangup(Arc::clone(&state), path));
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Failure::data("server", e))
}

#[cfg(unix)]
async fn reload_on_hangup(state: Shared, path: PathBuf) {
    use tokio::signal::unix::{signal, SignalKind};
    let Ok(mut hup) = signal(SignalKind::hangup()) else {
        tracing::warn!("cannot listen for SIGHUP; reload disabled");
        return;
    };
    while hup.recv().await.is_some() {
        match ModelArtifact::load(&path) {
            Ok(a) => {
                tracing::info!(kind = %a.kind(), "model reloaded");
                state.swap(a);
            }
            Err(e) => tracing::error!("reload failed, keeping current model: {e}"),
        }
    }
}
