//! HTTP service scoring draft posts against a loaded model snapshot.
//!
//! Only models trained on pre-post features are served: a draft has no
//! replies, retweets or favorites yet. Reloading swaps the snapshot
//! atomically; requests already running finish on the old one.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use abuse_forecast::corpus::{AccountProfile, ParentTweet};
use abuse_forecast::ensembles::{ArtifactError, ModelArtifact};
use abuse_forecast::explain::TreeExplainer;
use abuse_forecast::features::{FeatureExtractor, Stage};
use abuse_forecast::lexicons::{AbuseScore, AbuseVerdict, Threshold};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::services::ServeDir;

pub const ENV_MODEL: &str = "ABUSE_FORECAST_MODEL";
pub const ENV_ADDR: &str = "ABUSE_FORECAST_ADDR";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
/// Attributions returned per prediction.
pub const TOP_ATTRIBUTIONS: usize = 10;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("model was trained on {0} features; only pre-post models can score drafts")]
    StageMismatch(Stage),
    #[error("no model loaded")]
    NoModel,
    #[error("invalid model file: {0}")]
    Artifact(#[from] ArtifactError),
    #[error("request exceeded the {0:?} deadline")]
    Deadline(Duration),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServeError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServeError::BadRequest(_) | ServeError::Artifact(_) => StatusCode::BAD_REQUEST,
            ServeError::StageMismatch(_) => StatusCode::CONFLICT,
            ServeError::NoModel | ServeError::Deadline(_) => StatusCode::SERVICE_UNAVAILABLE,
            ServeError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ServeError::BadRequest(_) => "bad_request",
            ServeError::StageMismatch(_) => "stage_mismatch",
            ServeError::NoModel => "no_model",
            ServeError::Artifact(_) => "invalid_artifact",
            ServeError::Deadline(_) => "deadline",
            ServeError::Internal(_) => "internal",
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    code: &'static str,
    message: String,
}

impl IntoResponse for ServeError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({
            "error": ErrorBody { code: self.code(), message: self.to_string() }
        });
        (self.status(), Json(body)).into_response()
    }
}

/// A draft to score. Counts left out are derived from the text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub draft_text: String,
    #[serde(default)]
    pub hashtags: Option<u64>,
    #[serde(default)]
    pub mentions: Option<u64>,
    #[serde(default)]
    pub urls: Option<u64>,
    #[serde(default)]
    pub account: Option<AccountProfile>,
}

impl PredictRequest {
    pub fn new(text: &str) -> Self {
        Self {
            draft_text: text.to_string(),
            ..Default::default()
        }
    }

    fn parent(&self) -> ParentTweet {
        let mut p = ParentTweet::draft(&self.draft_text);
        if let Some(n) = self.hashtags {
            p.hashtag_count = n;
        }
        if let Some(n) = self.mentions {
            p.mention_count = n;
        }
        if let Some(n) = self.urls {
            p.url_count = n;
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftVerdict {
    pub verdict: AbuseVerdict,
    /// Absent when the draft has no tokens left after preprocessing.
    pub score: Option<AbuseScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAttribution {
    pub feature: String,
    /// Unscaled feature value.
    pub value: f64,
    pub attribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub predicted_abusive_replies: f64,
    pub verdict_of_draft: DraftVerdict,
    /// Largest |attribution| first. Empty for boosted models.
    pub top_attributions: Vec<FeatureAttribution>,
    /// Mean prediction over the background set; `None` without attributions.
    pub base_value: Option<f64>,
    /// Sum over all features, not only the listed ones.
    pub attribution_sum: Option<f64>,
    pub model_id: String,
    pub stage: Stage,
}

/// An immutable loaded model.
pub struct Snapshot {
    pub artifact: ModelArtifact,
    pub model_id: String,
    extractor: FeatureExtractor,
    explainer: Option<TreeExplainer>,
    names: Vec<String>,
}

impl Snapshot {
    /// Refuses models trained on post-hoc features.
    pub fn new(artifact: ModelArtifact, model_id: String) -> Result<Self, ServeError> {
        if artifact.stage != Stage::PrePost {
            return Err(ServeError::StageMismatch(artifact.stage));
        }
        Ok(Self::new_unchecked(artifact, model_id))
    }

    /// Skips the stage check. Only for exercising the request-time guard.
    #[doc(hidden)]
    pub fn new_unchecked(artifact: ModelArtifact, model_id: String) -> Self {
        let explainer = TreeExplainer::new(&artifact.model, &artifact.background).ok();
        Self {
            extractor: artifact.extractor(),
            names: artifact.feature_manifest.names(),
            explainer,
            artifact,
            model_id,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServeError> {
        let (artifact, id) = ModelArtifact::load(path)?;
        Self::new(artifact, id)
    }

    pub fn predict(&self, req: &PredictRequest) -> Result<PredictResponse, ServeError> {
        if self.artifact.stage != Stage::PrePost {
            return Err(ServeError::StageMismatch(self.artifact.stage));
        }
        if req.draft_text.trim().is_empty() {
            return Err(ServeError::BadRequest("draft_text is empty".into()));
        }
        let account = req.account.clone().unwrap_or_default();
        let features = self.extractor.extract_draft(&req.parent(), &account);
        let row = self
            .artifact
            .row(&features)
            .map_err(|e| ServeError::Internal(e.to_string()))?;
        let prediction = self
            .artifact
            .predict_row(&row)
            .map_err(|e| ServeError::Internal(e.to_string()))?;
        let (verdict, score) = self
            .extractor
            .registry()
            .verdict(&req.draft_text, Threshold::default());

        let mut top = Vec::new();
        let (mut base_value, mut attribution_sum) = (None, None);
        if let Some(explainer) = &self.explainer {
            let a = explainer
                .attribute(&row)
                .map_err(|e| ServeError::Internal(e.to_string()))?;
            let layout = self.artifact.layout();
            let raw = layout.vector(&features).to_row(layout.bow_width());
            top = a
                .top(TOP_ATTRIBUTIONS)
                .into_iter()
                .map(|j| FeatureAttribution {
                    feature: self.names[j].clone(),
                    value: raw[j],
                    attribution: a.values[j],
                })
                .collect();
            base_value = Some(a.base_value);
            attribution_sum = Some(a.values.iter().sum());
        }
        Ok(PredictResponse {
            predicted_abusive_replies: prediction,
            verdict_of_draft: DraftVerdict { verdict, score },
            top_attributions: top,
            base_value,
            attribution_sum,
            model_id: self.model_id.clone(),
            stage: self.artifact.stage,
        })
    }

    pub fn info(&self) -> serde_json::Value {
        let a = &self.artifact;
        serde_json::json!({
            "model_id": self.model_id,
            "kind": a.kind,
            "mask": a.mask.to_string(),
            "stage": a.stage,
            "params": a.params,
            "feature_manifest": a.feature_manifest,
            "feature_manifest_digest": a.feature_manifest_digest,
            "training": a.training,
            "attributions": self.explainer.is_some(),
        })
    }
}

/// Shared server state: the current snapshot and a reload flag.
pub struct AppState {
    current: RwLock<Option<Arc<Snapshot>>>,
    reloading: AtomicBool,
    deadline: Duration,
}

impl AppState {
    pub fn new(snapshot: Option<Snapshot>, deadline: Duration) -> Arc<Self> {
        Arc::new(Self {
            current: RwLock::new(snapshot.map(Arc::new)),
            reloading: AtomicBool::new(false),
            deadline,
        })
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.current.read().expect("snapshot lock").clone()
    }

    pub fn swap(&self, s: Snapshot) {
        *self.current.write().expect("snapshot lock") = Some(Arc::new(s));
    }

    pub fn is_reloading(&self) -> bool {
        self.reloading.load(Ordering::SeqCst)
    }

    /// Health reports "reloading" until the guard is dropped.
    pub fn begin_reload(&self) -> ReloadGuard<'_> {
        self.reloading.store(true, Ordering::SeqCst);
        ReloadGuard(&self.reloading)
    }
}

pub fn router(state: Arc<AppState>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/predict", post(predict))
        .route("/model", get(model_info))
        .route("/health", get(health))
        .route("/reload", post(reload))
        .with_state(state);
    let app = Router::new().nest("/v1", api);
    match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ServeError> {
    serde_json::from_slice(body).map_err(|e| ServeError::BadRequest(e.to_string()))
}

async fn predict(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<PredictResponse>, ServeError> {
    let req: PredictRequest = parse(&body)?;
    let snap = state.snapshot().ok_or(ServeError::NoModel)?;
    let work = tokio::task::spawn_blocking(move || snap.predict(&req));
    match tokio::time::timeout(state.deadline, work).await {
        Ok(Ok(r)) => r.map(Json),
        Ok(Err(e)) => Err(ServeError::Internal(e.to_string())),
        Err(_) => Err(ServeError::Deadline(state.deadline)),
    }
}

async fn model_info(
    State(state): State<Arc<AppState>>,
) -> Result<Json<serde_json::Value>, ServeError> {
    let snap = state.snapshot().ok_or(ServeError::NoModel)?;
    Ok(Json(snap.info()))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let status = if state.is_reloading() {
        "reloading"
    } else {
        "ok"
    };
    Json(serde_json::json!({
        "status": status,
        "model_loaded": state.snapshot().is_some(),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReloadRequest {
    path: PathBuf,
}

pub struct ReloadGuard<'a>(&'a AtomicBool);

impl Drop for ReloadGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

async fn reload(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ServeError> {
    let req: ReloadRequest = parse(&body)?;
    let _guard = state.begin_reload();
    let snap = tokio::task::spawn_blocking(move || Snapshot::load(&req.path))
        .await
        .map_err(|e| ServeError::Internal(e.to_string()))??;
    let id = snap.model_id.clone();
    state.swap(snap);
    log::info!("reloaded model {id}");
    Ok(Json(serde_json::json!({ "model_id": id })))
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub model: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    pub deadline: Duration,
}

impl ServeConfig {
    /// Address and model path from the environment, with defaults.
    pub fn from_env() -> Result<Self, ServeError> {
        let addr = std::env::var(ENV_ADDR).unwrap_or_else(|_| DEFAULT_ADDR.to_string());
        Ok(Self {
            addr: addr
                .parse()
                .map_err(|e| ServeError::BadRequest(format!("{ENV_ADDR}={addr}: {e}")))?,
            model: std::env::var_os(ENV_MODEL).map(PathBuf::from),
            ui_dir: None,
            deadline: Duration::from_secs(5),
        })
    }
}

/// Load the configured model (if any) and serve until the task is dropped.
pub async fn run(cfg: ServeConfig) -> Result<(), ServeError> {
    let snapshot = cfg.model.as_deref().map(Snapshot::load).transpose()?;
    if let Some(s) = &snapshot {
        log::info!("loaded model {}", s.model_id);
    }
    let app = router(AppState::new(snapshot, cfg.deadline), cfg.ui_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(cfg.addr)
        .await
        .map_err(|e| ServeError::Internal(format!("bind {}: {e}", cfg.addr)))?;
    log::info!("listening on {}", cfg.addr);
    axum::serve(listener, app)
        .await
        .map_err(|e| ServeError::Internal(e.to_string()))
}
