//! HTTP/JSON service for live trial conduct and simulation jobs.
//!
//! Routes:
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/trials` | [`CreateTrial`] |
//! | GET | `/trials/{id}` | persisted trial document |
//! | POST | `/trials/{id}/events` | [`AppendEvent`] |
//! | GET | `/trials/{id}/recommendation?at=<weeks>` | |
//! | POST | `/simulations` | [`SubmitSimulation`] |
//! | GET | `/simulations/{id}` | |
//!
//! Trial documents live on disk, one file per trial, so a restart loses no
//! trial data. Simulation jobs are held in memory only.

mod error;

pub use error::ApiError;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;
use tokio::sync::{Mutex, RwLock, Semaphore};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use procrm_core::sim::run_simulation;
use procrm_core::store::{EventKind, TrialDocument, TrialEvent};
use procrm_core::{DesignConfig, Error, OperatingCharacteristics, SimJob};

pub const API_VERSION: &str = "1";
pub const DEFAULT_PORT: u16 = 8173;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: IpAddr,
    pub port: u16,
    pub data_dir: PathBuf,
    /// Simulation jobs allowed to run at once.
    pub workers: usize,
    /// Directory of UI assets served at `/`, if any.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            data_dir: PathBuf::from("trials"),
            workers: 2,
            static_dir: None,
        }
    }
}

impl ServiceConfig {
    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }

    /// Origin of the UI bundled with this service.
    pub fn ui_origin(&self) -> String {
        format!("http://{}", self.addr())
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum JobStatus {
    Queued,
    Running,
    Done { result: OperatingCharacteristics },
    Failed { error: ApiError },
}

type SharedDoc = Arc<Mutex<TrialDocument>>;

pub struct AppState {
    data_dir: PathBuf,
    trials: Mutex<HashMap<String, SharedDoc>>,
    jobs: RwLock<HashMap<String, JobStatus>>,
    workers: Arc<Semaphore>,
}

impl AppState {
    pub fn new(data_dir: PathBuf, workers: usize) -> Arc<Self> {
        Arc::new(Self {
            data_dir,
            trials: Mutex::new(HashMap::new()),
            jobs: RwLock::new(HashMap::new()),
            workers: Arc::new(Semaphore::new(workers.max(1))),
        })
    }

    /// The in-memory handle for a trial, loading it from disk on first use.
    async fn trial(&self, id: &str) -> Result<SharedDoc, ApiError> {
        let mut trials = self.trials.lock().await;
        if let Some(doc) = trials.get(id) {
            return Ok(doc.clone());
        }
        if procrm_core::store::validate_trial_id(id).is_err() {
            return Err(ApiError::not_found("trial", id));
        }
        let path = self.data_dir.join(TrialDocument::file_name(id));
        if !path.exists() {
            return Err(ApiError::not_found("trial", id));
        }
        let doc = TrialDocument::load(&self.data_dir, id)?;
        let shared = Arc::new(Mutex::new(doc));
        trials.insert(id.to_string(), shared.clone());
        Ok(shared)
    }
}

/// `Json` extractor whose rejections use the service error body.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(rejection) => Err(rejection_error(rejection)),
        }
    }
}

fn rejection_error(rejection: JsonRejection) -> ApiError {
    let status = match rejection.status() {
        StatusCode::UNSUPPORTED_MEDIA_TYPE => StatusCode::UNSUPPORTED_MEDIA_TYPE,
        _ => StatusCode::BAD_REQUEST,
    };
    ApiError::new(status, "invalid_request", rejection.body_text())
}

fn check_version(version: &str) -> Result<(), ApiError> {
    if version == API_VERSION {
        Ok(())
    } else {
        Err(ApiError::bad_request(format!(
            "unsupported payload version '{version}', expected '{API_VERSION}'"
        )))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateTrial {
    pub version: String,
    pub config: DesignConfig,
    /// Defaults to a random UUID.
    #[serde(default)]
    pub trial_id: Option<String>,
    /// Trial week of creation.
    #[serde(default)]
    pub at: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialCreated {
    pub trial_id: String,
    pub seq: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppendEvent {
    pub version: String,
    pub at: f64,
    pub event: EventKind,
    /// Sequence number the client expects the event to receive; a mismatch
    /// means someone else appended first.
    #[serde(default)]
    pub expected_seq: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitSimulation {
    pub version: String,
    pub job: SimJob,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationAccepted {
    pub job_id: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendationQuery {
    pub at: Option<f64>,
}

async fn create_trial(
    State(app): State<Arc<AppState>>,
    ApiJson(req): ApiJson<CreateTrial>,
) -> Result<(StatusCode, Json<TrialCreated>), ApiError> {
    check_version(&req.version)?;
    let trial_id = req
        .trial_id
        .unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
    let mut trials = app.trials.lock().await;
    let path = app.data_dir.join(TrialDocument::file_name(&trial_id));
    if trials.contains_key(&trial_id) || path.exists() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "trial_exists",
            format!("trial '{trial_id}' already exists"),
        ));
    }
    let mut doc = TrialDocument::new(trial_id.clone())?;
    doc.append(
        req.at,
        EventKind::TrialCreated { config: req.config },
        Some(chrono::Utc::now()),
    )?;
    doc.persist(&app.data_dir)?;
    tracing::info!(trial = %trial_id, "trial created");
    let seq = doc.last_seq();
    trials.insert(trial_id.clone(), Arc::new(Mutex::new(doc)));
    Ok((StatusCode::CREATED, Json(TrialCreated { trial_id, seq })))
}

async fn get_trial(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let doc = app.trial(&id).await?;
    let body = doc.lock().await.to_json();
    Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn append_event(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<AppendEvent>,
) -> Result<(StatusCode, Json<TrialEvent>), ApiError> {
    check_version(&req.version)?;
    let shared = app.trial(&id).await?;
    let mut doc = shared.lock().await;
    let seq = doc.last_seq() + 1;
    if let Some(expected) = req.expected_seq {
        if expected != seq {
            return Err(Error::Conflict {
                expected: seq,
                got: expected,
            }
            .into());
        }
    }
    let before = doc.clone();
    let event = doc
        .append(req.at, req.event, Some(chrono::Utc::now()))?
        .clone();
    if let Err(err) = doc.persist(&app.data_dir) {
        *doc = before;
        return Err(err.into());
    }
    Ok((StatusCode::CREATED, Json(event)))
}

async fn recommendation(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<RecommendationQuery>,
) -> Result<Response, ApiError> {
    let shared = app.trial(&id).await?;
    let doc = shared.lock().await.clone();
    let rec = tokio::task::spawn_blocking(move || doc.recommendation(query.at))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(rec).into_response())
}

async fn submit_simulation(
    State(app): State<Arc<AppState>>,
    ApiJson(req): ApiJson<SubmitSimulation>,
) -> Result<(StatusCode, Json<SimulationAccepted>), ApiError> {
    check_version(&req.version)?;
    let job_id = uuid::Uuid::new_v4().to_string();
    app.jobs
        .write()
        .await
        .insert(job_id.clone(), JobStatus::Queued);

    let task_app = app.clone();
    let task_id = job_id.clone();
    tokio::spawn(async move {
        let _permit = task_app.workers.clone().acquire_owned().await;
        task_app
            .jobs
            .write()
            .await
            .insert(task_id.clone(), JobStatus::Running);
        let job = req.job;
        let outcome = tokio::task::spawn_blocking(move || run_simulation(&job)).await;
        let status = match outcome {
            Ok(Ok(result)) => JobStatus::Done { result },
            Ok(Err(err)) => JobStatus::Failed { error: err.into() },
            Err(join) => JobStatus::Failed {
                error: ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", join.to_string()),
            },
        };
        tracing::info!(job = %task_id, "simulation finished");
        task_app.jobs.write().await.insert(task_id, status);
    });
    Ok((StatusCode::ACCEPTED, Json(SimulationAccepted { job_id })))
}

#[derive(Serialize)]
struct JobView {
    job_id: String,
    #[serde(flatten)]
    status: JobStatus,
}

async fn get_simulation(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let jobs = app.jobs.read().await;
    let status = jobs
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("simulation", &id))?;
    Ok(Json(JobView { job_id: id, status }).into_response())
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/trials", post(create_trial))
        .route("/trials/{id}", get(get_trial))
        .route("/trials/{id}/events", post(append_event))
        .route("/trials/{id}/recommendation", get(recommendation))
        .route("/simulations", post(submit_simulation))
        .route("/simulations/{id}", get(get_simulation))
        .with_state(app)
}

/// Router plus CORS for the bundled UI origin and optional static assets.
pub fn app(config: &ServiceConfig) -> Router {
    let state = AppState::new(config.data_dir.clone(), config.workers);
    let mut router = router(state);
    if let Some(dir) = &config.static_dir {
        router = router.fallback_service(ServeDir::new(dir));
    }
    let origin = HeaderValue::from_str(&config.ui_origin()).expect("socket addresses are valid header values");
    router.layer(
        CorsLayer::new()
            .allow_origin(origin)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([axum::http::header::CONTENT_TYPE]),
    )
}

pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    std::fs::create_dir_all(&config.data_dir)?;
    let listener = tokio::net::TcpListener::bind(config.addr()).await?;
    tracing::info!(addr = %config.addr(), data_dir = %config.data_dir.display(), "listening");
    axum::serve(listener, app(&config)).await
}
