//! HTTP service: model queries, background design jobs and cell outlines.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use metanet_core::design::{DesignConfig, InnerConfig, ObjectiveFile};
use metanet_core::geometry::{build_mesh, outline_polylines, FamilySpec, TilingParams};
use metanet_core::tensor::{StrainState, StressState};
use metanet_core::Error;
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

use crate::engine::{polar_profile, run_design, stress_curve, DesignOutput, LoadedModel, ModelInfo, PolarProfile, StressCurve};

#[derive(Clone, Debug, Default)]
pub struct ServiceConfig {
    pub design_workers: usize,
    pub jobs_dir: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
}

/// Error body returned by every endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub detail: String,
    #[serde(skip)]
    status: u16,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, detail: impl Into<String>) -> Self {
        Self {
            error: error.into(),
            detail: detail.into(),
            status: status.as_u16(),
        }
    }

    fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", detail)
    }

    fn no_model() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "ModelNotLoaded", "the service was started without a model")
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::ParamOutOfBounds { .. } | Error::ParamCount { .. } | Error::InvalidInput(_) | Error::Format(_) | Error::Json(_) => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.name(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Design,
    Evaluate,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JobProgress {
    pub start: usize,
    pub starts: usize,
    pub iteration: usize,
    /// Lowest objective seen so far over all starts.
    pub objective: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    pub request: serde_json::Value,
    pub progress: JobProgress,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<DesignOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

struct Job {
    id: String,
    file: ObjectiveFile,
    config: DesignConfig,
}

struct AppState {
    model: Option<LoadedModel>,
    jobs: Mutex<HashMap<String, JobRecord>>,
    queue: Mutex<mpsc::Sender<Job>>,
    next_id: AtomicU64,
    jobs_dir: Option<PathBuf>,
}

type Shared = Arc<AppState>;

impl AppState {
    fn model(&self) -> Result<&LoadedModel, ApiError> {
        self.model.as_ref().ok_or_else(ApiError::no_model)
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut JobRecord)) {
        if let Some(r) = self.jobs.lock().unwrap().get_mut(id) {
            f(r);
        }
    }
}

fn worker(state: Shared, queue: Arc<Mutex<mpsc::Receiver<Job>>>) {
    loop {
        let job = match queue.lock().unwrap().recv() {
            Ok(j) => j,
            Err(_) => return,
        };
        let Some(model) = state.model.clone() else {
            continue;
        };
        let starts = job.config.starts.max(1);
        state.update(&job.id, |r| {
            r.status = JobStatus::Running;
            r.progress.starts = starts;
        });
        let outcome = run_design(model.dyn_model(), &job.file, &job.config, &mut |s, it, best| {
            state.update(&job.id, |r| {
                r.progress.start = s;
                r.progress.iteration = it;
                r.progress.objective = Some(best);
            });
        });
        state.update(&job.id, |r| match outcome {
            Ok(out) => {
                r.progress.objective = Some(out.best.objective);
                r.status = JobStatus::Done;
                r.result = Some(out);
            }
            Err(e) => {
                r.status = JobStatus::Failed;
                r.error = Some(ApiError::from(e));
            }
        });
        if let Some(dir) = &state.jobs_dir {
            let record = state.jobs.lock().unwrap().get(&job.id).cloned();
            if let Some(record) = record {
                let path = dir.join(format!("{}.json", job.id));
                let written = std::fs::create_dir_all(dir)
                    .and_then(|_| std::fs::write(&path, serde_json::to_vec_pretty(&record).unwrap_or_default()));
                if let Err(e) = written {
                    log::warn!("could not write {}: {e}", path.display());
                }
            }
        }
    }
}

/// Builds the router and starts the design worker threads.
pub fn router(model: Option<LoadedModel>, config: ServiceConfig) -> Router {
    let (tx, rx) = mpsc::channel();
    let state = Arc::new(AppState {
        model,
        jobs: Mutex::new(HashMap::new()),
        queue: Mutex::new(tx),
        next_id: AtomicU64::new(1),
        jobs_dir: config.jobs_dir.clone(),
    });
    let rx = Arc::new(Mutex::new(rx));
    for _ in 0..config.design_workers.max(1) {
        let (s, q) = (state.clone(), rx.clone());
        std::thread::spawn(move || worker(s, q));
    }
    let cors = CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any);
    let app = Router::new()
        .route("/families", get(families))
        .route("/evaluate", post(evaluate))
        .route("/design", post(submit_design))
        .route("/jobs/{id}", get(job))
        .route("/mesh", get(mesh))
        .with_state(state);
    let app = match config.ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    app.layer(cors)
}

/// Serves until interrupted.
pub fn serve(addr: &str, model: Option<LoadedModel>, config: ServiceConfig) -> metanet_core::Result<()> {
    let addr: SocketAddr = addr
        .parse()
        .map_err(|e| Error::InvalidInput(format!("bad address '{addr}': {e}")))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(model, config))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

#[derive(Serialize)]
struct FamiliesResponse {
    families: Vec<FamilySpec>,
    model: Option<ModelInfo>,
}

async fn families(State(state): State<Shared>) -> Json<FamiliesResponse> {
    let mut families = vec![FamilySpec::solid_cell()];
    families.extend((1..=3).filter_map(|p| FamilySpec::honeycomb(p).ok()));
    Json(FamiliesResponse {
        families,
        model: state.model.as_ref().map(|m| m.info.clone()),
    })
}

#[derive(Clone, Debug, Deserialize)]
pub struct ProfileRequest {
    pub directions: usize,
    pub magnitude: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct CurveRequest {
    pub alpha: f64,
    pub magnitudes: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct EvaluateRequest {
    pub params: Vec<f64>,
    #[serde(default)]
    pub strains: Vec<StrainState>,
    #[serde(default)]
    pub profile: Option<ProfileRequest>,
    #[serde(default)]
    pub curve: Option<CurveRequest>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub energies: Vec<f64>,
    pub stresses: Vec<StressState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<PolarProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<StressCurve>,
}

async fn evaluate(
    State(state): State<Shared>,
    body: Result<Json<EvaluateRequest>, JsonRejection>,
) -> Result<Json<EvaluateResponse>, ApiError> {
    let Json(req) = body?;
    let model = state.model()?.clone();
    if req.params.len() != model.info.param_count {
        return Err(Error::ParamCount {
            expected: model.info.param_count,
            got: req.params.len(),
        }
        .into());
    }
    if let Some(s) = req.strains.iter().find(|s| !s.is_achievable()) {
        return Err(ApiError::bad_request(format!("strain {:?} is not reachable by any deformation", s)));
    }
    let out = tokio::task::spawn_blocking(move || -> Result<EvaluateResponse, Error> {
        let m = model.dyn_model();
        let inner = InnerConfig::default();
        Ok(EvaluateResponse {
            energies: req.strains.iter().map(|s| m.energy(&req.params, s)).collect(),
            stresses: req.strains.iter().map(|s| m.stress(&req.params, s)).collect(),
            profile: req
                .profile
                .map(|p| polar_profile(m, &req.params, p.directions, p.magnitude, &inner))
                .transpose()?,
            curve: req
                .curve
                .map(|c| stress_curve(m, &req.params, c.alpha, &c.magnitudes, &inner))
                .transpose()?,
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    Ok(Json(out))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignRequest {
    #[serde(flatten)]
    pub file: ObjectiveFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobCreated {
    pub id: String,
}

async fn submit_design(
    State(state): State<Shared>,
    body: Result<Json<DesignRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<JobCreated>), ApiError> {
    let Json(req) = body?;
    let model = state.model()?;
    req.file.objective.validate()?;
    metanet_core::design::resolve_bounds(model.dyn_model(), req.file.t_min.as_deref(), req.file.t_max.as_deref())?;
    if let Some(init) = &req.file.init {
        if init.len() != model.info.param_count {
            return Err(Error::ParamCount {
                expected: model.info.param_count,
                got: init.len(),
            }
            .into());
        }
    }
    let mut config = DesignConfig::default();
    if let Some(s) = req.starts {
        config.starts = s;
    }
    if let Some(s) = req.seed {
        config.seed = s;
    }
    if let Some(m) = req.max_iterations {
        config.max_iterations = m;
    }
    let id = format!("job-{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    state.jobs.lock().unwrap().insert(
        id.clone(),
        JobRecord {
            id: id.clone(),
            kind: JobKind::Design,
            status: JobStatus::Queued,
            request: serde_json::to_value(&req).map_err(Error::from)?,
            progress: JobProgress::default(),
            result: None,
            error: None,
        },
    );
    let job = Job {
        id: id.clone(),
        file: req.file,
        config,
    };
    state
        .queue
        .lock()
        .unwrap()
        .send(job)
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "WorkersStopped", "design workers are not running"))?;
    Ok((StatusCode::ACCEPTED, Json(JobCreated { id })))
}

async fn job(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<JobRecord>, ApiError> {
    state
        .jobs
        .lock()
        .unwrap()
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "JobNotFound", format!("no job '{id}'")))
}

#[derive(Clone, Debug, Deserialize)]
pub struct MeshQuery {
    pub family: String,
    #[serde(default)]
    pub params: Option<String>,
    #[serde(default)]
    pub resolution: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshOutline {
    pub family: FamilySpec,
    pub params: Vec<f64>,
    pub lattice: [[f64; 2]; 2],
    pub polylines: Vec<Vec<[f64; 2]>>,
}

async fn mesh(query: Result<Query<MeshQuery>, QueryRejection>) -> Result<Json<MeshOutline>, ApiError> {
    let Query(q) = query?;
    let spec: FamilySpec = q.family.parse()?;
    let params = match q.params.as_deref().filter(|s| !s.is_empty()) {
        Some(s) => TilingParams::new(
            s.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ApiError::bad_request(format!("params: {e}")))?,
        ),
        None => spec.midpoint(),
    };
    spec.check_bounds(&params)?;
    let resolution = q.resolution.unwrap_or(1);
    if !(1..=8).contains(&resolution) {
        return Err(ApiError::bad_request("resolution must lie in 1..=8"));
    }
    let out = tokio::task::spawn_blocking(move || -> Result<MeshOutline, Error> {
        let m = build_mesh(&spec, &params, resolution)?;
        Ok(MeshOutline {
            lattice: [[m.lattice[0].x, m.lattice[0].y], [m.lattice[1].x, m.lattice[1].y]],
            polylines: outline_polylines(&m),
            params: params.values,
            family: spec,
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    Ok(Json(out))
}
