//! HTTP job service: submit renders, poll progress, fetch previews and results.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use doodle_core::optimize::render::plan;
use doodle_core::{Error, FeatureExtractor, IterationRecord, RenderConfig, RenderInputs, RenderObserver, Tensor};
use serde::Serialize;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::config::JobConfig;
use crate::io;
use crate::job::{self, JobInputs, RunError};

pub const DEFAULT_BIND: &str = "127.0.0.1:8707";
pub const MAX_PART_BYTES: usize = 8 * 1024 * 1024;
pub const MAX_JOBS: usize = 16;
pub const PREVIEW_EVERY: usize = 20;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub bind: String,
    pub workers: usize,
    pub cors_origin: Option<String>,
    pub max_part_bytes: usize,
    pub max_jobs: usize,
    pub preview_every: usize,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            bind: DEFAULT_BIND.to_string(),
            workers: 1,
            cors_origin: None,
            max_part_bytes: MAX_PART_BYTES,
            max_jobs: MAX_JOBS,
            preview_every: PREVIEW_EVERY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    fn finished(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug)]
struct JobData {
    state: JobState,
    progress: f64,
    level: usize,
    iteration: usize,
    loss: Option<f64>,
    preview: Option<Bytes>,
    result: Option<Bytes>,
    error: Option<String>,
}

struct Job {
    id: String,
    config: JobConfig,
    output_size: (usize, usize),
    levels: usize,
    cancel: AtomicBool,
    data: Mutex<JobData>,
}

/// Job summary returned by the status endpoint. Carries no image data.
#[derive(Debug, Clone, Serialize)]
pub struct JobStatus {
    pub id: String,
    pub state: JobState,
    pub progress: f64,
    pub config: JobConfig,
    pub output_size: [usize; 2],
    pub level: usize,
    pub levels: usize,
    pub iteration: usize,
    pub loss: Option<f64>,
    pub has_preview: bool,
    pub error: Option<String>,
}

impl Job {
    fn status(&self) -> JobStatus {
        let d = self.data.lock().unwrap();
        JobStatus {
            id: self.id.clone(),
            state: d.state,
            progress: d.progress,
            config: self.config.clone(),
            output_size: [self.output_size.0, self.output_size.1],
            level: d.level,
            levels: self.levels,
            iteration: d.iteration,
            loss: d.loss,
            has_preview: d.preview.is_some(),
            error: d.error.clone(),
        }
    }

    fn fail(&self, msg: &str) {
        let mut d = self.data.lock().unwrap();
        if !d.state.finished() {
            d.state = JobState::Failed;
            d.error = Some(msg.to_string());
        }
    }
}

/// Retained jobs in least-recently-used order.
struct Store {
    jobs: HashMap<String, Arc<Job>>,
    order: VecDeque<String>,
    capacity: usize,
}

impl Store {
    fn touch(&mut self, id: &str) {
        if let Some(pos) = self.order.iter().position(|o| o == id) {
            let id = self.order.remove(pos).expect("position is valid");
            self.order.push_back(id);
        }
    }

    fn get(&mut self, id: &str) -> Option<Arc<Job>> {
        let job = self.jobs.get(id).cloned()?;
        self.touch(id);
        Some(job)
    }

    /// Inserts `job`, evicting finished jobs oldest first while over capacity.
    /// Queued and running jobs are never evicted.
    fn insert(&mut self, job: Arc<Job>) {
        self.order.push_back(job.id.clone());
        self.jobs.insert(job.id.clone(), job);
        while self.jobs.len() > self.capacity {
            let victim = self
                .order
                .iter()
                .position(|id| self.jobs[id].data.lock().unwrap().state.finished());
            match victim {
                Some(pos) => {
                    let id = self.order.remove(pos).expect("position is valid");
                    self.jobs.remove(&id);
                }
                None => break,
            }
        }
    }
}

struct Task {
    job: Arc<Job>,
    inputs: RenderInputs,
    config: RenderConfig,
}

struct Shared {
    store: Mutex<Store>,
    queue: Mutex<mpsc::Sender<Task>>,
    net: Arc<FeatureExtractor>,
    opts: ServeOptions,
}

type AppState = Arc<Shared>;

/// Updates a job's progress and preview while it renders.
struct JobObserver<'a> {
    job: &'a Job,
    levels: usize,
    iters: usize,
    preview_every: usize,
    level: usize,
}

impl JobObserver<'_> {
    fn set_preview(&self, image: &Tensor) {
        let png = Bytes::from(io::encode_png(image));
        self.job.data.lock().unwrap().preview = Some(png);
    }
}

impl RenderObserver for JobObserver<'_> {
    fn on_level_start(&mut self, level: usize, _levels: usize, _init: &Tensor) {
        self.level = level;
        let mut d = self.job.data.lock().unwrap();
        d.level = level;
        d.iteration = 0;
        d.progress = d.progress.max(level as f64 / self.levels as f64);
    }

    fn on_iteration(&mut self, record: &IterationRecord, image: &Tensor) -> bool {
        let it = record.report.iteration;
        {
            let mut d = self.job.data.lock().unwrap();
            let p = (self.level as f64 + (it + 1) as f64 / self.iters as f64) / self.levels as f64;
            d.progress = d.progress.max(p.min(1.0));
            d.iteration = it;
            d.loss = Some(record.report.total);
        }
        if self.preview_every > 0 && (it + 1) % self.preview_every == 0 {
            self.set_preview(image);
        }
        !self.job.cancel.load(Ordering::SeqCst)
    }

    fn on_level_done(&mut self, level: usize, image: &Tensor) {
        self.set_preview(image);
        let mut d = self.job.data.lock().unwrap();
        d.progress = d.progress.max((level + 1) as f64 / self.levels as f64);
    }
}

fn work(rx: Arc<Mutex<mpsc::Receiver<Task>>>, net: Arc<FeatureExtractor>, preview_every: usize) {
    loop {
        let task = match rx.lock().unwrap().recv() {
            Ok(t) => t,
            Err(_) => return,
        };
        let job = &task.job;
        {
            let mut d = job.data.lock().unwrap();
            if d.state != JobState::Queued || job.cancel.load(Ordering::SeqCst) {
                continue;
            }
            d.state = JobState::Running;
        }
        let mut observer = JobObserver {
            job,
            levels: job.levels,
            iters: task.config.iters_per_resolution,
            preview_every,
            level: 0,
        };
        match job::run(&task.inputs, &net, &task.config, &mut observer) {
            Ok(image) => {
                let png = Bytes::from(io::encode_png(&image));
                let mut d = job.data.lock().unwrap();
                if !d.state.finished() {
                    d.state = JobState::Done;
                    d.progress = 1.0;
                    d.result = Some(png);
                }
            }
            Err(RunError::Core(Error::Cancelled)) => job.fail("cancelled"),
            Err(e) => job.fail(&e.to_string()),
        }
    }
}

#[derive(Debug)]
struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Io(_) => bad_request(e.to_string()),
            e if e.is_validation() => bad_request(e.to_string()),
            e => ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

#[derive(Default)]
struct Parts {
    content: Option<Bytes>,
    style: Option<Bytes>,
    content_map: Option<Bytes>,
    style_map: Option<Bytes>,
    config: Option<Bytes>,
}

async fn read_parts(mut mp: Multipart, limit: usize) -> Result<Parts, ApiError> {
    let mut parts = Parts::default();
    let multipart_err = |e: axum::extract::multipart::MultipartError| ApiError(e.status(), e.body_text());
    while let Some(mut field) = mp.next_field().await.map_err(multipart_err)? {
        let name = field.name().unwrap_or_default().to_string();
        let mut buf = Vec::new();
        while let Some(chunk) = field.chunk().await.map_err(multipart_err)? {
            buf.extend_from_slice(&chunk);
            if buf.len() > limit {
                return Err(ApiError(
                    StatusCode::PAYLOAD_TOO_LARGE,
                    format!("part {name:?} exceeds {limit} bytes"),
                ));
            }
        }
        let slot = match name.as_str() {
            "content" => &mut parts.content,
            "style" => &mut parts.style,
            "content_map" => &mut parts.content_map,
            "style_map" => &mut parts.style_map,
            "config" => &mut parts.config,
            other => return Err(bad_request(format!("unexpected part {other:?}"))),
        };
        *slot = Some(Bytes::from(buf));
    }
    Ok(parts)
}

fn new_job(config: JobConfig, levels: &[(usize, usize)]) -> Arc<Job> {
    Arc::new(Job {
        id: uuid::Uuid::new_v4().simple().to_string(),
        config,
        output_size: *levels.last().expect("non-empty schedule"),
        levels: levels.len(),
        cancel: AtomicBool::new(false),
        data: Mutex::new(JobData {
            state: JobState::Queued,
            progress: 0.0,
            level: 0,
            iteration: 0,
            loss: None,
            preview: None,
            result: None,
            error: None,
        }),
    })
}

async fn submit(State(app): State<AppState>, mp: Multipart) -> Result<Response, ApiError> {
    let parts = read_parts(mp, app.opts.max_part_bytes).await?;
    let config: JobConfig = match &parts.config {
        Some(b) => serde_json::from_slice(b).map_err(|e| bad_request(format!("invalid config: {e}")))?,
        None => JobConfig::default(),
    };
    let app2 = app.clone();
    let (job, task) = tokio::task::spawn_blocking(move || -> Result<_, ApiError> {
        let need = |b: Option<Bytes>, name: &str| b.ok_or_else(|| bad_request(format!("missing {name} part")));
        let content = io::decode_image(&need(parts.content, "content")?, "content").map_err(RunError::from)?;
        let style = io::decode_image(&need(parts.style, "style")?, "style").map_err(RunError::from)?;
        let content_map = parts
            .content_map
            .map(|b| io::decode_map(&b, "content_map"))
            .transpose()
            .map_err(RunError::from)?;
        let style_map = parts
            .style_map
            .map(|b| io::decode_map(&b, "style_map"))
            .transpose()
            .map_err(RunError::from)?;
        let (inputs, render_config) = job::prepare(
            JobInputs {
                content,
                style,
                content_map,
                style_map,
            },
            &config,
        )?;
        let p = plan(&app2.net, &inputs, &render_config).map_err(RunError::from)?;
        let job = new_job(config, &p.levels);
        Ok((
            job.clone(),
            Task {
                job,
                inputs,
                config: render_config,
            },
        ))
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let status = job.status();
    app.store.lock().unwrap().insert(job);
    app.queue
        .lock()
        .unwrap()
        .send(task)
        .map_err(|_| ApiError(StatusCode::SERVICE_UNAVAILABLE, "render workers stopped".into()))?;
    Ok((StatusCode::ACCEPTED, Json(serde_json::json!({ "id": status.id, "status": status }))).into_response())
}

fn find(app: &AppState, id: &str) -> Result<Arc<Job>, ApiError> {
    app.store
        .lock()
        .unwrap()
        .get(id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no job {id}")))
}

fn png(bytes: Bytes) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn status(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<JobStatus>, ApiError> {
    Ok(Json(find(&app, &id)?.status()))
}

async fn result(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let job = find(&app, &id)?;
    let d = job.data.lock().unwrap();
    match (&d.result, d.state) {
        (Some(b), _) => Ok(png(b.clone())),
        (None, JobState::Failed) => Err(ApiError(
            StatusCode::CONFLICT,
            format!("job failed: {}", d.error.as_deref().unwrap_or("unknown")),
        )),
        (None, _) => Err(ApiError(StatusCode::CONFLICT, "job is not done".into())),
    }
}

async fn preview(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let job = find(&app, &id)?;
    let d = job.data.lock().unwrap();
    Ok(match &d.preview {
        Some(b) => png(b.clone()),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn cancel(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<JobStatus>, ApiError> {
    let job = find(&app, &id)?;
    if job.data.lock().unwrap().state == JobState::Done {
        return Err(ApiError(StatusCode::CONFLICT, "job already finished".into()));
    }
    job.cancel.store(true, Ordering::SeqCst);
    job.fail("cancelled");
    Ok(Json(job.status()))
}

/// Builds the HTTP router and starts `opts.workers` render threads.
pub fn router(net: FeatureExtractor, opts: ServeOptions) -> Router {
    let (tx, rx) = mpsc::channel::<Task>();
    let rx = Arc::new(Mutex::new(rx));
    let net = Arc::new(net);
    for i in 0..opts.workers.max(1) {
        let (rx, net, every) = (rx.clone(), net.clone(), opts.preview_every);
        std::thread::Builder::new()
            .name(format!("doodle-render-{i}"))
            .spawn(move || work(rx, net, every))
            .expect("spawn render worker");
    }
    let body_limit = opts.max_part_bytes * 5 + 64 * 1024;
    let cors = opts.cors_origin.as_deref().and_then(|o| HeaderValue::from_str(o).ok()).map(|origin| {
        CorsLayer::new()
            .allow_origin(AllowOrigin::exact(origin))
            .allow_methods([Method::GET, Method::POST, Method::DELETE])
            .allow_headers([header::CONTENT_TYPE])
    });
    let app = Arc::new(Shared {
        store: Mutex::new(Store {
            jobs: HashMap::new(),
            order: VecDeque::new(),
            capacity: opts.max_jobs,
        }),
        queue: Mutex::new(tx),
        net,
        opts,
    });
    let router = Router::new()
        .route("/api/render", post(submit))
        .route("/api/jobs/{id}", get(status).delete(cancel))
        .route("/api/jobs/{id}/result", get(result))
        .route("/api/jobs/{id}/preview", get(preview))
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(app);
    match cors {
        Some(c) => router.layer(c),
        None => router,
    }
}

pub async fn serve(listener: tokio::net::TcpListener, net: FeatureExtractor, opts: ServeOptions) {
    let app = router(net, opts);
    axum::serve(listener, app).await.expect("HTTP server");
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(id: &str, state: JobState) -> Arc<Job> {
        let mut j = new_job(JobConfig::default(), &[(32, 32)]);
        let inner = Arc::get_mut(&mut j).unwrap();
        inner.id = id.to_string();
        inner.data.get_mut().unwrap().state = state;
        j
    }

    #[test]
    fn lru_evicts_oldest_finished() {
        let mut s = Store {
            jobs: HashMap::new(),
            order: VecDeque::new(),
            capacity: 2,
        };
        s.insert(job("a", JobState::Done));
        s.insert(job("b", JobState::Done));
        s.get("a");
        s.insert(job("c", JobState::Queued));
        assert!(s.jobs.contains_key("a") && !s.jobs.contains_key("b"));
        s.insert(job("d", JobState::Running));
        assert!(!s.jobs.contains_key("a"));
        s.insert(job("e", JobState::Queued));
        assert_eq!(s.jobs.len(), 3, "active jobs are kept over capacity");
    }

    #[test]
    fn fail_is_terminal() {
        let j = job("x", JobState::Running);
        j.fail("cancelled");
        j.fail("other");
        let st = j.status();
        assert_eq!(st.state, JobState::Failed);
        assert_eq!(st.error.as_deref(), Some("cancelled"));
    }
}
