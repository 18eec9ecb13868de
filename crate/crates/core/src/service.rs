//! HTTP backend for interactive, instance-level noise editing: upload a
//! clip, edit its transcript and noise spec, generate the noisy version as
//! a background job, and compare proxy features and predictions of the
//! original and noisy media.
//!
//! Sessions live on disk under `DATA/sessions/{id}/` with a JSON index at
//! `DATA/sessions/index.json`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use crate::audio_noise::{AssetLibrary, PcmBuffer};
use crate::config::{self, ConfigError, Modality, NoiseKind, NoiseSpec};
use crate::engine::NoiseContext;
use crate::evaluation::{NoisedInstance, PredictionRequest, PredictorSpec};
use crate::media_io::{self, InjectOptions, InjectionReport, MediaError, MediaMeta, OutputQuality, Transcoder};
use crate::text_noise::{TextError, Transcript};
use crate::video_noise::{luma, FrameSeq};

const OPENAPI: &str = include_str!("../docs/openapi.json");

/// Length of one audio analysis window.
pub const AUDIO_WINDOW_S: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Used to probe, decode and encode uploads.
    pub transcoder: Option<Transcoder>,
    pub predictors: Vec<PredictorSpec>,
    pub assets: Option<AssetLibrary>,
    /// Concurrent generation jobs across all sessions.
    pub workers: usize,
    pub quality: OutputQuality,
    /// A built web console to serve under `/ui/`.
    pub static_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            transcoder: None,
            predictors: Vec::new(),
            assets: None,
            workers: 2,
            quality: OutputQuality::default(),
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub id: u64,
    pub status: JobStatus,
    /// Canonical JSON of the spec this generation was started with.
    pub spec: NoiseSpec,
    /// File name of the noisy media inside the session directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<InjectionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub created_unix_s: u64,
    /// Upload name as given by the client.
    pub file_name: String,
    /// Stored original inside the session directory.
    pub original: String,
    pub meta: MediaMeta,
    pub transcript: Transcript,
    pub spec: NoiseSpec,
    /// Bumped on every spec edit.
    pub revision: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<Generation>,
    #[serde(default)]
    pub next_generation: u64,
}

impl Session {
    /// The noisy media, only once a generation is done.
    pub fn noisy(&self) -> Option<&str> {
        self.generation
            .as_ref()
            .filter(|g| g.status == JobStatus::Done)
            .and_then(|g| g.output.as_deref())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    id: String,
    created_unix_s: u64,
    file_name: String,
}

/// Lightweight series standing in for learned features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ProxyFeatures {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioProxy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video: Option<VideoProxy>,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioProxy {
    pub window_s: f64,
    /// Window start times.
    pub times: Vec<f64>,
    pub rms: Vec<f64>,
    pub centroid_hz: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoProxy {
    pub fps: f64,
    /// Frame start times.
    pub times: Vec<f64>,
    pub mean_luma: Vec<f64>,
    pub edge_energy: Vec<f64>,
}

/// Per-window RMS and spectral centroid of the channel mean.
pub fn audio_proxy(buf: &PcmBuffer) -> AudioProxy {
    let sr = buf.sample_rate() as f64;
    let win = ((AUDIO_WINDOW_S * sr).round() as usize).max(1);
    let n = buf.len();
    let chans = buf.num_channels().max(1) as f64;
    let mono: Vec<f64> = (0..n)
        .map(|i| buf.channels().iter().map(|c| c[i] as f64).sum::<f64>() / chans)
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(win);
    let hann: Vec<f64> = (0..win)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / win as f64).cos())
        .collect();
    let mut times = Vec::new();
    let mut rms = Vec::new();
    let mut centroid = Vec::new();
    for (k, chunk) in mono.chunks(win).enumerate() {
        times.push(k as f64 * win as f64 / sr);
        rms.push((chunk.iter().map(|v| v * v).sum::<f64>() / chunk.len() as f64).sqrt());
        let mut spec: Vec<Complex<f64>> = (0..win)
            .map(|i| Complex::new(chunk.get(i).copied().unwrap_or(0.0) * hann[i], 0.0))
            .collect();
        fft.process(&mut spec);
        let (mut num, mut den) = (0.0, 0.0);
        for (b, c) in spec.iter().take(win / 2 + 1).enumerate() {
            let m = c.norm();
            num += m * b as f64 * sr / win as f64;
            den += m;
        }
        centroid.push(if den > 0.0 { num / den } else { 0.0 });
    }
    AudioProxy {
        window_s: win as f64 / sr,
        times,
        rms,
        centroid_hz: centroid,
    }
}

/// Per-frame mean luma and mean squared luma gradient.
pub fn video_proxy(seq: &FrameSeq) -> VideoProxy {
    use rayon::prelude::*;
    let stats: Vec<(f64, f64)> = seq
        .frames
        .par_iter()
        .map(|f| {
            let (w, h) = (f.width() as usize, f.height() as usize);
            let px = f.pixels();
            let y: Vec<f64> = px.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect();
            let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
            let mut energy = 0.0;
            for r in 0..h {
                for c in 0..w {
                    let v = y[r * w + c];
                    let gx = if c + 1 < w { y[r * w + c + 1] - v } else { 0.0 };
                    let gy = if r + 1 < h { y[(r + 1) * w + c] - v } else { 0.0 };
                    energy += gx * gx + gy * gy;
                }
            }
            (mean, energy / y.len().max(1) as f64)
        })
        .collect();
    VideoProxy {
        fps: seq.fps,
        times: (0..seq.len()).map(|i| i as f64 / seq.fps).collect(),
        mean_luma: stats.iter().map(|s| s.0).collect(),
        edge_energy: stats.iter().map(|s| s.1).collect(),
    }
}

pub fn proxy_features(video: Option<&FrameSeq>, audio: Option<&PcmBuffer>, transcript: Option<&Transcript>) -> ProxyFeatures {
    ProxyFeatures {
        audio: audio.map(audio_proxy),
        video: video.map(video_proxy),
        tokens: transcript
            .map(|t| t.tokens().into_iter().map(str::to_string).collect())
            .unwrap_or_default(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionPair {
    pub predictor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denoiser: Option<String>,
    pub original: Option<f64>,
    pub noisy: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonPayload {
    pub session: String,
    pub generation: u64,
    pub duration_s: f64,
    pub original: ProxyFeatures,
    pub noisy: ProxyFeatures,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<PredictionPair>,
}

/// JSON error body: `{"error": CODE, "message": ..., ...details}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details: Value::Null,
        }
    }

    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("{what} not found"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string())
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        let details = match &e {
            ConfigError::UnknownKind { index, .. }
            | ConfigError::EmptyInterval { index, .. }
            | ConfigError::BadIntensity { index, .. }
            | ConfigError::BadParam { index, .. } => json!({ "item": index }),
            ConfigError::Parse { path, line, column, .. } => json!({ "path": path, "line": line, "column": column }),
            _ => Value::Null,
        };
        let code = match &e {
            ConfigError::UnknownKind { .. } => "UnknownKind",
            ConfigError::EmptyInterval { .. } => "EmptyInterval",
            ConfigError::BadIntensity { .. } => "BadIntensity",
            ConfigError::Parse { .. } => "ParseError",
            _ => "InvalidSpec",
        };
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code,
            message: e.to_string(),
            details,
        }
    }
}

impl From<TextError> for ApiError {
    fn from(e: TextError) -> Self {
        let code = match e {
            TextError::Parse(_) => "ParseError",
            _ => "InvalidTranscript",
        };
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let (Value::Object(b), Value::Object(d)) = (&mut body, self.details) {
            b.extend(d);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Inner {
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, Session>>,
    run_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    compare_cache: Mutex<HashMap<(String, u64, String, String), ComparisonPayload>>,
    jobs: Semaphore,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

fn now_s() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl AppState {
    /// Open (or create) the session store and load existing sessions.
    pub fn open(config: ServiceConfig) -> std::io::Result<Self> {
        let root = config.data_dir.join("sessions");
        std::fs::create_dir_all(&root)?;
        let mut sessions = HashMap::new();
        if let Ok(text) = std::fs::read_to_string(root.join("index.json")) {
            let index: Vec<IndexEntry> = serde_json::from_str(&text).unwrap_or_default();
            for e in index {
                let path = root.join(&e.id).join("session.json");
                if let Some(s) = std::fs::read_to_string(path).ok().and_then(|t| serde_json::from_str::<Session>(&t).ok()) {
                    sessions.insert(s.id.clone(), s);
                }
            }
        }
        let workers = config.workers.max(1);
        Ok(AppState(Arc::new(Inner {
            config,
            sessions: Mutex::new(sessions),
            run_locks: Mutex::new(HashMap::new()),
            compare_cache: Mutex::new(HashMap::new()),
            jobs: Semaphore::new(workers),
        })))
    }

    fn session_dir(&self, id: &str) -> PathBuf {
        self.0.config.data_dir.join("sessions").join(id)
    }

    fn transcoder(&self) -> ApiResult<Transcoder> {
        self.0
            .config
            .transcoder
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "TranscoderMissing", "no transcoder configured"))
    }

    fn get(&self, id: &str) -> ApiResult<Session> {
        self.0
            .sessions
            .lock()
            .expect("session lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session"))
    }

    /// Mutate a session under the lock and persist it.
    fn update<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> ApiResult<T>) -> ApiResult<T> {
        let mut sessions = self.0.sessions.lock().expect("session lock");
        let s = sessions.get_mut(id).ok_or_else(|| ApiError::not_found("session"))?;
        let out = f(s)?;
        self.persist(s).map_err(ApiError::internal)?;
        Ok(out)
    }

    fn persist(&self, s: &Session) -> std::io::Result<()> {
        let path = self.session_dir(&s.id).join("session.json");
        std::fs::write(path, serde_json::to_string_pretty(s).expect("session serializes"))
    }

    fn write_index(&self) -> std::io::Result<()> {
        let sessions = self.0.sessions.lock().expect("session lock");
        let mut index: Vec<IndexEntry> = sessions
            .values()
            .map(|s| IndexEntry {
                id: s.id.clone(),
                created_unix_s: s.created_unix_s,
                file_name: s.file_name.clone(),
            })
            .collect();
        index.sort_by(|a, b| (a.created_unix_s, &a.id).cmp(&(b.created_unix_s, &b.id)));
        let path = self.0.config.data_dir.join("sessions").join("index.json");
        std::fs::write(path, serde_json::to_string_pretty(&index).expect("index serializes"))
    }

    fn run_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.0.run_locks.lock().expect("lock map").entry(id.to_string()).or_default().clone()
    }

    fn invalidate_cache(&self, id: &str) {
        self.0.compare_cache.lock().expect("cache lock").retain(|k, _| k.0 != id);
    }
}

/// All routes, ready to serve.
pub fn router(state: AppState) -> Router {
    let mut r = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/transcript", get(get_transcript).put(put_transcript))
        .route("/sessions/:id/noise", get(get_noise).post(post_noise))
        .route("/sessions/:id/generate", post(generate))
        .route("/sessions/:id/status", get(status))
        .route("/sessions/:id/original", get(original_media))
        .route("/sessions/:id/preview", get(preview_media))
        .route("/sessions/:id/compare", get(compare))
        .route("/predictors", get(list_predictors))
        .route("/kinds", get(list_kinds))
        .route("/openapi.json", get(openapi));
    if state.0.config.static_dir.is_some() {
        r = r.route("/ui/*path", get(static_file)).route("/ui/", get(static_index));
    }
    r.layer(DefaultBodyLimit::max(2 << 30)).with_state(state)
}

/// Bind and serve until the process ends.
pub async fn serve(config: ServiceConfig, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

fn sanitize_ext(name: &str) -> String {
    Path::new(name)
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .filter(|e| !e.is_empty() && e.len() <= 8 && e.chars().all(|c| c.is_ascii_alphanumeric()))
        .unwrap_or_else(|| "bin".into())
}

async fn create_session(State(st): State<AppState>, mut form: Multipart) -> ApiResult<(StatusCode, Json<Session>)> {
    let bad = |m: String| ApiError::new(StatusCode::BAD_REQUEST, "BadUpload", m);
    let mut media: Option<(String, Bytes)> = None;
    let mut alignment: Option<Bytes> = None;
    while let Some(field) = form.next_field().await.map_err(|e| bad(e.to_string()))? {
        match field.name() {
            Some("media") => {
                let name = field.file_name().unwrap_or("upload.bin").to_string();
                media = Some((name, field.bytes().await.map_err(|e| bad(e.to_string()))?));
            }
            Some("alignment") => alignment = Some(field.bytes().await.map_err(|e| bad(e.to_string()))?),
            _ => {}
        }
    }
    let (file_name, bytes) = media.ok_or_else(|| bad("missing `media` field".into()))?;
    let transcript = match alignment {
        Some(b) => {
            let text = String::from_utf8(b.to_vec()).map_err(|e| bad(e.to_string()))?;
            Transcript::from_json(&text)?
        }
        None => Transcript::new("und", Vec::new()),
    };
    let t = st.transcoder()?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let dir = st.session_dir(&id);
    let original = format!("original.{}", sanitize_ext(&file_name));
    let path = dir.join(&original);
    tokio::fs::create_dir_all(&dir).await.map_err(ApiError::internal)?;
    tokio::fs::write(&path, &bytes).await.map_err(ApiError::internal)?;
    let probed = tokio::task::spawn_blocking(move || t.probe(&path)).await.map_err(ApiError::internal)?;
    let meta = match probed {
        Ok(m) => m,
        Err(e) => {
            let _ = tokio::fs::remove_dir_all(&dir).await;
            return Err(media_error(e));
        }
    };
    let session = Session {
        id: id.clone(),
        created_unix_s: now_s(),
        file_name,
        original,
        meta,
        transcript,
        spec: NoiseSpec::new(0),
        revision: 0,
        generation: None,
        next_generation: 1,
    };
    st.persist(&session).map_err(ApiError::internal)?;
    st.0.sessions.lock().expect("session lock").insert(id, session.clone());
    st.write_index().map_err(ApiError::internal)?;
    Ok((StatusCode::CREATED, Json(session)))
}

fn media_error(e: MediaError) -> ApiError {
    match e {
        MediaError::UnreadableMedia { .. } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "UnreadableMedia", e.to_string()),
        MediaError::TranscoderMissing(_) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "TranscoderMissing", e.to_string()),
        MediaError::Config(c) => c.into(),
        other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "MediaError", other.to_string()),
    }
}

async fn list_sessions(State(st): State<AppState>) -> Json<Vec<Value>> {
    let sessions = st.0.sessions.lock().expect("session lock");
    let mut out: Vec<&Session> = sessions.values().collect();
    out.sort_by(|a, b| (a.created_unix_s, &a.id).cmp(&(b.created_unix_s, &b.id)));
    Json(
        out.into_iter()
            .map(|s| json!({ "id": s.id, "file_name": s.file_name, "created_unix_s": s.created_unix_s }))
            .collect(),
    )
}

async fn get_session(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Session>> {
    Ok(Json(st.get(&id)?))
}

async fn get_transcript(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Transcript>> {
    Ok(Json(st.get(&id)?.transcript))
}

async fn put_transcript(State(st): State<AppState>, UrlPath(id): UrlPath<String>, body: String) -> ApiResult<Json<Transcript>> {
    let t = Transcript::from_json(&body)?;
    st.update(&id, |s| {
        s.transcript = t.clone();
        Ok(())
    })?;
    st.invalidate_cache(&id);
    Ok(Json(t))
}

async fn get_noise(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<NoiseSpec>> {
    Ok(Json(st.get(&id)?.spec))
}

async fn post_noise(State(st): State<AppState>, UrlPath(id): UrlPath<String>, body: String) -> ApiResult<Json<Value>> {
    let spec = NoiseSpec::from_json(&body)?;
    let session = st.update(&id, |s| {
        let validated = config::validate(&spec, &s.meta)?;
        s.spec = spec.clone();
        s.revision += 1;
        Ok(json!({
            "revision": s.revision,
            "spec": s.spec,
            "items": validated.items.iter().map(|i| json!({
                "index": i.index,
                "modality": i.modality(),
                "kind": i.kind.name(),
                "start_s": i.start_s,
                "end_s": i.end_s,
                "intensity": i.intensity,
                "seed": i.seed,
            })).collect::<Vec<_>>(),
        }))
    })?;
    st.invalidate_cache(&id);
    Ok(Json(session))
}

async fn generate(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<(StatusCode, Json<Generation>)> {
    st.transcoder()?;
    let generation = st.update(&id, |s| {
        config::validate(&s.spec, &s.meta)?;
        let g = Generation {
            id: s.next_generation.max(1),
            status: JobStatus::Queued,
            spec: s.spec.clone(),
            output: None,
            error: None,
            report: None,
        };
        s.next_generation = g.id + 1;
        // a newer submission supersedes any job still waiting
        s.generation = Some(g.clone());
        Ok(g)
    })?;
    st.invalidate_cache(&id);
    tokio::spawn(run_generation(st.clone(), id, generation.id));
    Ok((StatusCode::ACCEPTED, Json(generation)))
}

fn is_current(s: &Session, gen: u64) -> bool {
    s.generation.as_ref().is_some_and(|g| g.id == gen)
}

async fn run_generation(st: AppState, id: String, gen: u64) {
    let lock = st.run_lock(&id);
    let _one_per_session = lock.lock().await;
    let Ok(_permit) = st.0.jobs.acquire().await else { return };

    let job = st.update(&id, |s| {
        if !is_current(s, gen) {
            return Ok(None);
        }
        let g = s.generation.as_mut().expect("current generation");
        g.status = JobStatus::Running;
        Ok(Some((g.spec.clone(), s.original.clone(), s.transcript.clone())))
    });
    let Ok(Some((spec, original, transcript))) = job else { return };

    let dir = st.session_dir(&id);
    let output = format!("noisy_{gen}.{}", sanitize_ext(&original));
    let config = &st.0.config;
    let mut opts = match config.transcoder.clone() {
        Some(t) => InjectOptions::new(t),
        None => return,
    };
    opts.quality = config.quality;
    opts.context = NoiseContext {
        assets: config.assets.clone(),
        base_dir: Some(dir.clone()),
    };
    if !transcript.is_empty() || spec.has_modality(Modality::Text) {
        opts.transcript = Some(transcript);
    }
    let (input, out_path) = (dir.join(&original), dir.join(&output));
    let result = tokio::task::spawn_blocking(move || media_io::inject_spec(&input, &out_path, &spec, &opts)).await;

    let _ = st.update(&id, |s| {
        if !is_current(s, gen) {
            return Ok(());
        }
        let g = s.generation.as_mut().expect("current generation");
        match result {
            Ok(Ok(report)) => {
                g.status = JobStatus::Done;
                g.output = Some(output.clone());
                g.report = Some(report);
            }
            Ok(Err(e)) => {
                g.status = JobStatus::Failed;
                g.error = Some(e.to_string());
            }
            Err(e) => {
                g.status = JobStatus::Failed;
                g.error = Some(format!("generation task aborted: {e}"));
            }
        }
        Ok(())
    });
}

async fn status(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let s = st.get(&id)?;
    Ok(Json(match &s.generation {
        Some(g) => json!({
            "generation": g.id,
            "status": g.status,
            "error": g.error,
            "preview": s.noisy().map(|_| format!("/sessions/{}/preview", s.id)),
            "report": g.report,
        }),
        None => json!({ "generation": null, "status": "none" }),
    }))
}

fn content_type(name: &str) -> &'static str {
    match sanitize_ext(name).as_str() {
        "mp4" | "m4v" => "video/mp4",
        "mkv" => "video/x-matroska",
        "webm" => "video/webm",
        "mov" => "video/quicktime",
        "avi" => "video/x-msvideo",
        "wav" => "audio/wav",
        "mp3" => "audio/mpeg",
        "json" => "application/json",
        "html" => "text/html; charset=utf-8",
        "js" => "text/javascript",
        "css" => "text/css",
        "svg" => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

async fn send_file(path: PathBuf) -> ApiResult<Response> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let bytes = tokio::fs::read(&path).await.map_err(|_| ApiError::not_found("file"))?;
    Ok(([(header::CONTENT_TYPE, content_type(&name))], bytes).into_response())
}

async fn original_media(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let s = st.get(&id)?;
    send_file(st.session_dir(&id).join(&s.original)).await
}

fn not_generated() -> ApiError {
    ApiError::new(StatusCode::CONFLICT, "NotGenerated", "no completed generation for this session")
}

async fn preview_media(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let s = st.get(&id)?;
    let noisy = s.noisy().ok_or_else(not_generated)?;
    send_file(st.session_dir(&id).join(noisy)).await
}

#[derive(Debug, Deserialize)]
struct CompareQuery {
    predictor: Option<String>,
    denoiser: Option<String>,
}

async fn compare(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<CompareQuery>,
) -> ApiResult<Json<ComparisonPayload>> {
    let s = st.get(&id)?;
    let noisy = s.noisy().ok_or_else(not_generated)?.to_string();
    let gen = s.generation.as_ref().map(|g| g.id).unwrap_or(0);
    let predictor = match &q.predictor {
        Some(name) => Some(
            st.0.config
                .predictors
                .iter()
                .find(|p| &p.name == name)
                .cloned()
                .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownPredictor", format!("no predictor named `{name}`")))?,
        ),
        None => None,
    };
    let key = (
        id.clone(),
        gen,
        q.predictor.clone().unwrap_or_default(),
        q.denoiser.clone().unwrap_or_default(),
    );
    if let Some(hit) = st.0.compare_cache.lock().expect("cache lock").get(&key) {
        return Ok(Json(hit.clone()));
    }

    let t = st.transcoder()?;
    let dir = st.session_dir(&id);
    let denoiser = q.denoiser.clone();
    let payload = tokio::task::spawn_blocking(move || -> ApiResult<ComparisonPayload> {
        let (orig_path, noisy_path) = (dir.join(&s.original), dir.join(&noisy));
        let (_, ov, oa) = media_io::decode_clip(&t, &orig_path).map_err(media_error)?;
        let (_, nv, na) = media_io::decode_clip(&t, &noisy_path).map_err(media_error)?;
        let noisy_transcript_path = media_io::sidecar(&noisy_path, "transcript.json");
        let noisy_transcript = std::fs::read_to_string(&noisy_transcript_path)
            .ok()
            .and_then(|text| Transcript::from_json(&text).ok());
        let prediction = match predictor {
            Some(spec) => Some(predict_pair(&spec, &dir, gen, &orig_path, &noisy_path, denoiser)?),
            None => None,
        };
        Ok(ComparisonPayload {
            session: s.id.clone(),
            generation: gen,
            duration_s: s.meta.duration_s,
            original: proxy_features(ov.as_ref(), oa.as_ref(), Some(&s.transcript)),
            noisy: proxy_features(nv.as_ref(), na.as_ref(), noisy_transcript.as_ref().or(Some(&s.transcript))),
            prediction,
        })
    })
    .await
    .map_err(ApiError::internal)??;
    st.0.compare_cache.lock().expect("cache lock").insert(key, payload.clone());
    Ok(Json(payload))
}

fn predict_pair(
    spec: &PredictorSpec,
    dir: &Path,
    gen: u64,
    original: &Path,
    noisy: &Path,
    denoiser: Option<String>,
) -> ApiResult<PredictionPair> {
    let failure = |e: crate::evaluation::EvalError| ApiError::new(StatusCode::BAD_GATEWAY, "PredictorFailure", e.to_string());
    let work = dir.join(format!("compare_{gen}_{}", spec.name.replace(|c: char| !c.is_ascii_alphanumeric(), "_")));
    std::fs::create_dir_all(&work).map_err(ApiError::internal)?;
    let instance = |id: &str, media: &Path| NoisedInstance {
        id: id.to_string(),
        media: Some(media.to_path_buf()),
        features: Vec::new(),
        transcript: None,
    };
    let request = PredictionRequest {
        kind: "compare".into(),
        indicator: String::new(),
        sigma: 0.0,
        repeat: 0,
        denoiser: denoiser.clone(),
        instances: vec![instance("original", original), instance("noisy", noisy)],
        manifest_path: work.join("manifest.json"),
        output_path: work.join("predictions.csv"),
    };
    std::fs::write(&request.manifest_path, serde_json::to_string_pretty(&request).expect("request serializes"))
        .map_err(ApiError::internal)?;
    let predictor = spec.build().map_err(failure)?;
    let preds = predictor.predict(&request).map_err(failure)?;
    let find = |id: &str| preds.iter().find(|(k, _)| k == id).map(|(_, v)| *v);
    Ok(PredictionPair {
        predictor: spec.name.clone(),
        denoiser,
        original: find("original"),
        noisy: find("noisy"),
    })
}

async fn list_predictors(State(st): State<AppState>) -> Json<Vec<Value>> {
    Json(
        st.0.config
            .predictors
            .iter()
            .map(|p| json!({ "name": p.name, "label_type": p.label_type }))
            .collect(),
    )
}

/// The noise registry grouped by modality, with identity intensities.
async fn list_kinds() -> Json<Value> {
    let mut by_modality: HashMap<Modality, Vec<Value>> = HashMap::new();
    for k in NoiseKind::ALL {
        by_modality
            .entry(k.modality())
            .or_default()
            .push(json!({ "kind": k.name(), "identity_intensity": k.identity_intensity() }));
    }
    Json(json!(by_modality))
}

async fn openapi() -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/json")], OPENAPI)
}

async fn static_index(State(st): State<AppState>) -> ApiResult<Response> {
    static_path(&st, "index.html").await
}

async fn static_file(State(st): State<AppState>, UrlPath(path): UrlPath<String>) -> ApiResult<Response> {
    static_path(&st, if path.is_empty() { "index.html" } else { &path }).await
}

async fn static_path(st: &AppState, rel: &str) -> ApiResult<Response> {
    let root = st.0.config.static_dir.clone().ok_or_else(|| ApiError::not_found("ui"))?;
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, std::path::Component::Normal(_))) {
        return Err(ApiError::not_found("file"));
    }
    send_file(root.join(rel)).await
}
