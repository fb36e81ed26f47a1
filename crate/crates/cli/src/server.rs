//! HTTP render service: build a layered representation once per uploaded
//! image, then render it at any blur and focus.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Multipart, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

use refocus_core::io::{decode_png, encode_png, BitDepth};
use refocus_core::pipeline::snap_to_plane;
use refocus_core::{
    build_representation, focus_disparity, DisparityMap, OcclusionConfig, PipelineConfig, Representation,
};

pub const DEFAULT_MAX_SESSIONS: usize = 8;
pub const DEFAULT_BODY_LIMIT: usize = 32 << 20;

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ServeArgs {
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Sessions kept in memory before the least recently used is dropped.
    #[arg(long)]
    pub max_sessions: Option<usize>,
    /// Request body limit in bytes.
    #[arg(long)]
    pub body_limit: Option<usize>,
    /// Render workers (default: available parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Static UI bundle served at `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub max_sessions: usize,
    pub body_limit: usize,
    pub workers: usize,
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            max_sessions: DEFAULT_MAX_SESSIONS,
            body_limit: DEFAULT_BODY_LIMIT,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            ui_dir: None,
        }
    }
}

impl ServeArgs {
    pub fn server_config(&self) -> ServerConfig {
        let d = ServerConfig::default();
        ServerConfig {
            max_sessions: self.max_sessions.unwrap_or(d.max_sessions).max(1),
            body_limit: self.body_limit.unwrap_or(d.body_limit),
            workers: self.workers.unwrap_or(d.workers).max(1),
            ui_dir: self.ui_dir.clone(),
        }
    }
}

struct Session {
    rep: Arc<Representation>,
    last_used: AtomicU64,
    #[allow(dead_code)]
    created_at: SystemTime,
}

pub struct AppState {
    sessions: RwLock<HashMap<u64, Arc<Session>>>,
    next_id: AtomicU64,
    clock: AtomicU64,
    nonce: u64,
    workers: Semaphore,
    max_sessions: usize,
}

impl AppState {
    pub fn new(cfg: &ServerConfig) -> Self {
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos() as u64);
        Self {
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            clock: AtomicU64::new(0),
            nonce: (nanos ^ (std::process::id() as u64).rotate_left(32)) & 0xFFFF_FFFF,
            workers: Semaphore::new(cfg.workers),
            max_sessions: cfg.max_sessions,
        }
    }

    fn token(&self, n: u64) -> String {
        format!("{:08x}-{n}", self.nonce)
    }

    fn parse(&self, id: &str) -> Option<u64> {
        let (nonce, n) = id.split_once('-')?;
        if u64::from_str_radix(nonce, 16).ok()? != self.nonce {
            return None;
        }
        n.parse().ok()
    }

    fn insert(&self, rep: Representation) -> String {
        let n = self.next_id.fetch_add(1, Ordering::Relaxed);
        let s = Arc::new(Session {
            rep: Arc::new(rep),
            last_used: AtomicU64::new(self.clock.fetch_add(1, Ordering::Relaxed)),
            created_at: SystemTime::now(),
        });
        let mut map = self.sessions.write().expect("session lock");
        while map.len() >= self.max_sessions {
            let oldest = map
                .iter()
                .min_by_key(|(_, s)| s.last_used.load(Ordering::Relaxed))
                .map(|(k, _)| *k)
                .expect("nonempty");
            map.remove(&oldest);
            log::info!("evicted session {}", self.token(oldest));
        }
        map.insert(n, s);
        self.token(n)
    }

    fn get(&self, id: &str) -> Result<Arc<Representation>, ApiError> {
        let Some(n) = self.parse(id) else {
            return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`")));
        };
        let map = self.sessions.read().expect("session lock");
        match map.get(&n) {
            Some(s) => {
                s.last_used
                    .store(self.clock.fetch_add(1, Ordering::Relaxed), Ordering::Relaxed);
                Ok(s.rep.clone())
            }
            None if n < self.next_id.load(Ordering::Relaxed) => {
                Err(ApiError::new(StatusCode::GONE, format!("session `{id}` was evicted")))
            }
            None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`"))),
        }
    }

    async fn run<T: Send + 'static>(&self, f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
        let _permit = self
            .workers
            .acquire()
            .await
            .map_err(|_| ApiError::internal("worker pool closed"))?;
        tokio::task::spawn_blocking(f)
            .await
            .map_err(|e| ApiError::internal(e.to_string()))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<refocus_core::Error> for ApiError {
    fn from(e: refocus_core::Error) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(e.status(), e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::new(e.status(), e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code = self.status.as_u16();
        (self.status, Json(json!({ "error": self.message, "status": code }))).into_response()
    }
}

#[derive(Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
    pub width: usize,
    pub height: usize,
}

fn field_f64(name: &str, text: &str) -> Result<f64, ApiError> {
    text.trim()
        .parse()
        .map_err(|e| ApiError::bad(format!("field `{name}`: {e}")))
}

async fn create_session(State(st): State<Arc<AppState>>, mut mp: Multipart) -> Result<Json<SessionCreated>, ApiError> {
    let mut image: Option<Bytes> = None;
    let mut disparity: Option<Bytes> = None;
    let mut cfg = PipelineConfig::default();
    let mut blur: Option<f64> = None;
    while let Some(f) = mp.next_field().await.map_err(|e| ApiError::bad(e.body_text()))? {
        let name = f.name().unwrap_or_default().to_string();
        let bytes = f.bytes().await.map_err(|e| ApiError::bad(e.body_text()))?;
        let text = || String::from_utf8_lossy(&bytes).into_owned();
        match name.as_str() {
            "image" => image = Some(bytes.clone()),
            "disparity" => disparity = Some(bytes.clone()),
            "gamma" => cfg.gamma = field_f64("gamma", &text())?,
            "planes" => {
                cfg.plane_count = text()
                    .trim()
                    .parse()
                    .map_err(|e| ApiError::bad(format!("field `planes`: {e}")))?
            }
            "blur" => blur = Some(field_f64("blur", &text())?),
            "occlusion" => {
                cfg.occlusion = serde_json::from_slice::<OcclusionConfig>(&bytes)
                    .map_err(|e| ApiError::bad(format!("field `occlusion`: {e}")))?
            }
            "config" => {
                cfg = serde_json::from_slice::<PipelineConfig>(&bytes)
                    .map_err(|e| ApiError::bad(format!("field `config`: {e}")))?
            }
            other => return Err(ApiError::bad(format!("unexpected field `{other}`"))),
        }
    }
    let image = image.ok_or_else(|| ApiError::bad("missing field `image`"))?;
    let disparity = disparity.ok_or_else(|| ApiError::bad("missing field `disparity`"))?;
    let rep = st
        .run(move || -> Result<Representation, ApiError> {
            let img = decode_png(&image).map_err(|e| ApiError::bad(format!("image: {e}")))?;
            let d = decode_png(&disparity)
                .and_then(|i| DisparityMap::from_image(&i))
                .map_err(|e| ApiError::bad(format!("disparity: {e}")))?;
            let t = Instant::now();
            let rep = build_representation(&img, &d, &cfg, blur, None)?;
            log::info!(
                "built {}x{} session in {:.3}s",
                img.width(),
                img.height(),
                t.elapsed().as_secs_f64()
            );
            Ok(rep)
        })
        .await??;
    let (width, height) = rep.disparity.dims();
    let id = st.insert(rep);
    Ok(Json(SessionCreated { id, width, height }))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocusPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    pub id: String,
    #[serde(rename = "A")]
    pub blur_amount: f64,
    #[serde(default)]
    pub d_f: Option<f64>,
    #[serde(default)]
    pub focus: Option<FocusPoint>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Snap the focus disparity to the nearest plane center.
    #[serde(default)]
    pub snap: bool,
}

pub const FOCUS_HEADER: &str = "x-refocus-disparity";

async fn render(
    State(st): State<Arc<AppState>>,
    body: Result<Json<RenderRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let rep = st.get(&req.id)?;
    let n = rep.config.plane_count;
    let d_f = match (req.d_f, req.focus) {
        (Some(f), None) if req.snap => snap_to_plane(f, n),
        (Some(f), None) => f,
        (None, Some(p)) => focus_disparity(&rep.disparity, p.x, p.y, req.snap.then_some(n))?,
        (None, None) => return Err(ApiError::bad("one of `d_f` or `focus` is required")),
        (Some(_), Some(_)) => return Err(ApiError::bad("`d_f` and `focus` are exclusive")),
    };
    let (a, gamma) = (req.blur_amount, req.gamma);
    let png = st
        .run(move || -> Result<Vec<u8>, ApiError> {
            let (img, _) = rep.render(a, d_f, gamma)?;
            Ok(encode_png(&img, BitDepth::Eight))
        })
        .await??;
    let mut resp = ([(header::CONTENT_TYPE, "image/png")], png).into_response();
    resp.headers_mut().insert(
        FOCUS_HEADER,
        HeaderValue::from_str(&format!("{d_f}")).expect("ascii number"),
    );
    Ok(resp)
}

#[derive(Deserialize)]
pub struct DisparityQuery {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

async fn disparity(
    State(st): State<Arc<AppState>>,
    q: Result<Query<DisparityQuery>, QueryRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let Query(q) = q?;
    let rep = st.get(&q.id)?;
    let d = focus_disparity(&rep.disparity, q.x, q.y, None)?;
    Ok(Json(json!({ "d": d })))
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "ok": true }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such route")
}

pub fn router(cfg: &ServerConfig) -> Router {
    router_with_state(cfg, Arc::new(AppState::new(cfg)))
}

pub fn router_with_state(cfg: &ServerConfig, state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/session", post(create_session))
        .route("/render", post(render))
        .route("/disparity", get(disparity))
        .route("/health", get(health))
        .layer(DefaultBodyLimit::max(cfg.body_limit))
        .with_state(state);
    match &cfg.ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    }
}

pub async fn serve(args: &ServeArgs) -> anyhow::Result<()> {
    let cfg = args.server_config();
    let host = args.host.clone().unwrap_or_else(|| "127.0.0.1".into());
    let addr: SocketAddr = format!("{host}:{}", args.port.unwrap_or(8080)).parse()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(&cfg))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
