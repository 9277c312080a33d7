//! HTTP and WebSocket inference service.
//!
//! | route            | method | body                                  |
//! |------------------|--------|---------------------------------------|
//! | `/v1/health`     | GET    |                                       |
//! | `/v1/models`     | GET    |                                       |
//! | `/v1/sr`         | POST   | PNG; query `model`, `roi=x,y,w,h`     |
//! | `/v1/stream`     | GET    | WebSocket upgrade, see [`crate::stream`] |
//! | `/v1/eval`       | POST   | JSON [`EvalRequest`]                  |

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use tilesr_core::data::ImageBuffer;
use tilesr_core::infer::{ensure_rgb, sr_image, Roi, SrModel, Upscaler};
use tilesr_core::QualityReport;

use crate::stream::{self, StreamReply, StreamRequest};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    /// Directory of `.tsrw` generator files; ids are file stems.
    pub models: PathBuf,
    pub max_body_bytes: usize,
    /// Inputs (or ROI crops) larger than this on either side are tiled.
    pub max_patch: usize,
    pub tile: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            models: PathBuf::from("models"),
            max_body_bytes: 16 << 20,
            max_patch: 256,
            tile: 64,
        }
    }
}

/// Loaded generators keyed by id.
#[derive(Debug, Default)]
pub struct Registry {
    models: BTreeMap<String, Arc<SrModel>>,
}

impl Registry {
    pub fn from_models(models: impl IntoIterator<Item = SrModel>) -> anyhow::Result<Self> {
        let mut map = BTreeMap::new();
        for m in models {
            let id = m.id().to_string();
            anyhow::ensure!(!map.contains_key(&id), "duplicate model id `{id}`");
            map.insert(id, Arc::new(m));
        }
        anyhow::ensure!(!map.is_empty(), "no models loaded");
        Ok(Registry { models: map })
    }

    /// Every `*.tsrw` file in `dir`.
    pub fn load_dir(dir: &Path) -> anyhow::Result<Self> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| anyhow::anyhow!("listing {}: {e}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "tsrw"))
            .collect();
        paths.sort();
        let models = paths
            .iter()
            .map(|p| SrModel::load(p).map_err(|e| anyhow::anyhow!("{}: {e}", p.display())))
            .collect::<anyhow::Result<Vec<_>>>()?;
        Self::from_models(models)
    }

    /// `id`, or the first model by id when `None`.
    pub fn get(&self, id: Option<&str>) -> Option<Arc<SrModel>> {
        match id {
            Some(id) => self.models.get(id).cloned(),
            None => self.models.values().next().cloned(),
        }
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[derive(Clone)]
pub struct AppState {
    pub registry: Arc<Registry>,
    pub config: Arc<ServeConfig>,
}

/// Structured error body: `{"error": kind, "message": ...}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl ToString) -> Self {
        ApiError {
            status,
            error: error.into(),
            message: message.to_string(),
        }
    }

    fn bad_request(error: &str, message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, error, message)
    }

    fn unknown_model(id: Option<&str>) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "unknown_model",
            format!("no model `{}`", id.unwrap_or("<default>")),
        )
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.config.max_body_bytes;
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/models", get(models))
        .route("/v1/sr", post(super_resolve))
        .route("/v1/stream", get(stream_upgrade))
        .route("/v1/eval", post(eval))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

pub async fn serve(config: ServeConfig, registry: Registry) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    tracing::info!(addr = %listener.local_addr()?, models = registry.len(), "serving");
    let state = AppState {
        registry: Arc::new(registry),
        config: Arc::new(config),
    };
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn health(State(st): State<AppState>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "models": st.registry.len() }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub scale: usize,
    pub upsampler: String,
    pub use_bn: bool,
    pub parameters: usize,
    pub summary: String,
}

async fn models(State(st): State<AppState>) -> Json<Vec<ModelInfo>> {
    Json(
        st.registry
            .models
            .values()
            .map(|m| ModelInfo {
                id: m.id().to_string(),
                scale: m.spec().scale,
                upsampler: m.spec().upsampler.name().to_string(),
                use_bn: m.spec().use_bn,
                parameters: m.model().parameter_count(),
                summary: m.model().spec().summary(),
            })
            .collect(),
    )
}

#[derive(Debug, Default, Deserialize)]
pub struct SrQuery {
    pub model: Option<String>,
    pub roi: Option<String>,
}

/// Result of one upscale: PNG bytes plus timings.
struct Upscaled {
    png: Vec<u8>,
    width: usize,
    height: usize,
    infer_ms: f64,
    model: String,
}

/// Decode, crop, upscale, encode. Runs on the blocking pool.
fn upscale_png(model: &SrModel, png: &[u8], roi: Option<Roi>, cfg: &ServeConfig) -> Result<Upscaled, ApiError> {
    let img = ImageBuffer::decode_png(png).map_err(|e| ApiError::bad_request("bad_image", e))?;
    let img = ensure_rgb(img).map_err(|e| ApiError::bad_request("bad_image", e))?;
    let input = match roi {
        Some(r) => r.crop(&img).map_err(|e| ApiError::bad_request("bad_roi", e))?,
        None => img,
    };
    let start = Instant::now();
    let out = if input.width() <= cfg.max_patch && input.height() <= cfg.max_patch {
        model.upscale(&input)
    } else {
        sr_image(model, &input, cfg.tile)
    }
    .map_err(ApiError::internal)?;
    let infer_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(Upscaled {
        png: out.encode_png().map_err(ApiError::internal)?,
        width: out.width(),
        height: out.height(),
        infer_ms,
        model: model.id().to_string(),
    })
}

fn parse_roi(roi: Option<&str>) -> Result<Option<Roi>, ApiError> {
    roi.map(|r| r.parse::<Roi>().map_err(|e| ApiError::bad_request("bad_roi", e)))
        .transpose()
}

async fn super_resolve(
    State(st): State<AppState>,
    Query(q): Query<SrQuery>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let start = Instant::now();
    let model = st
        .registry
        .get(q.model.as_deref())
        .ok_or_else(|| ApiError::unknown_model(q.model.as_deref()))?;
    let roi = parse_roi(q.roi.as_deref())?;
    let cfg = st.config.clone();
    let up = tokio::task::spawn_blocking(move || upscale_png(&model, &body, roi, &cfg))
        .await
        .map_err(ApiError::internal)??;
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut resp = up.png.into_response();
    let h = resp.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/png"));
    let hv = |s: String| HeaderValue::from_str(&s).expect("ascii header");
    h.insert("x-model-id", hv(up.model));
    h.insert("x-infer-ms", hv(format!("{:.3}", up.infer_ms)));
    h.insert("x-total-ms", hv(format!("{total_ms:.3}")));
    h.insert("x-sr-width", hv(up.width.to_string()));
    h.insert("x-sr-height", hv(up.height.to_string()));
    Ok(resp)
}

async fn stream_upgrade(State(st): State<AppState>, ws: WebSocketUpgrade) -> Response {
    let limit = st.config.max_body_bytes;
    ws.max_message_size(limit)
        .max_frame_size(limit)
        .on_upgrade(move |socket| stream_session(st, socket))
}

async fn stream_session(st: AppState, mut socket: WebSocket) {
    while let Some(Ok(msg)) = socket.recv().await {
        let data = match msg {
            Message::Binary(b) => b,
            Message::Close(_) => break,
            Message::Text(_) => {
                let reply = StreamReply::error(0, "bad_frame", "expected a binary frame");
                if socket.send(Message::Binary(reply.encode().into())).await.is_err() {
                    break;
                }
                continue;
            }
            _ => continue,
        };
        let reply = handle_frame(&st, &data).await;
        if socket.send(Message::Binary(reply.encode().into())).await.is_err() {
            break;
        }
    }
}

async fn handle_frame(st: &AppState, data: &[u8]) -> StreamReply {
    let (req, png) = match stream::decode_request(data) {
        Ok(v) => v,
        Err(e) => return StreamReply::error(0, "bad_frame", e),
    };
    let StreamRequest { seq, model, roi } = req;
    let Some(m) = st.registry.get(model.as_deref()) else {
        let e = ApiError::unknown_model(model.as_deref());
        return StreamReply::error(seq, &e.error, e.message);
    };
    let cfg = st.config.clone();
    let png = png.to_vec();
    match tokio::task::spawn_blocking(move || upscale_png(&m, &png, roi, &cfg)).await {
        Ok(Ok(up)) => StreamReply::ok(seq, up.model, up.infer_ms, up.width, up.height, up.png),
        Ok(Err(e)) => StreamReply::error(seq, &e.error, e.message),
        Err(e) => StreamReply::error(seq, "internal", e),
    }
}

/// Body of `POST /v1/eval`: base64 PNGs of an SR output and its reference.
#[derive(Debug, Serialize, Deserialize)]
pub struct EvalRequest {
    pub sr: String,
    pub hr: String,
    /// Checkerboard period; the model scale (4) when absent.
    pub period: Option<usize>,
    pub label: Option<String>,
}

async fn eval(Json(req): Json<EvalRequest>) -> Result<Json<QualityReport>, ApiError> {
    let decode = |field: &str, s: &str| -> Result<ImageBuffer, ApiError> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(s)
            .map_err(|e| ApiError::bad_request("bad_image", format!("{field}: {e}")))?;
        let img =
            ImageBuffer::decode_png(&bytes).map_err(|e| ApiError::bad_request("bad_image", format!("{field}: {e}")))?;
        ensure_rgb(img).map_err(|e| ApiError::bad_request("bad_image", format!("{field}: {e}")))
    };
    let sr = decode("sr", &req.sr)?;
    let hr = decode("hr", &req.hr)?;
    let period = req.period.unwrap_or(4);
    let report = tokio::task::spawn_blocking(move || QualityReport::evaluate(&sr, &hr, period))
        .await
        .map_err(ApiError::internal)?
        .map_err(|e| ApiError::bad_request("bad_pair", e))?;
    Ok(Json(match req.label {
        Some(l) => report.with_label(l),
        None => report,
    }))
}
