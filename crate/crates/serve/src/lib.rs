//! HTTP front end for interactive DPC: a loaded beamformed stack is held in
//! memory and every request recomputes shear + compounding (+ optional
//! filtering, reference subtraction, enhancement) for the requested
//! parameters.
//!
//! Endpoints:
//!
//! * `GET  /api/meta` scene, grid and slider bounds (JSON)
//! * `POST /api/dpc` `{z_s_m, m, filter_sigma_m, ref_correct, enhance_p}` -> f32le image `[nx][nz]`
//! * `GET  /api/bmode` -> f32le dB image `[nx][nz]`
//! * `GET  /api/focusmap?n=K&m=M` -> f32le rows `[K][nx]`
//! * `POST /api/load` `{path, ref_path}` replaces the session
//!
//! Binary responses carry an `x-dims` header (`"a,b"`); invalid pixels are NaN.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use dpc_core::beamform::{compound_bmode, BeamformedStack};
use dpc_core::dpc::{default_filter_sigma, focus_map, DpcRecipe};
use dpc_core::io;
use dpc_core::{Error, ImageGrid};

/// Largest focus-map row count served in one request.
pub const MAX_FOCUS_ROWS: usize = 512;

/// An immutable loaded dataset. Replaced wholesale, never mutated.
#[derive(Debug)]
pub struct Session {
    pub stack: BeamformedStack,
    pub reference: Option<BeamformedStack>,
    pub source: PathBuf,
    bmode: Vec<u8>,
    meta: Value,
}

impl Session {
    pub fn new(stack: BeamformedStack, reference: Option<BeamformedStack>, source: PathBuf) -> dpc_core::Result<Self> {
        stack.validate()?;
        if let Some(r) = &reference {
            r.validate()?;
            if r.grid != stack.grid || r.n_angles() != stack.n_angles() {
                return Err(Error::Mismatch("reference stack geometry differs from the stack".into()));
            }
        }
        let bmode = io::encode_f32(&io::image_payload(&compound_bmode(&stack)?));
        let g = stack.grid;
        let meta = json!({
            "dims": [g.nx, g.nz],
            "grid": g,
            "x_range": [g.x0, g.x_last()],
            "z_range": [g.z0, g.z_last()],
            "angles": stack.scene.sequence.angles,
            "m_max": stack.n_angles() - 1,
            "wavelength": stack.scene.wavelength(),
            "default_filter_sigma": default_filter_sigma(&stack.scene),
            "has_reference": reference.is_some(),
            "scene": stack.scene,
            "source": source.display().to_string(),
        });
        Ok(Self { stack, reference, source, bmode, meta })
    }

    pub fn load(path: &Path, ref_path: Option<&Path>) -> dpc_core::Result<Self> {
        let stack = io::read_stack(path)?;
        let reference = ref_path.map(io::read_stack).transpose()?;
        Self::new(stack, reference, path.to_path_buf())
    }

    pub fn meta(&self) -> &Value {
        &self.meta
    }

    /// Payload for a DPC request; the same bytes the CLI writes for the same
    /// parameters.
    pub fn dpc_bytes(&self, req: &DpcRequest) -> dpc_core::Result<Vec<u8>> {
        let reference = if req.ref_correct {
            Some(self.reference.as_ref().ok_or_else(|| {
                Error::Validation("ref_correct requested but no reference stack is loaded".into())
            })?)
        } else {
            None
        };
        let recipe = req.recipe(&self.stack);
        let img = recipe.run(&self.stack, reference)?;
        Ok(io::encode_f32(&io::image_payload(&img)))
    }

    pub fn focus_depths(&self, n: usize) -> Vec<f64> {
        focus_depths(&self.stack.grid, n)
    }
}

/// `n` uniformly spaced shear depths over the grid's depth range.
pub fn focus_depths(g: &ImageGrid, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![g.z0];
    }
    let step = (g.z_last() - g.z0) / (n - 1) as f64;
    (0..n).map(|i| g.z0 + i as f64 * step).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpcRequest {
    pub z_s_m: f64,
    #[serde(default = "one")]
    pub m: usize,
    /// Defaults to two wavelengths.
    #[serde(default)]
    pub filter_sigma_m: Option<f64>,
    #[serde(default)]
    pub ref_correct: bool,
    #[serde(default)]
    pub enhance_p: u32,
}

fn one() -> usize {
    1
}

impl DpcRequest {
    pub fn recipe(&self, stack: &BeamformedStack) -> DpcRecipe {
        DpcRecipe {
            z_s: self.z_s_m,
            m: self.m,
            filter_sigma: self.filter_sigma_m.unwrap_or_else(|| default_filter_sigma(&stack.scene)),
            enhance_p: self.enhance_p,
        }
    }
}

#[derive(Debug, Default)]
pub struct AppState {
    session: RwLock<Option<Arc<Session>>>,
    static_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(session: Option<Session>, static_dir: Option<PathBuf>) -> Self {
        Self { session: RwLock::new(session.map(Arc::new)), static_dir }
    }

    pub fn current(&self) -> Option<Arc<Session>> {
        self.session.read().expect("session lock").clone()
    }

    /// Swap in a new session; in-flight requests keep the one they started with.
    pub fn replace(&self, session: Session) {
        *self.session.write().expect("session lock") = Some(Arc::new(session));
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn no_stack() -> Self {
        Self::new(StatusCode::CONFLICT, "no stack loaded")
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            e if e.is_validation() => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Format(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn session(state: &AppState) -> ApiResult<Arc<Session>> {
    state.current().ok_or_else(ApiError::no_stack)
}

fn binary(bytes: Vec<u8>, dims: [usize; 2], extra: &[(&'static str, String)]) -> Response {
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/octet-stream"));
    headers.insert("x-dims", HeaderValue::from_str(&format!("{},{}", dims[0], dims[1])).expect("ascii"));
    for (k, v) in extra {
        headers.insert(*k, HeaderValue::from_str(v).expect("ascii header"));
    }
    (headers, bytes).into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn get_meta(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    Ok(Json(session(&state)?.meta().clone()))
}

async fn post_dpc(State(state): State<Arc<AppState>>, Json(req): Json<DpcRequest>) -> ApiResult<Response> {
    let s = session(&state)?;
    let dims = [s.stack.grid.nx, s.stack.grid.nz];
    let bytes = blocking(move || Ok(s.dpc_bytes(&req)?)).await?;
    Ok(binary(bytes, dims, &[]))
}

async fn get_bmode(State(state): State<Arc<AppState>>) -> ApiResult<Response> {
    let s = session(&state)?;
    Ok(binary(s.bmode.clone(), [s.stack.grid.nx, s.stack.grid.nz], &[]))
}

#[derive(Debug, Deserialize)]
struct FocusQuery {
    n: usize,
    #[serde(default = "one")]
    m: usize,
}

async fn get_focusmap(State(state): State<Arc<AppState>>, Query(q): Query<FocusQuery>) -> ApiResult<Response> {
    let s = session(&state)?;
    if q.n == 0 || q.n > MAX_FOCUS_ROWS {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("n must be in 1..={MAX_FOCUS_ROWS}")));
    }
    let zs = s.focus_depths(q.n);
    let nx = s.stack.grid.nx;
    let zs_header = serde_json::to_string(&zs).expect("numbers");
    let bytes = blocking(move || {
        let map = focus_map(&s.stack, q.m, &zs)?;
        Ok(io::encode_f32(&io::focusmap_payload(&map)))
    })
    .await?;
    Ok(binary(bytes, [q.n, nx], &[("x-zs", zs_header)]))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadRequest {
    path: PathBuf,
    #[serde(default)]
    ref_path: Option<PathBuf>,
}

async fn post_load(State(state): State<Arc<AppState>>, Json(req): Json<LoadRequest>) -> ApiResult<Json<Value>> {
    let session = blocking(move || Ok(Session::load(&req.path, req.ref_path.as_deref())?)).await?;
    let meta = session.meta().clone();
    state.replace(session);
    Ok(Json(meta))
}

pub fn router(state: Arc<AppState>) -> Router {
    let dir = state.static_dir.clone();
    let api = Router::new()
        .route("/api/meta", get(get_meta))
        .route("/api/dpc", post(post_dpc))
        .route("/api/bmode", get(get_bmode))
        .route("/api/focusmap", get(get_focusmap))
        .route("/api/load", post(post_load))
        .with_state(state);
    let app = match dir {
        Some(d) => api.fallback_service(ServeDir::new(d)),
        None => api,
    };
    app.layer(CorsLayer::permissive())
}

/// Serve until the process is stopped.
pub async fn run(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
