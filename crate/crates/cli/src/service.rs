//! JSON HTTP service for the workbench.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use saa_core::eval::{predict_entry, DatasetManifest};
use saa_core::image::mask_to_png;
use saa_core::profile::is_safe_id;
use saa_core::{Backends, Error, Mode, ProfileDocument, PromptProfile};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::{Mutex, Semaphore};

pub const DEFAULT_RUN_SLOTS: usize = 2;

pub struct AppState {
    pub manifest: DatasetManifest,
    pub profiles: PathBuf,
    pub backends: Backends,
    pub slots: Arc<Semaphore>,
    pub run_slots: usize,
    profile_writes: Mutex<()>,
}

impl AppState {
    pub fn new(manifest: DatasetManifest, profiles: PathBuf, backends: Backends, run_slots: usize) -> Self {
        let run_slots = run_slots.max(1);
        AppState {
            manifest,
            profiles,
            backends,
            slots: Arc::new(Semaphore::new(run_slots)),
            run_slots,
            profile_writes: Mutex::new(()),
        }
    }
}

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = if e.is_backend() {
            StatusCode::BAD_GATEWAY
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.message, "status": self.status.as_u16() });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;
type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/images", get(list_images))
        .route("/api/images/{id}/png", get(image_png))
        .route("/api/profiles", get(list_profiles))
        .route("/api/profiles/{id}", get(get_profile).put(put_profile))
        .route("/api/run", post(run))
        .fallback(|| async { ApiError::not_found("no such route") })
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn health(State(s): Shared) -> ApiResult {
    Ok(Json(json!({
        "status": "ok",
        "dataset": s.manifest.dataset,
        "images": s.manifest.entries.len(),
        "run_slots": s.run_slots,
        "backends": {
            "generator": s.backends.generator.descriptor().name,
            "refiner": s.backends.refiner.descriptor().name,
            "features": s.backends.features.descriptor().name,
        },
    })))
}

async fn list_images(State(s): Shared) -> ApiResult {
    let images: Vec<Value> = s
        .manifest
        .entries
        .iter()
        .map(|e| json!({ "id": e.id, "category": e.category, "normal": e.is_normal() }))
        .collect();
    Ok(Json(json!({
        "dataset": s.manifest.dataset,
        "categories": s.manifest.categories(),
        "images": images,
    })))
}

#[derive(Deserialize)]
struct ImageQuery {
    resolution: Option<usize>,
}

async fn image_png(State(s): Shared, UrlPath(id): UrlPath<String>, Query(q): Query<ImageQuery>) -> ApiResult {
    let entry = s
        .manifest
        .entry(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown image `{id}`")))?;
    let resolution = q.resolution.unwrap_or(PromptProfile::new("object").working_resolution);
    if !(1..=4096).contains(&resolution) {
        return Err(ApiError::bad_request("resolution must be in 1..=4096"));
    }
    let state = s.clone();
    let (png, gt) = tokio::task::spawn_blocking(move || -> Result<_, Error> {
        let sample = state.manifest.load_sample(&entry, resolution)?;
        let png = sample.image.to_png_bytes()?;
        let gt = if entry.is_normal() {
            None
        } else {
            Some(mask_to_png(&sample.ground_truth)?)
        };
        Ok((png, gt))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(json!({
        "id": id,
        "width": resolution,
        "height": resolution,
        "png": STANDARD.encode(png),
        "ground_truth_png": gt.map(|g| STANDARD.encode(g)),
    })))
}

fn profile_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

fn read_profile(dir: &Path, id: &str) -> Result<ProfileDocument, ApiError> {
    if !is_safe_id(id) {
        return Err(ApiError::not_found(format!("unknown profile `{id}`")));
    }
    let path = profile_path(dir, id);
    let text = std::fs::read_to_string(&path).map_err(|_| ApiError::not_found(format!("unknown profile `{id}`")))?;
    ProfileDocument::parse(&text)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("stored profile `{id}`: {e}")))
}

async fn list_profiles(State(s): Shared) -> ApiResult {
    let mut ids: Vec<String> = std::fs::read_dir(&s.profiles)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let p = e.path();
            (p.extension()? == "json").then(|| p.file_stem()?.to_str().map(String::from))?
        })
        .filter(|id| is_safe_id(id))
        .collect();
    ids.sort();
    let profiles: Vec<Value> = ids
        .iter()
        .filter_map(|id| match read_profile(&s.profiles, id) {
            Ok(d) => Some(json!({ "id": d.id, "display_name": d.display_name, "version": d.version })),
            Err(e) => {
                log::warn!("skipping profile {id}: {}", e.message);
                None
            }
        })
        .collect();
    Ok(Json(json!({ "profiles": profiles })))
}

async fn get_profile(State(s): Shared, UrlPath(id): UrlPath<String>) -> ApiResult {
    let doc = read_profile(&s.profiles, &id)?;
    Ok(Json(serde_json::to_value(&doc).expect("profile serializes")))
}

/// A new profile starts at version 1; each update must bump the stored
/// version by exactly one.
async fn put_profile(State(s): Shared, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    let doc = ProfileDocument::parse(text).map_err(|e| ApiError::bad_request(e.to_string()))?;
    if doc.id != id {
        return Err(ApiError::bad_request(format!("document id `{}` does not match `{id}`", doc.id)));
    }
    let _guard = s.profile_writes.lock().await;
    let path = profile_path(&s.profiles, &id);
    let expected = if path.exists() {
        read_profile(&s.profiles, &id)?.version + 1
    } else {
        1
    };
    if doc.version != expected {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("profile `{id}` version {} conflicts; expected {expected}", doc.version),
        ));
    }
    let tmp = s.profiles.join(format!(".{id}.json.tmp"));
    std::fs::write(&tmp, doc.to_json_pretty() + "\n")
        .and_then(|_| std::fs::rename(&tmp, &path))
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(serde_json::to_value(&doc).expect("profile serializes")))
}

struct RunRequest {
    image_id: String,
    profile: ProfileDocument,
    mode: Mode,
    scale_max: Option<f64>,
}

fn parse_run(s: &AppState, body: &[u8]) -> Result<RunRequest, ApiError> {
    let v: Value = serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON: {e}")))?;
    let obj = v.as_object().ok_or_else(|| ApiError::bad_request("body must be an object"))?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "image_id" | "profile" | "mode" | "scale_max") {
            return Err(ApiError::bad_request(format!("unknown field `{key}`")));
        }
    }
    let image_id = obj
        .get("image_id")
        .and_then(Value::as_str)
        .ok_or_else(|| ApiError::bad_request("`image_id` must be a string"))?
        .to_string();
    let profile = match obj.get("profile") {
        Some(Value::String(id)) => read_profile(&s.profiles, id)?,
        Some(inline @ Value::Object(_)) => {
            ProfileDocument::parse(&inline.to_string()).map_err(|e| ApiError::bad_request(format!("profile: {e}")))?
        }
        _ => return Err(ApiError::bad_request("`profile` must be a profile id or a profile document")),
    };
    let mode = match obj.get("mode") {
        None | Some(Value::Null) => profile.profile.mode,
        Some(Value::String(m)) => Mode::from_str(m).map_err(|e| ApiError::bad_request(format!("mode: {e}")))?,
        Some(_) => return Err(ApiError::bad_request("`mode` must be a string")),
    };
    let scale_max = match obj.get("scale_max") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_f64() {
            Some(x) if x > 0.0 && x.is_finite() => Some(x),
            _ => return Err(ApiError::bad_request("`scale_max` must be a positive number")),
        },
    };
    Ok(RunRequest {
        image_id,
        profile,
        mode,
        scale_max,
    })
}

async fn run(State(s): Shared, body: Bytes) -> ApiResult {
    let req = parse_run(&s, &body)?;
    let entry = s
        .manifest
        .entry(&req.image_id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown image `{}`", req.image_id)))?;
    let permit = s
        .slots
        .clone()
        .acquire_owned()
        .await
        .map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string()))?;
    let state = s.clone();
    let doc = req.profile.clone();
    let mode = req.mode;
    let out = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        predict_entry(&state.manifest, &entry, &doc, mode, &state.backends)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let scale = req.scale_max.unwrap_or_else(|| crate::commands::png_scale([out.map.max()]));
    let png = out.map.to_png16(scale)?;
    let timings: serde_json::Map<String, Value> = out
        .trace
        .timings
        .iter()
        .map(|t| (t.stage.as_str().to_string(), json!(t.ms)))
        .collect();
    Ok(Json(json!({
        "image_id": req.image_id,
        "mode": mode,
        "profile_hash": req.profile.hash_hex(),
        "trace": serde_json::to_value(&out.trace).expect("trace serializes"),
        "anomaly_map_png": STANDARD.encode(png),
        "anomaly_map_raw": STANDARD.encode(out.map.to_bytes()),
        "scale_max": scale,
        "stage_counts": out.trace.stage_counts(),
        "timings_ms": timings,
    })))
}
