//! A model adapter that answers the wire protocol from oracle fixtures.
//!
//! Requests carry only pixels, so images are recognised by their decoded
//! RGB bytes at the working resolution.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use saa_core::backends::wire::{
    self, FeaturesRequest, GenerateRequest, GenerateResponse, RefineRequest,
};
use saa_core::backends::{DetectionThresholds, FeatureExtractor, Generator, Refiner};
use saa_core::backends::{GridMeanFeatures, OracleFixture, OracleGenerator, OracleRefiner};
use saa_core::eval::DatasetManifest;
use saa_core::{Error, ImageRecord};
use serde::de::DeserializeOwned;
use serde_json::json;

pub struct Adapter {
    by_pixels: HashMap<Vec<u8>, (String, String)>,
    generator: OracleGenerator,
    refiner: OracleRefiner,
    features: GridMeanFeatures,
    /// Answer this many requests with 503 before serving normally.
    fail_first: usize,
    seen: AtomicUsize,
}

impl Adapter {
    pub fn new(manifest: &DatasetManifest, fixture: OracleFixture, resolution: usize, fail_first: usize) -> Result<Self, Error> {
        let mut by_pixels = HashMap::new();
        for e in &manifest.entries {
            let img = manifest.load_image(e, resolution)?;
            by_pixels.insert(img.to_rgb8().into_raw(), (e.id.clone(), e.category.clone()));
        }
        let fixture = Arc::new(fixture);
        Ok(Adapter {
            by_pixels,
            generator: OracleGenerator::new(fixture.clone()),
            refiner: OracleRefiner::new(fixture),
            features: GridMeanFeatures::default(),
            fail_first,
            seen: AtomicUsize::new(0),
        })
    }

    fn identify(&self, b64: &str) -> Result<ImageRecord, Reply> {
        let anon = wire::decode_image("", "", b64).map_err(|e| Reply::bad(e.to_string()))?;
        let key = anon.to_rgb8().into_raw();
        match self.by_pixels.get(&key) {
            Some((id, cat)) => ImageRecord::new(id.clone(), cat.clone(), anon.height(), anon.width(), anon.pixels().to_vec())
                .map_err(|e| Reply::bad(e.to_string())),
            None => Err(Reply(StatusCode::UNPROCESSABLE_ENTITY, "image not in the adapter's manifest".into())),
        }
    }

    fn gate(&self) -> Result<(), Reply> {
        if self.seen.fetch_add(1, Ordering::SeqCst) < self.fail_first {
            Err(Reply(StatusCode::SERVICE_UNAVAILABLE, "warming up".into()))
        } else {
            Ok(())
        }
    }
}

struct Reply(StatusCode, String);

impl Reply {
    fn bad(msg: String) -> Self {
        Reply(StatusCode::BAD_REQUEST, msg)
    }
}

impl IntoResponse for Reply {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, Reply> {
    serde_json::from_slice(body).map_err(|e| Reply::bad(e.to_string()))
}

type Shared = State<Arc<Adapter>>;

async fn generate(State(a): Shared, body: Bytes) -> Result<Json<GenerateResponse>, Reply> {
    a.gate()?;
    let req: GenerateRequest = parse(&body)?;
    let image = a.identify(&req.image)?;
    let thresholds = DetectionThresholds {
        box_threshold: req.box_threshold,
        text_threshold: req.text_threshold,
    };
    let boxes = a
        .generator
        .detect(&image, &req.prompts, thresholds)
        .map_err(|e| Reply(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(GenerateResponse {
        detections: boxes.iter().map(wire::detection_to_wire).collect(),
    }))
}

async fn refine(State(a): Shared, body: Bytes) -> Result<Json<wire::RefineResponse>, Reply> {
    a.gate()?;
    let req: RefineRequest = parse(&body)?;
    let image = a.identify(&req.image)?;
    let boxes = req
        .boxes
        .iter()
        .map(|b| wire::box_from_wire(*b, 1.0, "", image.height(), image.width()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Reply::bad(e.to_string()))?;
    let masks = a
        .refiner
        .segment(&image, &boxes)
        .map_err(|e| Reply(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(wire::encode_masks(&masks)))
}

async fn features(State(a): Shared, body: Bytes) -> Result<Json<wire::FeaturesResponse>, Reply> {
    a.gate()?;
    let req: FeaturesRequest = parse(&body)?;
    let image = a.identify(&req.image)?;
    let grid = a
        .features
        .extract(&image)
        .map_err(|e| Reply(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(wire::encode_features(&grid)))
}

pub fn router(adapter: Arc<Adapter>) -> Router {
    Router::new()
        .route("/v1/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/v1/generate", post(generate))
        .route("/v1/refine", post(refine))
        .route("/v1/features", post(features))
        .with_state(adapter)
}
