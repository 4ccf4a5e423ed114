//! HTTP client for out-of-process model adapters.
//!
//! Each endpoint admits one in-flight request at a time unless the config
//! declares the adapter parallel-safe.

use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::wire::{self, FeaturesRequest, FeaturesResponse, GenerateRequest, GenerateResponse};
use super::{BackendDescriptor, DetectionThresholds, FeatureExtractor, Generator, Refiner};
use crate::error::BackendError;
use crate::geometry::{BoxCandidate, Mask};
use crate::image::ImageRecord;
use crate::saliency::FeatureGrid;

pub const ENV_GENERATE_URL: &str = "SAA_BACKEND_GENERATE_URL";
pub const ENV_REFINE_URL: &str = "SAA_BACKEND_REFINE_URL";
pub const ENV_FEATURES_URL: &str = "SAA_BACKEND_FEATURES_URL";

fn default_retries() -> u32 {
    2
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_backoff_ms() -> u64 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub generate_url: String,
    pub refine_url: String,
    pub features_url: String,
    /// Extra attempts after the first failure.
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default)]
    pub parallel: bool,
}

impl RemoteConfig {
    pub fn new(generate_url: &str, refine_url: &str, features_url: &str) -> Self {
        RemoteConfig {
            generate_url: generate_url.into(),
            refine_url: refine_url.into(),
            features_url: features_url.into(),
            retries: default_retries(),
            timeout_ms: default_timeout_ms(),
            retry_backoff_ms: default_backoff_ms(),
            parallel: false,
        }
    }

    /// Same base URL for all three routes.
    pub fn with_base(base: &str) -> Self {
        let base = base.trim_end_matches('/');
        RemoteConfig::new(
            &format!("{base}/v1/generate"),
            &format!("{base}/v1/refine"),
            &format!("{base}/v1/features"),
        )
    }
}

struct Endpoint {
    url: String,
    gate: Mutex<()>,
}

pub struct RemoteBackends {
    config: RemoteConfig,
    agent: ureq::Agent,
    generate: Endpoint,
    refine: Endpoint,
    features: Endpoint,
}

impl RemoteBackends {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let endpoint = |url: &str| Endpoint {
            url: url.to_string(),
            gate: Mutex::new(()),
        };
        RemoteBackends {
            generate: endpoint(&config.generate_url),
            refine: endpoint(&config.refine_url),
            features: endpoint(&config.features_url),
            agent,
            config,
        }
    }

    fn descriptor(&self, name: &str, semantics: &str) -> BackendDescriptor {
        BackendDescriptor {
            name: name.into(),
            max_prompt_length: None,
            score_semantics: semantics.into(),
            reentrant: self.config.parallel,
        }
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        endpoint: &Endpoint,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        let _serialized = if self.config.parallel {
            None
        } else {
            Some(endpoint.gate.lock().unwrap_or_else(|p| p.into_inner()))
        };
        let payload = serde_json::to_vec(body).map_err(|e| BackendError::Protocol {
            endpoint: endpoint.url.clone(),
            message: e.to_string(),
        })?;
        let transport = |message: String| BackendError::Transport {
            endpoint: endpoint.url.clone(),
            message,
        };
        let mut last = transport("no attempt made".into());
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(
                    self.config.retry_backoff_ms * attempt as u64,
                ));
            }
            let result = self
                .agent
                .post(&endpoint.url)
                .header("Content-Type", "application/json")
                .send(&payload[..]);
            let mut response = match result {
                Ok(r) => r,
                Err(e) => {
                    warn!("{} attempt {}: {e}", endpoint.url, attempt + 1);
                    last = transport(e.to_string());
                    continue;
                }
            };
            let status = response.status().as_u16();
            let text = response
                .body_mut()
                .with_config()
                .limit(512 * 1024 * 1024)
                .read_to_string()
                .map_err(|e| transport(e.to_string()));
            match status {
                200..=299 => {
                    let text = text?;
                    return serde_json::from_str(&text).map_err(|e| BackendError::Protocol {
                        endpoint: endpoint.url.clone(),
                        message: format!("bad response body: {e}"),
                    });
                }
                500..=599 => {
                    warn!("{} attempt {}: HTTP {status}", endpoint.url, attempt + 1);
                    last = transport(format!("HTTP {status}"));
                }
                _ => {
                    return Err(BackendError::Protocol {
                        endpoint: endpoint.url.clone(),
                        message: format!("HTTP {status}: {}", text.unwrap_or_default()),
                    })
                }
            }
        }
        Err(last)
    }

    fn protocol(&self, endpoint: &Endpoint, err: impl ToString) -> BackendError {
        BackendError::Protocol {
            endpoint: endpoint.url.clone(),
            message: err.to_string(),
        }
    }
}

impl Generator for RemoteBackends {
    fn descriptor(&self) -> BackendDescriptor {
        self.descriptor("remote-generator", "adapter confidence in [0, 1]")
    }

    fn detect(
        &self,
        image: &ImageRecord,
        prompts: &[String],
        thresholds: DetectionThresholds,
    ) -> Result<Vec<BoxCandidate>, BackendError> {
        let request = GenerateRequest {
            image: wire::encode_image(image).map_err(|e| self.protocol(&self.generate, e))?,
            prompts: prompts.to_vec(),
            box_threshold: thresholds.box_threshold,
            text_threshold: thresholds.text_threshold,
        };
        let response: GenerateResponse = self.post(&self.generate, &request)?;
        response
            .detections
            .iter()
            .map(|d| {
                wire::box_from_wire(d.bbox, d.score, &d.phrase, image.height(), image.width())
                    .map_err(|e| self.protocol(&self.generate, e))
            })
            .collect()
    }
}

impl Refiner for RemoteBackends {
    fn descriptor(&self) -> BackendDescriptor {
        self.descriptor("remote-refiner", "masks only; box scores carried over")
    }

    fn segment(&self, image: &ImageRecord, boxes: &[BoxCandidate]) -> Result<Vec<Mask>, BackendError> {
        let request = wire::RefineRequest {
            image: wire::encode_image(image).map_err(|e| self.protocol(&self.refine, e))?,
            boxes: boxes.iter().map(wire::box_to_wire).collect(),
        };
        let response: wire::RefineResponse = self.post(&self.refine, &request)?;
        response
            .masks
            .iter()
            .map(|rle| Mask::from_rle(rle).map_err(|e| self.protocol(&self.refine, e)))
            .collect()
    }
}

impl FeatureExtractor for RemoteBackends {
    fn descriptor(&self) -> BackendDescriptor {
        self.descriptor("remote-features", "adapter-defined backbone features")
    }

    fn extract(&self, image: &ImageRecord) -> Result<FeatureGrid, BackendError> {
        let request = FeaturesRequest {
            image: wire::encode_image(image).map_err(|e| self.protocol(&self.features, e))?,
        };
        let response: FeaturesResponse = self.post(&self.features, &request)?;
        wire::decode_features(&response).map_err(|e| self.protocol(&self.features, e))
    }
}
