//! Uniform capability interface over visual and language backends.
//!
//! Every model the engine consumes sits behind [`Backend`]: a remote HTTP/JSON
//! service ([`remote::HttpBackend`]) or a tabulated mock world
//! ([`mock::MockBackend`]). The [`Gateway`] routes requests by capability,
//! consults the persistent [`cache::ResponseCache`] and bounds how many
//! calls are in flight at once.

pub mod cache;
pub mod fault;
pub mod mock;
pub mod remote;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Condvar, Mutex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::ResponseCache;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    ImageQa,
    Detect,
    CaptionImage,
    CaptionVideoChunk,
    Transcribe,
    LlmComplete,
}

impl Capability {
    pub const ALL: [Capability; 6] = [
        Capability::ImageQa,
        Capability::Detect,
        Capability::CaptionImage,
        Capability::CaptionVideoChunk,
        Capability::Transcribe,
        Capability::LlmComplete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Capability::ImageQa => "image_qa",
            Capability::Detect => "detect",
            Capability::CaptionImage => "caption_image",
            Capability::CaptionVideoChunk => "caption_video_chunk",
            Capability::Transcribe => "transcribe",
            Capability::LlmComplete => "llm_complete",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Capability {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Capability::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown capability {s:?}"))
    }
}

/// Axis-aligned box in normalized `[0, 1]` image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite()) && self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn is_normalized(&self) -> bool {
        self.is_valid() && self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= 1.0 && self.y2 <= 1.0
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }

    pub fn approx_eq(&self, other: &BBox) -> bool {
        const EPS: f64 = 1e-6;
        (self.x1 - other.x1).abs() < EPS
            && (self.y1 - other.y1).abs() < EPS
            && (self.x2 - other.x2).abs() < EPS
            && (self.y2 - other.y2).abs() < EPS
    }

    /// Converts to pixel coordinates for a `width x height` image.
    pub fn to_pixels(&self, width: u32, height: u32) -> BBox {
        let (w, h) = (width as f64, height as f64);
        BBox::new(self.x1 * w, self.y1 * h, self.x2 * w, self.y2 * h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub score: f64,
}

impl ScoredBox {
    pub fn new(bbox: BBox, score: f64) -> Self {
        ScoredBox { x1: bbox.x1, y1: bbox.y1, x2: bbox.x2, y2: bbox.y2, score }
    }

    pub fn bbox(&self) -> BBox {
        BBox::new(self.x1, self.y1, self.x2, self.y2)
    }

    pub fn is_valid(&self) -> bool {
        self.bbox().is_valid() && (0.0..=1.0).contains(&self.score)
    }
}

/// What a request points at inside a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    None,
    Frame {
        index: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        region: Option<BBox>,
    },
    Chunk { start_frame: u64, end_frame: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityRequest {
    pub capability: Capability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
    pub target: Target,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl CapabilityRequest {
    pub fn image_qa(video_id: &str, frame: u64, region: Option<BBox>, question: &str) -> Self {
        CapabilityRequest {
            capability: Capability::ImageQa,
            video_id: Some(video_id.to_owned()),
            target: Target::Frame { index: frame, region },
            text: Some(question.to_owned()),
            max_tokens: None,
        }
    }

    pub fn detect(video_id: &str, frame: u64, region: Option<BBox>, query: &str) -> Self {
        CapabilityRequest {
            capability: Capability::Detect,
            video_id: Some(video_id.to_owned()),
            target: Target::Frame { index: frame, region },
            text: Some(query.to_owned()),
            max_tokens: None,
        }
    }

    pub fn caption_image(video_id: &str, frame: u64, region: Option<BBox>) -> Self {
        CapabilityRequest {
            capability: Capability::CaptionImage,
            video_id: Some(video_id.to_owned()),
            target: Target::Frame { index: frame, region },
            text: None,
            max_tokens: None,
        }
    }

    pub fn caption_chunk(video_id: &str, start_frame: u64, end_frame: u64) -> Self {
        CapabilityRequest {
            capability: Capability::CaptionVideoChunk,
            video_id: Some(video_id.to_owned()),
            target: Target::Chunk { start_frame, end_frame },
            text: None,
            max_tokens: None,
        }
    }

    pub fn transcribe(video_id: &str) -> Self {
        CapabilityRequest {
            capability: Capability::Transcribe,
            video_id: Some(video_id.to_owned()),
            target: Target::None,
            text: None,
            max_tokens: None,
        }
    }

    /// `video_id` is routing context for mock worlds; it is not sent on the wire.
    pub fn llm(video_id: Option<&str>, prompt: &str, max_tokens: u32) -> Self {
        CapabilityRequest {
            capability: Capability::LlmComplete,
            video_id: video_id.map(str::to_owned),
            target: Target::None,
            text: Some(prompt.to_owned()),
            max_tokens: Some(max_tokens),
        }
    }

    /// Content hash over the canonical (key-sorted) JSON form.
    pub fn request_id(&self) -> String {
        let value = serde_json::to_value(self).expect("request serializes");
        sha256_hex(canonical_json(&value).as_bytes())
    }

    pub fn frame(&self) -> Option<u64> {
        match self.target {
            Target::Frame { index, .. } => Some(index),
            Target::Chunk { start_frame, .. } => Some(start_frame),
            Target::None => None,
        }
    }

    pub fn summary(&self) -> String {
        let mut s = self.capability.to_string();
        match &self.target {
            Target::Frame { index, region: Some(_) } => s.push_str(&format!(" frame={index} (crop)")),
            Target::Frame { index, region: None } => s.push_str(&format!(" frame={index}")),
            Target::Chunk { start_frame, end_frame } => s.push_str(&format!(" frames=[{start_frame},{end_frame})")),
            Target::None => {}
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum CapabilityResponse {
    Text(String),
    Boxes(Vec<ScoredBox>),
}

impl CapabilityResponse {
    pub fn into_text(self) -> Result<String, BackendError> {
        match self {
            CapabilityResponse::Text(t) => Ok(t),
            CapabilityResponse::Boxes(_) => Err(BackendError::Malformed("expected text, got boxes".into())),
        }
    }

    pub fn into_boxes(self) -> Result<Vec<ScoredBox>, BackendError> {
        match self {
            CapabilityResponse::Boxes(b) => Ok(b),
            CapabilityResponse::Text(_) => Err(BackendError::Malformed("expected boxes, got text".into())),
        }
    }

    /// Checks the response shape against the capability contract.
    pub fn check(&self, capability: Capability) -> Result<(), BackendError> {
        match (capability, self) {
            (Capability::Detect, CapabilityResponse::Boxes(boxes)) => {
                match boxes.iter().position(|b| !b.bbox().is_normalized() || !(0.0..=1.0).contains(&b.score)) {
                    Some(i) => Err(BackendError::Malformed(format!("invalid box at index {i}"))),
                    None => Ok(()),
                }
            }
            (Capability::Detect, CapabilityResponse::Text(_)) => {
                Err(BackendError::Malformed("detect must return boxes".into()))
            }
            (_, CapabilityResponse::Text(_)) => Ok(()),
            (c, CapabilityResponse::Boxes(_)) => Err(BackendError::Malformed(format!("{c} must return text"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendError {
    #[error("backend unavailable at {endpoint}: {cause}")]
    Unavailable { endpoint: String, cause: String },
    #[error("backend {endpoint} returned {status}: {error} ({detail})")]
    Remote { endpoint: String, status: u16, error: String, detail: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("mock world miss: video {video}, frame {frame:?}, key {key:?}")]
    MockMiss { video: String, frame: Option<u64>, key: String },
    #[error("no backend registered for {0}")]
    Unsupported(Capability),
}

pub trait Backend: Send + Sync {
    fn name(&self) -> String;

    /// Identifies the backend configuration; part of every cache key.
    fn fingerprint(&self) -> String;

    fn supports(&self, capability: Capability) -> bool;

    fn call(&self, request: &CapabilityRequest) -> Result<CapabilityResponse, BackendError>;
}

/// Counting semaphore bounding in-flight backend calls.
pub struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    cv: Condvar,
    peak: AtomicU64,
}

impl Limiter {
    pub fn new(max: usize) -> Self {
        Limiter { max: max.max(1), in_flight: Mutex::new(0), cv: Condvar::new(), peak: AtomicU64::new(0) }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock();
        while *n >= self.max {
            self.cv.wait(&mut n);
        }
        *n += 1;
        self.peak.fetch_max(*n as u64, Ordering::SeqCst);
        Permit(self)
    }

    pub fn peak(&self) -> u64 {
        self.peak.load(Ordering::SeqCst)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock();
        *n -= 1;
        self.0.cv.notify_one();
    }
}

/// One completed gateway call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub capability: Capability,
    pub request_id: String,
    pub summary: String,
    pub cached: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct Gateway {
    routes: HashMap<Capability, Arc<dyn Backend>>,
    cache: Option<Arc<ResponseCache>>,
    limiter: Limiter,
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
    call_log: Option<Mutex<Vec<CallRecord>>>,
}

impl Gateway {
    pub fn new(max_concurrency: usize) -> Self {
        Gateway {
            routes: HashMap::new(),
            cache: None,
            limiter: Limiter::new(max_concurrency),
            backend_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
            call_log: None,
        }
    }

    /// Routes every capability the backend supports to it, replacing earlier routes.
    pub fn with_backend(mut self, backend: Arc<dyn Backend>) -> Self {
        for cap in Capability::ALL {
            if backend.supports(cap) {
                self.routes.insert(cap, backend.clone());
            }
        }
        self
    }

    pub fn with_route(mut self, capability: Capability, backend: Arc<dyn Backend>) -> Self {
        self.routes.insert(capability, backend);
        self
    }

    pub fn without(mut self, capability: Capability) -> Self {
        self.routes.remove(&capability);
        self
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    /// Keeps a log of every call made through this gateway.
    pub fn with_call_log(mut self) -> Self {
        self.call_log = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn supports(&self, capability: Capability) -> bool {
        self.routes.contains_key(&capability)
    }

    /// Calls that reached a backend (cache misses).
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::SeqCst)
    }

    pub fn peak_concurrency(&self) -> u64 {
        self.limiter.peak()
    }

    pub fn call_log(&self) -> Vec<CallRecord> {
        self.call_log.as_ref().map(|l| l.lock().clone()).unwrap_or_default()
    }

    pub fn call(&self, request: &CapabilityRequest) -> Result<CapabilityResponse, BackendError> {
        self.call_recorded(request).0
    }

    pub fn call_recorded(&self, request: &CapabilityRequest) -> (Result<CapabilityResponse, BackendError>, CallRecord) {
        let request_id = request.request_id();
        let (result, cached) = self.dispatch(request, &request_id);
        let record = CallRecord {
            capability: request.capability,
            request_id,
            summary: request.summary(),
            cached,
            error: result.as_ref().err().map(|e| e.to_string()),
        };
        if let Some(log) = &self.call_log {
            log.lock().push(record.clone());
        }
        (result, record)
    }

    /// Issues the requests concurrently (bounded by the gateway limit) and
    /// returns results in request order.
    pub fn call_batch(
        &self,
        requests: &[CapabilityRequest],
    ) -> Vec<(Result<CapabilityResponse, BackendError>, CallRecord)> {
        requests.par_iter().map(|r| self.call_recorded(r)).collect()
    }

    fn dispatch(&self, request: &CapabilityRequest, request_id: &str) -> (Result<CapabilityResponse, BackendError>, bool) {
        let Some(backend) = self.routes.get(&request.capability) else {
            return (Err(BackendError::Unsupported(request.capability)), false);
        };
        let key = self.cache.as_ref().map(|_| cache::cache_key(request_id, &backend.fingerprint()));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(hit) = cache.get(key) {
                self.cache_hits.fetch_add(1, Ordering::SeqCst);
                return (Ok(hit), true);
            }
        }
        let result = {
            let _permit = self.limiter.acquire();
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            backend.call(request)
        };
        let result = result.and_then(|resp| resp.check(request.capability).map(|_| resp));
        if let (Some(cache), Some(key), Ok(resp)) = (&self.cache, &key, &result) {
            if let Err(e) = cache.put(key, request_id, resp) {
                log::warn!("response cache write failed: {e}");
            }
        }
        (result, false)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// JSON text with object keys sorted at every level.
pub fn canonical_json(value: &serde_json::Value) -> String {
    use serde_json::Value;
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(map) => {
                let mut entries: Vec<_> = map.iter().collect();
                entries.sort_by(|a, b| a.0.cmp(b.0));
                Value::Object(entries.into_iter().map(|(k, v)| (k.clone(), sort(v))).collect())
            }
            Value::Array(items) => Value::Array(items.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    sort(value).to_string()
}

/// Lowercase, trim and collapse internal whitespace.
pub fn normalize_key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}
