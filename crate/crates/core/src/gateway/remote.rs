//! HTTP/JSON client for remote inference services.
//!
//! Wire protocol, all `POST` with JSON bodies:
//!
//! | capability          | path               | request                               | response  |
//! |---------------------|--------------------|---------------------------------------|-----------|
//! | image_qa            | `/v1/image_qa`     | `{video_id, frame, question, box?}`   | `{answer}`  |
//! | detect              | `/v1/detect`       | `{video_id, frame, query, box?}`      | `{boxes:[{x1,y1,x2,y2,score}]}` |
//! | caption_image       | `/v1/caption`      | `{video_id, frame, box?}`             | `{caption}` |
//! | caption_video_chunk | `/v1/video_caption`| `{video_id, start_frame, end_frame}`  | `{caption}` |
//! | transcribe          | `/v1/transcribe`   | `{video_id}`                          | `{text}`    |
//! | llm_complete        | `/v1/llm`          | `{prompt, max_tokens, temperature?}`  | `{text}`    |
//!
//! Errors are non-2xx responses carrying `{error, detail}`. Detection boxes
//! are normalized to `[0, 1]`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    /// Capabilities served; empty means all.
    #[serde(default)]
    pub capabilities: Vec<Capability>,
    #[serde(default)]
    pub token: Option<String>,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    /// Distinguishes model deployments behind the same URL in cache keys.
    #[serde(default)]
    pub model_tag: Option<String>,
    #[serde(default)]
    pub temperature: Option<f64>,
}

fn default_timeout() -> f64 {
    120.0
}

pub struct HttpBackend {
    config: RemoteConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
    #[serde(default)]
    detail: Value,
}

impl HttpBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let token = config
            .token
            .clone()
            .or_else(|| config.token_env.as_ref().and_then(|v| std::env::var(v).ok()));
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s.max(0.001)))
            .build()
            .map_err(|e| BackendError::Unavailable { endpoint: config.base_url.clone(), cause: e.to_string() })?;
        Ok(HttpBackend { config, token, client })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.config.base_url.trim_end_matches('/'))
    }

    /// Path and JSON body for a request.
    pub fn encode(&self, request: &CapabilityRequest) -> Result<(&'static str, Value), BackendError> {
        encode_request(request, self.config.temperature)
    }
}

pub fn encode_request(request: &CapabilityRequest, temperature: Option<f64>) -> Result<(&'static str, Value), BackendError> {
    let video_id = || {
        request
            .video_id
            .clone()
            .ok_or_else(|| BackendError::Malformed(format!("{} request needs a video id", request.capability)))
    };
    let frame = || match &request.target {
        Target::Frame { index, region } => Ok((*index, *region)),
        _ => Err(BackendError::Malformed(format!("{} request needs a frame", request.capability))),
    };
    let text = request.text.clone().unwrap_or_default();
    let with_region = |mut body: Value, region: Option<BBox>| {
        if let Some(r) = region {
            body["box"] = json!(r);
        }
        body
    };
    Ok(match request.capability {
        Capability::ImageQa => {
            let (f, region) = frame()?;
            ("/v1/image_qa", with_region(json!({"video_id": video_id()?, "frame": f, "question": text}), region))
        }
        Capability::Detect => {
            let (f, region) = frame()?;
            ("/v1/detect", with_region(json!({"video_id": video_id()?, "frame": f, "query": text}), region))
        }
        Capability::CaptionImage => {
            let (f, region) = frame()?;
            ("/v1/caption", with_region(json!({"video_id": video_id()?, "frame": f}), region))
        }
        Capability::CaptionVideoChunk => match request.target {
            Target::Chunk { start_frame, end_frame } => (
                "/v1/video_caption",
                json!({"video_id": video_id()?, "start_frame": start_frame, "end_frame": end_frame}),
            ),
            _ => return Err(BackendError::Malformed("video_caption request needs chunk bounds".into())),
        },
        Capability::Transcribe => ("/v1/transcribe", json!({"video_id": video_id()?})),
        Capability::LlmComplete => {
            let mut body = json!({"prompt": text, "max_tokens": request.max_tokens.unwrap_or(256)});
            if let Some(t) = temperature {
                body["temperature"] = json!(t);
            }
            ("/v1/llm", body)
        }
    })
}

/// Decodes a 2xx response body for `capability`.
pub fn decode_response(capability: Capability, body: &[u8]) -> Result<CapabilityResponse, BackendError> {
    let value: Value = serde_json::from_slice(body).map_err(|e| BackendError::Malformed(format!("invalid JSON: {e}")))?;
    let field = |name: &str| -> Result<String, BackendError> {
        value
            .get(name)
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| BackendError::Malformed(format!("missing string field `{name}`")))
    };
    let response = match capability {
        Capability::ImageQa => CapabilityResponse::Text(field("answer")?),
        Capability::CaptionImage | Capability::CaptionVideoChunk => CapabilityResponse::Text(field("caption")?),
        Capability::Transcribe | Capability::LlmComplete => CapabilityResponse::Text(field("text")?),
        Capability::Detect => {
            let boxes = value.get("boxes").ok_or_else(|| BackendError::Malformed("missing field `boxes`".into()))?;
            let boxes: Vec<ScoredBox> = serde_json::from_value(boxes.clone())
                .map_err(|e| BackendError::Malformed(format!("boxes: {e}")))?;
            CapabilityResponse::Boxes(boxes)
        }
    };
    response.check(capability)?;
    Ok(response)
}

impl Backend for HttpBackend {
    fn name(&self) -> String {
        format!("http {}", self.config.base_url)
    }

    fn fingerprint(&self) -> String {
        sha256_hex(
            format!(
                "http:{}:{}:{:?}",
                self.config.base_url.trim_end_matches('/'),
                self.config.model_tag.as_deref().unwrap_or(""),
                self.config.temperature
            )
            .as_bytes(),
        )
    }

    fn supports(&self, capability: Capability) -> bool {
        self.config.capabilities.is_empty() || self.config.capabilities.contains(&capability)
    }

    fn call(&self, request: &CapabilityRequest) -> Result<CapabilityResponse, BackendError> {
        let (path, body) = self.encode(request)?;
        let endpoint = self.url(path);
        let mut builder = self.client.post(&endpoint).json(&body);
        if let Some(token) = &self.token {
            builder = builder.bearer_auth(token);
        }
        let resp = builder
            .send()
            .map_err(|e| BackendError::Unavailable { endpoint: endpoint.clone(), cause: e.to_string() })?;
        let status = resp.status();
        let bytes = resp
            .bytes()
            .map_err(|e| BackendError::Unavailable { endpoint: endpoint.clone(), cause: e.to_string() })?;
        if !status.is_success() {
            let (error, detail) = match serde_json::from_slice::<ErrorBody>(&bytes) {
                Ok(b) => (b.error, match b.detail {
                    Value::String(s) => s,
                    Value::Null => String::new(),
                    other => other.to_string(),
                }),
                Err(_) => (status.canonical_reason().unwrap_or("error").to_owned(), String::from_utf8_lossy(&bytes).into_owned()),
            };
            return Err(BackendError::Remote { endpoint, status: status.as_u16(), error, detail });
        }
        decode_response(request.capability, &bytes)
    }
}
