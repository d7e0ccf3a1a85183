//! Deterministic mock worlds: a fully tabulated stand-in for a video and
//! every backend answer about it.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::*;
use crate::clip::{FrameSource, Fps, SourceVideo};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct WorldError {
    /// JSON-pointer-style location of the offending field.
    pub path: String,
    pub message: String,
}

impl WorldError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        WorldError { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockWorld {
    pub video_id: String,
    pub fps: Fps,
    pub frame_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    pub frames: Vec<MockFrame>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chunk_captions: Vec<ChunkCaptionEntry>,
    /// Scripted completions, tried in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub llm: Vec<LlmRule>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockFrame {
    pub index: u64,
    #[serde(default)]
    pub caption: Option<String>,
    /// Object name to detections.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub objects: BTreeMap<String, Vec<ScoredBox>>,
    /// Yes/no questions; answered `yes` or `no`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub predicates: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub qa: BTreeMap<String, String>,
    /// Answers about a cropped region of the frame.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub region_qa: Vec<RegionQa>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionQa {
    #[serde(rename = "box")]
    pub region: BBox,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub predicates: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub qa: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkCaptionEntry {
    pub start_frame: u64,
    pub end_frame: u64,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmRule {
    /// Every listed substring must appear in the prompt.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    pub response: String,
}

impl LlmRule {
    pub fn matches(&self, prompt: &str) -> bool {
        if let Some(h) = &self.prompt_sha256 {
            if sha256_hex(prompt.as_bytes()) != *h {
                return false;
            }
        }
        self.contains.iter().all(|c| prompt.contains(c.as_str()))
    }
}

impl MockWorld {
    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let world: MockWorld = serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = path_to_pointer(&e.path().to_string());
            WorldError::at(pointer, e.into_inner().to_string())
        })?;
        world.normalized()
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = fs::read_to_string(path).map_err(|e| WorldError::at("", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Loads one world file, or every `*.json` file in a directory.
    pub fn load_all(path: &Path) -> Result<Vec<Self>, WorldError> {
        if !path.is_dir() {
            return Ok(vec![Self::load(path)?]);
        }
        let mut files: Vec<_> = fs::read_dir(path)
            .map_err(|e| WorldError::at("", format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        files
            .iter()
            .map(|f| Self::load(f).map_err(|e| WorldError::at(e.path, format!("{}: {}", f.display(), e.message))))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world serializes")
    }

    pub fn fingerprint(&self) -> String {
        sha256_hex(canonical_json(&serde_json::to_value(self).expect("world serializes")).as_bytes())
    }

    pub fn source_video(&self) -> SourceVideo {
        SourceVideo::new(self.video_id.as_str(), self.fps, self.frame_count, FrameSource::MockWorld)
            .expect("validated world has frames")
    }

    /// Normalizes table keys and checks the world is well formed and total.
    pub fn normalized(mut self) -> Result<Self, WorldError> {
        if self.frame_count == 0 {
            return Err(WorldError::at("/frame_count", "must be at least 1"));
        }
        self.frames.sort_by_key(|f| f.index);
        for (pos, frame) in self.frames.iter().enumerate() {
            if frame.index != pos as u64 {
                let missing = pos as u64;
                return Err(if frame.index < missing {
                    WorldError::at(format!("/frames/{pos}/index"), format!("duplicate frame {}", frame.index))
                } else {
                    WorldError::at("/frames", format!("frame {missing} is missing"))
                });
            }
        }
        if self.frames.len() as u64 != self.frame_count {
            return Err(WorldError::at(
                "/frames",
                format!("expected {} frames, found {}", self.frame_count, self.frames.len()),
            ));
        }
        for frame in &mut self.frames {
            let i = frame.index;
            frame.objects = normalize_map(std::mem::take(&mut frame.objects), &format!("/frames/{i}/objects"))?;
            frame.predicates = normalize_map(std::mem::take(&mut frame.predicates), &format!("/frames/{i}/predicates"))?;
            frame.qa = normalize_map(std::mem::take(&mut frame.qa), &format!("/frames/{i}/qa"))?;
            for (r, rq) in frame.region_qa.iter_mut().enumerate() {
                let base = format!("/frames/{i}/region_qa/{r}");
                if !rq.region.is_normalized() {
                    return Err(WorldError::at(format!("{base}/box"), "invalid box"));
                }
                rq.predicates = normalize_map(std::mem::take(&mut rq.predicates), &format!("{base}/predicates"))?;
                rq.qa = normalize_map(std::mem::take(&mut rq.qa), &format!("{base}/qa"))?;
            }
            for (name, boxes) in &frame.objects {
                for (b, sb) in boxes.iter().enumerate() {
                    let at = format!("/frames/{i}/objects/{}/{b}", escape_pointer(name));
                    if !sb.bbox().is_normalized() {
                        return Err(WorldError::at(at, "invalid box"));
                    }
                    if !(0.0..=1.0).contains(&sb.score) {
                        return Err(WorldError::at(format!("{at}/score"), "score outside [0, 1]"));
                    }
                }
            }
        }
        // Totality: every frame answers every question any frame answers.
        let all_predicates: Vec<String> =
            self.frames.iter().flat_map(|f| f.predicates.keys().cloned()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let all_questions: Vec<String> =
            self.frames.iter().flat_map(|f| f.qa.keys().cloned()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        for frame in &self.frames {
            let i = frame.index;
            if frame.caption.is_none() {
                return Err(WorldError::at(format!("/frames/{i}/caption"), format!("frame {i} has no caption")));
            }
            if let Some(p) = all_predicates.iter().find(|p| !frame.predicates.contains_key(*p)) {
                return Err(WorldError::at(
                    format!("/frames/{i}/predicates"),
                    format!("frame {i} has no entry for predicate {p:?}"),
                ));
            }
            if let Some(q) = all_questions.iter().find(|q| !frame.qa.contains_key(*q)) {
                return Err(WorldError::at(format!("/frames/{i}/qa"), format!("frame {i} has no entry for question {q:?}")));
            }
            if let Some(q) = frame.qa.keys().find(|q| frame.predicates.contains_key(*q)) {
                return Err(WorldError::at(
                    format!("/frames/{i}/qa"),
                    format!("question {q:?} is also a predicate"),
                ));
            }
        }
        for (c, chunk) in self.chunk_captions.iter().enumerate() {
            if chunk.start_frame >= chunk.end_frame || chunk.end_frame > self.frame_count {
                return Err(WorldError::at(format!("/chunk_captions/{c}"), "chunk bounds outside the video"));
            }
        }
        Ok(self)
    }

    fn frame(&self, index: u64) -> Option<&MockFrame> {
        self.frames.get(index as usize)
    }

    fn miss(&self, frame: Option<u64>, key: impl Into<String>) -> BackendError {
        BackendError::MockMiss { video: self.video_id.clone(), frame, key: key.into() }
    }

    pub fn image_qa(&self, index: u64, region: Option<BBox>, question: &str) -> Result<String, BackendError> {
        let frame = self.frame(index).ok_or_else(|| self.miss(Some(index), "frame"))?;
        let key = normalize_key(question);
        if let Some(region) = region {
            if let Some(rq) = frame.region_qa.iter().find(|rq| rq.region.approx_eq(&region)) {
                if let Some(&p) = rq.predicates.get(&key) {
                    return Ok(yes_no(p));
                }
                if let Some(a) = rq.qa.get(&key) {
                    return Ok(a.clone());
                }
            }
        }
        if let Some(&p) = frame.predicates.get(&key) {
            return Ok(yes_no(p));
        }
        frame.qa.get(&key).cloned().ok_or_else(|| self.miss(Some(index), key))
    }

    /// Detections of `query`; with a region, only boxes centred inside it.
    pub fn detect(&self, index: u64, region: Option<BBox>, query: &str) -> Result<Vec<ScoredBox>, BackendError> {
        let frame = self.frame(index).ok_or_else(|| self.miss(Some(index), "frame"))?;
        let boxes = frame.objects.get(&normalize_key(query)).cloned().unwrap_or_default();
        Ok(match region {
            Some(r) => boxes
                .into_iter()
                .filter(|b| {
                    let (x, y) = b.bbox().center();
                    r.contains_point(x, y)
                })
                .collect(),
            None => boxes,
        })
    }

    pub fn caption(&self, index: u64) -> Result<String, BackendError> {
        self.frame(index)
            .and_then(|f| f.caption.clone())
            .ok_or_else(|| self.miss(Some(index), "caption"))
    }

    pub fn chunk_caption(&self, start_frame: u64, end_frame: u64) -> Result<String, BackendError> {
        self.chunk_captions
            .iter()
            .find(|c| c.start_frame == start_frame && c.end_frame == end_frame)
            .map(|c| c.caption.clone())
            .ok_or_else(|| self.miss(Some(start_frame), format!("chunk [{start_frame}, {end_frame})")))
    }

    pub fn complete(&self, prompt: &str) -> Option<String> {
        self.llm.iter().find(|r| r.matches(prompt)).map(|r| r.response.clone())
    }
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.to_owned()
}

fn normalize_map<V>(map: BTreeMap<String, V>, at: &str) -> Result<BTreeMap<String, V>, WorldError> {
    let mut out = BTreeMap::new();
    for (k, v) in map {
        let nk = normalize_key(&k);
        if out.insert(nk.clone(), v).is_some() {
            return Err(WorldError::at(format!("{at}/{}", escape_pointer(&k)), format!("duplicate key {nk:?} after normalization")));
        }
    }
    Ok(out)
}

fn escape_pointer(s: &str) -> String {
    s.replace('~', "~0").replace('/', "~1")
}

/// `frames[7].caption` -> `/frames/7/caption`
fn path_to_pointer(path: &str) -> String {
    if path == "." {
        return String::new();
    }
    let mut out = String::new();
    for part in path.split('.') {
        let mut rest = part;
        if let Some(idx) = rest.find('[') {
            out.push('/');
            out.push_str(&escape_pointer(&rest[..idx]));
            rest = &rest[idx..];
            while let Some(end) = rest.find(']') {
                out.push('/');
                out.push_str(&rest[1..end]);
                rest = &rest[end + 1..];
            }
        } else if !rest.is_empty() {
            out.push('/');
            out.push_str(&escape_pointer(rest));
        }
    }
    out
}

/// Backend answering every capability from a set of mock worlds.
pub struct MockBackend {
    worlds: HashMap<String, Arc<MockWorld>>,
    fingerprint: String,
}

impl MockBackend {
    pub fn new(worlds: impl IntoIterator<Item = MockWorld>) -> Self {
        let worlds: HashMap<String, Arc<MockWorld>> =
            worlds.into_iter().map(|w| (w.video_id.clone(), Arc::new(w))).collect();
        let mut prints: Vec<String> = worlds.values().map(|w| w.fingerprint()).collect();
        prints.sort();
        let fingerprint = sha256_hex(format!("mock:{}", prints.join(",")).as_bytes());
        MockBackend { worlds, fingerprint }
    }

    pub fn world(&self, video_id: &str) -> Option<&Arc<MockWorld>> {
        self.worlds.get(video_id)
    }

    pub fn video_ids(&self) -> Vec<String> {
        let mut ids: Vec<_> = self.worlds.keys().cloned().collect();
        ids.sort();
        ids
    }

    fn world_for(&self, request: &CapabilityRequest) -> Result<&MockWorld, BackendError> {
        let id = request.video_id.as_deref().unwrap_or("");
        self.worlds.get(id).map(|w| w.as_ref()).ok_or_else(|| BackendError::MockMiss {
            video: id.to_owned(),
            frame: None,
            key: "video".into(),
        })
    }
}

impl Backend for MockBackend {
    fn name(&self) -> String {
        "mock".into()
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }

    fn supports(&self, _: Capability) -> bool {
        true
    }

    fn call(&self, request: &CapabilityRequest) -> Result<CapabilityResponse, BackendError> {
        let text = request.text.as_deref().unwrap_or("");
        if request.capability == Capability::LlmComplete {
            let candidates: Vec<&MockWorld> = match &request.video_id {
                Some(id) => self.worlds.get(id).map(|w| w.as_ref()).into_iter().collect(),
                None => {
                    let mut all: Vec<&MockWorld> = self.worlds.values().map(|w| w.as_ref()).collect();
                    all.sort_by(|a, b| a.video_id.cmp(&b.video_id));
                    all
                }
            };
            return candidates
                .into_iter()
                .find_map(|w| w.complete(text))
                .map(CapabilityResponse::Text)
                .ok_or_else(|| BackendError::MockMiss {
                    video: request.video_id.clone().unwrap_or_default(),
                    frame: None,
                    key: format!("llm prompt {}", &sha256_hex(text.as_bytes())[..12]),
                });
        }
        let world = self.world_for(request)?;
        let (index, region) = match &request.target {
            Target::Frame { index, region } => (*index, *region),
            Target::Chunk { start_frame, end_frame } => {
                return world.chunk_caption(*start_frame, *end_frame).map(CapabilityResponse::Text);
            }
            Target::None => (0, None),
        };
        match request.capability {
            Capability::ImageQa => world.image_qa(index, region, text).map(CapabilityResponse::Text),
            Capability::Detect => world.detect(index, region, text).map(CapabilityResponse::Boxes),
            Capability::CaptionImage => world.caption(index).map(CapabilityResponse::Text),
            Capability::CaptionVideoChunk => Err(world.miss(None, "chunk bounds")),
            Capability::Transcribe => world
                .transcript
                .clone()
                .map(CapabilityResponse::Text)
                .ok_or_else(|| world.miss(None, "transcript")),
            Capability::LlmComplete => unreachable!("handled above"),
        }
    }
}
