//! The visual API that programs call: filtering, detection crops, frame-wise
//! voting, captions, transcripts and the option chooser.
//!
//! Every backend request goes through a [`Session`], which enforces the call
//! budget and records each call so the interpreter can attach it to the
//! statement that caused it.

use std::sync::Arc;
use std::time::Instant;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::clip::{trim, FrameRef, VideoClip};
use crate::gateway::{BBox, BackendError, CallRecord, Capability, CapabilityRequest, CapabilityResponse, Gateway};
use crate::tracker::{Detection, FrameDetections};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrimitiveParams {
    /// Minimum detector score for a box to count as present.
    pub detect_threshold: f64,
    pub llm_max_tokens: u32,
}

impl Default for PrimitiveParams {
    fn default() -> Self {
        PrimitiveParams { detect_threshold: 0.35, llm_max_tokens: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModuleError {
    #[error("{op}: {capability} failed{}: {error}", at_frame(*.frame))]
    Backend { op: String, capability: Capability, frame: Option<u64>, error: BackendError },
    #[error("{op}: empty clip")]
    EmptyClip { op: String },
    #[error("{op}: index {index} out of range for {len} frames")]
    IndexOutOfRange { op: String, index: i64, len: usize },
    #[error("no transcript available")]
    NoTranscript,
    #[error("could not parse an option number from {response:?}")]
    UnparseableChoice { response: String },
    #[error("get_max_key on an empty count map")]
    EmptyCounter,
    #[error("summary failed: {reason}")]
    SummaryFailed { reason: String },
    #[error("{op}: {message}")]
    InvalidArgument { op: String, message: String },
    #[error("backend call budget of {limit} exhausted")]
    CallBudget { limit: u64 },
    #[error("wall clock limit of {limit_s}s exceeded")]
    Deadline { limit_s: f64 },
}

fn at_frame(frame: Option<u64>) -> String {
    frame.map(|f| format!(" at frame {f}")).unwrap_or_default()
}

impl ModuleError {
    /// The capability whose backend failed, if this is a backend failure.
    pub fn capability(&self) -> Option<Capability> {
        match self {
            ModuleError::Backend { capability, .. } => Some(*capability),
            _ => None,
        }
    }
}

/// Budgeted, recorded access to the gateway for one program run.
pub struct Session<'g> {
    gateway: &'g Gateway,
    pub params: PrimitiveParams,
    max_calls: u64,
    deadline: Option<(Instant, f64)>,
    requested: Mutex<u64>,
    log: Mutex<Vec<CallRecord>>,
}

impl<'g> Session<'g> {
    pub fn new(gateway: &'g Gateway, params: PrimitiveParams) -> Self {
        Session { gateway, params, max_calls: u64::MAX, deadline: None, requested: Mutex::new(0), log: Mutex::new(Vec::new()) }
    }

    pub fn with_call_limit(mut self, max_calls: u64) -> Self {
        self.max_calls = max_calls;
        self
    }

    pub fn with_deadline(mut self, start: Instant, limit_s: f64) -> Self {
        self.deadline = Some((start, limit_s));
        self
    }

    pub fn gateway(&self) -> &Gateway {
        self.gateway
    }

    pub fn supports(&self, capability: Capability) -> bool {
        self.gateway.supports(capability)
    }

    /// Calls requested so far, cache hits included.
    pub fn calls_requested(&self) -> u64 {
        *self.requested.lock()
    }

    /// Removes and returns the calls recorded since the last drain.
    pub fn take_calls(&self) -> Vec<CallRecord> {
        std::mem::take(&mut *self.log.lock())
    }

    pub fn check_deadline(&self) -> Result<(), ModuleError> {
        match self.deadline {
            Some((start, limit_s)) if start.elapsed().as_secs_f64() > limit_s => Err(ModuleError::Deadline { limit_s }),
            _ => Ok(()),
        }
    }

    /// Issues the requests concurrently and returns per-request results in
    /// order. Fails up front if the batch would exceed the call budget.
    pub fn call_each(
        &self,
        requests: &[CapabilityRequest],
    ) -> Result<Vec<Result<CapabilityResponse, BackendError>>, ModuleError> {
        self.check_deadline()?;
        {
            let mut used = self.requested.lock();
            if used.saturating_add(requests.len() as u64) > self.max_calls {
                return Err(ModuleError::CallBudget { limit: self.max_calls });
            }
            *used += requests.len() as u64;
        }
        let results = self.gateway.call_batch(requests);
        let mut log = self.log.lock();
        Ok(results
            .into_iter()
            .map(|(result, record)| {
                log.push(record);
                result
            })
            .collect())
    }

    /// Like [`Session::call_each`], failing on the first error in request order.
    pub fn call_all(&self, op: &str, requests: &[CapabilityRequest]) -> Result<Vec<CapabilityResponse>, ModuleError> {
        self.call_each(requests)?
            .into_iter()
            .zip(requests)
            .map(|(r, req)| {
                r.map_err(|error| ModuleError::Backend {
                    op: op.to_owned(),
                    capability: req.capability,
                    frame: req.frame(),
                    error,
                })
            })
            .collect()
    }

    pub fn call_one(&self, op: &str, request: CapabilityRequest) -> Result<CapabilityResponse, ModuleError> {
        Ok(self.call_all(op, std::slice::from_ref(&request))?.pop().expect("one response"))
    }
}

fn text(op: &str, capability: Capability, frame: Option<u64>, r: CapabilityResponse) -> Result<String, ModuleError> {
    r.into_text().map_err(|error| ModuleError::Backend { op: op.into(), capability, frame, error })
}

/// A detected region of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub frame: FrameRef,
    pub bbox: BBox,
    pub score: f64,
}

/// Crops of an object, frame-major and by descending score within a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CropClip {
    parent: VideoClip,
    crops: Arc<[Crop]>,
}

impl CropClip {
    pub fn new(parent: VideoClip, crops: Vec<Crop>) -> Self {
        CropClip { parent, crops: crops.into() }
    }

    pub fn parent(&self) -> &VideoClip {
        &self.parent
    }

    pub fn crops(&self) -> &[Crop] {
        &self.crops
    }

    pub fn len(&self) -> usize {
        self.crops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crops.is_empty()
    }

    /// Distinct frame indices covered, ascending.
    pub fn frame_indices(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.crops.iter().map(|c| c.frame.index).collect();
        v.dedup();
        v
    }

    /// Positional half-open slice, as for clips.
    pub fn trim(&self, a: i64, b: i64) -> Result<CropClip, ModuleError> {
        let n = self.len() as i64;
        if a < 0 || b < a || b > n {
            return Err(ModuleError::InvalidArgument {
                op: "trim".into(),
                message: format!("trim({a}, {b}) out of range for {n} crops"),
            });
        }
        Ok(CropClip { parent: self.parent.clone(), crops: self.crops[a as usize..b as usize].to_vec().into() })
    }
}

/// What the per-item primitives need from a clip or a crop collection.
pub trait Frames: Sized {
    fn video_id(&self) -> &str;
    /// Frame and optional region for every item, in order.
    fn targets(&self) -> Vec<(u64, Option<BBox>)>;
    fn keep(&self, positions: &[usize]) -> Self;
    fn parent_clip(&self) -> &VideoClip;
    /// Positional half-open slice `[a, b)` of the items.
    fn trim_items(&self, a: i64, b: i64) -> Result<Self, ModuleError>;

    fn as_crops(&self) -> Option<&CropClip> {
        None
    }

    fn count(&self) -> usize {
        self.targets().len()
    }
}

impl Frames for VideoClip {
    fn video_id(&self) -> &str {
        &self.source().video_id
    }

    fn targets(&self) -> Vec<(u64, Option<BBox>)> {
        self.frames().iter().map(|f| (f.index, None)).collect()
    }

    fn keep(&self, positions: &[usize]) -> Self {
        self.retain_positions(positions)
    }

    fn parent_clip(&self) -> &VideoClip {
        self
    }

    fn trim_items(&self, a: i64, b: i64) -> Result<Self, ModuleError> {
        trim_clip(self, a, b)
    }
}

impl Frames for CropClip {
    fn video_id(&self) -> &str {
        &self.parent.source().video_id
    }

    fn targets(&self) -> Vec<(u64, Option<BBox>)> {
        self.crops.iter().map(|c| (c.frame.index, Some(c.bbox))).collect()
    }

    fn keep(&self, positions: &[usize]) -> Self {
        CropClip { parent: self.parent.clone(), crops: positions.iter().map(|&p| self.crops[p].clone()).collect() }
    }

    fn parent_clip(&self) -> &VideoClip {
        &self.parent
    }

    fn trim_items(&self, a: i64, b: i64) -> Result<Self, ModuleError> {
        self.trim(a, b)
    }

    fn as_crops(&self) -> Option<&CropClip> {
        Some(self)
    }
}

/// Lowercase, trim, collapse whitespace and drop trailing punctuation.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let joined = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    joined.trim_end_matches(|c: char| matches!(c, '.' | '!' | '?' | ',' | ';' | ':')).trim_end().to_owned()
}

fn non_empty(op: &str, what: &str, value: &str) -> Result<(), ModuleError> {
    if value.trim().is_empty() {
        return Err(ModuleError::InvalidArgument { op: op.into(), message: format!("{what} must not be empty") });
    }
    Ok(())
}

/// Items for which the yes/no `property` is answered with a leading "yes".
pub fn filter_property<V: Frames>(session: &Session, v: &V, property: &str) -> Result<V, ModuleError> {
    const OP: &str = "filter_property";
    non_empty(OP, "property", property)?;
    let targets = v.targets();
    let requests: Vec<_> = targets
        .iter()
        .map(|&(f, region)| CapabilityRequest::image_qa(v.video_id(), f, region, property))
        .collect();
    let responses = session.call_all(OP, &requests)?;
    let mut keep = Vec::new();
    for (pos, (resp, &(f, _))) in responses.into_iter().zip(&targets).enumerate() {
        if normalize_answer(&text(OP, Capability::ImageQa, Some(f), resp)?).starts_with("yes") {
            keep.push(pos);
        }
    }
    Ok(v.keep(&keep))
}

/// Items where `object` is detected at or above the session threshold.
pub fn filter_object<V: Frames>(session: &Session, v: &V, object: &str) -> Result<V, ModuleError> {
    filter_object_at(session, v, object, session.params.detect_threshold)
}

pub fn filter_object_at<V: Frames>(session: &Session, v: &V, object: &str, threshold: f64) -> Result<V, ModuleError> {
    const OP: &str = "filter_object";
    non_empty(OP, "object", object)?;
    let boxes = detect_each(session, OP, v, object)?;
    let keep: Vec<usize> = (0..boxes.len()).filter(|&p| boxes[p].iter().any(|b| b.score >= threshold)).collect();
    Ok(v.keep(&keep))
}

fn detect_each<V: Frames>(
    session: &Session,
    op: &str,
    v: &V,
    object: &str,
) -> Result<Vec<Vec<crate::gateway::ScoredBox>>, ModuleError> {
    let targets = v.targets();
    let requests: Vec<_> =
        targets.iter().map(|&(f, region)| CapabilityRequest::detect(v.video_id(), f, region, object)).collect();
    session
        .call_all(op, &requests)?
        .into_iter()
        .zip(&targets)
        .map(|(r, &(f, _))| {
            r.into_boxes().map_err(|error| ModuleError::Backend {
                op: op.into(),
                capability: Capability::Detect,
                frame: Some(f),
                error,
            })
        })
        .collect()
}

/// Every above-threshold detection of `object`, as crops.
pub fn find<V: Frames>(session: &Session, v: &V, object: &str) -> Result<CropClip, ModuleError> {
    const OP: &str = "find";
    non_empty(OP, "object", object)?;
    let boxes = detect_each(session, OP, v, object)?;
    let parent = v.parent_clip();
    let threshold = session.params.detect_threshold;
    let mut crops: Vec<Crop> = Vec::new();
    for ((f, _), found) in v.targets().into_iter().zip(boxes) {
        let frame = parent.source().frame(f);
        crops.extend(
            found
                .into_iter()
                .filter(|b| b.score >= threshold)
                .map(|b| Crop { frame: frame.clone(), bbox: b.bbox(), score: b.score }),
        );
    }
    crops.sort_by(|a, b| a.frame.index.cmp(&b.frame.index).then(b.score.total_cmp(&a.score)));
    Ok(CropClip::new(parent.clone(), crops))
}

/// Answers tallied in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CounterMap(Vec<(String, u64)>);

impl CounterMap {
    pub fn new() -> Self {
        CounterMap(Vec::new())
    }

    pub fn add(&mut self, key: &str) {
        match self.0.iter_mut().find(|(k, _)| k == key) {
            Some((_, n)) => *n += 1,
            None => self.0.push((key.to_owned(), 1)),
        }
    }

    pub fn get(&self, key: &str) -> Option<u64> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, n)| *n)
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|(_, n)| n).sum()
    }

    /// Highest count; ties go to the key inserted first.
    pub fn get_max_key(&self) -> Result<&str, ModuleError> {
        let mut best: Option<&(String, u64)> = None;
        for e in &self.0 {
            if best.is_none_or(|b| e.1 > b.1) {
                best = Some(e);
            }
        }
        best.map(|(k, _)| k.as_str()).ok_or(ModuleError::EmptyCounter)
    }
}

impl std::fmt::Display for CounterMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, (k, n)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}: {n}")?;
        }
        Ok(())
    }
}

/// Asks `query` of every item and tallies the normalized answers.
pub fn video_query<V: Frames>(session: &Session, v: &V, query: &str) -> Result<CounterMap, ModuleError> {
    const OP: &str = "video_query";
    non_empty(OP, "query", query)?;
    let targets = v.targets();
    if targets.is_empty() {
        return Err(ModuleError::EmptyClip { op: OP.into() });
    }
    let requests: Vec<_> =
        targets.iter().map(|&(f, region)| CapabilityRequest::image_qa(v.video_id(), f, region, query)).collect();
    let mut counts = CounterMap::new();
    for (resp, &(f, _)) in session.call_all(OP, &requests)?.into_iter().zip(&targets) {
        counts.add(&normalize_answer(&text(OP, Capability::ImageQa, Some(f), resp)?));
    }
    Ok(counts)
}

/// Caption of the item at position `index`.
pub fn get_caption<V: Frames>(session: &Session, v: &V, index: i64) -> Result<String, ModuleError> {
    const OP: &str = "get_caption";
    let targets = v.targets();
    if index < 0 || index as usize >= targets.len() {
        return Err(ModuleError::IndexOutOfRange { op: OP.into(), index, len: targets.len() });
    }
    let (f, region) = targets[index as usize];
    let resp = session.call_one(OP, CapabilityRequest::caption_image(v.video_id(), f, region))?;
    text(OP, Capability::CaptionImage, Some(f), resp)
}

/// Whole-video transcript: the source's sidecar if present, else TRANSCRIBE.
pub fn get_script(session: &Session, clip: &VideoClip) -> Result<String, ModuleError> {
    const OP: &str = "get_script";
    if let Some(t) = &clip.source().transcript {
        return Ok(t.clone());
    }
    if !session.supports(Capability::Transcribe) {
        return Err(ModuleError::NoTranscript);
    }
    match session.call_one(OP, CapabilityRequest::transcribe(clip.video_id())) {
        Ok(resp) => text(OP, Capability::Transcribe, None, resp),
        Err(ModuleError::Backend { error: BackendError::MockMiss { .. }, .. }) => Err(ModuleError::NoTranscript),
        Err(e) => Err(e),
    }
}

/// Detections of `object` per item, for tracking. Regions restrict the
/// search for crop collections.
pub fn detect_frames<V: Frames>(
    session: &Session,
    v: &V,
    object: &str,
    min_score: f64,
) -> Result<Vec<FrameDetections>, ModuleError> {
    const OP: &str = "track_objects";
    non_empty(OP, "object", object)?;
    let boxes = detect_each(session, OP, v, object)?;
    let mut frames: Vec<FrameDetections> = Vec::new();
    for ((f, _), found) in v.targets().into_iter().zip(boxes) {
        let dets = found
            .into_iter()
            .filter(|b| b.score >= min_score)
            .map(|b| Detection { frame: f, bbox: b.bbox(), score: b.score });
        match frames.last_mut() {
            Some(last) if last.frame == f => last.detections.extend(dets),
            _ => frames.push(FrameDetections { frame: f, detections: dets.collect() }),
        }
    }
    Ok(frames)
}

/// Crops regrouped into per-frame detections.
pub fn crops_as_detections(crops: &CropClip) -> Vec<FrameDetections> {
    let mut frames: Vec<FrameDetections> = Vec::new();
    for c in crops.crops() {
        let det = Detection { frame: c.frame.index, bbox: c.bbox, score: c.score };
        match frames.last_mut() {
            Some(last) if last.frame == det.frame => last.detections.push(det),
            _ => frames.push(FrameDetections { frame: det.frame, detections: vec![det] }),
        }
    }
    frames
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionChoice {
    /// 1-based.
    pub index: usize,
    pub rationale: String,
}

pub const REPROMPT_SUFFIX: &str = "Answer with the option number only.";

/// The chooser prompt: question, labeled context blocks, numbered options.
pub fn chooser_prompt(question: &str, context: &[(String, String)], options: &[String]) -> String {
    let mut p = String::from("Choose the option that best answers the question about a video.\n\n");
    p.push_str(&format!("Question: {}\n", question.trim()));
    if !context.is_empty() {
        p.push_str("\nContext:\n");
        for (label, body) in context {
            p.push_str(&format!("[{label}]\n{}\n", body.trim()));
        }
    }
    p.push_str("\nOptions:\n");
    for (i, o) in options.iter().enumerate() {
        p.push_str(&format!("{}. {}\n", i + 1, o.trim()));
    }
    p.push_str("\nReply with the number of the best option, then a brief reason.\n");
    p
}

/// Leading integer, optionally preceded by "option" and `#`.
pub fn parse_choice(response: &str, n_options: usize) -> Option<usize> {
    let mut s = response.trim_start();
    if s.len() >= 6 && s[..6].eq_ignore_ascii_case("option") {
        s = s[6..].trim_start();
    }
    s = s.strip_prefix('#').unwrap_or(s).trim_start();
    let digits: String = s.chars().take_while(|c| c.is_ascii_digit()).collect();
    let n: usize = digits.parse().ok()?;
    (1..=n_options).contains(&n).then_some(n)
}

/// Asks the language model to pick one of `options`; one reprompt on an
/// unparseable reply.
pub fn choose_option(
    session: &Session,
    video_id: Option<&str>,
    question: &str,
    context: &[(String, String)],
    options: &[String],
) -> Result<OptionChoice, ModuleError> {
    const OP: &str = "choose_option";
    if options.is_empty() {
        return Err(ModuleError::InvalidArgument { op: OP.into(), message: "options must not be empty".into() });
    }
    let prompt = chooser_prompt(question, context, options);
    let max_tokens = session.params.llm_max_tokens;
    let ask = |p: &str| -> Result<String, ModuleError> {
        let resp = session.call_one(OP, CapabilityRequest::llm(video_id, p, max_tokens))?;
        text(OP, Capability::LlmComplete, None, resp)
    };
    let first = ask(&prompt)?;
    if let Some(index) = parse_choice(&first, options.len()) {
        return Ok(OptionChoice { index, rationale: first });
    }
    let second = ask(&format!("{prompt}\n{REPROMPT_SUFFIX}\n"))?;
    match parse_choice(&second, options.len()) {
        Some(index) => Ok(OptionChoice { index, rationale: second }),
        None => Err(ModuleError::UnparseableChoice { response: second }),
    }
}

/// Positional trim that reports bad bounds as a module error.
pub fn trim_clip(clip: &VideoClip, a: i64, b: i64) -> Result<VideoClip, ModuleError> {
    trim(clip, a, b).map_err(|e| ModuleError::InvalidArgument { op: "trim".into(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use super::*;
    use crate::clip::{FrameSource, SourceVideo};
    use crate::gateway::mock::tests::ten_frame_world;
    use crate::gateway::mock::{LlmRule, MockBackend, MockWorld, RegionQa};
    use crate::gateway::ScoredBox;

    fn setup(world: MockWorld) -> (Gateway, VideoClip) {
        let source = Arc::new(world.source_video());
        let gw = Gateway::new(4).with_backend(Arc::new(MockBackend::new([world])));
        (gw, source.full_clip())
    }

    fn party_world(true_on: &[u64]) -> MockWorld {
        let mut w = ten_frame_world();
        for f in &mut w.frames {
            f.predicates.insert("is a party happening?".into(), true_on.contains(&f.index));
        }
        w
    }

    #[test]
    fn filter_property_matches_oracle() {
        let (gw, clip) = setup(party_world(&[2, 3, 4, 5]));
        let s = Session::new(&gw, PrimitiveParams::default());
        let out = filter_property(&s, &clip, "Is a party happening?").unwrap();
        assert_eq!(out.indices(), vec![2, 3, 4, 5]);
        let again = filter_property(&s, &out, "Is a party happening?").unwrap();
        assert_eq!(again, out);
        let (gw, clip) = setup(party_world(&[]));
        let s = Session::new(&gw, PrimitiveParams::default());
        assert!(filter_property(&s, &clip, "is a party happening?").unwrap().is_empty());
    }

    fn skier_world() -> MockWorld {
        let mut w = ten_frame_world();
        for f in &mut w.frames {
            f.objects.clear();
        }
        for i in [1, 4, 5] {
            w.frames[i].objects.insert(
                "skier".into(),
                vec![
                    ScoredBox { x1: 0.1, y1: 0.1, x2: 0.5, y2: 0.9, score: 0.8 },
                    ScoredBox { x1: 0.6, y1: 0.1, x2: 0.9, y2: 0.9, score: 0.9 },
                ],
            );
        }
        w.frames[7].objects.insert("skier".into(), vec![ScoredBox { x1: 0.1, y1: 0.1, x2: 0.2, y2: 0.2, score: 0.2 }]);
        w
    }

    #[test]
    fn filter_object_and_threshold() {
        let (gw, clip) = setup(skier_world());
        let s = Session::new(&gw, PrimitiveParams::default());
        assert_eq!(filter_object(&s, &clip, "skier").unwrap().indices(), vec![1, 4, 5]);
        assert!(filter_object(&s, &clip, "bear").unwrap().is_empty());
        assert!(filter_object_at(&s, &clip, "skier", 0.95).unwrap().is_empty());
        assert_eq!(filter_object_at(&s, &clip, "skier", 0.1).unwrap().indices(), vec![1, 4, 5, 7]);
    }

    #[test]
    fn find_orders_frame_major_by_score() {
        let (gw, clip) = setup(skier_world());
        let s = Session::new(&gw, PrimitiveParams::default());
        let crops = find(&s, &clip, "skier").unwrap();
        assert_eq!(crops.len(), 6);
        let order: Vec<(u64, f64)> = crops.crops().iter().map(|c| (c.frame.index, c.score)).collect();
        assert_eq!(order, vec![(1, 0.9), (1, 0.8), (4, 0.9), (4, 0.8), (5, 0.9), (5, 0.8)]);
        assert!(find(&s, &clip, "bear").unwrap().is_empty());
    }

    #[test]
    fn single_detection_passes_through() {
        let (gw, clip) = setup(ten_frame_world());
        let s = Session::new(&gw, PrimitiveParams::default());
        let crops = find(&s, &clip, "skier").unwrap();
        assert_eq!(crops.len(), 1);
        assert_eq!(crops.crops()[0].bbox, BBox::new(0.1, 0.1, 0.5, 0.9));
        assert_eq!(crops.crops()[0].score, 0.8);
    }

    #[test]
    fn video_query_tallies_in_order() {
        let mut w = ten_frame_world();
        let answers = ["dog", "Dog", "cat", "Red.", "red", "dog", "cat", "red!", "  DOG ", "cat"];
        for (f, a) in w.frames.iter_mut().zip(answers) {
            f.qa.insert("what is it?".into(), a.into());
        }
        let (gw, clip) = setup(w);
        let s = Session::new(&gw, PrimitiveParams::default());
        let counts = video_query(&s, &clip, "What is it?").unwrap();
        assert_eq!(counts.entries(), &[("dog".into(), 4), ("cat".into(), 3), ("red".into(), 3)]);
        assert_eq!(counts.total(), 10);
        let one = video_query(&s, &trim_clip(&clip, 3, 4).unwrap(), "What is it?").unwrap();
        assert_eq!(one.entries(), &[("red".into(), 1)]);
        let empty = trim_clip(&clip, 0, 0).unwrap();
        assert_eq!(video_query(&s, &empty, "What is it?").unwrap_err(), ModuleError::EmptyClip { op: "video_query".into() });
    }

    #[test]
    fn get_max_key_ties_and_empty() {
        let mut c = CounterMap::new();
        for k in ["yes", "no", "yes", "yes"] {
            c.add(k);
        }
        assert_eq!(c.get_max_key().unwrap(), "yes");
        let mut c = CounterMap::new();
        for k in ["red", "blue", "blue", "red"] {
            c.add(k);
        }
        assert_eq!(c.get_max_key().unwrap(), "red");
        assert_eq!(CounterMap::new().get_max_key(), Err(ModuleError::EmptyCounter));
    }

    #[test]
    fn region_queries_use_crop_tables() {
        let mut w = skier_world();
        let region = BBox::new(0.1, 0.1, 0.5, 0.9);
        for f in &mut w.frames {
            f.qa.insert("what color is this jacket?".into(), "white".into());
        }
        for i in [1, 4, 5] {
            w.frames[i].region_qa.push(RegionQa {
                region,
                predicates: BTreeMap::new(),
                qa: [("what color is this jacket?".to_owned(), "black".to_owned())].into(),
            });
        }
        let (gw, clip) = setup(w.normalized().unwrap());
        let s = Session::new(&gw, PrimitiveParams::default());
        let crops = find(&s, &clip, "skier").unwrap();
        let counts = video_query(&s, &crops, "What color is this jacket?").unwrap();
        assert_eq!(counts.entries(), &[("white".into(), 3), ("black".into(), 3)]);
        let log = s.take_calls();
        assert!(log.iter().filter(|c| c.capability == Capability::ImageQa).all(|c| c.summary.contains("(crop)")));
    }

    #[test]
    fn captions_by_position() {
        let (gw, clip) = setup(ten_frame_world());
        let s = Session::new(&gw, PrimitiveParams::default());
        assert_eq!(get_caption(&s, &clip, 5).unwrap(), "frame 5");
        assert!(matches!(get_caption(&s, &clip, 10), Err(ModuleError::IndexOutOfRange { index: 10, len: 10, .. })));
        let nine = trim_clip(&clip, 1, 10).unwrap();
        assert_eq!(get_caption(&s, &nine, nine.num_frames() as i64 / 2).unwrap(), "frame 5");
    }

    #[test]
    fn script_sources() {
        let (gw, clip) = setup(ten_frame_world());
        let s = Session::new(&gw, PrimitiveParams::default());
        assert_eq!(get_script(&s, &clip).unwrap(), "How was your day?");

        let empty = Gateway::new(1);
        let s = Session::new(&empty, PrimitiveParams::default());
        let sidecar = SourceVideo::new("x", crate::clip::Fps::integer(1).unwrap(), 2, FrameSource::MockWorld)
            .unwrap()
            .with_transcript(Some("hello".into()));
        assert_eq!(get_script(&s, &Arc::new(sidecar).full_clip()).unwrap(), "hello");
        assert_eq!(get_script(&s, &clip), Err(ModuleError::NoTranscript));
        assert_eq!(s.calls_requested(), 0);
    }

    fn chooser_world(responses: &[&str]) -> MockWorld {
        let mut w = ten_frame_world();
        w.llm = responses
            .iter()
            .enumerate()
            .map(|(i, r)| LlmRule {
                contains: if i == 0 { vec![] } else { vec![REPROMPT_SUFFIX.into()] },
                prompt_sha256: None,
                response: (*r).into(),
            })
            .rev()
            .collect();
        w
    }

    #[test]
    fn chooser_parses_leading_number() {
        let opts: Vec<String> = ["a", "b", "c", "d", "e"].map(String::from).to_vec();
        for (reply, want) in [("2", 2), ("Option 3: because it is", 3), ("option #5", 5)] {
            let (gw, _) = setup(chooser_world(&[reply]));
            let s = Session::new(&gw, PrimitiveParams::default());
            let c = choose_option(&s, Some("w10"), "which?", &[], &opts).unwrap();
            assert_eq!(c.index, want);
            assert_eq!(c.rationale, reply);
        }
        let (gw, _) = setup(chooser_world(&["banana", "banana"]));
        let s = Session::new(&gw, PrimitiveParams::default());
        let err = choose_option(&s, Some("w10"), "which?", &[], &opts).unwrap_err();
        assert_eq!(err, ModuleError::UnparseableChoice { response: "banana".into() });
        assert_eq!(s.calls_requested(), 2);
        let (gw, _) = setup(chooser_world(&["banana", "4"]));
        let s = Session::new(&gw, PrimitiveParams::default());
        assert_eq!(choose_option(&s, Some("w10"), "which?", &[], &opts).unwrap().index, 4);
    }

    #[test]
    fn chooser_prompt_layout() {
        let p = chooser_prompt("why?", &[("caption".into(), "a bear".into())], &["x".into(), "y".into()]);
        assert!(p.contains("Question: why?\n"));
        assert!(p.contains("[caption]\na bear\n"));
        assert!(p.contains("1. x\n2. y\n"));
    }

    #[test]
    fn call_budget_counts_requests() {
        let (gw, clip) = setup(ten_frame_world());
        let s = Session::new(&gw, PrimitiveParams::default()).with_call_limit(15);
        filter_property(&s, &clip, "is a party happening?").unwrap();
        let err = filter_property(&s, &clip, "is a party happening?").unwrap_err();
        assert_eq!(err, ModuleError::CallBudget { limit: 15 });
        assert_eq!(s.take_calls().len(), 10);
    }

    #[test]
    fn backend_failure_names_frame() {
        let (gw, clip) = setup(ten_frame_world());
        let s = Session::new(&gw, PrimitiveParams::default());
        let err = video_query(&s, &clip, "how many?").unwrap_err();
        assert!(matches!(err, ModuleError::Backend { frame: Some(0), capability: Capability::ImageQa, .. }), "{err}");
    }

    #[test]
    fn answer_normalization() {
        assert_eq!(normalize_answer("Red."), "red");
        assert_eq!(normalize_answer("  Yes, she is!  "), "yes, she is");
        assert_eq!(normalize_answer("a   big\tdog?!"), "a big dog");
    }
}
