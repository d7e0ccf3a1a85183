//! Frames, source videos and clips.
//!
//! A [`VideoClip`] is an immutable window over a [`SourceVideo`]: half-open
//! source bounds plus the ordered list of frames that survived any filtering.
//! The engine never decodes video; frames are either symbolic (resolved by a
//! mock world) or pre-extracted image files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, thiserror::Error)]
pub enum ClipError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("frame directory {path}: {message}")]
    FrameDir { path: PathBuf, message: String },
}

/// Frames per second as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fps(Ratio<u64>);

impl Fps {
    pub fn new(num: u64, den: u64) -> Result<Self, ClipError> {
        if num == 0 || den == 0 {
            return Err(ClipError::InvalidArgument(format!("fps must be positive, got {num}/{den}")));
        }
        Ok(Fps(Ratio::new(num, den)))
    }

    pub fn integer(fps: u64) -> Result<Self, ClipError> {
        Self::new(fps, 1)
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn as_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    pub fn ratio(&self) -> Ratio<u64> {
        self.0
    }
}

impl fmt::Display for Fps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl FromStr for Fps {
    type Err = ClipError;

    /// Accepts `30`, `30000/1001` or a decimal such as `29.97`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || ClipError::InvalidArgument(format!("unparseable fps {s:?}"));
        if let Some((n, d)) = s.split_once('/') {
            let n = n.trim().parse().map_err(|_| bad())?;
            let d = d.trim().parse().map_err(|_| bad())?;
            return Fps::new(n, d);
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let den = 10u64.pow(frac.len() as u32);
            let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
            let frac: u64 = frac.parse().map_err(|_| bad())?;
            let num = int.checked_mul(den).and_then(|v| v.checked_add(frac)).ok_or_else(bad)?;
            return Fps::new(num, den);
        }
        Fps::new(s.parse().map_err(|_| bad())?, 1)
    }
}

impl Serialize for Fps {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.denom() == 1 {
            serializer.serialize_u64(self.numer())
        } else {
            serializer.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Fps {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Float(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(deserializer)? {
            Raw::Int(n) => Fps::integer(n),
            // Go through the shortest decimal form so 29.97 becomes 2997/100.
            Raw::Float(x) => format!("{x}").parse(),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FramePayload {
    Symbolic,
    ImageFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FrameRef {
    pub video_id: Arc<str>,
    pub index: u64,
    /// Exact `index / fps`.
    pub timestamp: Ratio<u64>,
    pub payload: FramePayload,
}

impl FrameRef {
    pub fn timestamp_s(&self) -> f64 {
        *self.timestamp.numer() as f64 / *self.timestamp.denom() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameSource {
    /// `<dir>/%06d.<ext>`
    Directory { dir: PathBuf, ext: String },
    MockWorld,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceVideo {
    pub video_id: Arc<str>,
    pub fps: Fps,
    pub frame_count: u64,
    pub frame_source: FrameSource,
    pub transcript: Option<String>,
}

/// Sidecar `metadata.json` inside a frame directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameDirMetadata {
    pub fps: Fps,
    pub frame_count: u64,
    #[serde(default = "default_ext")]
    pub ext: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

fn default_ext() -> String {
    "jpg".to_owned()
}

impl SourceVideo {
    pub fn new(
        video_id: impl Into<Arc<str>>,
        fps: Fps,
        frame_count: u64,
        frame_source: FrameSource,
    ) -> Result<Self, ClipError> {
        if frame_count == 0 {
            return Err(ClipError::InvalidArgument("frame_count must be at least 1".into()));
        }
        Ok(SourceVideo {
            video_id: video_id.into(),
            fps,
            frame_count,
            frame_source,
            transcript: None,
        })
    }

    pub fn with_transcript(mut self, transcript: Option<String>) -> Self {
        self.transcript = transcript;
        self
    }

    /// Opens `<video_id>/` containing `metadata.json` and `%06d.<ext>` frames.
    /// The directory name is the video id.
    pub fn from_frame_dir(dir: &Path) -> Result<Self, ClipError> {
        let fail = |message: String| ClipError::FrameDir { path: dir.to_path_buf(), message };
        if !dir.is_dir() {
            return Err(fail("not a directory".into()));
        }
        let meta_path = dir.join("metadata.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| fail(format!("metadata.json: {e}")))?;
        let meta: FrameDirMetadata =
            serde_json::from_str(&text).map_err(|e| fail(format!("metadata.json: {e}")))?;
        let video_id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| fail("directory name is not valid UTF-8".into()))?
            .to_owned();
        let source = FrameSource::Directory { dir: dir.to_path_buf(), ext: meta.ext.clone() };
        for i in 0..meta.frame_count {
            let p = frame_path(dir, i, &meta.ext);
            if !p.is_file() {
                return Err(fail(format!("missing frame file {}", p.display())));
            }
        }
        Ok(SourceVideo::new(video_id, meta.fps, meta.frame_count, source)?.with_transcript(meta.transcript))
    }

    pub fn duration(&self) -> Ratio<u64> {
        Ratio::new(self.frame_count * self.fps.denom(), self.fps.numer())
    }

    pub fn duration_s(&self) -> f64 {
        let d = self.duration();
        *d.numer() as f64 / *d.denom() as f64
    }

    pub fn frame(&self, index: u64) -> FrameRef {
        debug_assert!(index < self.frame_count);
        let payload = match &self.frame_source {
            FrameSource::Directory { dir, ext } => FramePayload::ImageFile { path: frame_path(dir, index, ext) },
            FrameSource::MockWorld => FramePayload::Symbolic,
        };
        FrameRef {
            video_id: self.video_id.clone(),
            index,
            timestamp: Ratio::new(index * self.fps.denom(), self.fps.numer()),
            payload,
        }
    }

    /// Clip covering every frame of the video.
    pub fn full_clip(self: &Arc<Self>) -> VideoClip {
        VideoClip {
            source: self.clone(),
            start: 0,
            end: self.frame_count,
            frames: (0..self.frame_count).map(|i| self.frame(i)).collect(),
        }
    }
}

pub fn frame_path(dir: &Path, index: u64, ext: &str) -> PathBuf {
    dir.join(format!("{index:06}.{ext}"))
}

/// An ordered window of frames over a source video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoClip {
    source: Arc<SourceVideo>,
    start: u64,
    end: u64,
    frames: Arc<[FrameRef]>,
}

impl VideoClip {
    /// Builds a clip from an explicit frame list. Frames must belong to
    /// `source`, be strictly increasing and lie within `[start, end)`.
    pub fn from_frames(
        source: Arc<SourceVideo>,
        start: u64,
        end: u64,
        frames: Vec<FrameRef>,
    ) -> Result<Self, ClipError> {
        if start > end || end > source.frame_count {
            return Err(ClipError::InvalidArgument(format!(
                "bounds [{start}, {end}) outside video of {} frames",
                source.frame_count
            )));
        }
        if frames.windows(2).any(|w| w[0].index >= w[1].index) {
            return Err(ClipError::InvalidArgument("frames must be strictly increasing".into()));
        }
        if frames.iter().any(|f| f.index < start || f.index >= end || f.video_id != source.video_id) {
            return Err(ClipError::InvalidArgument("frame outside clip bounds".into()));
        }
        Ok(VideoClip { source, start, end, frames: frames.into() })
    }

    pub fn source(&self) -> &Arc<SourceVideo> {
        &self.source
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn end(&self) -> u64 {
        self.end
    }

    pub fn frames(&self) -> &[FrameRef] {
        &self.frames
    }

    pub fn indices(&self) -> Vec<u64> {
        self.frames.iter().map(|f| f.index).collect()
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Keeps the frames at the given positions (ascending), preserving bounds.
    pub fn retain_positions(&self, keep: &[usize]) -> VideoClip {
        let frames: Vec<FrameRef> = keep.iter().map(|&p| self.frames[p].clone()).collect();
        VideoClip { source: self.source.clone(), start: self.start, end: self.end, frames: frames.into() }
    }
}

/// Uniformly samples `n` frames: index `floor(i * frame_count / n)` for
/// `i in 0..n`, deduplicated in order.
pub fn sample_uniform(source: &Arc<SourceVideo>, n: usize) -> Result<VideoClip, ClipError> {
    if n == 0 {
        return Err(ClipError::InvalidArgument("sample count must be at least 1".into()));
    }
    let total = source.frame_count as u128;
    let mut frames: Vec<FrameRef> = Vec::with_capacity(n.min(source.frame_count as usize));
    for i in 0..n as u128 {
        let index = (i * total / n as u128) as u64;
        if frames.last().is_some_and(|f| f.index == index) {
            continue;
        }
        frames.push(source.frame(index));
    }
    Ok(VideoClip { source: source.clone(), start: 0, end: source.frame_count, frames: frames.into() })
}

/// Positional half-open slice `[a, b)` of the clip's frame list.
///
/// The new bounds run from the first retained frame to one past the last;
/// an empty result collapses to `[s, s)` at the position's source index.
pub fn trim(clip: &VideoClip, a: i64, b: i64) -> Result<VideoClip, ClipError> {
    let n = clip.num_frames() as i64;
    if a < 0 || b < a || b > n {
        return Err(ClipError::InvalidArgument(format!(
            "trim({a}, {b}) out of range for clip of {n} frames"
        )));
    }
    let (a, b) = (a as usize, b as usize);
    let frames: Vec<FrameRef> = clip.frames[a..b].to_vec();
    let (start, end) = match (frames.first(), frames.last()) {
        (Some(first), Some(last)) => (first.index, last.index + 1),
        _ => {
            let anchor = clip.frames.get(a).map_or(clip.end, |f| f.index);
            (anchor, anchor)
        }
    };
    Ok(VideoClip { source: clip.source.clone(), start, end, frames: frames.into() })
}

pub fn clip_len(clip: &VideoClip) -> usize {
    clip.num_frames()
}
