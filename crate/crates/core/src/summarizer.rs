//! Long-video narrative: caption fixed-length chunks, then ask the language
//! model to fuse the timestamped captions into one paragraph.

use serde::{Deserialize, Serialize};

use crate::clip::SourceVideo;
use crate::gateway::{sha256_hex, Capability, CapabilityRequest};
use crate::primitives::{ModuleError, Session};

pub const CAPTION_UNAVAILABLE: &str = "[caption unavailable]";

/// Bumped whenever the aggregation wording changes.
pub const SUMMARY_TEMPLATE_VERSION: &str = "narrative-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryParams {
    pub chunk_ms: u64,
    pub max_tokens: u32,
    /// Prompts longer than this are refused rather than truncated.
    pub max_prompt_chars: usize,
}

impl Default for SummaryParams {
    fn default() -> Self {
        SummaryParams { chunk_ms: 1000, max_tokens: 512, max_prompt_chars: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkCaption {
    pub index: usize,
    pub start_frame: u64,
    pub end_frame: u64,
    pub start_s: f64,
    pub end_s: f64,
    pub caption: String,
    /// Set when the captioner failed and the sentinel was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeSummary {
    pub paragraph: String,
    pub chunk_count: usize,
    pub prompt_fingerprint: String,
}

/// Half-open frame ranges of `chunk_ms` each, tiling the video.
///
/// Boundary `i` is `floor(i * chunk_ms * fps / 1000)`, computed exactly on
/// the rational frame rate; the count is `ceil(duration / chunk)`.
pub fn chunk(video: &SourceVideo, chunk_ms: u64) -> Result<Vec<(u64, u64)>, ModuleError> {
    if chunk_ms == 0 {
        return Err(ModuleError::InvalidArgument { op: "chunk".into(), message: "chunk length must be positive".into() });
    }
    let (num, den) = (video.fps.numer() as u128, video.fps.denom() as u128);
    let n = video.frame_count as u128;
    let per = chunk_ms as u128 * num;
    let k = (n * den * 1000).div_ceil(per);
    let boundary = |i: u128| ((i * per) / (1000 * den)).min(n) as u64;
    Ok((0..k).map(|i| (boundary(i), if i + 1 == k { n as u64 } else { boundary(i + 1) })).collect())
}

fn seconds(video: &SourceVideo, chunk_ms: u64, i: usize) -> (f64, f64) {
    let start = i as f64 * chunk_ms as f64 / 1000.0;
    let end = ((i + 1) as f64 * chunk_ms as f64 / 1000.0).min(video.duration_s());
    (start, end)
}

/// Captions every chunk; failed chunks get the sentinel caption.
pub fn caption_chunks(
    session: &Session,
    video: &SourceVideo,
    chunks: &[(u64, u64)],
    chunk_ms: u64,
) -> Result<Vec<ChunkCaption>, ModuleError> {
    let requests: Vec<_> =
        chunks.iter().map(|&(a, b)| CapabilityRequest::caption_chunk(&video.video_id, a, b)).collect();
    let results = session.call_each(&requests)?;
    Ok(results
        .into_iter()
        .zip(chunks)
        .enumerate()
        .map(|(i, (result, &(start_frame, end_frame)))| {
            let (start_s, end_s) = seconds(video, chunk_ms, i);
            let (caption, error) = match result.and_then(|r| r.into_text()) {
                Ok(text) => (text, None),
                Err(e) => (CAPTION_UNAVAILABLE.to_owned(), Some(e.to_string())),
            };
            ChunkCaption { index: i, start_frame, end_frame, start_s, end_s, caption, error }
        })
        .collect())
}

/// One `[start - end] caption` line per chunk, in order.
pub fn caption_lines(captions: &[ChunkCaption]) -> String {
    captions
        .iter()
        .map(|c| format!("[{:.1}s - {:.1}s] {}\n", c.start_s, c.end_s, c.caption.trim()))
        .collect()
}

pub fn aggregation_prompt(captions: &[ChunkCaption]) -> String {
    format!(
        "Below are captions of consecutive short segments of one video, each with its time span.\n\
         Write a single paragraph telling what happens in the video, in order. Use one sentence \
         for every five seconds of video, merging neighbouring captions that describe the same \
         activity. Skip segments marked {CAPTION_UNAVAILABLE}.\n\n{}\nParagraph:",
        caption_lines(captions)
    )
}

pub fn summarize_captions(
    session: &Session,
    video_id: &str,
    captions: &[ChunkCaption],
    params: &SummaryParams,
) -> Result<NarrativeSummary, ModuleError> {
    if captions.is_empty() {
        return Err(ModuleError::SummaryFailed { reason: "no chunks to summarize".into() });
    }
    let prompt = aggregation_prompt(captions);
    if prompt.len() > params.max_prompt_chars {
        return Err(ModuleError::SummaryFailed {
            reason: format!("aggregation prompt of {} chars exceeds the limit of {}", prompt.len(), params.max_prompt_chars),
        });
    }
    let fingerprint = sha256_hex(format!("{SUMMARY_TEMPLATE_VERSION}\n{prompt}").as_bytes());
    let paragraph = session
        .call_one("get_summary", CapabilityRequest::llm(Some(video_id), &prompt, params.max_tokens))
        .and_then(|r| {
            r.into_text().map_err(|error| ModuleError::Backend {
                op: "get_summary".into(),
                capability: Capability::LlmComplete,
                frame: None,
                error,
            })
        })
        .map_err(|e| match e {
            ModuleError::Backend { error, .. } => ModuleError::SummaryFailed { reason: error.to_string() },
            other => other,
        })?;
    Ok(NarrativeSummary { paragraph: paragraph.trim().to_owned(), chunk_count: captions.len(), prompt_fingerprint: fingerprint })
}

/// Chunks, captions and summarizes the whole source video.
pub fn get_summary(
    session: &Session,
    video: &SourceVideo,
    params: &SummaryParams,
) -> Result<(NarrativeSummary, Vec<ChunkCaption>), ModuleError> {
    let chunks = chunk(video, params.chunk_ms)?;
    let captions = caption_chunks(session, video, &chunks, params.chunk_ms)?;
    let summary = summarize_captions(session, &video.video_id, &captions, params)?;
    Ok((summary, captions))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportChunk {
    pub start_s: f64,
    pub end_s: f64,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryExport {
    pub video_id: String,
    pub chunks: Vec<ExportChunk>,
    pub paragraph: String,
}

impl SummaryExport {
    pub fn new(video_id: &str, captions: &[ChunkCaption], summary: &NarrativeSummary) -> Self {
        SummaryExport {
            video_id: video_id.to_owned(),
            chunks: captions
                .iter()
                .map(|c| ExportChunk { start_s: c.start_s, end_s: c.end_s, caption: c.caption.clone() })
                .collect(),
            paragraph: summary.paragraph.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::clip::{FrameSource, Fps};
    use crate::gateway::mock::{ChunkCaptionEntry, LlmRule, MockBackend, MockFrame, MockWorld};
    use crate::gateway::Gateway;
    use crate::primitives::PrimitiveParams;

    fn video(fps: &str, frames: u64) -> SourceVideo {
        SourceVideo::new("v", fps.parse::<Fps>().unwrap(), frames, FrameSource::MockWorld).unwrap()
    }

    #[test]
    fn chunking_examples() {
        let c = chunk(&video("30", 360), 1000).unwrap();
        assert_eq!(c.len(), 12);
        assert!(c.iter().all(|&(a, b)| b - a == 30));
        let c = chunk(&video("30", 372), 1000).unwrap();
        assert_eq!(c.len(), 13);
        assert_eq!(c[12], (360, 372));
        assert_eq!(chunk(&video("30", 20), 1000).unwrap(), vec![(0, 20)]);
        let c = chunk(&video("30000/1001", 300), 1000).unwrap();
        assert_eq!(c.len(), 11);
        assert_eq!(c[1], (29, 59));
    }

    fn world(frames: u64, captions: &[&str]) -> MockWorld {
        MockWorld {
            video_id: "v".into(),
            fps: Fps::integer(10).unwrap(),
            frame_count: frames,
            transcript: None,
            frames: (0..frames).map(|i| MockFrame { index: i, caption: Some("x".into()), ..Default::default() }).collect(),
            chunk_captions: captions
                .iter()
                .enumerate()
                .map(|(i, c)| ChunkCaptionEntry { start_frame: i as u64 * 10, end_frame: (i as u64 + 1) * 10, caption: (*c).into() })
                .collect(),
            llm: vec![LlmRule { contains: vec!["Paragraph:".into()], prompt_sha256: None, response: " A person cooks. ".into() }],
        }
    }

    #[test]
    fn captions_in_order_with_sentinel() {
        let w = world(30, &["one", "two"]);
        let src = w.source_video();
        let gw = Gateway::new(2).with_backend(Arc::new(MockBackend::new([w])));
        let s = Session::new(&gw, PrimitiveParams::default());
        let chunks = chunk(&src, 1000).unwrap();
        let caps = caption_chunks(&s, &src, &chunks, 1000).unwrap();
        assert_eq!(caps.iter().map(|c| c.caption.as_str()).collect::<Vec<_>>(), vec!["one", "two", CAPTION_UNAVAILABLE]);
        assert!(caps[2].error.is_some());
        assert_eq!((caps[1].start_s, caps[1].end_s), (1.0, 2.0));
        let (summary, _) = get_summary(&s, &src, &SummaryParams::default()).unwrap();
        assert_eq!(summary.paragraph, "A person cooks.");
        assert_eq!(summary.chunk_count, 3);
    }

    #[test]
    fn prompt_has_one_line_per_chunk() {
        let caps: Vec<ChunkCaption> = (0..60)
            .map(|i| ChunkCaption {
                index: i,
                start_frame: 0,
                end_frame: 0,
                start_s: i as f64,
                end_s: i as f64 + 1.0,
                caption: format!("c{i}"),
                error: None,
            })
            .collect();
        let p = aggregation_prompt(&caps);
        assert_eq!(p.lines().filter(|l| l.starts_with('[') && l.contains("s - ")).count(), 60);
        assert_eq!(p, aggregation_prompt(&caps));
        assert!(p.contains("[59.0s - 60.0s] c59\n"));
    }

    #[test]
    fn failures() {
        let w = world(30, &["one", "two", "three"]);
        let gw = Gateway::new(2).with_backend(Arc::new(MockBackend::new([w]))).without(Capability::LlmComplete);
        let s = Session::new(&gw, PrimitiveParams::default());
        let err = summarize_captions(&s, "v", &[], &SummaryParams::default()).unwrap_err();
        assert!(matches!(err, ModuleError::SummaryFailed { .. }));
        let src = video("10", 30);
        let err = get_summary(&s, &src, &SummaryParams::default()).unwrap_err();
        assert!(matches!(err, ModuleError::SummaryFailed { .. }), "{err}");
    }
}
