use serde::{Deserialize, Serialize};

use crate::clip::{FramePayload, VideoClip};
use crate::primitives::{filter_property, ModuleError, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditMode {
    RemoveMatching,
    KeepMatching,
}

/// Half-open run of kept frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_frame: u64,
    pub end_frame: u64,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditResult {
    pub video_id: String,
    pub predicate: String,
    pub mode: EditMode,
    pub segments: Vec<Segment>,
    /// Kept frames: file paths, or `<video_id>#<index>` for symbolic frames.
    pub manifest: Vec<String>,
}

/// Maximal runs of `true` in `keep`, as half-open frame ranges.
pub fn segments_from_mask(keep: &[bool]) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &k) in keep.iter().chain(std::iter::once(&false)).enumerate() {
        match (k, start) {
            (true, None) => start = Some(i as u64),
            (false, Some(s)) => {
                out.push((s, i as u64));
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Asks the predicate of every frame in `clip` (which should cover the
/// whole video) and keeps or cuts the frames where it holds.
pub fn edit_video(session: &Session, clip: &VideoClip, predicate: &str, mode: EditMode) -> Result<EditResult, ModuleError> {
    if predicate.trim().is_empty() {
        return Err(ModuleError::InvalidArgument { op: "edit".into(), message: "empty predicate".into() });
    }
    let matching = filter_property(session, clip, predicate)?;
    let hit: std::collections::HashSet<u64> = matching.indices().into_iter().collect();
    let frames = clip.frames();
    let keep: Vec<bool> = frames.iter().map(|f| hit.contains(&f.index) == (mode == EditMode::KeepMatching)).collect();
    let fps = clip.source().fps;
    let to_s = |frame: u64| frame as f64 * fps.denom() as f64 / fps.numer() as f64;
    let segments = segments_from_mask(&keep)
        .into_iter()
        .map(|(a, b)| {
            let (start_frame, end_frame) = (frames[a as usize].index, frames[b as usize - 1].index + 1);
            Segment { start_frame, end_frame, start_s: to_s(start_frame), end_s: to_s(end_frame) }
        })
        .collect();
    let manifest = frames
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(f, _)| match &f.payload {
            FramePayload::ImageFile { path } => path.display().to_string(),
            FramePayload::Symbolic => format!("{}#{}", f.video_id, f.index),
        })
        .collect();
    Ok(EditResult { video_id: clip.source().video_id.to_string(), predicate: predicate.to_owned(), mode, segments, manifest })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::clip::Fps;
    use crate::gateway::mock::{MockBackend, MockFrame, MockWorld};
    use crate::gateway::Gateway;
    use crate::primitives::PrimitiveParams;

    fn world(truth: &[bool]) -> MockWorld {
        MockWorld {
            video_id: "e".into(),
            fps: Fps::integer(2).unwrap(),
            frame_count: truth.len() as u64,
            transcript: None,
            frames: truth
                .iter()
                .enumerate()
                .map(|(i, t)| MockFrame {
                    index: i as u64,
                    caption: Some("a room".into()),
                    predicates: [("Is someone on the phone?".to_owned(), *t)].into(),
                    ..Default::default()
                })
                .collect(),
            chunk_captions: vec![],
            llm: vec![],
        }
    }

    fn run(truth: &[bool], mode: EditMode) -> EditResult {
        let w = world(truth).normalized().unwrap();
        let clip = Arc::new(w.source_video()).full_clip();
        let gw = Gateway::new(2).with_backend(Arc::new(MockBackend::new([w])));
        let s = Session::new(&gw, PrimitiveParams::default());
        edit_video(&s, &clip, "Is someone on the phone?", mode).unwrap()
    }

    fn frames(r: &EditResult) -> Vec<(u64, u64)> {
        r.segments.iter().map(|s| (s.start_frame, s.end_frame)).collect()
    }

    #[test]
    fn remove_and_keep() {
        let truth: Vec<bool> = (0..10).map(|i| (3..=6).contains(&i)).collect();
        let removed = run(&truth, EditMode::RemoveMatching);
        assert_eq!(frames(&removed), vec![(0, 3), (7, 10)]);
        assert_eq!((removed.segments[1].start_s, removed.segments[1].end_s), (3.5, 5.0));
        assert_eq!(removed.manifest.len(), 6);
        assert_eq!(removed.manifest[0], "e#0");
        assert_eq!(frames(&run(&truth, EditMode::KeepMatching)), vec![(3, 7)]);
        assert_eq!(frames(&run(&[false; 10], EditMode::RemoveMatching)), vec![(0, 10)]);
        assert!(run(&[false; 10], EditMode::KeepMatching).segments.is_empty());
    }

    #[test]
    fn mask_runs() {
        assert_eq!(segments_from_mask(&[]), vec![]);
        assert_eq!(segments_from_mask(&[true, true, false, true]), vec![(0, 2), (3, 4)]);
    }
}
