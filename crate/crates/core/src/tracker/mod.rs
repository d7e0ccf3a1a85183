//! Two-stage tracking-by-association.
//!
//! Each frame, existing tracks are predicted forward with a constant-velocity
//! Kalman filter and matched to high-confidence detections by `1 - IoU`
//! cost. Tracks left over then get a second chance against low-confidence
//! detections, which keeps identities alive through brief confidence dips.

mod assign;
mod kalman;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

pub use assign::{assign, Assignment};
pub use kalman::{KalmanFilter, KalmanState};

use crate::gateway::BBox;

/// Intersection over union; 0 when either box is degenerate.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 || !union.is_finite() {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u64,
    pub bbox: BBox,
    pub score: f64,
}

/// All detections for one frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame: u64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    pub high_threshold: f64,
    pub low_threshold: f64,
    /// Minimum IoU for a track/detection pair to be matched.
    pub match_gate: f64,
    /// Frames a track may go unmatched before removal.
    pub max_age: u32,
    /// Consecutive matches before a tentative track is activated.
    pub min_hits: u32,
    pub min_track_len: usize,
    pub second_stage: bool,
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        let kf = KalmanFilter::default();
        TrackerParams {
            high_threshold: 0.6,
            low_threshold: 0.1,
            match_gate: 0.2,
            max_age: 30,
            min_hits: 3,
            min_track_len: 5,
            second_stage: true,
            std_weight_position: kf.std_weight_position,
            std_weight_velocity: kf.std_weight_velocity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tentative,
    Active,
    Lost,
    Removed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionState {
    pub cx: f64,
    pub cy: f64,
    pub aspect: f64,
    pub height: f64,
    pub vx: f64,
    pub vy: f64,
    pub vaspect: f64,
    pub vheight: f64,
    /// Trace of the state covariance.
    pub uncertainty: f64,
}

impl MotionState {
    fn from_kalman(s: &KalmanState) -> Self {
        let m = &s.mean;
        MotionState {
            cx: m[0],
            cy: m[1],
            aspect: m[2],
            height: m[3],
            vx: m[4],
            vy: m[5],
            vaspect: m[6],
            vheight: m[7],
            uncertainty: s.covariance.trace(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackBox {
    pub frame: u64,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: u64,
    pub boxes: Vec<TrackBox>,
    pub state: MotionState,
    pub status: TrackStatus,
    pub frames_since_update: u32,
}

impl Track {
    pub fn first_frame(&self) -> u64 {
        self.boxes.first().map_or(0, |b| b.frame)
    }

    pub fn last_frame(&self) -> u64 {
        self.boxes.last().map_or(0, |b| b.frame)
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackerError {
    #[error("frames must be strictly increasing: {previous} then {next}")]
    UnorderedFrames { previous: u64, next: u64 },
}

struct LiveTrack {
    id: Option<u64>,
    boxes: Vec<TrackBox>,
    kalman: KalmanState,
    status: TrackStatus,
    frames_since_update: u32,
    hits: u32,
    predicted: BBox,
}

/// Frame-by-frame tracker state.
pub struct Tracker {
    params: TrackerParams,
    kf: KalmanFilter,
    tracks: Vec<LiveTrack>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Self {
        let kf = KalmanFilter {
            std_weight_position: params.std_weight_position,
            std_weight_velocity: params.std_weight_velocity,
        };
        Tracker { params, kf, tracks: Vec::new(), next_id: 1, last_frame: None }
    }

    /// Predicted boxes of live tracks, keyed by track id (tentative tracks
    /// have none and are skipped).
    pub fn predictions(&self) -> Vec<(u64, BBox)> {
        self.tracks
            .iter()
            .filter(|t| t.status != TrackStatus::Removed)
            .filter_map(|t| t.id.map(|id| (id, t.predicted)))
            .collect()
    }

    pub fn step(&mut self, frame: &FrameDetections) -> Result<(), TrackerError> {
        if let Some(prev) = self.last_frame {
            if frame.frame <= prev {
                return Err(TrackerError::UnorderedFrames { previous: prev, next: frame.frame });
            }
        }
        self.last_frame = Some(frame.frame);
        let p = self.params;

        for t in self.tracks.iter_mut().filter(|t| t.status != TrackStatus::Removed) {
            self.kf.predict(&mut t.kalman);
            t.predicted = self.kf.bbox(&t.kalman);
        }

        let dets = &frame.detections;
        let high: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].score >= p.high_threshold).collect();
        let low: Vec<usize> =
            (0..dets.len()).filter(|&i| dets[i].score >= p.low_threshold && dets[i].score < p.high_threshold).collect();

        let pool: Vec<usize> = self.live(&[TrackStatus::Active, TrackStatus::Lost]);
        let tentative: Vec<usize> = self.live(&[TrackStatus::Tentative]);
        let mut matched_tracks = Vec::new();

        let (m1, _, high_left) = self.associate(&pool, &high, dets);
        matched_tracks.extend(m1.iter().map(|&(t, _)| t));
        let pool_left: Vec<usize> = pool.iter().copied().filter(|t| !matched_tracks.contains(t)).collect();
        let mut matches = m1;

        if p.second_stage {
            let active_left: Vec<usize> =
                pool_left.iter().copied().filter(|&t| self.tracks[t].status == TrackStatus::Active).collect();
            let (m2, _, _) = self.associate(&active_left, &low, dets);
            matched_tracks.extend(m2.iter().map(|&(t, _)| t));
            matches.extend(m2);
        }

        let (m3, tentative_left, high_left) = self.associate(&tentative, &high_left, dets);
        matched_tracks.extend(m3.iter().map(|&(t, _)| t));
        matches.extend(m3);

        for (t, d) in matches {
            self.apply_match(t, &dets[d]);
        }
        for t in tentative_left {
            self.tracks[t].status = TrackStatus::Removed;
        }
        for t in pool_left.into_iter().filter(|t| !matched_tracks.contains(t)) {
            let track = &mut self.tracks[t];
            track.frames_since_update += 1;
            track.status = if track.frames_since_update >= p.max_age { TrackStatus::Removed } else { TrackStatus::Lost };
        }
        for d in high_left {
            let det = dets[d];
            let kalman = self.kf.initiate(&det.bbox);
            let mut track = LiveTrack {
                id: None,
                boxes: vec![TrackBox { frame: det.frame, bbox: det.bbox, score: det.score }],
                kalman,
                status: TrackStatus::Tentative,
                frames_since_update: 0,
                hits: 1,
                predicted: det.bbox,
            };
            if p.min_hits <= 1 {
                track.id = Some(self.next_id);
                self.next_id += 1;
                track.status = TrackStatus::Active;
            }
            self.tracks.push(track);
        }
        Ok(())
    }

    fn live(&self, statuses: &[TrackStatus]) -> Vec<usize> {
        (0..self.tracks.len()).filter(|&i| statuses.contains(&self.tracks[i].status)).collect()
    }

    /// Gated optimal matching of `tracks` to `cands`. Returns matched
    /// (track, detection) pairs and the unmatched tracks and detections.
    fn associate(
        &self,
        tracks: &[usize],
        cands: &[usize],
        dets: &[Detection],
    ) -> (Vec<(usize, usize)>, Vec<usize>, Vec<usize>) {
        let cost: Vec<Vec<f64>> = tracks
            .iter()
            .map(|&t| cands.iter().map(|&d| 1.0 - iou(&self.tracks[t].predicted, &dets[d].bbox)).collect())
            .collect();
        if tracks.is_empty() || cands.is_empty() {
            return (vec![], tracks.to_vec(), cands.to_vec());
        }
        let a = assign(&cost, 1.0 - self.params.match_gate);
        (
            a.pairs.iter().map(|&(r, c)| (tracks[r], cands[c])).collect(),
            a.unmatched_rows.iter().map(|&r| tracks[r]).collect(),
            a.unmatched_cols.iter().map(|&c| cands[c]).collect(),
        )
    }

    fn apply_match(&mut self, t: usize, det: &Detection) {
        let min_hits = self.params.min_hits;
        let track = &mut self.tracks[t];
        self.kf.update(&mut track.kalman, &det.bbox);
        track.boxes.push(TrackBox { frame: det.frame, bbox: det.bbox, score: det.score });
        track.frames_since_update = 0;
        track.hits += 1;
        match track.status {
            TrackStatus::Tentative if track.hits >= min_hits => {
                track.id = Some(self.next_id);
                self.next_id += 1;
                track.status = TrackStatus::Active;
            }
            TrackStatus::Lost => track.status = TrackStatus::Active,
            _ => {}
        }
    }

    /// Activated tracks with at least `min_track_len` boxes, by id.
    pub fn finish(self) -> Vec<Track> {
        let min_len = self.params.min_track_len;
        let mut out: Vec<Track> = self
            .tracks
            .into_iter()
            .filter_map(|t| {
                let id = t.id?;
                (t.boxes.len() >= min_len).then(|| Track {
                    track_id: id,
                    state: MotionState::from_kalman(&t.kalman),
                    boxes: t.boxes,
                    status: t.status,
                    frames_since_update: t.frames_since_update,
                })
            })
            .collect();
        out.sort_by_key(|t| t.track_id);
        out
    }
}

pub fn track_objects(frames: &[FrameDetections], params: &TrackerParams) -> Result<Vec<Track>, TrackerError> {
    let mut tracker = Tracker::new(*params);
    for f in frames {
        tracker.step(f)?;
    }
    Ok(tracker.finish())
}

/// One line of the track export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackExportLine {
    pub track_id: u64,
    pub frame: u64,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

/// Writes one JSON line per (track, frame, box, score).
pub fn write_track_export<W: Write>(tracks: &[Track], mut out: W) -> io::Result<()> {
    for t in tracks {
        for b in &t.boxes {
            let line = TrackExportLine { track_id: t.track_id, frame: b.frame, bbox: b.bbox, score: b.score };
            writeln!(out, "{}", serde_json::to_string(&line)?)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub track_id: u64,
    pub first_frame: u64,
    pub last_frame: u64,
    pub length: usize,
}

pub fn summarize_tracks(tracks: &[Track]) -> Vec<TrackSummary> {
    tracks
        .iter()
        .map(|t| TrackSummary { track_id: t.track_id, first_frame: t.first_frame(), last_frame: t.last_frame(), length: t.len() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(f: u64, boxes: &[(BBox, f64)]) -> FrameDetections {
        FrameDetections {
            frame: f,
            detections: boxes.iter().map(|&(bbox, score)| Detection { frame: f, bbox, score }).collect(),
        }
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(3.0, 3.0, 4.0, 4.0)), 0.0);
        assert!((iou(&a, &BBox::new(1.0, 0.0, 3.0, 2.0)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn static_box_single_track() {
        let b = BBox::new(0.4, 0.4, 0.5, 0.6);
        let mut tracker = Tracker::new(TrackerParams::default());
        for f in 0..5 {
            tracker.step(&frame(f, &[(b, 0.9)])).unwrap();
            for (_, predicted) in tracker.predictions() {
                assert!(predicted.approx_eq(&b));
            }
        }
        let tracks = tracker.finish();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].track_id, 1);
        assert_eq!(tracks[0].boxes.iter().map(|b| b.frame).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn two_translating_boxes() {
        let frames: Vec<_> = (0..10u64)
            .map(|f| {
                let t = f as f64 * 0.02;
                frame(f, &[(BBox::new(0.1 + t, 0.1, 0.2 + t, 0.3), 0.9), (BBox::new(0.6, 0.5 + t * 0.5, 0.7, 0.7 + t * 0.5), 0.95)])
            })
            .collect();
        let tracks = track_objects(&frames, &TrackerParams::default()).unwrap();
        assert_eq!(tracks.len(), 2);
        for t in &tracks {
            assert_eq!(t.len(), 10);
            // identity consistency: every box of the track stays on one side
            let left = t.boxes[0].bbox.x1 < 0.5;
            assert!(t.boxes.iter().all(|b| (b.bbox.x1 < 0.5) == left));
        }
    }

    #[test]
    fn low_score_stage_bridges_confidence_dip() {
        let frames: Vec<_> = (0..16u64)
            .map(|f| {
                let t = f as f64 * 0.01;
                let score = if f == 6 || f == 7 { 0.3 } else { 0.9 };
                frame(f, &[(BBox::new(0.1 + t, 0.1, 0.3 + t, 0.4), score)])
            })
            .collect();
        let params = TrackerParams { max_age: 1, ..TrackerParams::default() };
        let with = track_objects(&frames, &params).unwrap();
        assert_eq!(with.len(), 1);
        assert_eq!(with[0].len(), 16);
        let without = track_objects(&frames, &TrackerParams { second_stage: false, ..params }).unwrap();
        assert_eq!(without.len(), 2, "{without:?}");
        assert_eq!(without[0].last_frame(), 5);
        assert_eq!(without[1].first_frame(), 8);
    }

    #[test]
    fn dropout_within_max_age_keeps_identity() {
        let frames: Vec<_> = (0..12u64)
            .map(|f| {
                let t = f as f64 * 0.01;
                let dets: &[(BBox, f64)] = if f == 5 || f == 6 { &[] } else { &[(BBox::new(0.1 + t, 0.1, 0.3 + t, 0.4), 0.9)] };
                frame(f, dets)
            })
            .collect();
        let tracks = track_objects(&frames, &TrackerParams::default()).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].len(), 10);
    }

    #[test]
    fn empty_and_unordered_input() {
        assert!(track_objects(&[], &TrackerParams::default()).unwrap().is_empty());
        let err = track_objects(&[frame(3, &[]), frame(2, &[])], &TrackerParams::default()).unwrap_err();
        assert_eq!(err, TrackerError::UnorderedFrames { previous: 3, next: 2 });
    }

    #[test]
    fn export_lines() {
        let b = BBox::new(0.4, 0.4, 0.5, 0.6);
        let frames: Vec<_> = (0..5).map(|f| frame(f, &[(b, 0.9)])).collect();
        let tracks = track_objects(&frames, &TrackerParams::default()).unwrap();
        let mut buf = Vec::new();
        write_track_export(&tracks, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        let first: TrackExportLine = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!((first.track_id, first.frame), (1, 0));
        assert_eq!(summarize_tracks(&tracks)[0], TrackSummary { track_id: 1, first_frame: 0, last_frame: 4, length: 5 });
    }
}
