use std::collections::{HashMap, HashSet};

use proviq_core::gateway::BBox;
use proviq_core::tracker::{Detection, FrameDetections, Track};
use rand::seq::SliceRandom;
use rand::Rng;

/// Detections for a multi-object scene, with the true identity of every
/// detection (`identity[frame][i]` belongs to `frames[frame].detections[i]`).
#[derive(Debug, Clone)]
pub struct Scene {
    pub objects: usize,
    pub frames: Vec<FrameDetections>,
    pub identity: Vec<Vec<usize>>,
}

const SIZE: f64 = 0.1;
const LANE: f64 = 0.18;
/// Frames at the start kept at full score so every track can activate.
const WARMUP: u64 = 4;

/// `objects` boxes (at most 5) moving at constant velocity in separate
/// horizontal lanes. Scores carry seeded noise; with probability
/// `dropout` a detection after warm-up drops to a low score instead.
/// Detection order within a frame is shuffled.
pub fn tracking_scene<R: Rng>(rng: &mut R, objects: usize, frames: u64, dropout: f64) -> Scene {
    assert!((1..=5).contains(&objects), "lanes fit at most 5 objects");
    let motion: Vec<(f64, f64, f64)> = (0..objects)
        .map(|i| {
            let x0 = rng.random_range(0.05..0.4);
            let vx = rng.random_range(-0.001..0.008);
            (x0, 0.05 + i as f64 * LANE, vx)
        })
        .collect();
    let mut out = Scene { objects, frames: Vec::new(), identity: Vec::new() };
    for f in 0..frames {
        let mut dets: Vec<(usize, Detection)> = motion
            .iter()
            .enumerate()
            .map(|(id, &(x0, y, vx))| {
                let jitter = rng.random_range(-0.002..0.002);
                let x = x0 + vx * f as f64 + jitter;
                let score = if f >= WARMUP && rng.random_bool(dropout) {
                    rng.random_range(0.2..0.5)
                } else {
                    rng.random_range(0.7..0.98)
                };
                (id, Detection { frame: f, bbox: BBox::new(x, y, x + SIZE, y + SIZE), score })
            })
            .collect();
        dets.shuffle(rng);
        out.identity.push(dets.iter().map(|d| d.0).collect());
        out.frames.push(FrameDetections { frame: f, detections: dets.into_iter().map(|d| d.1).collect() });
    }
    out
}

/// Random cost matrix with entries on a 0.05 grid in [0, 1], so ties occur.
pub fn cost_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| rng.random_range(0..=20) as f64 * 0.05).collect()).collect()
}

/// Checks `tracks` against the scene truth: no detection in two tracks,
/// increasing frames, no identity switches, and one full-length track per
/// object.
pub fn check_tracks(scene: &Scene, tracks: &[Track]) -> Result<(), String> {
    // (frame, box bits) -> true identity
    let key = |f: u64, b: &BBox| (f, b.x1.to_bits(), b.y1.to_bits());
    let mut truth = HashMap::new();
    for (fd, ids) in scene.frames.iter().zip(&scene.identity) {
        for (d, id) in fd.detections.iter().zip(ids) {
            truth.insert(key(fd.frame, &d.bbox), *id);
        }
    }
    let mut seen = HashSet::new();
    let mut owner: HashMap<usize, u64> = HashMap::new();
    for t in tracks {
        if !t.boxes.windows(2).all(|w| w[0].frame < w[1].frame) {
            return Err(format!("track {} frames not increasing", t.track_id));
        }
        for b in &t.boxes {
            let k = key(b.frame, &b.bbox);
            if !seen.insert(k) {
                return Err(format!("detection at frame {} in two tracks", b.frame));
            }
            let id = *truth.get(&k).ok_or("track box is not a detection")?;
            if let Some(prev) = owner.insert(id, t.track_id) {
                if prev != t.track_id {
                    return Err(format!("object {id} switched from track {prev} to {}", t.track_id));
                }
            }
        }
    }
    if owner.len() != scene.objects {
        return Err(format!("{} of {} objects tracked", owner.len(), scene.objects));
    }
    if tracks.len() != scene.objects {
        return Err(format!("{} tracks for {} objects", tracks.len(), scene.objects));
    }
    for t in tracks {
        if t.boxes.len() != scene.frames.len() {
            return Err(format!("track {} covers {} of {} frames", t.track_id, t.boxes.len(), scene.frames.len()));
        }
    }
    Ok(())
}
