use std::collections::BTreeMap;

use proviq_core::clip::Fps;
use proviq_core::gateway::mock::{MockFrame, MockWorld};
use proviq_core::gateway::ScoredBox;
use rand::seq::IndexedRandom;
use rand::Rng;

pub const PROPERTIES: &[&str] = &["is it raining?", "is a person running?"];
pub const OBJECTS: &[&str] = &["dog", "red car"];
pub const QUERY: &str = "what is the person doing?";

fn scored_box<R: Rng>(rng: &mut R, threshold: f64) -> ScoredBox {
    let (x, y) = (rng.random_range(0.0..0.8), rng.random_range(0.0..0.8));
    let (w, h) = (rng.random_range(0.05..0.2), rng.random_range(0.05..0.2));
    // Land exactly on the threshold now and then.
    let score = if rng.random_bool(0.1) { threshold } else { rng.random_range(0.0..1.0) };
    ScoredBox { x1: x, y1: y, x2: x + w, y2: y + h, score }
}

/// A world of `frames` frames with random predicate truth, zero to three
/// scored detections per object, and a `QUERY` answer drawn from `answers`.
/// Normalized and ready to load.
pub fn random_world<R: Rng>(rng: &mut R, video_id: &str, frames: u64, answers: &[&str], threshold: f64) -> MockWorld {
    let frames: Vec<MockFrame> = (0..frames)
        .map(|i| {
            let objects: BTreeMap<String, Vec<ScoredBox>> = OBJECTS
                .iter()
                .map(|o| (o.to_string(), (0..rng.random_range(0..=3)).map(|_| scored_box(rng, threshold)).collect()))
                .collect();
            MockFrame {
                index: i,
                caption: Some(format!("frame {i}")),
                objects,
                predicates: PROPERTIES.iter().map(|p| (p.to_string(), rng.random_bool(0.5))).collect(),
                qa: [(QUERY.to_owned(), answers.choose(rng).unwrap().to_string())].into(),
                region_qa: vec![],
            }
        })
        .collect();
    MockWorld {
        video_id: video_id.to_owned(),
        fps: Fps::integer(rng.random_range(1..=30)).unwrap(),
        frame_count: frames.len() as u64,
        transcript: None,
        frames,
        chunk_captions: vec![],
        llm: vec![],
    }
    .normalized()
    .expect("generated world is well formed")
}
