use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use proviq_core::gateway::BBox;
use proviq_core::tracker::{assign, iou, track_objects, TrackerParams};
use proviq_testkit::{oracle, scenes};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bbox() -> impl Strategy<Value = BBox> {
    (0.0..0.9f64, 0.0..0.9f64, 0.01..0.5f64, 0.01..0.5f64).prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h))
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let ab = iou(&a, &b);
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn assignment_matches_exhaustive_search(seed in any::<u64>(), rows in 1usize..=6, cols in 1usize..=6, gated in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cost = scenes::cost_matrix(&mut rng, rows, cols);
        let gate = if gated { 0.6 } else { f64::INFINITY };
        let got = assign(&cost, gate);
        let (count, total) = oracle::best_assignment(&cost, gate);
        prop_assert_eq!(got.pairs.len(), count);
        prop_assert!((got.total_cost(&cost) - total).abs() < 1e-9, "{} vs {}", got.total_cost(&cost), total);
        let used_rows: HashSet<_> = got.pairs.iter().map(|p| p.0).collect();
        let used_cols: HashSet<_> = got.pairs.iter().map(|p| p.1).collect();
        prop_assert_eq!(used_rows.len(), got.pairs.len());
        prop_assert_eq!(used_cols.len(), got.pairs.len());
        prop_assert_eq!(got.unmatched_rows.len() + got.pairs.len(), rows);
        prop_assert_eq!(got.unmatched_cols.len() + got.pairs.len(), cols);
        prop_assert!(got.pairs.iter().all(|&(r, c)| cost[r][c] <= gate));
    }
}

fn score_scene(scene: &scenes::Scene, params: &TrackerParams) -> Result<(), String> {
    scenes::check_tracks(scene, &track_objects(&scene.frames, params).map_err(|e| e.to_string())?)
}

#[test]
fn synthetic_scenes_keep_identities() {
    let params = TrackerParams::default();
    for seed in 0..60u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 + (seed as usize % 4);
        let scene = scenes::tracking_scene(&mut rng, n, 50, 0.2);
        // The nearest-box oracle must itself recover the truth for this scene
        // to count as well separated.
        let labels = oracle::nearest_box_identities(&scene.frames);
        let mut map = HashMap::new();
        for (l, t) in labels.iter().flatten().zip(scene.identity.iter().flatten()) {
            assert_eq!(*map.entry(*l).or_insert(*t), *t, "seed {seed}: oracle disagrees with truth");
        }
        score_scene(&scene, &params).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

#[test]
fn low_score_stage_is_what_recovers_dropouts() {
    let mut failures = 0;
    for seed in 0..20u64 {
        let scene = scenes::tracking_scene(&mut ChaCha8Rng::seed_from_u64(seed), 3, 50, 0.2);
        let params = TrackerParams { second_stage: false, ..TrackerParams::default() };
        failures += score_scene(&scene, &params).is_err() as usize;
    }
    assert!(failures > 0, "dropouts never mattered; scenes are too easy");
}

#[test]
fn tracking_is_deterministic() {
    let scene = scenes::tracking_scene(&mut ChaCha8Rng::seed_from_u64(9), 4, 50, 0.2);
    let p = TrackerParams::default();
    assert_eq!(track_objects(&scene.frames, &p).unwrap(), track_objects(&scene.frames, &p).unwrap());
}
