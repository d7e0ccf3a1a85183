use std::sync::Arc;

use proptest::prelude::*;
use proviq_core::clip::{clip_len, sample_uniform, trim, FrameSource, Fps, SourceVideo, VideoClip};
use proviq_core::gateway::mock::{MockBackend, MockWorld};
use proviq_core::gateway::{canonical_json, CapabilityRequest, Gateway, ResponseCache};
use proviq_core::primitives::{filter_object, filter_object_at, filter_property, video_query, PrimitiveParams, Session};
use proviq_testkit::worlds::{self, OBJECTS, PROPERTIES, QUERY};
use proviq_testkit::oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ANSWERS: &[&str] = &["running", "walking", "sitting", "jumping"];

fn world(seed: u64) -> MockWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..=60);
    worlds::random_world(&mut rng, "w", n, ANSWERS, PrimitiveParams::default().detect_threshold)
}

fn gateway(w: &MockWorld) -> Gateway {
    Gateway::new(4).with_backend(Arc::new(MockBackend::new([w.clone()])))
}

fn video(frames: u64) -> Arc<SourceVideo> {
    Arc::new(SourceVideo::new("v", Fps::integer(10).unwrap(), frames, FrameSource::MockWorld).unwrap())
}

fn is_subsequence(sub: &[u64], of: &[u64]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|x| it.any(|y| y == x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filters_equal_the_oracle(seed in any::<u64>()) {
        let w = world(seed);
        let gw = gateway(&w);
        let s = Session::new(&gw, PrimitiveParams::default());
        let clip = Arc::new(w.source_video()).full_clip();
        for p in PROPERTIES {
            prop_assert_eq!(filter_property(&s, &clip, p).unwrap().indices(), oracle::filter_property(&w, p));
        }
        for o in OBJECTS {
            prop_assert_eq!(filter_object(&s, &clip, o).unwrap().indices(), oracle::filter_object(&w, o, s.params.detect_threshold));
        }
    }

    #[test]
    fn filters_return_ordered_subsequences(seed in any::<u64>(), n in 1usize..40) {
        let w = world(seed);
        let gw = gateway(&w);
        let s = Session::new(&gw, PrimitiveParams::default());
        let clip = sample_uniform(&Arc::new(w.source_video()), n).unwrap();
        let input = clip.indices();
        let by_prop = filter_property(&s, &clip, PROPERTIES[0]).unwrap();
        prop_assert!(is_subsequence(&by_prop.indices(), &input));
        let again = filter_object(&s, &by_prop, OBJECTS[0]).unwrap();
        prop_assert!(is_subsequence(&again.indices(), &by_prop.indices()));
    }

    #[test]
    fn raising_the_threshold_keeps_a_subsequence(seed in any::<u64>(), t1 in 0.0..1.0f64, t2 in 0.0..1.0f64) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let w = world(seed);
        let gw = gateway(&w);
        let s = Session::new(&gw, PrimitiveParams::default());
        let clip = Arc::new(w.source_video()).full_clip();
        let strict = filter_object_at(&s, &clip, OBJECTS[1], hi).unwrap().indices();
        let loose = filter_object_at(&s, &clip, OBJECTS[1], lo).unwrap().indices();
        prop_assert!(is_subsequence(&strict, &loose));
    }

    #[test]
    fn votes_are_conserved_and_majority_wins(seed in any::<u64>()) {
        let w = world(seed);
        let gw = gateway(&w);
        let s = Session::new(&gw, PrimitiveParams::default());
        let clip = Arc::new(w.source_video()).full_clip();
        let counts = video_query(&s, &clip, QUERY).unwrap();
        prop_assert_eq!(counts.total(), clip.num_frames() as u64);
        let stream: Vec<String> = w.frames.iter().map(|f| f.qa[QUERY].clone()).collect();
        prop_assert_eq!(counts.get_max_key().ok(), oracle::majority(&stream));
    }

    #[test]
    fn nested_trims_compose(n in 1u64..40, a in 0i64..40, b in 0i64..40, c in 0i64..40, d in 0i64..40) {
        let mut v = [a % (n as i64 + 1), b % (n as i64 + 1), c % (n as i64 + 1), d % (n as i64 + 1)];
        v.sort();
        let [a, b, c, d] = v;
        let clip = video(n).full_clip();
        let outer = trim(&clip, a, d).unwrap();
        let inner = trim(&outer, c - a, d - a).unwrap();
        prop_assert_eq!(inner.indices(), trim(&clip, c, d).unwrap().indices());
        prop_assert_eq!(clip_len(&trim(&clip, a, b).unwrap()), (b - a) as usize);
        prop_assert!(trim(&clip, b, a.min(b) - 1).is_err());
    }

    #[test]
    fn uniform_sampling_is_increasing_and_in_range(frames in 1u64..500, n in 1usize..120) {
        let src = video(frames);
        let c: VideoClip = sample_uniform(&src, n).unwrap();
        let idx = c.indices();
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(idx.iter().all(|&i| i < frames));
        prop_assert_eq!(idx.len(), n.min(frames as usize));
        prop_assert_eq!(c, sample_uniform(&src, n).unwrap());
    }

    #[test]
    fn caching_is_transparent(seed in any::<u64>(), picks in prop::collection::vec((0usize..3, 0u64..60), 1..30)) {
        let w = world(seed);
        let plain = gateway(&w);
        let cached = gateway(&w).with_cache(Arc::new(ResponseCache::in_memory()));
        for (kind, f) in picks {
            let f = f % w.frame_count;
            let req = match kind {
                0 => CapabilityRequest::image_qa("w", f, None, PROPERTIES[1]),
                1 => CapabilityRequest::detect("w", f, None, OBJECTS[0]),
                _ => CapabilityRequest::caption_image("w", f, None),
            };
            prop_assert_eq!(plain.call(&req), cached.call(&req));
        }
    }

    #[test]
    fn request_id_ignores_field_order(frame in 0u64..1000, q in "[a-z ?]{1,20}") {
        let req = CapabilityRequest::image_qa("vid", frame, None, &q);
        let value = serde_json::to_value(&req).unwrap();
        let serde_json::Value::Object(map) = &value else { panic!("object expected") };
        let reversed: serde_json::Map<String, serde_json::Value> = map.iter().rev().map(|(k, v)| (k.clone(), v.clone())).collect();
        prop_assert_eq!(canonical_json(&value), canonical_json(&serde_json::Value::Object(reversed.clone())));
        let back: CapabilityRequest = serde_json::from_value(serde_json::Value::Object(reversed)).unwrap();
        prop_assert_eq!(back.request_id(), req.request_id());
    }
}
