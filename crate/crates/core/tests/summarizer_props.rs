use proptest::prelude::*;
use proviq_core::clip::{FrameSource, Fps, SourceVideo};
use proviq_core::summarizer::{aggregation_prompt, chunk, ChunkCaption};

fn captions(n: usize) -> Vec<ChunkCaption> {
    (0..n)
        .map(|i| ChunkCaption {
            index: i,
            start_frame: i as u64 * 30,
            end_frame: (i as u64 + 1) * 30,
            start_s: i as f64,
            end_s: i as f64 + 1.0,
            caption: format!("scene {i}"),
            error: None,
        })
        .collect()
}

proptest! {
    #[test]
    fn chunks_tile_the_video(num in 1u64..120, den in 1u64..4, frames in 1u64..5000, chunk_ms in prop::sample::select(vec![250u64, 1000, 1500, 4000])) {
        let fps = Fps::new(num, den).unwrap();
        let v = SourceVideo::new("v", fps, frames, FrameSource::MockWorld).unwrap();
        let cs = chunk(&v, chunk_ms).unwrap();
        // duration / chunk = frames*den*1000 / (num*chunk_ms), rounded up
        let expect = (frames * den * 1000).div_ceil(num * chunk_ms);
        prop_assert_eq!(cs.len() as u64, expect);
        prop_assert_eq!(cs[0].0, 0);
        prop_assert_eq!(cs.last().unwrap().1, frames);
        prop_assert!(cs.windows(2).all(|w| w[0].1 == w[1].0));
        prop_assert!(cs.iter().all(|c| c.0 <= c.1));
    }

    #[test]
    fn prompt_lines_are_chronological(n in 1usize..300) {
        let caps = captions(n);
        let prompt = aggregation_prompt(&caps);
        prop_assert_eq!(&prompt, &aggregation_prompt(&caps));
        let lines: Vec<&str> = prompt.lines().filter(|l| l.starts_with('[')).collect();
        prop_assert_eq!(lines.len(), n);
        let positions: Vec<usize> = (0..n).map(|i| prompt.find(&format!("] scene {i}\n")).unwrap()).collect();
        prop_assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn one_second_chunks_at_thirty_fps() {
    let v = SourceVideo::new("v", Fps::new(30000, 1001).unwrap(), 300, FrameSource::MockWorld).unwrap();
    let cs = chunk(&v, 1000).unwrap();
    // 300 frames at 29.97 fps last 10.01 s, so an eleventh short chunk remains.
    assert_eq!(cs.len(), 11);
    assert_eq!(cs[0], (0, 29));
    assert_eq!(cs[10], (299, 300));
}
