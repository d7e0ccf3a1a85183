//! Seeded corruption of mock worlds, for controlled error-attribution runs.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mock::MockWorld;
use super::Capability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    WrongAnswer,
    DropDetection,
    GarbleCaption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Each candidate item is corrupted independently with this probability.
    Rate(f64),
    /// Exactly these frames (chunks are selected by their start frame).
    Frames(BTreeSet<u64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub capability: Capability,
    pub corruption: Corruption,
    #[serde(flatten)]
    pub selection: Selection,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FaultError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl FaultSpec {
    pub fn rate(capability: Capability, corruption: Corruption, rate: f64, seed: u64) -> Self {
        FaultSpec { capability, corruption, selection: Selection::Rate(rate), seed }
    }

    pub fn frames(capability: Capability, corruption: Corruption, frames: impl IntoIterator<Item = u64>) -> Self {
        FaultSpec { capability, corruption, selection: Selection::Frames(frames.into_iter().collect()), seed: 0 }
    }

    fn check(&self) -> Result<(), FaultError> {
        if let Selection::Rate(r) = self.selection {
            if !(0.0..=1.0).contains(&r) {
                return Err(FaultError::InvalidArgument(format!("rate {r} outside [0, 1]")));
            }
        }
        use Capability::*;
        use Corruption::*;
        let ok = matches!(
            (self.capability, self.corruption),
            (ImageQa, WrongAnswer)
                | (LlmComplete, WrongAnswer)
                | (Transcribe, WrongAnswer | GarbleCaption)
                | (Detect, DropDetection)
                | (CaptionImage | CaptionVideoChunk, GarbleCaption | WrongAnswer)
        );
        if !ok {
            return Err(FaultError::InvalidArgument(format!(
                "{:?} does not apply to {}",
                self.corruption, self.capability
            )));
        }
        Ok(())
    }
}

struct Picker {
    rng: ChaCha8Rng,
    selection: Selection,
}

impl Picker {
    fn pick(&mut self, frame: Option<u64>) -> bool {
        match &self.selection {
            // always draw so the stream does not depend on earlier outcomes
            Selection::Rate(r) => self.rng.random::<f64>() < *r,
            Selection::Frames(set) => frame.is_some_and(|f| set.contains(&f)),
        }
    }
}

/// Returns a corrupted copy of `world`; the input is left untouched.
pub fn inject_fault(world: &MockWorld, spec: &FaultSpec) -> Result<MockWorld, FaultError> {
    spec.check()?;
    let mut out = world.clone();
    let mut picker = Picker { rng: ChaCha8Rng::seed_from_u64(spec.seed), selection: spec.selection.clone() };
    match spec.capability {
        Capability::ImageQa => {
            let answers: BTreeSet<String> = out
                .frames
                .iter()
                .flat_map(|f| f.qa.values().cloned().chain(f.region_qa.iter().flat_map(|r| r.qa.values().cloned())))
                .collect();
            for frame in &mut out.frames {
                if !picker.pick(Some(frame.index)) {
                    continue;
                }
                frame.predicates.values_mut().for_each(|v| *v = !*v);
                frame.qa.values_mut().for_each(|a| *a = wrong_answer(a, &answers));
                for rq in &mut frame.region_qa {
                    rq.predicates.values_mut().for_each(|v| *v = !*v);
                    rq.qa.values_mut().for_each(|a| *a = wrong_answer(a, &answers));
                }
            }
        }
        Capability::Detect => {
            for frame in &mut out.frames {
                let index = frame.index;
                for boxes in frame.objects.values_mut() {
                    let kept: Vec<_> = boxes.iter().copied().filter(|_| !picker.pick(Some(index))).collect();
                    *boxes = kept;
                }
            }
        }
        Capability::CaptionImage => {
            for frame in &mut out.frames {
                if picker.pick(Some(frame.index)) {
                    frame.caption = frame.caption.as_deref().map(garble);
                }
            }
        }
        Capability::CaptionVideoChunk => {
            for chunk in &mut out.chunk_captions {
                if picker.pick(Some(chunk.start_frame)) {
                    chunk.caption = garble(&chunk.caption);
                }
            }
        }
        Capability::Transcribe => {
            if picker.pick(Some(0)) {
                out.transcript = out.transcript.as_deref().map(garble);
            }
        }
        Capability::LlmComplete => {
            for rule in &mut out.llm {
                if picker.pick(None) || matches!(spec.selection, Selection::Frames(_)) {
                    rule.response = wrong_completion(&rule.response);
                }
            }
        }
    }
    Ok(out)
}

/// Deterministic replacement: the next different answer seen in the world,
/// cycling, or a fixed sentinel when the world has only one answer.
fn wrong_answer(current: &str, answers: &BTreeSet<String>) -> String {
    answers
        .range::<str, _>((std::ops::Bound::Excluded(current), std::ops::Bound::Unbounded))
        .chain(answers.iter())
        .find(|a| a.as_str() != current)
        .cloned()
        .unwrap_or_else(|| "unknown".to_owned())
}

fn garble(text: &str) -> String {
    let words: Vec<&str> = text.split_whitespace().rev().collect();
    format!("[garbled] {}", words.join(" "))
}

/// Shifts a leading option number, otherwise garbles the text.
fn wrong_completion(response: &str) -> String {
    let trimmed = response.trim_start();
    let digits: String = trimmed.chars().take_while(|c| c.is_ascii_digit()).collect();
    match digits.parse::<u64>() {
        Ok(n) => format!("{}{}", n % 5 + 1, &trimmed[digits.len()..]),
        Err(_) => garble(response),
    }
}

#[cfg(test)]
mod tests {
    use super::super::mock::tests::ten_frame_world;
    use super::super::mock::MockBackend;
    use super::super::{Backend, CapabilityRequest, ScoredBox};
    use super::*;

    fn crowded_world() -> MockWorld {
        let mut w = ten_frame_world();
        for f in &mut w.frames {
            f.objects.insert(
                "dog".into(),
                (0..5).map(|k| ScoredBox { x1: 0.1 * k as f64, y1: 0.1, x2: 0.1 * k as f64 + 0.05, y2: 0.2, score: 0.9 }).collect(),
            );
        }
        w
    }

    #[test]
    fn seeded_drop_is_repeatable() {
        let w = crowded_world();
        let spec = FaultSpec::rate(Capability::Detect, Corruption::DropDetection, 0.2, 7);
        let a = inject_fault(&w, &spec).unwrap();
        let b = inject_fault(&w, &spec).unwrap();
        assert_eq!(a, b);
        let total: usize = w.frames.iter().map(|f| f.objects["dog"].len()).sum();
        let kept: usize = a.frames.iter().map(|f| f.objects["dog"].len()).sum();
        assert!(kept < total && kept > total / 2, "kept {kept} of {total}");
        assert_eq!(w, crowded_world(), "original untouched");
    }

    #[test]
    fn rate_zero_is_identity() {
        let w = crowded_world();
        for cap in Capability::ALL {
            let corruption = match cap {
                Capability::Detect => Corruption::DropDetection,
                Capability::CaptionImage | Capability::CaptionVideoChunk => Corruption::GarbleCaption,
                _ => Corruption::WrongAnswer,
            };
            assert_eq!(inject_fault(&w, &FaultSpec::rate(cap, corruption, 0.0, 3)).unwrap(), w);
        }
    }

    #[test]
    fn rate_out_of_range() {
        let w = ten_frame_world();
        let err = inject_fault(&w, &FaultSpec::rate(Capability::Detect, Corruption::DropDetection, 1.5, 0));
        assert!(matches!(err, Err(FaultError::InvalidArgument(_))));
        let err = inject_fault(&w, &FaultSpec::rate(Capability::Detect, Corruption::GarbleCaption, 0.5, 0));
        assert!(err.is_err());
    }

    #[test]
    fn frame_set_alters_exactly_those_lookups() {
        let w = ten_frame_world();
        let faulted = inject_fault(&w, &FaultSpec::frames(Capability::ImageQa, Corruption::WrongAnswer, [2, 3])).unwrap();
        let (clean, bad) = (MockBackend::new([w]), MockBackend::new([faulted]));
        let mut differing = Vec::new();
        for frame in 0..10 {
            for q in ["is a party happening?", "what is the party for?"] {
                let req = CapabilityRequest::image_qa("w10", frame, None, q);
                if clean.call(&req) != bad.call(&req) {
                    differing.push(frame);
                }
            }
        }
        differing.dedup();
        assert_eq!(differing, vec![2, 3]);
    }

    #[test]
    fn spec_json_shapes() {
        let s: FaultSpec = serde_json::from_str(r#"{"capability":"detect","corruption":"drop_detection","rate":0.2,"seed":7}"#).unwrap();
        assert_eq!(s, FaultSpec::rate(Capability::Detect, Corruption::DropDetection, 0.2, 7));
        let s: FaultSpec = serde_json::from_str(r#"{"capability":"image_qa","corruption":"wrong_answer","frames":[2,3]}"#).unwrap();
        assert_eq!(s.selection, Selection::Frames([2, 3].into()));
    }

    #[test]
    fn completions_shift() {
        assert_eq!(wrong_completion("3"), "4");
        assert_eq!(wrong_completion("5: because"), "1: because");
        assert_eq!(wrong_completion("a b"), "[garbled] b a");
    }
}
