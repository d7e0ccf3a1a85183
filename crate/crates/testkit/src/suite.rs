use std::path::PathBuf;

use proviq_core::gateway::fault::{Corruption, FaultSpec};
use proviq_core::gateway::Capability;
use proviq_core::harness::{evaluate, load_dataset, BenchmarkRecord, EvalOutcome, EvalRecord, HarnessConfig, HarnessError, Runtime};

/// The shipped mock benchmark.
pub fn mock_suite_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/mock_suite")
}

pub fn load_suite() -> Result<(HarnessConfig, Vec<BenchmarkRecord>), HarnessError> {
    let dir = mock_suite_dir();
    Ok((HarnessConfig::load(&dir.join("config.json"))?, load_dataset(&dir.join("dataset.jsonl"))?))
}

/// Every corruption that applies to each capability.
pub const FAULT_PAIRS: &[(Capability, Corruption)] = &[
    (Capability::ImageQa, Corruption::WrongAnswer),
    (Capability::Detect, Corruption::DropDetection),
    (Capability::CaptionImage, Corruption::GarbleCaption),
    (Capability::CaptionImage, Corruption::WrongAnswer),
    (Capability::CaptionVideoChunk, Corruption::GarbleCaption),
    (Capability::CaptionVideoChunk, Corruption::WrongAnswer),
    (Capability::Transcribe, Corruption::WrongAnswer),
    (Capability::Transcribe, Corruption::GarbleCaption),
    (Capability::LlmComplete, Corruption::WrongAnswer),
];

#[derive(Debug, Clone)]
pub struct FaultCell {
    pub fault: FaultSpec,
    /// Questions whose outcome differs from the clean run.
    pub flipped: Vec<String>,
    /// Flipped questions whose trace never called the faulted capability.
    pub unattributed: Vec<String>,
    /// Generation failures that nonetheless made backend calls.
    pub generation_with_calls: Vec<String>,
}

pub fn run_with(config: &HarnessConfig, faults: Vec<FaultSpec>, dataset: &[BenchmarkRecord]) -> Result<Vec<EvalRecord>, HarnessError> {
    let config = HarnessConfig { faults, ..config.clone() };
    Ok(evaluate(&Runtime::new(config)?, dataset)?.1)
}

/// Runs the clean suite, then once per fault and rate, and compares.
pub fn fault_matrix(
    config: &HarnessConfig,
    dataset: &[BenchmarkRecord],
    rates: &[f64],
) -> Result<(Vec<EvalRecord>, Vec<FaultCell>), HarnessError> {
    let clean = run_with(config, vec![], dataset)?;
    let mut cells = Vec::new();
    for &(capability, corruption) in FAULT_PAIRS {
        for (seed, &rate) in rates.iter().enumerate() {
            let fault = FaultSpec::rate(capability, corruption, rate, seed as u64);
            let faulty = run_with(config, vec![fault.clone()], dataset)?;
            let mut cell = FaultCell { fault, flipped: vec![], unattributed: vec![], generation_with_calls: vec![] };
            for (before, after) in clean.iter().zip(&faulty) {
                let id = after.record.question_id.clone();
                if after.outcome == EvalOutcome::GenerationFailure && after.backend_calls > 0 {
                    cell.generation_with_calls.push(id.clone());
                }
                if before.outcome != after.outcome {
                    if !after.trace.as_ref().is_some_and(|t| t.uses(capability)) {
                        cell.unattributed.push(id.clone());
                    }
                    cell.flipped.push(id);
                }
            }
            cells.push(cell);
        }
    }
    Ok((clean, cells))
}
