//! Bodies of the fuzz targets. Each takes raw bytes and must not panic;
//! the `fuzz/` crate wraps them for libFuzzer and a stable test replays
//! the checked-in corpus through them.

use std::sync::OnceLock;

use proviq_core::answer::{EmbeddingTable, Vocabulary};
use proviq_core::codegen::{strip_code_fences, ExamplePool};
use proviq_core::gateway::fault::{inject_fault, FaultSpec};
use proviq_core::gateway::mock::MockWorld;
use proviq_core::gateway::remote::decode_response;
use proviq_core::gateway::Capability;
use proviq_core::harness::{parse_dataset, HarnessConfig};
use proviq_core::lang::{compile, parse, render, TaskKind};
use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::worlds;

/// Every parsed program renders back to text that parses to the same tree.
pub fn program(data: &[u8]) {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(p) = parse(src) {
        let text = render(&p);
        let back = parse(&text).unwrap_or_else(|e| panic!("rendered program does not parse: {e}\n{text}"));
        assert_eq!(back, p, "round trip changed the tree\n{text}");
    }
    let _ = compile(src, TaskKind::Qa);
    let _ = compile(src, TaskKind::Edit);
}

/// Model output: fence stripping followed by validation.
pub fn generated_code(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = compile(&strip_code_fences(text), TaskKind::Qa);
}

/// Accepted worlds are already normalized.
pub fn mock_world(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(w) = MockWorld::from_json(text) {
        assert_eq!(w.clone().normalized().expect("normalized world re-normalizes"), w);
    }
}

pub fn embedding_table(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = EmbeddingTable::parse(text);
}

pub fn dataset(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_dataset(text);
}

pub fn vocabulary(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = Vocabulary::from_json(text);
}

pub fn example_pool(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = ExamplePool::from_json(text);
}

pub fn harness_config(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = HarnessConfig::from_json(text);
}

/// First byte picks the capability; the rest is the response body.
pub fn wire_response(data: &[u8]) {
    let Some((&sel, body)) = data.split_first() else { return };
    let cap = Capability::ALL[sel as usize % Capability::ALL.len()];
    let _ = decode_response(cap, body);
}

/// A parsed fault spec applied to a fixed small world.
pub fn fault_spec(data: &[u8]) {
    static WORLD: OnceLock<MockWorld> = OnceLock::new();
    let Ok(spec) = serde_json::from_slice::<FaultSpec>(data) else { return };
    let world = WORLD.get_or_init(|| worlds::random_world(&mut StdRng::seed_from_u64(0), "fuzz", 12, &["a", "b"], 0.5));
    if let Ok(faulted) = inject_fault(world, &spec) {
        assert_eq!(faulted.frames.len(), world.frames.len());
    }
}

/// Target name to body, in the order of the `fuzz/` binaries.
pub const TARGETS: [(&str, fn(&[u8])); 10] = [
    ("program", program),
    ("generated_code", generated_code),
    ("mock_world", mock_world),
    ("embedding_table", embedding_table),
    ("dataset", dataset),
    ("vocabulary", vocabulary),
    ("example_pool", example_pool),
    ("harness_config", harness_config),
    ("wire_response", wire_response),
    ("fault_spec", fault_spec),
];
