//! Replays the checked-in fuzz corpus, plus seeded byte mutations of it,
//! through every fuzz body on the stable toolchain.

use std::fs;
use std::path::{Path, PathBuf};

use proviq_testkit::fuzz::TARGETS;
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

const MUTATIONS_PER_SEED: usize = 1000;

fn fuzz_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz")
}

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = fuzz_dir().join("corpus").join(target);
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    paths.iter().map(|p| fs::read(p).unwrap()).collect()
}

const TOKENS: &[&[u8]] = &[b"\"", b"\\", b"\n", b"    ", b"(", b"]", b"{", b"}", b":", b",", b"-1", b"1e309", b"null", b"\xff", b"\xc3\xa9"];

fn mutate(rng: &mut StdRng, input: &[u8], corpus: &[Vec<u8>]) -> Vec<u8> {
    let mut out = input.to_vec();
    for _ in 0..rng.random_range(1..=4) {
        let at = if out.is_empty() { 0 } else { rng.random_range(0..=out.len()) };
        match rng.random_range(0..5) {
            0 if at < out.len() => out[at] ^= 1 << rng.random_range(0..8),
            1 if at < out.len() => {
                let end = (at + rng.random_range(1..16)).min(out.len());
                out.drain(at..end);
            }
            2 => {
                let tok = TOKENS.choose(rng).unwrap();
                out.splice(at..at, tok.iter().copied());
            }
            3 => {
                let other = corpus.choose(rng).unwrap();
                let from = rng.random_range(0..=other.len());
                out.truncate(at);
                out.extend_from_slice(&other[from..]);
            }
            _ => out.truncate(at),
        }
    }
    out
}

#[test]
fn every_target_has_a_binary_and_seeds() {
    let manifest = fs::read_to_string(fuzz_dir().join("Cargo.toml")).unwrap();
    for (name, _) in TARGETS {
        assert!(fuzz_dir().join(format!("fuzz_targets/{name}.rs")).exists(), "{name} has no binary");
        assert!(manifest.contains(&format!("name = \"{name}\"")), "{name} missing from fuzz manifest");
        assert!(seeds(name).len() >= 3, "{name} needs at least 3 seeds");
    }
}

#[test]
fn corpus_and_mutations_never_panic() {
    for (i, (name, body)) in TARGETS.iter().enumerate() {
        let corpus = seeds(name);
        let mut rng = StdRng::seed_from_u64(i as u64);
        for seed in &corpus {
            body(seed);
            for _ in 0..MUTATIONS_PER_SEED {
                body(&mutate(&mut rng, seed, &corpus));
            }
        }
    }
}
