use std::collections::HashSet;

use proviq_core::answer::EmbeddingTable;
use rand::Rng;

/// Random token table plus `answers` distinct one-to-three token phrases
/// built from it.
pub struct ToyVocab {
    pub tokens: Vec<String>,
    pub answers: Vec<String>,
    pub table: EmbeddingTable,
}

pub fn toy_vocab<R: Rng>(rng: &mut R, answers: usize, tokens: usize, dim: usize) -> ToyVocab {
    let names: Vec<String> = (0..tokens).map(|i| format!("t{i}")).collect();
    let table = EmbeddingTable::from_pairs(
        dim,
        names.iter().map(|t| (t.as_str(), (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())),
    )
    .expect("dimensions agree");
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(answers);
    while out.len() < answers {
        let p = phrase(rng, &names, 3);
        if seen.insert(p.clone()) {
            out.push(p);
        }
    }
    ToyVocab { tokens: names, answers: out, table }
}

/// One to `max_len` known tokens.
pub fn phrase<R: Rng>(rng: &mut R, tokens: &[String], max_len: usize) -> String {
    let n = rng.random_range(1..=max_len);
    let words: Vec<String> = (0..n).map(|_| tokens[rng.random_range(0..tokens.len())].clone()).collect();
    words.join(" ")
}

/// Like [`phrase`], but tokens are sometimes unknown, uppercased or
/// followed by a comma.
pub fn noisy_phrase<R: Rng>(rng: &mut R, tokens: &[String], max_len: usize) -> String {
    let n = rng.random_range(1..=max_len);
    let words: Vec<String> = (0..n)
        .map(|_| match rng.random_range(0..6) {
            0 => "zzz".to_owned(),
            1 => tokens[rng.random_range(0..tokens.len())].to_uppercase(),
            2 => format!("{},", tokens[rng.random_range(0..tokens.len())]),
            _ => tokens[rng.random_range(0..tokens.len())].clone(),
        })
        .collect();
    words.join(" ")
}
