//! Maps free-form program output onto a closed answer vocabulary by
//! phrase-embedding nearest neighbour.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnswerError {
    #[error("embedding table line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Static token vectors, keyed by lowercased token.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` pairs; the first of any
    /// duplicate (after lowercasing) wins.
    pub fn from_pairs<I, S>(dim: usize, pairs: I) -> Result<Self, AnswerError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        let mut vectors = HashMap::new();
        for (i, (token, v)) in pairs.into_iter().enumerate() {
            if v.len() != dim {
                return Err(AnswerError::Table { line: i + 2, message: format!("expected {dim} values, got {}", v.len()) });
            }
            vectors.entry(token.as_ref().to_lowercase()).or_insert(v);
        }
        Ok(EmbeddingTable { dim, vectors })
    }

    /// Parses the text format: a `count dim` header, then `token v1 .. vd`.
    pub fn parse(text: &str) -> Result<Self, AnswerError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(AnswerError::Table { line: 1, message: "missing header".into() })?;
        let nums: Vec<&str> = header.split_whitespace().collect();
        let parse_usize = |s: &str| s.parse::<usize>().ok();
        let (count, dim) = match nums.as_slice() {
            [c, d] => match (parse_usize(c), parse_usize(d)) {
                (Some(c), Some(d)) if d > 0 => (c, d),
                _ => return Err(AnswerError::Table { line: 1, message: format!("bad header {header:?}") }),
            },
            _ => return Err(AnswerError::Table { line: 1, message: "header must be `count dim`".into() }),
        };
        let mut pairs = Vec::with_capacity(count);
        for (n, line) in lines {
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("non-empty line");
            let v: Vec<f64> = parts
                .map(|x| x.parse::<f64>().ok().filter(|f| f.is_finite()))
                .collect::<Option<_>>()
                .ok_or_else(|| AnswerError::Table { line: n + 1, message: "non-numeric or non-finite value".into() })?;
            if v.len() != dim {
                return Err(AnswerError::Table { line: n + 1, message: format!("expected {dim} values, got {}", v.len()) });
            }
            pairs.push((token.to_owned(), v));
        }
        if pairs.len() != count {
            return Err(AnswerError::Table {
                line: 1,
                message: format!("header declares {count} tokens, found {}", pairs.len()),
            });
        }
        Self::from_pairs(dim, pairs)
    }

    pub fn load(path: &Path) -> Result<Self, AnswerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AnswerError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(&token.to_lowercase()).map(Vec::as_slice)
    }

    /// Multiplies every vector by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        EmbeddingTable {
            dim: self.dim,
            vectors: self.vectors.iter().map(|(k, v)| (k.clone(), v.iter().map(|x| x * c).collect())).collect(),
        }
    }
}

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize_phrase(s: &str) -> String {
    s.to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Mean of the known token vectors; zero if no token is known.
pub fn embed_phrase(phrase: &str, table: &EmbeddingTable) -> Vec<f64> {
    let mut sum = vec![0.0; table.dim];
    let mut n = 0usize;
    for token in normalize_phrase(phrase).split(' ') {
        if let Some(v) = table.get(token) {
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            n += 1;
        }
    }
    if n > 0 {
        sum.iter_mut().for_each(|s| *s /= n as f64);
    }
    sum
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabMode {
    #[default]
    None,
    TopK,
    TypeBased,
}

/// Answers ranked by training frequency, with a top-K bound and optional
/// per-question-type subsets.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Vocabulary {
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_type: BTreeMap<String, Vec<String>>,
}

impl Vocabulary {
    pub fn new(answers: Vec<String>) -> Self {
        Vocabulary { answers, k: None, by_type: BTreeMap::new() }
    }

    pub fn from_json(text: &str) -> Result<Self, AnswerError> {
        let v: Vocabulary = serde_json::from_str(text).map_err(|e| AnswerError::Config(format!("vocabulary: {e}")))?;
        v.check()?;
        Ok(v)
    }

    pub fn load(path: &Path) -> Result<Self, AnswerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AnswerError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<(), AnswerError> {
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.answers.iter().find(|a| !seen.insert(normalize_phrase(a))) {
            return Err(AnswerError::Config(format!("duplicate answer {dup:?} after normalization")));
        }
        let top: std::collections::HashSet<&str> = self.top_k().iter().map(String::as_str).collect();
        for (t, sub) in &self.by_type {
            if let Some(a) = sub.iter().find(|a| !top.contains(a.as_str())) {
                return Err(AnswerError::Config(format!("type {t:?} answer {a:?} is not in the top-K vocabulary")));
            }
        }
        Ok(())
    }

    pub fn top_k(&self) -> &[String] {
        &self.answers[..self.k.unwrap_or(self.answers.len()).min(self.answers.len())]
    }

    /// The candidate set for a mode. Type-based matching without a question
    /// type falls back to the top-K set.
    pub fn active(&self, mode: VocabMode, question_type: Option<&str>) -> &[String] {
        match (mode, question_type) {
            (VocabMode::None, _) => &self.answers,
            (VocabMode::TopK, _) | (VocabMode::TypeBased, None) => self.top_k(),
            (VocabMode::TypeBased, Some(t)) => self.by_type.get(t).map(Vec::as_slice).unwrap_or(&[]),
        }
    }
}

/// Ranks answers by frequency (ties by first occurrence) and indexes, per
/// question type, the type's answers that made the top K.
pub fn build_vocab(training: &[(String, Option<String>)], k: usize) -> Result<Vocabulary, AnswerError> {
    if k == 0 {
        return Err(AnswerError::Config("K must be at least 1".into()));
    }
    if training.is_empty() {
        return Err(AnswerError::Config("no training answers".into()));
    }
    let mut order: Vec<(String, usize, usize)> = Vec::new();
    let mut pos: HashMap<String, usize> = HashMap::new();
    for (i, (a, _)) in training.iter().enumerate() {
        let a = normalize_phrase(a);
        match pos.get(&a) {
            Some(&p) => order[p].1 += 1,
            None => {
                pos.insert(a.clone(), order.len());
                order.push((a, 1, i));
            }
        }
    }
    order.sort_by(|x, y| y.1.cmp(&x.1).then(x.2.cmp(&y.2)));
    let answers: Vec<String> = order.into_iter().map(|(a, _, _)| a).collect();
    let rank: HashMap<&str, usize> = answers.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let mut by_type: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (a, t) in training {
        let Some(t) = t else { continue };
        let a = normalize_phrase(a);
        let entry = by_type.entry(t.clone()).or_default();
        if rank[a.as_str()] < k && !entry.contains(&a) {
            entry.push(a);
        }
    }
    for sub in by_type.values_mut() {
        sub.sort_by_key(|a| rank[a.as_str()]);
    }
    Ok(Vocabulary { answers, k: Some(k), by_type })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub answer: String,
    pub similarity: f64,
    /// The normalized output was itself in the vocabulary.
    pub exact: bool,
    /// The output embedded to the zero vector.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

/// Nearest vocabulary answer to `raw`.
pub fn match_answer(
    raw: &str,
    vocab: &Vocabulary,
    question_type: Option<&str>,
    mode: VocabMode,
    table: &EmbeddingTable,
) -> Result<MatchResult, AnswerError> {
    let active = vocab.active(mode, question_type);
    match_in(raw, active, table)
        .ok_or_else(|| AnswerError::Config(format!("empty answer vocabulary for mode {mode:?} and type {question_type:?}")))
}

/// Nearest of `candidates` to `raw`, or `None` if there are no candidates.
pub fn match_in(raw: &str, candidates: &[String], table: &EmbeddingTable) -> Option<MatchResult> {
    AnswerIndex::new(candidates, table).best(raw)
}

/// Candidate answers with their normalized forms and embeddings computed
/// once, for matching many outputs against the same set.
pub struct AnswerIndex<'a> {
    candidates: &'a [String],
    exact: HashMap<String, usize>,
    vectors: Vec<Vec<f64>>,
    table: &'a EmbeddingTable,
}

impl<'a> AnswerIndex<'a> {
    pub fn new(candidates: &'a [String], table: &'a EmbeddingTable) -> Self {
        let mut exact = HashMap::new();
        for (i, c) in candidates.iter().enumerate() {
            exact.entry(normalize_phrase(c)).or_insert(i);
        }
        let vectors = candidates.iter().map(|c| embed_phrase(c, table)).collect();
        AnswerIndex { candidates, exact, vectors, table }
    }

    /// Exact normalized hit first, else the first candidate of highest
    /// cosine. An output with no known token maps to the first candidate
    /// and is flagged degenerate.
    pub fn best(&self, raw: &str) -> Option<MatchResult> {
        let first = self.candidates.first()?;
        if let Some(&i) = self.exact.get(&normalize_phrase(raw)) {
            return Some(MatchResult { answer: self.candidates[i].clone(), similarity: 1.0, exact: true, degenerate: false });
        }
        let q = embed_phrase(raw, self.table);
        if q.iter().all(|x| *x == 0.0) {
            return Some(MatchResult { answer: first.clone(), similarity: 0.0, exact: false, degenerate: true });
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (i, v) in self.vectors.iter().enumerate() {
            let sim = cosine(&q, v);
            if sim > best.1 {
                best = (i, sim);
            }
        }
        Some(MatchResult { answer: self.candidates[best.0].clone(), similarity: best.1, exact: false, degenerate: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> EmbeddingTable {
        EmbeddingTable::from_pairs(
            2,
            [
                ("run", vec![1.0, 0.0]),
                ("swim", vec![0.0, 1.0]),
                ("running", vec![0.9, 0.1]),
                ("red", vec![1.0, 0.2]),
                ("blue", vec![0.1, 1.0]),
                ("crimson", vec![0.9, 0.3]),
            ],
        )
        .unwrap()
    }

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn embedding_means() {
        let t = toy();
        assert_eq!(embed_phrase("run", &t), vec![1.0, 0.0]);
        assert_eq!(embed_phrase("Run, swim!", &t), vec![0.5, 0.5]);
        assert_eq!(embed_phrase("zebra quokka", &t), vec![0.0, 0.0]);
    }

    #[test]
    fn matching_examples() {
        let t = toy();
        let v = Vocabulary::new(strs(&["run", "swim"]));
        let m = match_answer("swim", &v, None, VocabMode::None, &t).unwrap();
        assert!(m.exact);
        assert_eq!(m.answer, "swim");
        let m = match_answer("running", &v, None, VocabMode::None, &t).unwrap();
        assert_eq!((m.answer.as_str(), m.exact), ("run", false));
        let m = match_answer("zebra", &v, None, VocabMode::None, &t).unwrap();
        assert_eq!((m.answer.as_str(), m.similarity, m.degenerate), ("run", 0.0, true));
    }

    #[test]
    fn type_based_matching() {
        let t = toy();
        let mut v = Vocabulary::new(strs(&["run", "red", "blue", "swim"]));
        v.by_type.insert("color".into(), strs(&["red", "blue"]));
        let m = match_answer("crimson", &v, Some("color"), VocabMode::TypeBased, &t).unwrap();
        assert_eq!(m.answer, "red");
        let err = match_answer("crimson", &v, Some("number"), VocabMode::TypeBased, &t).unwrap_err();
        assert!(matches!(err, AnswerError::Config(_)));
        assert!(match_answer("x", &Vocabulary::default(), None, VocabMode::None, &t).is_err());
    }

    #[test]
    fn vocab_building() {
        let rows: Vec<(String, Option<String>)> = ["a", "a", "b", "c", "c", "c"].iter().map(|s| (s.to_string(), None)).collect();
        let v = build_vocab(&rows, 2).unwrap();
        assert_eq!(v.top_k(), strs(&["c", "a"]).as_slice());
        assert_eq!(build_vocab(&rows, 10).unwrap().top_k().len(), 3);
        assert!(build_vocab(&[], 3).is_err());

        let rows: Vec<(String, Option<String>)> = [
            ("red", "color"),
            ("blue", "color"),
            ("2", "number"),
            ("3", "number"),
            ("2", "number"),
            ("blue", "color"),
        ]
        .iter()
        .map(|(a, t)| (a.to_string(), Some(t.to_string())))
        .collect();
        let v = build_vocab(&rows, 3).unwrap();
        assert_eq!(v.top_k(), strs(&["blue", "2", "red"]).as_slice());
        assert!(v.by_type["color"].contains(&"red".to_owned()));
        assert!(!v.by_type["number"].contains(&"red".to_owned()));
        assert_eq!(v.by_type["number"], strs(&["2"]));
    }

    #[test]
    fn table_format() {
        let t = EmbeddingTable::parse("2 3\nCat 1 0 0\ndog 0 1 0.5\n").unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("cat"), Some(&[1.0, 0.0, 0.0][..]));
        let err = EmbeddingTable::parse("2 3\ncat 1 0 0\ndog 0 1\n").unwrap_err();
        assert_eq!(err, AnswerError::Table { line: 3, message: "expected 3 values, got 2".into() });
        assert!(EmbeddingTable::parse("3 3\ncat 1 0 0\n").is_err());
        assert!(EmbeddingTable::parse("1 1\ncat nan\n").is_err());
        assert!(EmbeddingTable::parse("").is_err());
    }

    #[test]
    fn vocab_file() {
        let v = Vocabulary::from_json(r#"{"answers":["a","b","c"],"k":2,"by_type":{"t":["b"]}}"#).unwrap();
        assert_eq!(v.active(VocabMode::TopK, None), strs(&["a", "b"]).as_slice());
        assert!(Vocabulary::from_json(r#"{"answers":["a","b","c"],"k":2,"by_type":{"t":["c"]}}"#).is_err());
        assert!(Vocabulary::from_json(r#"{"answers":["a","a"]}"#).is_err());
    }
}
