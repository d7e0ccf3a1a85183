//! Brute-force reference answers.

use proviq_core::answer::EmbeddingTable;
use proviq_core::gateway::mock::MockWorld;
use proviq_core::tracker::FrameDetections;

pub fn filter_property(world: &MockWorld, property: &str) -> Vec<u64> {
    world.frames.iter().filter(|f| f.predicates[property]).map(|f| f.index).collect()
}

pub fn filter_object(world: &MockWorld, object: &str, threshold: f64) -> Vec<u64> {
    world
        .frames
        .iter()
        .filter(|f| f.objects.get(object).is_some_and(|bs| bs.iter().any(|b| b.score >= threshold)))
        .map(|f| f.index)
        .collect()
}

/// Most frequent item; among equals, the one that appeared first.
pub fn majority(stream: &[String]) -> Option<&str> {
    let mut best: Option<(&str, usize, usize)> = None;
    for (i, item) in stream.iter().enumerate() {
        let count = stream.iter().filter(|s| *s == item).count();
        let first = stream.iter().position(|s| s == item).unwrap();
        let better = match best {
            None => true,
            Some((_, c, f)) => count > c || (count == c && first < f),
        };
        if better && first == i {
            best = Some((item, count, first));
        }
    }
    best.map(|b| b.0)
}

/// Largest number of pairs with cost `<= gate`, then the smallest total,
/// by trying every partial injection of rows into columns.
pub fn best_assignment(cost: &[Vec<f64>], gate: f64) -> (usize, f64) {
    fn go(cost: &[Vec<f64>], gate: f64, row: usize, used: &mut Vec<bool>, acc: (usize, f64), best: &mut (usize, f64)) {
        if row == cost.len() {
            if acc.0 > best.0 || (acc.0 == best.0 && acc.1 < best.1) {
                *best = acc;
            }
            return;
        }
        go(cost, gate, row + 1, used, acc, best);
        for c in 0..used.len() {
            if !used[c] && cost[row][c] <= gate {
                used[c] = true;
                go(cost, gate, row + 1, used, (acc.0 + 1, acc.1 + cost[row][c]), best);
                used[c] = false;
            }
        }
    }
    let cols = cost.first().map_or(0, Vec::len);
    let mut best = (0, 0.0);
    go(cost, gate, 0, &mut vec![false; cols], (0, 0.0), &mut best);
    best
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for at in 0..=p.len() {
            let mut q = p.clone();
            q.insert(at, n - 1);
            out.push(q);
        }
    }
    out
}

/// Identity labels by chaining each frame to the previous one with the
/// permutation that minimises the summed centre distance. Frame 0 labels
/// detections by position. Assumes every frame has the same count.
pub fn nearest_box_identities(frames: &[FrameDetections]) -> Vec<Vec<usize>> {
    let Some(first) = frames.first() else { return vec![] };
    let n = first.detections.len();
    let perms = permutations(n);
    let mut labels = vec![(0..n).collect::<Vec<_>>()];
    // Previous centre of each identity.
    let mut prev: Vec<(f64, f64)> = first.detections.iter().map(|d| d.bbox.center()).collect();
    for f in &frames[1..] {
        assert_eq!(f.detections.len(), n, "oracle needs a constant detection count");
        let dist = |p: &Vec<usize>| -> f64 {
            p.iter()
                .enumerate()
                .map(|(d, &id)| {
                    let (x, y) = f.detections[d].bbox.center();
                    ((x - prev[id].0).powi(2) + (y - prev[id].1).powi(2)).sqrt()
                })
                .sum()
        };
        let best = perms.iter().min_by(|a, b| dist(a).total_cmp(&dist(b))).unwrap().clone();
        for (d, &id) in best.iter().enumerate() {
            prev[id] = f.detections[d].bbox.center();
        }
        labels.push(best);
    }
    labels
}

fn normalize(s: &str) -> String {
    let lowered: String = s.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn mean_vector(phrase: &str, table: &EmbeddingTable) -> Option<Vec<f64>> {
    let found: Vec<&[f64]> = normalize(phrase).split(' ').filter_map(|t| table.get(t)).collect();
    let first = found.first()?;
    let mut sum = vec![0.0; first.len()];
    for v in &found {
        sum.iter_mut().zip(*v).for_each(|(s, x)| *s += x);
    }
    sum.iter_mut().for_each(|s| *s /= found.len() as f64);
    sum.iter().any(|x| *x != 0.0).then_some(sum)
}

/// Linear cosine scan over a fixed candidate list.
pub struct PhraseScan<'a> {
    candidates: &'a [String],
    vectors: Vec<Option<Vec<f64>>>,
    table: &'a EmbeddingTable,
}

impl<'a> PhraseScan<'a> {
    pub fn new(candidates: &'a [String], table: &'a EmbeddingTable) -> Self {
        PhraseScan { candidates, vectors: candidates.iter().map(|c| mean_vector(c, table)).collect(), table }
    }

    /// Index the answer should map to: an exact normalized match if any,
    /// else the first candidate with the highest cosine. `None` when the
    /// phrase has no known token.
    pub fn nearest(&self, raw: &str) -> Option<usize> {
        let norm = normalize(raw);
        if let Some(i) = self.candidates.iter().position(|c| normalize(c) == norm) {
            return Some(i);
        }
        let q = mean_vector(raw, self.table)?;
        let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in self.vectors.iter().enumerate() {
            let sim = match v {
                Some(v) => {
                    let dot: f64 = q.iter().zip(v).map(|(a, b)| a * b).sum();
                    dot / (qn * v.iter().map(|x| x * x).sum::<f64>().sqrt())
                }
                None => 0.0,
            };
            if best.is_none_or(|(_, s)| sim > s) {
                best = Some((i, sim));
            }
        }
        best.map(|b| b.0)
    }
}
