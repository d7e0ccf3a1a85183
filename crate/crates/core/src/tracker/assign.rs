/// Result of a gated one-to-one assignment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self, cost: &[Vec<f64>]) -> f64 {
        self.pairs.iter().map(|&(r, c)| cost[r][c]).sum()
    }
}

/// Minimum-cost one-to-one assignment over permitted pairs.
///
/// Entries greater than `gate` are forbidden. Among assignments with the
/// most permitted pairs, the one with the smallest total cost is returned.
/// Runs the O(n³) shortest-augmenting-path Hungarian method on the matrix
/// padded to square, with forbidden and padding cells priced above any
/// achievable permitted total.
pub fn assign(cost: &[Vec<f64>], gate: f64) -> Assignment {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Assignment { pairs: vec![], unmatched_rows: (0..rows).collect(), unmatched_cols: (0..cols).collect() };
    }
    debug_assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");
    let permitted = |r: usize, c: usize| cost[r][c] <= gate;
    let magnitude: f64 = cost
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().filter(move |&(c, _)| permitted(r, c)).map(|(_, v)| v.abs()))
        .sum();
    let big = 2.0 * magnitude + 1.0;
    let n = rows.max(cols);
    let price = |r: usize, c: usize| -> f64 {
        if r < rows && c < cols && permitted(r, c) {
            cost[r][c]
        } else {
            big
        }
    };

    // 1-based potentials formulation; p[j] is the row matched to column j.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = price(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_match = vec![None; rows];
    for j in 1..=n {
        let (r, c) = (p[j] - 1, j - 1);
        if r < rows && c < cols && permitted(r, c) {
            row_match[r] = Some(c);
        }
    }
    let mut col_used = vec![false; cols];
    let mut pairs = Vec::new();
    let mut unmatched_rows = Vec::new();
    for (r, m) in row_match.iter().enumerate() {
        match m {
            Some(c) => {
                pairs.push((r, *c));
                col_used[*c] = true;
            }
            None => unmatched_rows.push(r),
        }
    }
    let unmatched_cols = (0..cols).filter(|&c| !col_used[c]).collect();
    Assignment { pairs, unmatched_rows, unmatched_cols }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_dominance() {
        let a = assign(&[vec![0.1, 0.9], vec![0.9, 0.1]], 1.0);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn single_cell() {
        assert_eq!(assign(&[vec![0.4]], 1.0).pairs, vec![(0, 0)]);
        let gated = assign(&[vec![0.4]], 0.3);
        assert!(gated.pairs.is_empty());
        assert_eq!(gated.unmatched_rows, vec![0]);
        assert_eq!(gated.unmatched_cols, vec![0]);
    }

    #[test]
    fn rectangular_and_empty() {
        let a = assign(&[vec![0.5, 0.1, 0.7]], 1.0);
        assert_eq!(a.pairs, vec![(0, 1)]);
        assert_eq!(a.unmatched_cols, vec![0, 2]);
        let a = assign(&[vec![0.5], vec![0.2], vec![0.9]], 1.0);
        assert_eq!(a.pairs, vec![(1, 0)]);
        assert_eq!(a.unmatched_rows, vec![0, 2]);
        let a = assign(&[], 1.0);
        assert_eq!(a, Assignment::default());
    }

    #[test]
    fn prefers_more_permitted_pairs() {
        // taking (0,0) alone is cheapest per pair but blocks row 1
        let a = assign(&[vec![0.0, 0.5], vec![0.4, 2.0]], 1.0);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
    }
}
