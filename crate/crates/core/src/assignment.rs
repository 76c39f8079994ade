//! Exact maximum-weight bipartite matching over a feasibility mask.
//!
//! The problem is lifted to a square assignment of size `N + M` in which every
//! row and column also owns a dummy partner, so leaving a vertex unmatched is
//! always possible. Weights are lexicographic `(score, cardinality)` pairs,
//! which makes "more pairs among equal-score matchings" part of the objective
//! instead of a post-pass. After the Kuhn-Munkres solve, the optimal dual
//! potentials identify every optimal matching (the tight edges), and a greedy
//! pass picks the lexicographically smallest one by `(row, col)`.

use std::cmp::Ordering;
use std::ops::{Add, Sub};

use ndarray::Array2;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Lex {
    score: f64,
    card: i64,
}

impl Lex {
    const ZERO: Lex = Lex { score: 0.0, card: 0 };
    const INF: Lex = Lex { score: f64::INFINITY, card: 0 };

    fn lt(self, other: Lex) -> bool {
        match self.score.total_cmp(&other.score) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => self.card < other.card,
        }
    }
}

impl Add for Lex {
    type Output = Lex;
    fn add(self, o: Lex) -> Lex {
        Lex { score: self.score + o.score, card: self.card + o.card }
    }
}

impl Sub for Lex {
    type Output = Lex;
    fn sub(self, o: Lex) -> Lex {
        Lex { score: self.score - o.score, card: self.card - o.card }
    }
}

/// Kuhn-Munkres (shortest augmenting path form) minimising `cost` over a square
/// matrix. Returns `row_to_col` plus the row and column potentials.
fn solve_min(cost: &[Vec<Lex>]) -> (Vec<usize>, Vec<Lex>, Vec<Lex>) {
    let n = cost.len();
    // 1-based internally; index 0 is the virtual source column.
    let mut u = vec![Lex::ZERO; n + 1];
    let mut v = vec![Lex::ZERO; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![Lex::INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = Lex::INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur.lt(minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j].lt(delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] = u[owner[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[owner[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

struct TightGraph {
    adj: Vec<Vec<usize>>,
    row_to_col: Vec<usize>,
    col_to_row: Vec<usize>,
    fixed: Vec<bool>,
}

impl TightGraph {
    /// Moves row `i` onto column `target` while keeping a perfect matching of
    /// tight edges and leaving every fixed row untouched.
    fn reassign(&mut self, i: usize, target: usize) -> bool {
        let current = self.row_to_col[i];
        if current == target {
            return true;
        }
        let displaced = self.col_to_row[target];
        if self.fixed[displaced] {
            return false;
        }
        let mut visited = vec![false; self.col_to_row.len()];
        visited[target] = true;
        if self.augment(displaced, current, &mut visited) {
            self.row_to_col[i] = target;
            self.col_to_row[target] = i;
            true
        } else {
            false
        }
    }

    /// Finds an alternating path from `row` to the freed column `goal`.
    fn augment(&mut self, row: usize, goal: usize, visited: &mut [bool]) -> bool {
        for k in 0..self.adj[row].len() {
            let col = self.adj[row][k];
            if visited[col] {
                continue;
            }
            visited[col] = true;
            let ok = if col == goal {
                true
            } else {
                let next = self.col_to_row[col];
                !self.fixed[next] && self.augment(next, goal, visited)
            };
            if ok {
                self.row_to_col[row] = col;
                self.col_to_row[col] = row;
                return true;
            }
        }
        false
    }
}

/// Maximum-score matching restricted to `feasible` pairs.
///
/// Among matchings with the same total score the one with more pairs wins,
/// and remaining ties go to the lexicographically smallest sorted pair list.
/// Non-finite scores are treated as infeasible. The result is sorted by row.
pub fn hungarian_max(scores: &Array2<f64>, feasible: &Array2<bool>) -> Vec<(usize, usize)> {
    assert_eq!(scores.dim(), feasible.dim(), "score and feasibility shapes differ");
    let (n, m) = scores.dim();
    let ok = |i: usize, j: usize| feasible[[i, j]] && scores[[i, j]].is_finite();

    // Optimal matchings factor over connected components of the feasible
    // graph, and so does the row-major lexicographic order.
    let mut parent: Vec<usize> = (0..n + m).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in 0..m {
            if ok(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
                parent[a] = b;
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> = Default::default();
    for i in 0..n {
        if (0..m).any(|j| ok(i, j)) {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().0.push(i);
        }
    }
    for j in 0..m {
        let root = find(&mut parent, n + j);
        if let Some(g) = groups.get_mut(&root) {
            g.1.push(j);
        }
    }

    let mut out = Vec::new();
    for (rows, cols) in groups.values() {
        if rows.len() == 1 && cols.len() == 1 {
            if scores[[rows[0], cols[0]]] >= 0.0 {
                out.push((rows[0], cols[0]));
            }
            continue;
        }
        let sub = Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| scores[[rows[a], cols[b]]]);
        let sub_ok = Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| ok(rows[a], cols[b]));
        out.extend(solve_component(&sub, &sub_ok).into_iter().map(|(a, b)| (rows[a], cols[b])));
    }
    out.sort_unstable();
    out
}

fn solve_component(scores: &Array2<f64>, feasible: &Array2<bool>) -> Vec<(usize, usize)> {
    let (n, m) = scores.dim();
    let ok = |i: usize, j: usize| feasible[[i, j]];

    let k = n + m;
    let mut max_abs = 0.0f64;
    // Columns 0..m are real, m..k are dummies; rows 0..n are real, n..k dummies.
    let mut cost = vec![vec![Lex::ZERO; k]; k];
    for i in 0..n {
        for j in 0..m {
            cost[i][j] = if ok(i, j) {
                max_abs = max_abs.max(scores[[i, j]].abs());
                Lex { score: -scores[[i, j]], card: -1 }
            } else {
                // Strictly worse than leaving both endpoints unmatched.
                Lex { score: 0.0, card: 1 }
            };
        }
    }
    let (row_to_col, u, v) = solve_min(&cost);

    let eps = 1e-9 * (1.0 + max_abs * k as f64);
    let adj: Vec<Vec<usize>> = (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| {
                    if i < n && j < m && !ok(i, j) {
                        return false;
                    }
                    let red = cost[i][j] - u[i] - v[j];
                    red.card == 0 && red.score.abs() <= eps
                })
                .collect()
        })
        .collect();
    let mut col_to_row = vec![0usize; k];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    let mut g = TightGraph { adj, row_to_col, col_to_row, fixed: vec![false; k] };

    for i in 0..n {
        let real: Vec<usize> = g.adj[i].iter().copied().filter(|&c| c < m).collect();
        let mut placed = real.into_iter().any(|c| g.reassign(i, c));
        if !placed {
            placed = g.row_to_col[i] >= m || {
                let dummies: Vec<usize> = g.adj[i].iter().copied().filter(|&c| c >= m).collect();
                dummies.into_iter().any(|c| g.reassign(i, c))
            };
        }
        debug_assert!(placed, "current assignment is always a tight candidate");
        g.fixed[i] = true;
    }

    (0..n).filter(|&i| g.row_to_col[i] < m).map(|i| (i, g.row_to_col[i])).collect()
}

/// Total score of a matching, summed in pair order.
pub fn matching_score(scores: &Array2<f64>, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| scores[[i, j]]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    /// Exhaustive reference: every matching, best by (score, cardinality, lexicographic pairs).
    fn brute(scores: &Array2<f64>, feasible: &Array2<bool>) -> Vec<(usize, usize)> {
        fn rec(
            i: usize,
            s: &Array2<f64>,
            f: &Array2<bool>,
            used: &mut Vec<bool>,
            cur: &mut Vec<(usize, usize)>,
            best: &mut Option<(f64, Vec<(usize, usize)>)>,
        ) {
            let (n, m) = s.dim();
            if i == n {
                let total: f64 = cur.iter().map(|&(a, b)| s[[a, b]]).sum();
                let better = match best {
                    None => true,
                    Some((bs, bp)) => {
                        if (total - *bs).abs() > 1e-9 {
                            total > *bs
                        } else if cur.len() != bp.len() {
                            cur.len() > bp.len()
                        } else {
                            cur < bp
                        }
                    }
                };
                if better {
                    *best = Some((total, cur.clone()));
                }
                return;
            }
            for j in 0..m {
                if f[[i, j]] && !used[j] {
                    used[j] = true;
                    cur.push((i, j));
                    rec(i + 1, s, f, used, cur, best);
                    cur.pop();
                    used[j] = false;
                }
            }
            rec(i + 1, s, f, used, cur, best);
        }
        let mut best = None;
        rec(0, scores, feasible, &mut vec![false; scores.ncols()], &mut Vec::new(), &mut best);
        best.map(|(_, p)| p).unwrap_or_default()
    }

    #[test]
    fn two_by_two() {
        let s = array![[0.9, 0.1], [0.2, 0.8]];
        let f = Array2::from_elem((2, 2), true);
        let m = hungarian_max(&s, &f);
        assert_eq!(m, vec![(0, 0), (1, 1)]);
        assert!((matching_score(&s, &m) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn single_and_infeasible() {
        assert_eq!(hungarian_max(&array![[0.4]], &array![[true]]), vec![(0, 0)]);
        assert!(hungarian_max(&array![[0.4, 0.3]], &array![[false, false]]).is_empty());
        assert!(hungarian_max(&Array2::zeros((0, 3)), &Array2::from_elem((0, 3), true)).is_empty());
    }

    #[test]
    fn negative_pairs_left_unmatched_zero_pairs_taken() {
        let s = array![[-0.5, 0.0], [0.3, -1.0]];
        let f = Array2::from_elem((2, 2), true);
        assert_eq!(hungarian_max(&s, &f), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let s = Array2::from_elem((3, 3), 0.5);
        let f = Array2::from_elem((3, 3), true);
        assert_eq!(hungarian_max(&s, &f), vec![(0, 0), (1, 1), (2, 2)]);
        // 1.0 either as one pair or two halves: cardinality wins
        let s = array![[1.0, 0.5], [0.5, 0.0]];
        let f = array![[true, true], [true, false]];
        assert_eq!(hungarian_max(&s, &f), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for trial in 0..400 {
            let n = rng.random_range(0..=5);
            let m = rng.random_range(0..=5);
            let quantized = trial % 2 == 0;
            let s = Array2::from_shape_fn((n, m), |_| {
                if quantized {
                    rng.random_range(-1..=4) as f64 * 0.25
                } else {
                    rng.random_range(-0.2..1.0)
                }
            });
            let f = Array2::from_shape_fn((n, m), |_| rng.random_bool(0.75));
            let got = hungarian_max(&s, &f);
            let want = brute(&s, &f);
            assert_eq!(got, want, "trial {trial}: {s:?} {f:?}");
        }
    }
}
