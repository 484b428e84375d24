//! Murty's k-best assignment enumeration.
//!
//! Each search node fixes some object-to-row pairings and forbids others.
//! After a node's optimum is emitted, its solution space is split: for the
//! free objects in ascending index order `c_1 < c_2 < ...`, child `t` keeps
//! the parent's pairings of `c_1..c_{t-1}` and forbids the parent's pairing
//! of `c_t`. The children partition the remaining solutions, so no
//! assignment is produced twice.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::lap::{self, DenseCosts};
use super::CostMatrix;
use crate::types::Assignment;

struct Node {
    cost: f64,
    /// Column -> row of this node's optimum.
    rows: Vec<usize>,
    /// Column -> row fixed by the partition, if any.
    forced: Vec<Option<usize>>,
    /// Forbidden `(col, row)` arcs on still-free columns.
    excluded: Vec<(usize, usize)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Reversed so BinaryHeap pops the cheapest node; ties go to the
    // lexicographically smaller row vector, which orders like the targets.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.rows.cmp(&self.rows))
    }
}

/// The `q` lowest-cost assignments in non-decreasing cost order. Returns
/// fewer when fewer feasible assignments exist, and an empty list when none
/// does.
pub fn murty_k_best(costs: &CostMatrix, q: usize) -> Vec<Assignment> {
    let mut out = Vec::with_capacity(q.min(64));
    if q == 0 {
        return out;
    }
    let n = costs.cols();
    let mut scratch = Scratch::default();
    let root_forced = vec![None; n];
    let Some(root) = solve_constrained(costs, &root_forced, &[], &mut scratch) else {
        return out;
    };
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        cost: total(costs, &root),
        rows: root,
        forced: root_forced,
        excluded: Vec::new(),
    });

    while let Some(node) = heap.pop() {
        out.push(costs.assignment_from_rows(&node.rows));
        if out.len() == q {
            break;
        }
        let free: Vec<usize> = (0..n).filter(|&c| node.forced[c].is_none()).collect();
        let mut forced = node.forced.clone();
        for (t, &col) in free.iter().enumerate() {
            if t > 0 {
                let prev = free[t - 1];
                forced[prev] = Some(node.rows[prev]);
            }
            let mut excluded: Vec<(usize, usize)> = node
                .excluded
                .iter()
                .copied()
                .filter(|&(c, _)| forced[c].is_none())
                .collect();
            excluded.push((col, node.rows[col]));
            if let Some(rows) = solve_constrained(costs, &forced, &excluded, &mut scratch) {
                heap.push(Node {
                    cost: total(costs, &rows),
                    rows,
                    forced: forced.clone(),
                    excluded,
                });
            }
        }
    }
    out
}

fn total(costs: &CostMatrix, rows: &[usize]) -> f64 {
    rows.iter().enumerate().map(|(c, &r)| costs.get(r, c)).sum()
}

#[derive(Default)]
struct Scratch {
    sub: Vec<f64>,
    row_index: Vec<usize>,
}

/// Optimum of the subproblem with `forced` pairings fixed and `excluded`
/// arcs removed, as a full column -> row vector.
fn solve_constrained(
    costs: &CostMatrix,
    forced: &[Option<usize>],
    excluded: &[(usize, usize)],
    scratch: &mut Scratch,
) -> Option<Vec<usize>> {
    let rows = costs.rows();
    let mut taken = vec![false; rows];
    for r in forced.iter().flatten() {
        taken[*r] = true;
    }
    let free_cols: Vec<usize> = (0..forced.len()).filter(|&c| forced[c].is_none()).collect();

    // Only rows with a finite entry in some free column can take part.
    const UNUSED: usize = usize::MAX;
    scratch.row_index.clear();
    scratch.row_index.resize(rows, UNUSED);
    let mut avail_rows = Vec::new();
    for (r, &t) in taken.iter().enumerate().take(rows) {
        if !t && free_cols.iter().any(|&c| costs.get(r, c) != f64::INFINITY) {
            scratch.row_index[r] = avail_rows.len();
            avail_rows.push(r);
        }
    }

    let (nw, nj) = (free_cols.len(), avail_rows.len());
    scratch.sub.clear();
    scratch.sub.reserve(nw * nj);
    for &c in &free_cols {
        for &r in &avail_rows {
            scratch.sub.push(costs.get(r, c));
        }
    }
    for &(c, r) in excluded {
        let j = scratch.row_index[r];
        if j == UNUSED {
            continue;
        }
        if let Ok(w) = free_cols.binary_search(&c) {
            scratch.sub[w * nj + j] = f64::INFINITY;
        }
    }

    let sol = lap::solve(&DenseCosts {
        workers: nw,
        jobs: nj,
        costs: &scratch.sub,
    })?;
    let mut out: Vec<usize> = forced.iter().map(|f| f.unwrap_or(usize::MAX)).collect();
    for (w, j) in sol.into_iter().enumerate() {
        out[free_cols[w]] = avail_rows[j];
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::super::{enumerate_all, solve_optimal};
    use super::*;
    use crate::types::Target;
    use rand::{Rng, SeedableRng};

    const INF: f64 = f64::INFINITY;

    fn random_matrix(rng: &mut impl Rng, m: usize, n: usize) -> CostMatrix {
        let upper: Vec<f64> = (0..m * n)
            .map(|_| {
                if rng.random_bool(0.15) {
                    INF
                } else {
                    rng.random_range(-4.0..6.0)
                }
            })
            .collect();
        let diag: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.2) {
                    INF
                } else {
                    rng.random_range(-2.0..8.0)
                }
            })
            .collect();
        CostMatrix::from_blocks(m, &upper, &diag).unwrap()
    }

    #[test]
    fn q_one_is_the_optimum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m = rng.random_range(0..6);
            let n = rng.random_range(0..5);
            let cm = random_matrix(&mut rng, m, n);
            let best = murty_k_best(&cm, 1);
            match solve_optimal(&cm) {
                Some(a) => assert_eq!(best, vec![a]),
                None => assert!(best.is_empty()),
            }
        }
    }

    #[test]
    fn full_enumeration_matches_exhaustive() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let m = rng.random_range(0..6);
            let n = rng.random_range(0..5);
            let cm = random_matrix(&mut rng, m, n);
            let all = enumerate_all(&cm).unwrap();
            let murty = murty_k_best(&cm, all.len() + 5);
            assert_eq!(murty.len(), all.len());
            for (a, b) in murty.iter().zip(&all) {
                assert!((a.total_cost - b.total_cost).abs() < 1e-9);
            }
            let mut sorted = murty.clone();
            crate::assignment::sort_assignments(&mut sorted);
            assert_eq!(sorted, all);
        }
    }

    #[test]
    fn two_by_two_multi_bernoulli_has_two_assignments() {
        let cm = CostMatrix::from_blocks(2, &[1.0, 3.0, 2.5, 0.5], &[INF, INF]).unwrap();
        let out = murty_k_best(&cm, 4);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].gt_to_target, vec![Target::Bernoulli(0), Target::Bernoulli(1)]);
        assert_eq!(out[1].gt_to_target, vec![Target::Bernoulli(1), Target::Bernoulli(0)]);
    }

    #[test]
    fn infeasible_root_gives_empty() {
        let cm = CostMatrix::from_blocks(1, &[0.0, 0.0], &[INF, INF]).unwrap();
        assert!(murty_k_best(&cm, 10).is_empty());
    }
}
