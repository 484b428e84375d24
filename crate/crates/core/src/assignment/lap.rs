//! Rectangular linear assignment by shortest augmenting paths (the
//! Jonker-Volgenant / Kuhn-Munkres dual scheme). Each worker must receive a
//! distinct job; surplus jobs stay free at no cost. `+inf` entries are
//! forbidden arcs and are never traversed.

/// Dense `workers x jobs` cost matrix, row-major.
pub struct DenseCosts<'a> {
    pub workers: usize,
    pub jobs: usize,
    pub costs: &'a [f64],
}

impl DenseCosts<'_> {
    #[inline]
    fn at(&self, w: usize, j: usize) -> f64 {
        self.costs[w * self.jobs + j]
    }
}

/// Minimum-cost assignment of every worker to a distinct job.
///
/// Returns `worker -> job`, or `None` when no assignment avoids the
/// forbidden arcs.
pub fn solve(problem: &DenseCosts<'_>) -> Option<Vec<usize>> {
    let (nw, nj) = (problem.workers, problem.jobs);
    debug_assert_eq!(problem.costs.len(), nw * nj);
    if nw == 0 {
        return Some(Vec::new());
    }
    if nw > nj {
        return None;
    }

    // 1-based with slot 0 as the virtual root; job_owner[j] == 0 means free.
    let mut u = vec![0.0f64; nw + 1];
    let mut v = vec![0.0f64; nj + 1];
    let mut job_owner = vec![0usize; nj + 1];
    let mut way = vec![0usize; nj + 1];
    let mut minv = vec![f64::INFINITY; nj + 1];
    let mut used = vec![false; nj + 1];

    for w in 1..=nw {
        job_owner[0] = w;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let w0 = job_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=nj {
                if used[j] {
                    continue;
                }
                let cur = problem.at(w0 - 1, j - 1) - u[w0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if j1 == 0 || !delta.is_finite() {
                // no augmenting path over finite arcs
                return None;
            }
            for j in 0..=nj {
                if used[j] {
                    u[job_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if job_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            job_owner[j0] = job_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![usize::MAX; nw];
    for j in 1..=nj {
        if job_owner[j] != 0 {
            out[job_owner[j] - 1] = j - 1;
        }
    }
    Some(out)
}
