//! Cost matrix for object-to-component association and the solvers over it.
//!
//! For `m` Bernoulli components and `n` objects the matrix is
//! `(m + n) x n`. Row `i < m`, column `j` holds
//! `-log(r_i p_i(y_j) / (1 - r_i))`; row `m + j` holds `-log lambda(y_j)` in
//! column `j` and `+inf` elsewhere. An assignment picks one row per column,
//! each row at most once; its cost is the sum of the picked entries. Up to
//! the association-independent constant `sum_i log(1 - r_i) - lambda_bar`,
//! minus that cost is the log-likelihood of the association.

mod lap;
mod murty;

pub use lap::{solve as solve_dense, DenseCosts};
pub use murty::murty_k_best;

use crate::density::{log_box_density, log_ppp_intensity};
use crate::error::{Error, Result};
use crate::logspace::log1m;
use crate::types::{Assignment, GroundTruthObject, PmbDensity, Target};

/// Size limits for [`enumerate_all`].
pub const ENUMERATE_MAX_BERNOULLIS: usize = 8;
pub const ENUMERATE_MAX_OBJECTS: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    bernoullis: usize,
    objects: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    /// `entries` is row-major `(bernoullis + objects) x objects`. Entries must
    /// be finite or `+inf`, and the PPP block must be diagonal.
    pub fn new(bernoullis: usize, objects: usize, entries: Vec<f64>) -> Result<Self> {
        let expected = (bernoullis + objects) * objects;
        if entries.len() != expected {
            return Err(Error::CostShape {
                expected,
                got: entries.len(),
            });
        }
        for (k, &value) in entries.iter().enumerate() {
            let (row, col) = (k / objects, k % objects);
            let ok = if row >= bernoullis && row - bernoullis != col {
                value == f64::INFINITY
            } else {
                !value.is_nan() && value != f64::NEG_INFINITY
            };
            if !ok {
                return Err(Error::InvalidCost { row, col, value });
            }
        }
        Ok(CostMatrix {
            bernoullis,
            objects,
            entries,
        })
    }

    /// Builds the matrix from an `m x n` Bernoulli block and the `n` PPP
    /// diagonal entries.
    pub fn from_blocks(bernoullis: usize, upper: &[f64], ppp_diagonal: &[f64]) -> Result<Self> {
        let n = ppp_diagonal.len();
        if upper.len() != bernoullis * n {
            return Err(Error::CostShape {
                expected: bernoullis * n,
                got: upper.len(),
            });
        }
        let mut entries = Vec::with_capacity((bernoullis + n) * n);
        entries.extend_from_slice(upper);
        for (j, &d) in ppp_diagonal.iter().enumerate() {
            for l in 0..n {
                entries.push(if l == j { d } else { f64::INFINITY });
            }
        }
        Self::new(bernoullis, n, entries)
    }

    pub fn rows(&self) -> usize {
        self.bernoullis + self.objects
    }

    pub fn cols(&self) -> usize {
        self.objects
    }

    pub fn bernoullis(&self) -> usize {
        self.bernoullis
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.objects + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn target_of_row(&self, row: usize) -> Target {
        if row < self.bernoullis {
            Target::Bernoulli(row)
        } else {
            Target::Ppp
        }
    }

    pub fn row_of_target(&self, target: Target, col: usize) -> usize {
        match target {
            Target::Bernoulli(i) => i,
            Target::Ppp => self.bernoullis + col,
        }
    }

    /// Frobenius inner product of the assignment matrix with the costs,
    /// summed in column order.
    pub fn cost_of(&self, gt_to_target: &[Target]) -> f64 {
        gt_to_target
            .iter()
            .enumerate()
            .map(|(j, &t)| self.get(self.row_of_target(t, j), j))
            .sum()
    }

    pub(crate) fn assignment_from_rows(&self, col_to_row: &[usize]) -> Assignment {
        let gt_to_target: Vec<Target> = col_to_row.iter().map(|&r| self.target_of_row(r)).collect();
        let total_cost = self.cost_of(&gt_to_target);
        Assignment {
            gt_to_target,
            total_cost,
        }
    }
}

/// Per-pair log-likelihood pieces for one image, evaluated once and shared by
/// the cost matrix, the NLL, and the decomposition.
#[derive(Clone, Debug)]
pub struct LikelihoodTable {
    pub log_r: Vec<f64>,
    pub log_not_r: Vec<f64>,
    /// `log p_{i,cls}(c_j)`, row-major `m x n`.
    pub log_cls: Vec<f64>,
    /// `log p_{i,reg}(b_j)`, row-major `m x n`.
    pub log_reg: Vec<f64>,
    /// `log lambda(y_j)`.
    pub log_lambda: Vec<f64>,
    pub expected_cardinality: f64,
    pub objects: usize,
}

impl LikelihoodTable {
    pub fn new(pmb: &PmbDensity, gts: &[GroundTruthObject]) -> Result<Self> {
        let m = pmb.bernoullis.len();
        let n = gts.len();
        let mut log_cls = Vec::with_capacity(m * n);
        let mut log_reg = Vec::with_capacity(m * n);
        for comp in &pmb.bernoullis {
            for y in gts {
                let pc = comp.class_dist().prob(y.class_id)?;
                log_cls.push(pc.ln());
                log_reg.push(log_box_density(comp.box_dist(), &y.bbox));
            }
        }
        let log_lambda = gts
            .iter()
            .map(|y| log_ppp_intensity(&pmb.ppp, y))
            .collect::<Result<Vec<_>>>()?;
        Ok(LikelihoodTable {
            log_r: pmb.bernoullis.iter().map(|b| b.existence().ln()).collect(),
            log_not_r: pmb.bernoullis.iter().map(|b| log1m(b.existence())).collect(),
            log_cls,
            log_reg,
            log_lambda,
            expected_cardinality: pmb.ppp.expected_cardinality(),
            objects: n,
        })
    }

    pub fn bernoullis(&self) -> usize {
        self.log_r.len()
    }

    /// `log(r_i p_i(y_j))`, the log-likelihood of component `i` explaining
    /// object `j`. A zero class probability gives `-inf` regardless of the box.
    pub fn log_matched(&self, i: usize, j: usize) -> f64 {
        let k = i * self.objects + j;
        let lc = self.log_cls[k];
        if lc == f64::NEG_INFINITY || self.log_r[i] == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        self.log_r[i] + lc + self.log_reg[k]
    }

    /// Log-likelihood of one association, assembled term by term.
    pub fn assignment_log_likelihood(&self, gt_to_target: &[Target]) -> f64 {
        let mut matched = vec![false; self.bernoullis()];
        let mut ll = 0.0;
        for (j, t) in gt_to_target.iter().enumerate() {
            match *t {
                Target::Bernoulli(i) => {
                    matched[i] = true;
                    ll += self.log_matched(i, j);
                }
                Target::Ppp => ll += self.log_lambda[j],
            }
        }
        for (i, m) in matched.iter().enumerate() {
            if !m {
                ll += self.log_not_r[i];
            }
        }
        ll
    }

    /// The cost matrix. Fails if any component has `r = 1`, whose entries
    /// would be `-inf`.
    pub fn cost_matrix(&self) -> Result<CostMatrix> {
        let (m, n) = (self.bernoullis(), self.objects);
        if let Some(index) = self.log_not_r.iter().position(|&v| v == f64::NEG_INFINITY) {
            if n > 0 {
                return Err(Error::CertainExistence { index });
            }
        }
        let mut upper = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                let lm = self.log_matched(i, j);
                upper.push(if lm == f64::NEG_INFINITY {
                    f64::INFINITY
                } else {
                    -(lm - self.log_not_r[i])
                });
            }
        }
        let diag: Vec<f64> = self.log_lambda.iter().map(|&l| -l).collect();
        CostMatrix::from_blocks(m, &upper, &diag)
    }
}

/// Cost matrix for `pmb` against `gts`.
///
/// Rows with `r = 0` are entirely `+inf`. A component with `r = 1` is
/// rejected with [`Error::CertainExistence`]; clamp it first with
/// [`PmbDensity::clamp_existence`].
pub fn build_cost_matrix(pmb: &PmbDensity, gts: &[GroundTruthObject]) -> Result<CostMatrix> {
    LikelihoodTable::new(pmb, gts)?.cost_matrix()
}

/// Minimum-cost assignment, or `None` if every assignment uses a forbidden
/// arc.
pub fn solve_optimal(costs: &CostMatrix) -> Option<Assignment> {
    let problem = DenseCosts {
        workers: costs.cols(),
        jobs: costs.rows(),
        costs: &transpose(costs),
    };
    lap::solve(&problem).map(|rows| costs.assignment_from_rows(&rows))
}

/// Column-major view (`objects x rows`) for the solvers, which treat objects
/// as workers.
pub(crate) fn transpose(costs: &CostMatrix) -> Vec<f64> {
    let (rows, cols) = (costs.rows(), costs.cols());
    let mut out = Vec::with_capacity(rows * cols);
    for c in 0..cols {
        for r in 0..rows {
            out.push(costs.get(r, c));
        }
    }
    out
}

/// Every feasible assignment, sorted by cost and then lexicographically by
/// target. Exhaustive; limited to 8 Bernoullis and 6 objects.
pub fn enumerate_all(costs: &CostMatrix) -> Result<Vec<Assignment>> {
    if costs.bernoullis() > ENUMERATE_MAX_BERNOULLIS || costs.cols() > ENUMERATE_MAX_OBJECTS {
        return Err(Error::TooLarge {
            what: format!(
                "{} Bernoullis x {} objects (limit {ENUMERATE_MAX_BERNOULLIS} x {ENUMERATE_MAX_OBJECTS})",
                costs.bernoullis(),
                costs.cols()
            ),
        });
    }
    let mut out = Vec::new();
    let mut rows = Vec::with_capacity(costs.cols());
    let mut used = vec![false; costs.rows()];
    enumerate_rec(costs, &mut rows, &mut used, &mut out);
    sort_assignments(&mut out);
    Ok(out)
}

fn enumerate_rec(costs: &CostMatrix, rows: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Assignment>) {
    let col = rows.len();
    if col == costs.cols() {
        out.push(costs.assignment_from_rows(rows));
        return;
    }
    for r in 0..costs.rows() {
        if used[r] || costs.get(r, col) == f64::INFINITY {
            continue;
        }
        used[r] = true;
        rows.push(r);
        enumerate_rec(costs, rows, used, out);
        rows.pop();
        used[r] = false;
    }
}

pub(crate) fn sort_assignments(list: &mut [Assignment]) {
    list.sort_by(|a, b| {
        a.total_cost
            .total_cmp(&b.total_cost)
            .then_with(|| a.gt_to_target.cmp(&b.gt_to_target))
    });
}
