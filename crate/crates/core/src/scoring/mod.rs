//! PMB-NLL and MB-NLL scores, their single-assignment decomposition, and the
//! MB-NLL training loss.
//!
//! The cost matrix drops two association-independent factors of the PMB
//! likelihood: `prod_i (1 - r_i)` and `exp(-lambda_bar)`. Both are restored
//! here, so the log-likelihood of a retained assignment `A` is
//! `-cost(A) + sum_i log(1 - r_i)` and the score is
//! `lambda_bar - logsumexp_A(loglik(A))`. When some `r_i` sits within `1e-9`
//! of one, `log(1 - r_i)` is too ill-conditioned for that shortcut and each
//! assignment's log-likelihood is assembled term by term instead.

mod training;

pub use training::{
    training_loss_for_assignment, training_loss_gradients, training_loss_gradients_for, training_loss_mb,
    training_matching_costs, ParameterGradient, TrainingLoss,
};

use serde::{Deserialize, Serialize};

use crate::assignment::{murty_k_best, solve_optimal, CostMatrix, LikelihoodTable};
use crate::error::{Error, Result};
use crate::logspace::logsumexp;
use crate::types::{Assignment, BernoulliComponent, GroundTruthObject, NllDecomposition, NllReport, PmbDensity};

/// Number of assignments used for evaluation by default.
pub const DEFAULT_Q: usize = 25;

/// Existence probabilities at or above this switch the per-assignment
/// log-likelihood to direct assembly.
pub const NEAR_CERTAIN_EXISTENCE: f64 = 1.0 - 1e-9;

/// Approximate `-log f_PMB(Y)` from the `q` most likely assignments.
///
/// Returns `nll = +inf` if no assignment is feasible. Components with
/// `r = 1` are rejected by the cost-matrix builder when there is at least
/// one object.
pub fn pmb_nll(pmb: &PmbDensity, gts: &[GroundTruthObject], q: usize) -> Result<NllReport> {
    if q == 0 {
        return Err(Error::ZeroQ);
    }
    let table = LikelihoodTable::new(pmb, gts)?;
    let costs = table.cost_matrix()?;
    Ok(nll_with_costs(pmb, &table, &costs, q))
}

/// Scores with a caller-supplied cost matrix, which must come from `table`.
pub(crate) fn nll_with_costs(pmb: &PmbDensity, table: &LikelihoodTable, costs: &CostMatrix, q: usize) -> NllReport {
    report_from_assignments(pmb, table, murty_k_best(costs, q))
}

/// `pmb_nll` with an empty Poisson intensity. Infinite whenever there are
/// more objects than components.
pub fn mb_nll(mb: &[BernoulliComponent], gts: &[GroundTruthObject], q: usize) -> Result<NllReport> {
    pmb_nll(&PmbDensity::multi_bernoulli(mb.to_vec()), gts, q)
}

fn report_from_assignments(pmb: &PmbDensity, table: &LikelihoodTable, assignments: Vec<Assignment>) -> NllReport {
    if assignments.is_empty() {
        return NllReport {
            nll: f64::INFINITY,
            per_assignment_loglik: Vec::new(),
            best_assignment: None,
            decomposition: None,
            q_used: 0,
        };
    }
    let direct = pmb.bernoullis.iter().any(|b| b.existence() >= NEAR_CERTAIN_EXISTENCE);
    let constant: f64 = table.log_not_r.iter().sum();
    let per_assignment_loglik: Vec<f64> = assignments
        .iter()
        .map(|a| {
            if direct {
                table.assignment_log_likelihood(&a.gt_to_target)
            } else {
                -a.total_cost + constant
            }
        })
        .collect();
    let nll = table.expected_cardinality - logsumexp(&per_assignment_loglik);
    let best = assignments.into_iter().next();
    let decomposition = best.as_ref().map(|a| contributions_from_table(table, a).summary());
    NllReport {
        nll,
        q_used: per_assignment_loglik.len(),
        per_assignment_loglik,
        best_assignment: best,
        decomposition,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedContribution {
    pub bernoulli: usize,
    pub object: usize,
    /// `-log(r_i p_{i,cls}(c_j))`
    pub classification: f64,
    /// `-log p_{i,reg}(b_j)`
    pub regression: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FalseDetection {
    pub bernoulli: usize,
    /// `-log(1 - r_i)`
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissedObject {
    pub object: usize,
    /// `-log lambda(y_j)`
    pub value: f64,
}

/// Per-prediction and per-object terms of one assignment's NLL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contributions {
    pub matched: Vec<MatchedContribution>,
    pub false_detections: Vec<FalseDetection>,
    pub missed: Vec<MissedObject>,
    pub ppp_rate: f64,
}

impl Contributions {
    pub fn summary(&self) -> NllDecomposition {
        NllDecomposition {
            regression: self.matched.iter().map(|c| c.regression).sum(),
            classification: self.matched.iter().map(|c| c.classification).sum(),
            false_detection: self.false_detections.iter().map(|c| c.value).sum(),
            missed_match: self.missed.iter().map(|c| c.value).sum(),
            ppp_rate: self.ppp_rate,
            matched: self.matched.len(),
            unmatched: self.false_detections.len(),
            ppp_matched: self.missed.len(),
        }
    }
}

fn contributions_from_table(table: &LikelihoodTable, assignment: &Assignment) -> Contributions {
    let n = table.objects;
    let owner = assignment.bernoulli_to_gt(table.bernoullis());
    let matched = assignment
        .matched_pairs()
        .map(|(i, j)| MatchedContribution {
            bernoulli: i,
            object: j,
            classification: -(table.log_r[i] + table.log_cls[i * n + j]),
            regression: -table.log_reg[i * n + j],
        })
        .collect();
    let false_detections = owner
        .iter()
        .enumerate()
        .filter(|(_, o)| o.is_none())
        .map(|(i, _)| FalseDetection {
            bernoulli: i,
            value: -table.log_not_r[i],
        })
        .collect();
    let missed = assignment
        .ppp_objects()
        .map(|j| MissedObject {
            object: j,
            value: -table.log_lambda[j],
        })
        .collect();
    Contributions {
        matched,
        false_detections,
        missed,
        ppp_rate: table.expected_cardinality,
    }
}

/// Terms of `assignment`'s NLL for `pmb` against `gts`.
pub fn contributions(pmb: &PmbDensity, gts: &[GroundTruthObject], assignment: &Assignment) -> Result<Contributions> {
    let table = LikelihoodTable::new(pmb, gts)?;
    Ok(contributions_from_table(&table, assignment))
}

/// Classification / regression / false-detection / missed-object split of
/// the most likely assignment. The terms sum to `pmb_nll(.., 1).nll`.
/// `None` when no assignment is feasible.
pub fn decompose(pmb: &PmbDensity, gts: &[GroundTruthObject]) -> Result<Option<NllDecomposition>> {
    Ok(decompose_detailed(pmb, gts)?.map(|c| c.summary()))
}

pub fn decompose_detailed(pmb: &PmbDensity, gts: &[GroundTruthObject]) -> Result<Option<Contributions>> {
    let table = LikelihoodTable::new(pmb, gts)?;
    let costs = table.cost_matrix()?;
    Ok(solve_optimal(&costs).map(|a| contributions_from_table(&table, &a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::brute_force_log_pmb;
    use crate::types::{BoundingBox, BoxDistribution, ClassDistribution, IntensityComponent, PoissonIntensity, Target};
    use approx::assert_abs_diff_eq;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn comp(r: f64, probs: &[f64], mean: BoundingBox, s: f64) -> BernoulliComponent {
        BernoulliComponent::new(
            r,
            ClassDistribution::new(probs.to_vec()).unwrap(),
            BoxDistribution::laplace(mean, [s; 4]).unwrap(),
        )
        .unwrap()
    }

    fn ppp_with(weight: f64, mean: BoundingBox) -> PoissonIntensity {
        PoissonIntensity::new(vec![IntensityComponent {
            weight,
            cls: ClassDistribution::new(vec![0.5, 0.5]).unwrap(),
            bbox: BoxDistribution::laplace(mean, [4.0; 4]).unwrap(),
        }])
        .unwrap()
    }

    #[test]
    fn empty_scene_costs_expected_cardinality() {
        let pmb = PmbDensity::new(vec![], ppp_with(0.3, bb(0.0, 0.0, 10.0, 10.0)));
        let rep = pmb_nll(&pmb, &[], 25).unwrap();
        assert_abs_diff_eq!(rep.nll, 0.3, epsilon = 1e-15);
        assert_eq!(rep.q_used, 1);
        let d = rep.decomposition.unwrap();
        assert_eq!(
            (
                d.regression,
                d.classification,
                d.false_detection,
                d.missed_match,
                d.ppp_rate
            ),
            (0.0, 0.0, 0.0, 0.0, 0.3)
        );
    }

    #[test]
    fn single_bernoulli_empty_scene() {
        let c = comp(0.75, &[1.0], bb(0.0, 0.0, 10.0, 10.0), 1.0);
        let rep = mb_nll(&[c], &[], 25).unwrap();
        assert_abs_diff_eq!(rep.nll, -(0.25f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(rep.nll, 1.3863, epsilon = 1e-4);
    }

    #[test]
    fn more_objects_than_components_is_infinite_for_mb() {
        let c = comp(0.9, &[1.0], bb(0.0, 0.0, 10.0, 10.0), 1.0);
        let gts = [
            GroundTruthObject::new(0, bb(0.0, 0.0, 10.0, 10.0)),
            GroundTruthObject::new(0, bb(1.0, 0.0, 10.0, 10.0)),
        ];
        let rep = mb_nll(&[c], &gts, 25).unwrap();
        assert_eq!(rep.nll, f64::INFINITY);
        assert!(rep.best_assignment.is_none());
        assert_eq!(rep.q_used, 0);
    }

    #[test]
    fn q_zero_rejected() {
        assert!(matches!(pmb_nll(&PmbDensity::default(), &[], 0), Err(Error::ZeroQ)));
    }

    #[test]
    fn two_component_scene_matches_enumeration_and_is_monotone_in_q() {
        let c1 = comp(0.9, &[0.7, 0.3], bb(0.0, 0.0, 10.0, 10.0), 4.0);
        let c2 = comp(0.8, &[0.4, 0.6], bb(12.0, 0.0, 22.0, 10.0), 1.0);
        let gts = [
            GroundTruthObject::new(0, bb(1.0, 0.0, 10.0, 11.0)),
            GroundTruthObject::new(1, bb(12.0, 1.0, 21.0, 10.0)),
        ];
        let q1 = mb_nll(&[c1.clone(), c2.clone()], &gts, 1).unwrap();
        let q2 = mb_nll(&[c1.clone(), c2.clone()], &gts, 2).unwrap();
        assert_eq!(q2.q_used, 2);
        assert!(q2.nll <= q1.nll);
        let exact = brute_force_log_pmb(&PmbDensity::multi_bernoulli(vec![c1, c2]), &gts).unwrap();
        assert_abs_diff_eq!(q2.nll, -exact, epsilon = 1e-10);
    }

    #[test]
    fn decomposition_sums_to_best_assignment_nll() {
        let pmb = PmbDensity::new(
            vec![
                comp(0.9, &[0.7, 0.3], bb(0.0, 0.0, 10.0, 10.0), 2.0),
                comp(0.35, &[0.4, 0.6], bb(40.0, 0.0, 52.0, 10.0), 1.0),
            ],
            ppp_with(0.4, bb(100.0, 100.0, 120.0, 110.0)),
        );
        let gts = [
            GroundTruthObject::new(0, bb(1.0, 0.0, 10.0, 11.0)),
            GroundTruthObject::new(1, bb(101.0, 99.0, 121.0, 112.0)),
        ];
        let rep = pmb_nll(&pmb, &gts, 1).unwrap();
        let d = decompose(&pmb, &gts).unwrap().unwrap();
        assert_eq!(rep.decomposition.unwrap(), d);
        assert_abs_diff_eq!(d.total(), rep.nll, epsilon = 1e-9);
        assert_eq!((d.matched, d.unmatched, d.ppp_matched), (1, 1, 1));
        assert_eq!(
            rep.best_assignment.unwrap().gt_to_target,
            vec![Target::Bernoulli(0), Target::Ppp]
        );
    }

    #[test]
    fn all_objects_in_ppp() {
        let pmb = PmbDensity::new(vec![], ppp_with(0.6, bb(0.0, 0.0, 10.0, 10.0)));
        let gts = [
            GroundTruthObject::new(0, bb(1.0, 0.0, 10.0, 11.0)),
            GroundTruthObject::new(1, bb(2.0, 2.0, 9.0, 9.0)),
        ];
        let d = decompose(&pmb, &gts).unwrap().unwrap();
        assert_eq!((d.classification, d.regression), (0.0, 0.0));
        let expected: f64 = gts
            .iter()
            .map(|y| -crate::density::log_ppp_intensity(&pmb.ppp, y).unwrap())
            .sum();
        assert_abs_diff_eq!(d.missed_match, expected, epsilon = 1e-12);
    }

    #[test]
    fn near_certain_existence_uses_direct_route() {
        let pmb = PmbDensity::new(
            vec![
                comp(1.0, &[0.5, 0.5], bb(0.0, 0.0, 10.0, 10.0), 2.0),
                comp(0.6, &[0.5, 0.5], bb(30.0, 0.0, 40.0, 10.0), 2.0),
            ],
            ppp_with(0.2, bb(0.0, 0.0, 40.0, 10.0)),
        )
        .clamp_existence(1e-12);
        let gts = [GroundTruthObject::new(1, bb(0.5, 0.0, 10.0, 10.5))];
        let rep = pmb_nll(&pmb, &gts, 50).unwrap();
        let exact = brute_force_log_pmb(&pmb, &gts).unwrap();
        assert_abs_diff_eq!(rep.nll, -exact, epsilon = 1e-9);
    }

    #[test]
    fn certain_unmatched_component_without_objects_is_infinite() {
        let c = comp(1.0, &[1.0], bb(0.0, 0.0, 10.0, 10.0), 1.0);
        let rep = mb_nll(&[c], &[], 5).unwrap();
        assert_eq!(rep.nll, f64::INFINITY);
    }
}
