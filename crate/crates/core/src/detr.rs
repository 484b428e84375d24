//! DETR-style matching costs next to their MB-NLL counterparts, and the
//! square permutation solver both are minimised with.
//!
//! In every cost function the ground-truth argument is `None` for a padding
//! (background) slot.

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_dense, DenseCosts};
use crate::density::log_box_density;
use crate::error::{Error, Result};
use crate::logspace::log1m;
use crate::types::{BernoulliComponent, BoundingBox, GroundTruthObject};

/// Generalized IoU in `[-1, 1]`. Boxes of zero area count as having no
/// overlap unless they coincide.
pub fn generalized_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    let iou = if union > 0.0 {
        inter / union
    } else if a == b {
        1.0
    } else {
        0.0
    };
    let cw = a.x2.max(b.x2) - a.x1.min(b.x1);
    let ch = a.y2.max(b.y2) - a.y1.min(b.y1);
    let enclosing = cw.max(0.0) * ch.max(0.0);
    if enclosing > 0.0 {
        iou - (enclosing - union) / enclosing
    } else {
        iou
    }
}

fn class_probability(gt: &GroundTruthObject, pred: &BernoulliComponent) -> Result<f64> {
    Ok(pred.existence() * pred.class_dist().prob(gt.class_id)?)
}

/// `-r p_cls(c) + lambda_iou (1 - GIoU) + lambda_l1 |b - b_hat|_1`, and zero
/// for background.
pub fn detr_matching_cost(
    gt: Option<&GroundTruthObject>,
    pred: &BernoulliComponent,
    lambda_iou: f64,
    lambda_l1: f64,
) -> Result<f64> {
    let Some(gt) = gt else { return Ok(0.0) };
    let mean = pred.box_dist().mean();
    Ok(-class_probability(gt, pred)?
        + lambda_iou * (1.0 - generalized_iou(&gt.bbox, mean))
        + lambda_l1 * gt.bbox.l1_distance(mean))
}

/// `-log(r p_cls(c)) + |b - b_hat|_1 / s`, and `-log(1 - r)` for background.
pub fn mb_matching_cost_constant_scale(
    gt: Option<&GroundTruthObject>,
    pred: &BernoulliComponent,
    s: f64,
) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::NonPositive("s"));
    }
    let Some(gt) = gt else {
        return Ok(-log1m(pred.existence()));
    };
    Ok(-class_probability(gt, pred)?.ln() + gt.bbox.l1_distance(pred.box_dist().mean()) / s)
}

/// `-log(r p_cls(c)) - log p_reg(b)`, and `-log(1 - r)` for background.
pub fn mb_matching_cost_full(gt: Option<&GroundTruthObject>, pred: &BernoulliComponent) -> Result<f64> {
    let Some(gt) = gt else {
        return Ok(-log1m(pred.existence()));
    };
    Ok(-class_probability(gt, pred)?.ln() - log_box_density(pred.box_dist(), &gt.bbox))
}

/// How the DETR cost scores the class of a pairing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetrClassTerm {
    /// `-r p_cls(c)` for objects and zero for background, as in DETR.
    #[default]
    Probability,
    /// `-log(r p_cls(c))` for objects and `-log(1 - r)` for background.
    LogProbability,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetrCost {
    pub lambda_iou: f64,
    pub lambda_l1: f64,
    pub class_term: DetrClassTerm,
}

impl Default for DetrCost {
    fn default() -> Self {
        DetrCost {
            lambda_iou: 2.0,
            lambda_l1: 5.0,
            class_term: DetrClassTerm::Probability,
        }
    }
}

impl DetrCost {
    pub fn cost(&self, gt: Option<&GroundTruthObject>, pred: &BernoulliComponent) -> Result<f64> {
        match self.class_term {
            DetrClassTerm::Probability => detr_matching_cost(gt, pred, self.lambda_iou, self.lambda_l1),
            DetrClassTerm::LogProbability => {
                let Some(g) = gt else {
                    return Ok(-log1m(pred.existence()));
                };
                let mean = pred.box_dist().mean();
                Ok(-class_probability(g, pred)?.ln()
                    + self.lambda_iou * (1.0 - generalized_iou(&g.bbox, mean))
                    + self.lambda_l1 * g.bbox.l1_distance(mean))
            }
        }
    }
}

/// Prediction `i` goes to ground truth `pred_to_gt[i]`, or to background.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Permutation {
    pub pred_to_gt: Vec<Option<usize>>,
    pub total_cost: f64,
}

impl Permutation {
    /// Inverse map: which prediction each ground-truth object received.
    pub fn gt_to_pred(&self, n: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n];
        for (i, g) in self.pred_to_gt.iter().enumerate() {
            if let Some(j) = g {
                out[*j] = i;
            }
        }
        out
    }
}

/// Minimum-cost permutation of `preds` over `gts` padded with background to
/// `preds.len()`. Needs at least as many predictions as objects.
pub fn optimal_permutation<F>(
    cost_fn: F,
    preds: &[BernoulliComponent],
    gts: &[GroundTruthObject],
) -> Result<Permutation>
where
    F: Fn(Option<&GroundTruthObject>, &BernoulliComponent) -> Result<f64>,
{
    let n = preds.len();
    if n < gts.len() {
        return Err(Error::TooFewPredictions {
            predictions: n,
            objects: gts.len(),
        });
    }
    let mut costs = Vec::with_capacity(n * n);
    for p in preds {
        let background = cost_fn(None, p)?;
        for slot in 0..n {
            let c = if slot < gts.len() {
                cost_fn(Some(&gts[slot]), p)?
            } else {
                background
            };
            if c.is_nan() || c == f64::NEG_INFINITY {
                return Err(Error::NonFinite("matching cost"));
            }
            costs.push(c);
        }
    }
    let sol = solve_dense(&DenseCosts {
        workers: n,
        jobs: n,
        costs: &costs,
    })
    .ok_or(Error::Infeasible)?;
    let total_cost = sol.iter().enumerate().map(|(i, &s)| costs[i * n + s]).sum();
    Ok(Permutation {
        pred_to_gt: sol.into_iter().map(|s| (s < gts.len()).then_some(s)).collect(),
        total_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BoxDistribution, ClassDistribution};
    use approx::assert_abs_diff_eq;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn pred(r: f64, mean: BoundingBox, s: f64) -> BernoulliComponent {
        BernoulliComponent::new(
            r,
            ClassDistribution::new(vec![1.0]).unwrap(),
            BoxDistribution::laplace(mean, [s; 4]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn giou_cases() {
        let a = bb(0.0, 0.0, 2.0, 2.0);
        assert_eq!(generalized_iou(&a, &a), 1.0);
        // half overlap: inter 2, union 6, enclosing 6
        assert_abs_diff_eq!(generalized_iou(&a, &bb(1.0, 0.0, 3.0, 2.0)), 1.0 / 3.0, epsilon = 1e-15);
        // unit boxes 2 apart on x: enclosing 4 x 1, union 2
        let u = bb(0.0, 0.0, 1.0, 1.0);
        let v = bb(3.0, 0.0, 4.0, 1.0);
        assert_abs_diff_eq!(generalized_iou(&u, &v), -(4.0 - 2.0) / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn detr_background_and_perfect_overlap() {
        let p = pred(0.8, bb(0.0, 0.0, 4.0, 4.0), 1.0);
        assert_eq!(detr_matching_cost(None, &p, 2.0, 5.0).unwrap(), 0.0);
        let g = GroundTruthObject::new(0, bb(0.0, 0.0, 4.0, 4.0));
        assert_abs_diff_eq!(
            detr_matching_cost(Some(&g), &p, 2.0, 5.0).unwrap(),
            -0.8,
            epsilon = 1e-15
        );
    }

    #[test]
    fn constant_scale_examples() {
        let b = bb(0.0, 0.0, 4.0, 4.0);
        let g = GroundTruthObject::new(0, b);
        let half = pred(0.5, b, 1.0);
        assert_abs_diff_eq!(
            mb_matching_cost_constant_scale(Some(&g), &half, 0.2).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
        let sure = pred(0.9, b, 1.0);
        assert_abs_diff_eq!(
            mb_matching_cost_constant_scale(None, &sure, 0.2).unwrap(),
            10f64.ln(),
            epsilon = 1e-12
        );
        assert!(mb_matching_cost_constant_scale(None, &sure, 0.0).is_err());
    }

    #[test]
    fn single_prediction_is_identity() {
        let p = pred(0.5, bb(0.0, 0.0, 1.0, 1.0), 1.0);
        let perm = optimal_permutation(mb_matching_cost_full, std::slice::from_ref(&p), &[]).unwrap();
        assert_eq!(perm.pred_to_gt, vec![None]);
        let g = GroundTruthObject::new(0, bb(0.0, 0.0, 1.0, 1.0));
        let perm = optimal_permutation(mb_matching_cost_full, &[p], &[g]).unwrap();
        assert_eq!(perm.pred_to_gt, vec![Some(0)]);
    }

    #[test]
    fn uncertain_prediction_preferred_by_mb_cost() {
        let gt = GroundTruthObject::new(0, bb(0.0, 0.0, 10.0, 10.0));
        let red = pred(0.9, bb(1.0, 1.0, 11.0, 11.0), 0.1);
        let green = pred(0.9, bb(2.0, 2.0, 12.0, 12.0), 2.0);
        let preds = [green, red];
        let detr = optimal_permutation(|g, p| detr_matching_cost(g, p, 2.0, 5.0), &preds, &[gt]).unwrap();
        assert_eq!(detr.pred_to_gt, vec![None, Some(0)]);
        let mb = optimal_permutation(mb_matching_cost_full, &preds, &[gt]).unwrap();
        assert_eq!(mb.pred_to_gt, vec![Some(0), None]);
    }

    #[test]
    fn higher_existence_matched_when_products_tie() {
        let b = bb(0.0, 0.0, 4.0, 4.0);
        let g = GroundTruthObject::new(0, bb(0.5, 0.0, 4.0, 4.0));
        let cls = |p: f64| ClassDistribution::new(vec![p, 1.0 - p]).unwrap();
        let lap = BoxDistribution::laplace(b, [1.0; 4]).unwrap();
        let low = BernoulliComponent::new(0.4, cls(1.0), lap.clone()).unwrap();
        let high = BernoulliComponent::new(0.8, cls(0.5), lap).unwrap();
        let d_low = detr_matching_cost(Some(&g), &low, 2.0, 5.0).unwrap();
        let d_high = detr_matching_cost(Some(&g), &high, 2.0, 5.0).unwrap();
        assert_abs_diff_eq!(d_low, d_high, epsilon = 1e-15);
        let perm = optimal_permutation(|g, p| mb_matching_cost_constant_scale(g, p, 0.2), &[low, high], &[g]).unwrap();
        assert_eq!(perm.pred_to_gt, vec![None, Some(0)]);
    }

    #[test]
    fn too_few_predictions() {
        let g = GroundTruthObject::new(0, bb(0.0, 0.0, 1.0, 1.0));
        assert!(optimal_permutation(mb_matching_cost_full, &[], &[g]).is_err());
    }
}
