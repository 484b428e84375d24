//! MB-NLL training loss with a single L2-matched assignment, plus analytic
//! gradients of that loss with the assignment held fixed.

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_optimal, CostMatrix};
use crate::density::log_box_density;
use crate::error::{Error, Result};
use crate::logspace::log1m;
use crate::types::{Assignment, BernoulliComponent, BoxFamily, GroundTruthObject, Target};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLoss {
    pub loss: f64,
    pub assignment: Assignment,
}

/// Partial derivatives of the loss with respect to one prediction's
/// existence probability, box mean and Laplace scales.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterGradient {
    pub d_existence: f64,
    pub d_mean: [f64; 4],
    pub d_scale: [f64; 4],
}

fn check_sizes(preds: &[BernoulliComponent], gts: &[GroundTruthObject]) -> Result<()> {
    if preds.len() < gts.len() {
        return Err(Error::TooFewPredictions {
            predictions: preds.len(),
            objects: gts.len(),
        });
    }
    Ok(())
}

/// Matching costs `-log(r p_cls(c) / (1 - r)) + |b - b_hat|_2` with no
/// Poisson rows: every object must take a prediction.
pub fn training_matching_costs(preds: &[BernoulliComponent], gts: &[GroundTruthObject]) -> Result<CostMatrix> {
    check_sizes(preds, gts)?;
    let mut upper = Vec::with_capacity(preds.len() * gts.len());
    for (i, p) in preds.iter().enumerate() {
        let r = p.existence();
        if r == 1.0 && !gts.is_empty() {
            return Err(Error::CertainExistence { index: i });
        }
        for y in gts {
            let pc = p.class_dist().prob(y.class_id)?;
            let odds = r * pc;
            upper.push(if odds == 0.0 {
                f64::INFINITY
            } else {
                -(odds.ln() - log1m(r)) + p.box_dist().mean().l2_distance(&y.bbox)
            });
        }
    }
    CostMatrix::from_blocks(preds.len(), &upper, &vec![f64::INFINITY; gts.len()])
}

/// True MB-NLL of a fixed assignment divided by the number of predictions.
/// Zero predictions (and so zero objects) give zero.
pub fn training_loss_for_assignment(
    preds: &[BernoulliComponent],
    gts: &[GroundTruthObject],
    assignment: &Assignment,
) -> Result<f64> {
    check_sizes(preds, gts)?;
    let m = preds.len();
    if m == 0 {
        return Ok(0.0);
    }
    let owner = assignment_owner(assignment, m)?;
    let mut total = 0.0;
    for (i, p) in preds.iter().enumerate() {
        total += match owner[i] {
            Some(j) => {
                let y = &gts[j];
                let pc = p.class_dist().prob(y.class_id)?;
                -(p.existence() * pc).ln() - log_box_density(p.box_dist(), &y.bbox)
            }
            None => -log1m(p.existence()),
        };
    }
    Ok(total / m as f64)
}

fn assignment_owner(assignment: &Assignment, m: usize) -> Result<Vec<Option<usize>>> {
    if assignment.gt_to_target.iter().any(|t| match t {
        Target::Ppp => true,
        Target::Bernoulli(i) => *i >= m,
    }) {
        return Err(Error::Infeasible);
    }
    Ok(assignment.bernoulli_to_gt(m))
}

/// Loss and the assignment minimising the training matching cost.
pub fn training_loss_mb(preds: &[BernoulliComponent], gts: &[GroundTruthObject]) -> Result<TrainingLoss> {
    let costs = training_matching_costs(preds, gts)?;
    let assignment = solve_optimal(&costs).ok_or(Error::Infeasible)?;
    let loss = training_loss_for_assignment(preds, gts, &assignment)?;
    Ok(TrainingLoss { loss, assignment })
}

/// Loss, matching and per-prediction gradients.
pub fn training_loss_gradients(
    preds: &[BernoulliComponent],
    gts: &[GroundTruthObject],
) -> Result<(TrainingLoss, Vec<ParameterGradient>)> {
    let tl = training_loss_mb(preds, gts)?;
    let grads = training_loss_gradients_for(preds, gts, &tl.assignment)?;
    Ok((tl, grads))
}

/// Gradients of [`training_loss_for_assignment`] for a fixed assignment.
///
/// Needs the Laplace family, `0 < r < 1` for every prediction, and no
/// matched object coordinate exactly at its prediction's mean.
pub fn training_loss_gradients_for(
    preds: &[BernoulliComponent],
    gts: &[GroundTruthObject],
    assignment: &Assignment,
) -> Result<Vec<ParameterGradient>> {
    check_sizes(preds, gts)?;
    let m = preds.len();
    let owner = assignment_owner(assignment, m)?;
    let mf = m as f64;
    let mut out = Vec::with_capacity(m);
    for (i, p) in preds.iter().enumerate() {
        let family = p.box_dist().family();
        if family != BoxFamily::LaplaceIndependent {
            return Err(Error::UnsupportedFamily(family));
        }
        let r = p.existence();
        if r <= 0.0 || r >= 1.0 {
            return Err(Error::ExistenceBoundary { index: i, r });
        }
        let mut g = ParameterGradient {
            d_existence: 1.0 / (mf * (1.0 - r)),
            d_mean: [0.0; 4],
            d_scale: [0.0; 4],
        };
        if let Some(j) = owner[i] {
            g.d_existence = -1.0 / (r * mf);
            let mean = p.box_dist().mean().to_array();
            let b = gts[j].bbox.to_array();
            let scales = p.box_dist().params();
            for k in 0..4 {
                let delta = b[k] - mean[k];
                if delta == 0.0 {
                    return Err(Error::L1Kink {
                        prediction: i,
                        coordinate: k,
                    });
                }
                let s = scales[k];
                g.d_mean[k] = -delta.signum() / (s * mf);
                g.d_scale[k] = (1.0 / s - delta.abs() / (s * s)) / mf;
            }
        }
        out.push(g);
    }
    Ok(out)
}
