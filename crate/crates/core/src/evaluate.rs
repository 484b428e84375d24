//! Per-image evaluation pipeline: filter, split into a PMB, score and
//! decompose.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::filter::{inference_filter, NmsMode, DEFAULT_NMS_IOU, DEFAULT_TOP_K};
use crate::ppp::{build_pmb, DEFAULT_R_THRESHOLD};
use crate::scoring::{contributions, pmb_nll, Contributions, DEFAULT_Q};
use crate::types::{BernoulliComponent, GroundTruthObject, NllReport};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub q: usize,
    pub r_threshold: f64,
    pub nms: NmsMode,
    pub nms_iou: f64,
    pub top_k: usize,
    /// Clamp existence probabilities to `1 - eps` before scoring.
    pub clamp_r: Option<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            q: DEFAULT_Q,
            r_threshold: DEFAULT_R_THRESHOLD,
            nms: NmsMode::ClassWise,
            nms_iou: DEFAULT_NMS_IOU,
            top_k: DEFAULT_TOP_K,
            clamp_r: None,
        }
    }
}

/// Existence clamp used by `--clamp-r`.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub image_id: u64,
    pub report: NllReport,
    pub expected_cardinality: f64,
    /// Terms of the best assignment, `None` when nothing is feasible.
    pub contributions: Option<Contributions>,
    /// Areas of the ground-truth boxes, in object order.
    pub object_areas: Vec<f64>,
    /// Areas of the Bernoulli components' box means, in component order.
    pub bernoulli_areas: Vec<f64>,
}

pub fn evaluate_image(
    image_id: u64,
    preds: &[BernoulliComponent],
    gts: &[GroundTruthObject],
    opts: &EvalOptions,
) -> Result<ImageResult> {
    let kept = inference_filter(preds, opts.nms_iou, opts.top_k, opts.nms);
    let mut pmb = build_pmb(&kept, opts.r_threshold)?;
    if let Some(eps) = opts.clamp_r {
        pmb = pmb.clamp_existence(eps);
    }
    let report = pmb_nll(&pmb, gts, opts.q)?;
    let contributions = match &report.best_assignment {
        Some(a) => Some(contributions(&pmb, gts, a)?),
        None => None,
    };
    Ok(ImageResult {
        image_id,
        expected_cardinality: pmb.ppp.expected_cardinality(),
        contributions,
        object_areas: gts.iter().map(|g| g.bbox.area()).collect(),
        bernoulli_areas: pmb.bernoullis.iter().map(|b| b.box_dist().mean().area()).collect(),
        report,
    })
}
