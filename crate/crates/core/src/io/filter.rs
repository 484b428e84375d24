//! Inference-time filtering: non-maximum suppression on box means followed
//! by a top-k cut on existence probability.

use serde::{Deserialize, Serialize};

use crate::types::{BernoulliComponent, BoundingBox};

pub const DEFAULT_NMS_IOU: f64 = 0.5;
pub const DEFAULT_TOP_K: usize = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmsMode {
    /// Suppress only detections sharing the most likely class.
    #[default]
    ClassWise,
    ClassAgnostic,
    /// No suppression, as for set-based detectors.
    Off,
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else if a == b {
        1.0
    } else {
        0.0
    }
}

/// Indices of the detections kept, by decreasing `r` (ties by input index).
fn keep_order(preds: &[BernoulliComponent], nms_iou: f64, top_k: usize, mode: NmsMode) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].existence().total_cmp(&preds[a].existence()).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.len() == top_k {
            break;
        }
        let suppressed = mode != NmsMode::Off
            && kept.iter().any(|&k| {
                (mode == NmsMode::ClassAgnostic || preds[k].class_dist().argmax() == preds[i].class_dist().argmax())
                    && iou(preds[k].box_dist().mean(), preds[i].box_dist().mean()) > nms_iou
            });
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

/// Greedy NMS at `nms_iou` (boxes overlapping a kept, more likely detection
/// by more than the threshold are dropped), then the `top_k` most likely
/// survivors. Survivors keep their input order.
pub fn inference_filter(
    preds: &[BernoulliComponent],
    nms_iou: f64,
    top_k: usize,
    mode: NmsMode,
) -> Vec<BernoulliComponent> {
    let mut kept = keep_order(preds, nms_iou, top_k, mode);
    kept.sort_unstable();
    kept.into_iter().map(|i| preds[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BoxDistribution, ClassDistribution};

    fn det(r: f64, x: f64, cls: usize) -> BernoulliComponent {
        BernoulliComponent::new(
            r,
            ClassDistribution::one_hot(2, cls).unwrap(),
            BoxDistribution::laplace(BoundingBox::new(x, 0.0, x + 10.0, 10.0).unwrap(), [1.0; 4]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identical_boxes_keep_the_more_likely() {
        let out = inference_filter(&[det(0.8, 0.0, 0), det(0.9, 0.0, 0)], 0.5, 100, NmsMode::ClassWise);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].existence(), 0.9);
    }

    #[test]
    fn class_wise_keeps_other_classes() {
        let preds = [det(0.8, 0.0, 1), det(0.9, 0.0, 0)];
        assert_eq!(inference_filter(&preds, 0.5, 100, NmsMode::ClassWise).len(), 2);
        assert_eq!(inference_filter(&preds, 0.5, 100, NmsMode::ClassAgnostic).len(), 1);
    }

    #[test]
    fn off_preserves_order_and_truncates_by_r() {
        let preds = [det(0.2, 0.0, 0), det(0.9, 0.0, 0), det(0.5, 0.0, 0), det(0.7, 0.0, 0)];
        let out = inference_filter(&preds, 0.5, 2, NmsMode::Off);
        let rs: Vec<f64> = out.iter().map(|p| p.existence()).collect();
        assert_eq!(rs, vec![0.9, 0.7]);
    }

    #[test]
    fn top_k_of_many() {
        let preds: Vec<_> = (0..150)
            .map(|k| det((k as f64 + 1.0) / 151.0, 20.0 * k as f64, 0))
            .collect();
        let out = inference_filter(&preds, 0.5, 100, NmsMode::ClassWise);
        assert_eq!(out.len(), 100);
        assert!(out.iter().all(|p| p.existence() > 50.0 / 151.0));
    }

    #[test]
    fn ties_broken_by_index() {
        let a = det(0.5, 0.0, 0);
        let b = a
            .with_existence(0.5)
            .unwrap()
            .with_box(BoxDistribution::laplace(BoundingBox::new(1.0, 0.0, 11.0, 10.0).unwrap(), [1.0; 4]).unwrap());
        let out = inference_filter(&[a.clone(), b], 0.5, 100, NmsMode::ClassWise);
        assert_eq!(out, vec![a]);
    }
}
