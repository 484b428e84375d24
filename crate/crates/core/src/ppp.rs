//! Splitting a detector's output into Bernoulli components and a Poisson
//! intensity built from its low-confidence detections.

use crate::error::{Error, Result};
use crate::types::{BernoulliComponent, IntensityComponent, PmbDensity, PoissonIntensity};

/// Default existence threshold below which detections move into the PPP.
pub const DEFAULT_R_THRESHOLD: f64 = 0.1;

/// Detections with `r < r_threshold` become intensity terms `r_i p_i(y)`;
/// the rest stay Bernoulli components. A detection exactly at the threshold
/// stays a Bernoulli. Input order is kept within each group.
///
/// Detections with `r = 0` below a positive threshold contribute nothing to
/// the intensity and are dropped.
pub fn build_pmb(preds: &[BernoulliComponent], r_threshold: f64) -> Result<PmbDensity> {
    if !(0.0..=1.0).contains(&r_threshold) {
        return Err(Error::InvalidThreshold(r_threshold));
    }
    let mut bernoullis = Vec::new();
    let mut intensity = Vec::new();
    for p in preds {
        let r = p.existence();
        if r < r_threshold {
            if r > 0.0 {
                intensity.push(IntensityComponent {
                    weight: r,
                    cls: p.class_dist().clone(),
                    bbox: p.box_dist().clone(),
                });
            }
        } else {
            bernoullis.push(p.clone());
        }
    }
    Ok(PmbDensity::new(bernoullis, PoissonIntensity::new(intensity)?))
}
