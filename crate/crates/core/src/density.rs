//! Log-domain densities: single boxes, single objects, Bernoulli sets, the
//! Poisson intensity, and an exhaustive PMB likelihood used as a test oracle.
//!
//! Nothing here leaves the log domain except inside [`logsumexp`]. Per-image
//! regression terms routinely reach tens of nats, where linear likelihoods
//! underflow.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::logspace::{log1m, logsumexp};
use crate::types::{
    BernoulliComponent, BoundingBox, BoxDistribution, BoxFamily, ClassDistribution, GroundTruthObject, PmbDensity,
    PoissonIntensity,
};

/// Largest problem [`brute_force_log_pmb`] accepts.
pub const BRUTE_FORCE_MAX_BERNOULLIS: usize = 8;
pub const BRUTE_FORCE_MAX_OBJECTS: usize = 6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log-density of box `b` under `dist`.
pub fn log_box_density(dist: &BoxDistribution, b: &BoundingBox) -> f64 {
    let delta = diff(b, dist.mean());
    let p = dist.params();
    match dist.family() {
        BoxFamily::LaplaceIndependent => delta.iter().zip(p).map(|(d, s)| -d.abs() / s - (2.0 * s).ln()).sum(),
        BoxFamily::GaussianDiagonal => delta
            .iter()
            .zip(p)
            .map(|(d, sigma)| {
                let z = d / sigma;
                -0.5 * z * z - sigma.ln() - 0.5 * LN_2PI
            })
            .sum(),
        BoxFamily::GaussianFullCholesky => {
            // Solve L z = delta by forward substitution; |Sigma| = prod(L_kk)^2.
            let mut z = [0.0; 4];
            let mut log_det_half = 0.0;
            for i in 0..4 {
                let row = i * (i + 1) / 2;
                let mut acc = delta[i];
                for (j, zj) in z.iter().enumerate().take(i) {
                    acc -= p[row + j] * zj;
                }
                let diag = p[row + i];
                z[i] = acc / diag;
                log_det_half += diag.ln();
            }
            let maha: f64 = z.iter().map(|v| v * v).sum();
            -0.5 * maha - log_det_half - 2.0 * LN_2PI
        }
    }
}

/// `log p_cls(c) + log p_reg(b)` for an arbitrary class/box pair.
pub fn log_object_density(cls: &ClassDistribution, bbox: &BoxDistribution, y: &GroundTruthObject) -> Result<f64> {
    let pc = cls.prob(y.class_id)?;
    if pc == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(pc.ln() + log_box_density(bbox, &y.bbox))
}

/// `log p(y)` of a Bernoulli component's existence-conditioned density.
pub fn log_single_object_density(comp: &BernoulliComponent, y: &GroundTruthObject) -> Result<f64> {
    log_object_density(comp.class_dist(), comp.box_dist(), y)
}

/// `log f_B(Y)` for the three cardinality cases of a Bernoulli RFS.
pub fn log_bernoulli_set(comp: &BernoulliComponent, subset: &[GroundTruthObject]) -> Result<f64> {
    let r = comp.existence();
    match subset {
        [] => Ok(log1m(r)),
        [y] => Ok(r.ln() + log_single_object_density(comp, y)?),
        _ => Ok(f64::NEG_INFINITY),
    }
}

/// `log lambda(y)` for the mixture intensity `sum_i w_i p_i(y)`; `-inf` when
/// the intensity is empty.
pub fn log_ppp_intensity(ppp: &PoissonIntensity, y: &GroundTruthObject) -> Result<f64> {
    let terms = ppp
        .components()
        .iter()
        .map(|c| Ok(c.weight.ln() + log_object_density(&c.cls, &c.bbox, y)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(logsumexp(&terms))
}

/// Exact `log f_PMB(Y)` by enumerating every association of objects to
/// distinct Bernoulli components or to the PPP.
///
/// Exponential in the problem size; guarded to `m <= 8`, `n <= 6`.
pub fn brute_force_log_pmb(pmb: &PmbDensity, gts: &[GroundTruthObject]) -> Result<f64> {
    let m = pmb.bernoullis.len();
    let n = gts.len();
    if m > BRUTE_FORCE_MAX_BERNOULLIS || n > BRUTE_FORCE_MAX_OBJECTS {
        return Err(Error::TooLarge {
            what: format!(
                "{m} Bernoullis x {n} objects (limit {BRUTE_FORCE_MAX_BERNOULLIS} x {BRUTE_FORCE_MAX_OBJECTS})"
            ),
        });
    }
    let log_lambda = gts
        .iter()
        .map(|y| log_ppp_intensity(&pmb.ppp, y))
        .collect::<Result<Vec<_>>>()?;

    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut used = vec![false; m];
    let mut terms = Vec::new();
    descend(pmb, gts, &log_lambda, 0, &mut owner, &mut used, &mut terms)?;
    Ok(logsumexp(&terms) - pmb.ppp.expected_cardinality())
}

fn descend(
    pmb: &PmbDensity,
    gts: &[GroundTruthObject],
    log_lambda: &[f64],
    j: usize,
    owner: &mut Vec<Option<usize>>,
    used: &mut Vec<bool>,
    terms: &mut Vec<f64>,
) -> Result<()> {
    if j == gts.len() {
        let mut ll = 0.0;
        for (i, comp) in pmb.bernoullis.iter().enumerate() {
            let subset: Vec<GroundTruthObject> = owner
                .iter()
                .zip(gts)
                .filter(|(o, _)| **o == Some(i))
                .map(|(_, y)| *y)
                .collect();
            ll += log_bernoulli_set(comp, &subset)?;
        }
        for (o, l) in owner.iter().zip(log_lambda) {
            if o.is_none() {
                ll += l;
            }
        }
        terms.push(ll);
        return Ok(());
    }
    owner[j] = None;
    descend(pmb, gts, log_lambda, j + 1, owner, used, terms)?;
    for i in 0..pmb.bernoullis.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        owner[j] = Some(i);
        descend(pmb, gts, log_lambda, j + 1, owner, used, terms)?;
        used[i] = false;
    }
    owner[j] = None;
    Ok(())
}

fn diff(b: &BoundingBox, mean: &BoundingBox) -> [f64; 4] {
    let (x, m) = (b.to_array(), mean.to_array());
    [x[0] - m[0], x[1] - m[1], x[2] - m[2], x[3] - m[3]]
}

/// Log-density of a univariate normal; exposed for oracle comparisons.
pub fn log_normal_1d(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{IntensityComponent, CHOLESKY_DIAGONAL};
    use approx::assert_abs_diff_eq;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn cls(p: &[f64]) -> ClassDistribution {
        ClassDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn laplace_at_mean_with_half_scale_is_zero() {
        let b = bb(3.0, 4.0, 20.0, 30.0);
        let d = BoxDistribution::laplace(b, [0.5; 4]).unwrap();
        assert_abs_diff_eq!(log_box_density(&d, &b), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn laplace_one_unit_deviation() {
        let d = BoxDistribution::laplace(bb(0.0, 0.0, 10.0, 10.0), [1.0; 4]).unwrap();
        let v = log_box_density(&d, &bb(1.0, 0.0, 10.0, 10.0));
        assert_abs_diff_eq!(v, -4.0 * 2f64.ln() - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v, -3.7726, epsilon = 1e-4);
    }

    #[test]
    fn cholesky_scaled_identity_matches_product_of_normals() {
        let mean = bb(1.0, 2.0, 3.0, 4.0);
        let mut lower = [0.0; 10];
        for i in CHOLESKY_DIAGONAL {
            lower[i] = 2.0;
        }
        let d = BoxDistribution::gaussian_cholesky(mean, lower).unwrap();
        let at_mean = log_box_density(&d, &mean);
        assert_abs_diff_eq!(at_mean, -2.0 * (2.0 * PI).ln() - 4.0 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(at_mean, -6.4483, epsilon = 1e-4);

        let x = bb(1.5, 0.0, 4.0, 7.0);
        let oracle: f64 = x
            .to_array()
            .iter()
            .zip(mean.to_array())
            .map(|(&xi, mi)| log_normal_1d(xi, mi, 2.0))
            .sum();
        assert_abs_diff_eq!(log_box_density(&d, &x), oracle, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_with_correlation_matches_explicit_inverse() {
        // 2x2 correlated block in the first two coordinates, checked against
        // the closed-form bivariate normal.
        let (a, b, c) = (1.5, 0.8, 0.9); // L = [[a,0],[b,c]]
        let mut lower = [0.0; 10];
        lower[0] = a;
        lower[1] = b;
        lower[2] = c;
        lower[5] = 1.0;
        lower[9] = 1.0;
        let mean = bb(0.0, 0.0, 0.0, 0.0);
        let d = BoxDistribution::gaussian_cholesky(mean, lower).unwrap();
        let x = bb(0.7, -1.1, 0.3, 0.2);
        // Sigma = L L^T
        let (s11, s12, s22) = (a * a, a * b, b * b + c * c);
        let det = s11 * s22 - s12 * s12;
        let (dx, dy) = (0.7, -1.1);
        let maha = (s22 * dx * dx - 2.0 * s12 * dx * dy + s11 * dy * dy) / det;
        let biv = -0.5 * maha - 0.5 * det.ln() - (2.0 * PI).ln();
        let oracle = biv + log_normal_1d(0.3, 0.0, 1.0) + log_normal_1d(0.2, 0.0, 1.0);
        assert_abs_diff_eq!(log_box_density(&d, &x), oracle, epsilon = 1e-12);
    }

    #[test]
    fn single_object_density_cases() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let half = BoxDistribution::laplace(b, [0.5; 4]).unwrap();
        let comp = BernoulliComponent::new(0.9, cls(&[1.0, 0.0]), half).unwrap();
        assert_abs_diff_eq!(
            log_single_object_density(&comp, &GroundTruthObject::new(0, b)).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_eq!(
            log_single_object_density(&comp, &GroundTruthObject::new(1, b)).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(matches!(
            log_single_object_density(&comp, &GroundTruthObject::new(2, b)),
            Err(Error::ClassOutOfRange { .. })
        ));

        let unit = BoxDistribution::laplace(b, [1.0; 4]).unwrap();
        let comp = BernoulliComponent::new(0.9, cls(&[0.6, 0.4]), unit).unwrap();
        let y = GroundTruthObject::new(1, bb(1.0, 0.0, 10.0, 10.0));
        let expected = 0.4f64.ln() + (-4.0 * 2f64.ln() - 1.0);
        let got = log_single_object_density(&comp, &y).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(got, -4.6889, epsilon = 1e-4);
    }

    #[test]
    fn bernoulli_set_cardinalities() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let d = BoxDistribution::laplace(b, [0.5; 4]).unwrap();
        let comp = BernoulliComponent::new(0.75, cls(&[1.0]), d.clone()).unwrap();
        assert_abs_diff_eq!(log_bernoulli_set(&comp, &[]).unwrap(), 0.25f64.ln(), epsilon = 1e-15);
        let y = GroundTruthObject::new(0, b);
        assert_eq!(log_bernoulli_set(&comp, &[y, y]).unwrap(), f64::NEG_INFINITY);
        assert_abs_diff_eq!(log_bernoulli_set(&comp, &[y]).unwrap(), 0.75f64.ln(), epsilon = 1e-15);

        let certain = BernoulliComponent::new(1.0, cls(&[1.0]), d).unwrap();
        assert_eq!(log_bernoulli_set(&certain, &[]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn intensity_single_and_empty() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let y = GroundTruthObject::new(0, b);
        assert_eq!(
            log_ppp_intensity(&PoissonIntensity::empty(), &y).unwrap(),
            f64::NEG_INFINITY
        );

        // scale e^{1/2}/2 per coordinate makes p(y) = exp(-2) at the mean
        let s = 0.5f64.exp() / 2.0;
        let d = BoxDistribution::laplace(b, [s; 4]).unwrap();
        assert_abs_diff_eq!(log_box_density(&d, &b), -2.0, epsilon = 1e-12);
        let ppp = PoissonIntensity::new(vec![IntensityComponent {
            weight: 0.05,
            cls: cls(&[1.0]),
            bbox: d,
        }])
        .unwrap();
        let got = log_ppp_intensity(&ppp, &y).unwrap();
        assert_abs_diff_eq!(got, 0.05f64.ln() - 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(got, -4.9957, epsilon = 1e-4);
    }

    #[test]
    fn intensity_mixture_matches_linear_sum() {
        let y = GroundTruthObject::new(1, bb(1.0, 1.0, 5.0, 6.0));
        let comps: Vec<IntensityComponent> = [
            (0.03, [0.3, 0.7], bb(1.5, 1.0, 5.0, 6.5), 1.0),
            (0.08, [0.9, 0.1], bb(0.0, 1.0, 4.0, 6.0), 2.0),
            (0.01, [0.5, 0.5], bb(1.0, 2.0, 5.0, 5.0), 0.7),
        ]
        .iter()
        .map(|(w, p, m, s)| IntensityComponent {
            weight: *w,
            cls: cls(p),
            bbox: BoxDistribution::laplace(*m, [*s; 4]).unwrap(),
        })
        .collect();
        let linear: f64 = comps
            .iter()
            .map(|c| {
                let pc = c.cls.probs()[1];
                let pb: f64 = y
                    .bbox
                    .to_array()
                    .iter()
                    .zip(c.bbox.mean().to_array())
                    .zip(c.bbox.params())
                    .map(|((x, m), s)| (-(x - m).abs() / s).exp() / (2.0 * s))
                    .product();
                c.weight * pc * pb
            })
            .sum();
        let ppp = PoissonIntensity::new(comps).unwrap();
        assert_abs_diff_eq!(log_ppp_intensity(&ppp, &y).unwrap(), linear.ln(), epsilon = 1e-12);
    }

    #[test]
    fn brute_force_trivial_cases() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let d = BoxDistribution::laplace(b, [1.0; 4]).unwrap();
        let ppp = PoissonIntensity::new(vec![IntensityComponent {
            weight: 0.3,
            cls: cls(&[1.0]),
            bbox: d.clone(),
        }])
        .unwrap();
        let pmb = PmbDensity::new(vec![], ppp);
        assert_abs_diff_eq!(brute_force_log_pmb(&pmb, &[]).unwrap(), -0.3, epsilon = 1e-15);

        let comp = BernoulliComponent::new(0.75, cls(&[1.0]), d).unwrap();
        let mb = PmbDensity::multi_bernoulli(vec![comp]);
        assert_abs_diff_eq!(brute_force_log_pmb(&mb, &[]).unwrap(), 0.25f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn brute_force_two_by_two_multi_bernoulli() {
        // Two components, two objects, no PPP: exactly the two one-to-one
        // assignments contribute.
        let b1 = bb(0.0, 0.0, 10.0, 10.0);
        let b2 = bb(20.0, 0.0, 30.0, 12.0);
        let c1 = BernoulliComponent::new(
            0.9,
            cls(&[0.8, 0.2]),
            BoxDistribution::laplace(bb(1.0, 0.0, 11.0, 10.0), [3.0; 4]).unwrap(),
        )
        .unwrap();
        let c2 = BernoulliComponent::new(
            0.6,
            cls(&[0.3, 0.7]),
            BoxDistribution::laplace(bb(20.0, 1.0, 30.0, 12.0), [1.0; 4]).unwrap(),
        )
        .unwrap();
        let y1 = GroundTruthObject::new(0, b1);
        let y2 = GroundTruthObject::new(1, b2);
        let t1 = log_bernoulli_set(&c1, &[y1]).unwrap() + log_bernoulli_set(&c2, &[y2]).unwrap();
        let t2 = log_bernoulli_set(&c1, &[y2]).unwrap() + log_bernoulli_set(&c2, &[y1]).unwrap();
        let expected = logsumexp(&[t1, t2]);
        let pmb = PmbDensity::multi_bernoulli(vec![c1, c2]);
        assert_abs_diff_eq!(brute_force_log_pmb(&pmb, &[y1, y2]).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn brute_force_size_guard() {
        let b = bb(0.0, 0.0, 1.0, 1.0);
        let gts = vec![GroundTruthObject::new(0, b); 7];
        assert!(matches!(
            brute_force_log_pmb(&PmbDensity::default(), &gts),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn bernoulli_cost_identity() {
        // log f_B({}) + log(r / (1 - r)) + log p(y) = log f_B({y})
        let b = bb(0.0, 0.0, 10.0, 10.0);
        for r in [0.01, 0.3, 0.5, 0.97] {
            let comp = BernoulliComponent::new(
                r,
                cls(&[0.25, 0.75]),
                BoxDistribution::gaussian_diagonal(b, [1.0, 2.0, 0.5, 3.0]).unwrap(),
            )
            .unwrap();
            let y = GroundTruthObject::new(1, bb(0.5, -1.0, 10.2, 11.0));
            let lhs = log_bernoulli_set(&comp, &[]).unwrap()
                + (r / (1.0 - r)).ln()
                + log_single_object_density(&comp, &y).unwrap();
            assert_abs_diff_eq!(lhs, log_bernoulli_set(&comp, &[y]).unwrap(), epsilon = 1e-12);
        }
    }
}
