//! Seeded random instances for property tests, the self-test and
//! benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::types::{
    BernoulliComponent, BoundingBox, BoxDistribution, BoxFamily, ClassDistribution, GroundTruthObject,
    IntensityComponent, PmbDensity, PoissonIntensity,
};

/// Shape of a small scoring instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceConfig {
    pub max_bernoullis: usize,
    pub max_objects: usize,
    pub num_classes: usize,
    /// Existence probabilities are drawn uniformly from this range.
    pub r_range: (f64, f64),
    /// Upper end of the uniform draw of `lambda_bar`; zero mass is also
    /// drawn with probability 0.15.
    pub max_ppp_mass: f64,
    pub mixed_families: bool,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            max_bernoullis: 6,
            max_objects: 4,
            num_classes: 3,
            r_range: (0.01, 0.99),
            max_ppp_mass: 2.0,
            mixed_families: true,
        }
    }
}

const CANVAS: f64 = 100.0;

pub fn random_box<R: Rng>(rng: &mut R, canvas: f64, min_size: f64, max_size: f64) -> BoundingBox {
    let w = rng.random_range(min_size..max_size);
    let h = rng.random_range(min_size..max_size);
    let x = rng.random_range(0.0..canvas - w);
    let y = rng.random_range(0.0..canvas - h);
    BoundingBox::new(x, y, x + w, y + h).expect("finite box")
}

/// Strictly positive class distribution.
pub fn random_class<R: Rng>(rng: &mut R, num_classes: usize) -> ClassDistribution {
    let raw: Vec<f64> = (0..num_classes).map(|_| rng.random_range(0.05..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|v| v / sum).collect();
    // absorb rounding so the sum is 1 to within an ulp or two
    let rest: f64 = p[1..].iter().sum();
    p[0] = 1.0 - rest;
    ClassDistribution::new(p).expect("normalised")
}

pub fn random_family<R: Rng>(rng: &mut R) -> BoxFamily {
    match rng.random_range(0..3) {
        0 => BoxFamily::LaplaceIndependent,
        1 => BoxFamily::GaussianDiagonal,
        _ => BoxFamily::GaussianFullCholesky,
    }
}

/// Box distribution around `mean` with spreads drawn from `spread`.
pub fn random_box_dist<R: Rng>(
    rng: &mut R,
    family: BoxFamily,
    mean: BoundingBox,
    spread: (f64, f64),
) -> BoxDistribution {
    let mut draw = || rng.random_range(spread.0..spread.1);
    match family {
        BoxFamily::LaplaceIndependent => BoxDistribution::laplace(mean, [draw(), draw(), draw(), draw()]),
        BoxFamily::GaussianDiagonal => BoxDistribution::gaussian_diagonal(mean, [draw(), draw(), draw(), draw()]),
        BoxFamily::GaussianFullCholesky => {
            let diag = [draw(), draw(), draw(), draw()];
            let mut lower = [0.0; 10];
            let mut k = 0;
            for (row, &d) in diag.iter().enumerate() {
                for col in 0..=row {
                    lower[k] = if row == col { d } else { rng.random_range(-0.5..0.5) * d };
                    k += 1;
                }
            }
            BoxDistribution::gaussian_cholesky(mean, lower)
        }
    }
    .expect("valid spread")
}

fn jitter<R: Rng>(rng: &mut R, b: &BoundingBox, amount: f64) -> BoundingBox {
    let a = b.to_array();
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = a[k] + rng.random_range(-amount..amount);
    }
    BoundingBox::try_from(out).expect("finite box")
}

fn random_intensity<R: Rng>(rng: &mut R, cfg: &InstanceConfig) -> PoissonIntensity {
    if cfg.max_ppp_mass <= 0.0 || rng.random_bool(0.15) {
        return PoissonIntensity::empty();
    }
    let mass = rng.random_range(0.0..cfg.max_ppp_mass);
    let k = rng.random_range(1..=3);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let comps = raw
        .into_iter()
        .filter(|w| w * mass / total > 0.0)
        .map(|w| {
            let mean = random_box(rng, CANVAS, 10.0, 60.0);
            IntensityComponent {
                weight: w * mass / total,
                cls: random_class(rng, cfg.num_classes),
                bbox: random_box_dist(rng, BoxFamily::LaplaceIndependent, mean, (4.0, 20.0)),
            }
        })
        .collect();
    PoissonIntensity::new(comps).expect("positive weights")
}

/// Overlapping components and objects on a 100 x 100 canvas, so that many
/// assignments carry weight.
pub fn random_instance<R: Rng>(rng: &mut R, cfg: &InstanceConfig) -> (PmbDensity, Vec<GroundTruthObject>) {
    let m = rng.random_range(0..=cfg.max_bernoullis);
    let n = rng.random_range(0..=cfg.max_objects);
    let bernoullis: Vec<BernoulliComponent> = (0..m)
        .map(|_| {
            let family = if cfg.mixed_families {
                random_family(rng)
            } else {
                BoxFamily::LaplaceIndependent
            };
            let mean = random_box(rng, CANVAS, 10.0, 40.0);
            BernoulliComponent::new(
                rng.random_range(cfg.r_range.0..=cfg.r_range.1),
                random_class(rng, cfg.num_classes),
                random_box_dist(rng, family, mean, (1.0, 8.0)),
            )
            .expect("valid component")
        })
        .collect();
    let gts = (0..n)
        .map(|_| {
            let bbox = match bernoullis.len() {
                0 => random_box(rng, CANVAS, 10.0, 40.0),
                len if rng.random_bool(0.7) => {
                    let near = &bernoullis[rng.random_range(0..len)];
                    jitter(rng, near.box_dist().mean(), 6.0)
                }
                _ => random_box(rng, CANVAS, 10.0, 40.0),
            };
            GroundTruthObject::new(rng.random_range(0..cfg.num_classes), bbox)
        })
        .collect();
    (PmbDensity::new(bernoullis, random_intensity(rng, cfg)), gts)
}

/// Laplace components on a grid whose means differ by at least
/// `separation` of the largest scale in every coordinate, each object close
/// to its own component and the intensity placed away from all objects.
pub fn well_separated_instance<R: Rng>(
    rng: &mut R,
    cfg: &InstanceConfig,
    separation: f64,
) -> (PmbDensity, Vec<GroundTruthObject>) {
    let m = rng.random_range(1..=cfg.max_bernoullis);
    let n = rng.random_range(0..=cfg.max_objects.min(m));
    let max_scale = 2.0;
    let step = separation * max_scale;
    let mut slots: Vec<usize> = (0..m).collect();
    // matched components should not always sit in the first slots
    slots.shuffle(rng);
    // one size for all so that every coordinate differs by a multiple of step
    let w = rng.random_range(20.0..40.0);
    let h = rng.random_range(20.0..40.0);
    let spread = 0.1 / (cfg.num_classes.max(2) - 1) as f64;
    let bernoullis: Vec<BernoulliComponent> = (0..m)
        .map(|i| {
            let offset = slots[i] as f64 * step;
            let mean = BoundingBox::new(offset, offset, offset + w, offset + h).expect("finite");
            let scales = [(); 4].map(|_| rng.random_range(1.0..max_scale));
            let mut cls = vec![spread; cfg.num_classes];
            cls[i % cfg.num_classes] = 1.0 - spread * (cfg.num_classes - 1) as f64;
            BernoulliComponent::new(
                rng.random_range(0.3..0.99),
                ClassDistribution::new(cls).expect("normalised"),
                BoxDistribution::laplace(mean, scales).expect("positive"),
            )
            .expect("valid")
        })
        .collect();
    let gts = (0..n)
        .map(|i| {
            let b = &bernoullis[i];
            GroundTruthObject::new(i % cfg.num_classes, jitter(rng, b.box_dist().mean(), 0.5))
        })
        .collect();
    let far = (m as f64 + 4.0) * step + 200.0;
    let ppp = if cfg.max_ppp_mass > 0.0 {
        PoissonIntensity::new(vec![IntensityComponent {
            weight: rng.random_range(0.01..cfg.max_ppp_mass),
            cls: ClassDistribution::new(vec![1.0 / cfg.num_classes as f64; cfg.num_classes]).expect("uniform"),
            bbox: BoxDistribution::laplace(
                BoundingBox::new(far, far, far + 30.0, far + 30.0).expect("finite"),
                [2.0; 4],
            )
            .expect("positive"),
        }])
        .expect("positive")
    } else {
        PoissonIntensity::empty()
    };
    (PmbDensity::new(bernoullis, ppp), gts)
}

/// Laplace predictions and at most as many objects, for the training loss.
/// Matched coordinates stay at least `min_gap` away from any prediction's
/// mean so that `|b - mu|` is differentiable with room for finite
/// differences.
pub fn random_training_instance<R: Rng>(
    rng: &mut R,
    max_predictions: usize,
    num_classes: usize,
    min_gap: f64,
) -> (Vec<BernoulliComponent>, Vec<GroundTruthObject>) {
    loop {
        let m = rng.random_range(1..=max_predictions);
        let n = rng.random_range(0..=m);
        let preds: Vec<BernoulliComponent> = (0..m)
            .map(|_| {
                let mean = random_box(rng, CANVAS, 10.0, 40.0);
                BernoulliComponent::new(
                    rng.random_range(0.05..0.95),
                    random_class(rng, num_classes),
                    random_box_dist(rng, BoxFamily::LaplaceIndependent, mean, (0.5, 5.0)),
                )
                .expect("valid")
            })
            .collect();
        let gts: Vec<GroundTruthObject> = (0..n)
            .map(|_| {
                let near = preds[rng.random_range(0..m)].box_dist().mean();
                GroundTruthObject::new(rng.random_range(0..num_classes), jitter(rng, near, 5.0))
            })
            .collect();
        let clear = preds.iter().all(|p| {
            let mu = p.box_dist().mean().to_array();
            gts.iter().all(|g| {
                let b = g.bbox.to_array();
                (0..4).all(|k| (b[k] - mu[k]).abs() >= min_gap)
            })
        });
        if clear {
            return (preds, gts);
        }
    }
}

/// Detector-like output for one image: a few predictions per object plus
/// low-confidence clutter, `m` predictions in total, on a 640 x 480 image.
pub fn synthetic_image<R: Rng>(
    rng: &mut R,
    m: usize,
    n: usize,
    num_classes: usize,
) -> (Vec<BernoulliComponent>, Vec<GroundTruthObject>) {
    let gts: Vec<GroundTruthObject> = (0..n)
        .map(|_| {
            let w = rng.random_range(8.0..200.0);
            let h = rng.random_range(8.0..200.0);
            let x = rng.random_range(0.0..640.0 - w);
            let y = rng.random_range(0.0..480.0 - h);
            GroundTruthObject::new(
                rng.random_range(0..num_classes),
                BoundingBox::new(x, y, x + w, y + h).expect("finite"),
            )
        })
        .collect();
    let preds = (0..m)
        .map(|k| {
            let (mean, r) = if k < 3 * n {
                let g = &gts[k % n];
                let size = g.bbox.width().max(g.bbox.height());
                (jitter(rng, &g.bbox, 0.05 * size + 1.0), rng.random_range(0.05..0.98))
            } else {
                let w = rng.random_range(8.0..200.0);
                let h = rng.random_range(8.0..200.0);
                let x = rng.random_range(0.0..640.0 - w);
                let y = rng.random_range(0.0..480.0 - h);
                (
                    BoundingBox::new(x, y, x + w, y + h).expect("finite"),
                    rng.random_range(0.001..0.3),
                )
            };
            BernoulliComponent::new(
                r,
                random_class(rng, num_classes),
                random_box_dist(rng, BoxFamily::LaplaceIndependent, mean, (1.0, 10.0)),
            )
            .expect("valid")
        })
        .collect();
    (preds, gts)
}
