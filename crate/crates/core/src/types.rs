//! Domain types shared by every module. All of them are immutable once built
//! and validate their invariants at construction, including when
//! deserialized.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(p) = 1` for a class distribution.
pub const CLASS_SUM_TOLERANCE: f64 = 1e-9;

/// Axis-aligned box `[x1, y1, x2, y2]` in absolute pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Self::try_from([x1, y1, x2, y2])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    /// Area with negative extents clamped to zero.
    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_ordered(&self) -> bool {
        self.x1 <= self.x2 && self.y1 <= self.y2
    }

    pub fn l1_distance(&self, other: &BoundingBox) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn l2_distance(&self, other: &BoundingBox) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("box coordinates"));
        }
        Ok(BoundingBox {
            x1: c[0],
            y1: c[1],
            x2: c[2],
            y2: c[3],
        })
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

/// Class probabilities over the foreground classes, conditioned on the
/// object existing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    /// Fails unless every entry is in `[0, 1]` and the entries sum to one
    /// within [`CLASS_SUM_TOLERANCE`]. Nothing is renormalized here.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyClassDistribution);
        }
        for &p in &probs {
            check_probability("class probability", p)?;
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > CLASS_SUM_TOLERANCE {
            return Err(Error::NotNormalized { sum });
        }
        Ok(ClassDistribution { probs })
    }

    /// All mass on one class.
    pub fn one_hot(num_classes: usize, class_id: usize) -> Result<Self> {
        if class_id >= num_classes {
            return Err(Error::ClassOutOfRange { class_id, num_classes });
        }
        let mut probs = vec![0.0; num_classes];
        probs[class_id] = 1.0;
        Self::new(probs)
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, class_id: usize) -> Result<f64> {
        self.probs.get(class_id).copied().ok_or(Error::ClassOutOfRange {
            class_id,
            num_classes: self.probs.len(),
        })
    }

    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

impl TryFrom<Vec<f64>> for ClassDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ClassDistribution> for Vec<f64> {
    fn from(c: ClassDistribution) -> Self {
        c.probs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxFamily {
    /// Independent Laplace per coordinate; params are the 4 scales `s`.
    LaplaceIndependent,
    /// Independent normal per coordinate; params are the 4 std-devs `sigma`.
    GaussianDiagonal,
    /// 4-D normal with covariance `L L^T`; params are the 10 entries of the
    /// lower-triangular `L` in row-major order.
    GaussianFullCholesky,
}

impl BoxFamily {
    pub fn param_count(self) -> usize {
        match self {
            BoxFamily::LaplaceIndependent | BoxFamily::GaussianDiagonal => 4,
            BoxFamily::GaussianFullCholesky => 10,
        }
    }
}

/// Positions of the diagonal of a row-major packed 4x4 lower triangle.
pub const CHOLESKY_DIAGONAL: [usize; 4] = [0, 2, 5, 9];

/// Spatial distribution over the four box coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBoxDistribution", into = "RawBoxDistribution")]
pub struct BoxDistribution {
    family: BoxFamily,
    mean: BoundingBox,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBoxDistribution {
    family: BoxFamily,
    mean: BoundingBox,
    params: Vec<f64>,
}

impl BoxDistribution {
    pub fn new(family: BoxFamily, mean: BoundingBox, params: Vec<f64>) -> Result<Self> {
        if params.len() != family.param_count() {
            return Err(Error::ScaleCount {
                expected: family.param_count(),
                got: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scale parameters"));
        }
        let positive: &[usize] = match family {
            BoxFamily::GaussianFullCholesky => &CHOLESKY_DIAGONAL,
            _ => &[0, 1, 2, 3],
        };
        for &i in positive {
            if params[i] <= 0.0 {
                return Err(Error::InvalidScale {
                    index: i,
                    value: params[i],
                });
            }
        }
        Ok(BoxDistribution { family, mean, params })
    }

    pub fn laplace(mean: BoundingBox, scales: [f64; 4]) -> Result<Self> {
        Self::new(BoxFamily::LaplaceIndependent, mean, scales.to_vec())
    }

    pub fn gaussian_diagonal(mean: BoundingBox, sigmas: [f64; 4]) -> Result<Self> {
        Self::new(BoxFamily::GaussianDiagonal, mean, sigmas.to_vec())
    }

    pub fn gaussian_cholesky(mean: BoundingBox, lower: [f64; 10]) -> Result<Self> {
        Self::new(BoxFamily::GaussianFullCholesky, mean, lower.to_vec())
    }

    pub fn family(&self) -> BoxFamily {
        self.family
    }

    pub fn mean(&self) -> &BoundingBox {
        &self.mean
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Per-coordinate standard deviations. For the full-covariance family
    /// this is the diagonal of `L`, which is what detectors that output a
    /// Cholesky factor report as their per-coordinate uncertainty.
    pub fn diagonal_sigmas(&self) -> [f64; 4] {
        match self.family {
            BoxFamily::LaplaceIndependent => {
                let mut out = [0.0; 4];
                for (o, s) in out.iter_mut().zip(&self.params) {
                    *o = s * SQRT_2;
                }
                out
            }
            BoxFamily::GaussianDiagonal => [self.params[0], self.params[1], self.params[2], self.params[3]],
            BoxFamily::GaussianFullCholesky => CHOLESKY_DIAGONAL.map(|i| self.params[i]),
        }
    }

    /// Independent Laplace with the same per-coordinate variance:
    /// `s = sigma / sqrt(2)`. Off-diagonal Cholesky entries are dropped.
    pub fn to_laplace(&self) -> Self {
        if self.family == BoxFamily::LaplaceIndependent {
            return self.clone();
        }
        let scales = self.diagonal_sigmas().map(|s| s / SQRT_2);
        BoxDistribution {
            family: BoxFamily::LaplaceIndependent,
            mean: self.mean,
            params: scales.to_vec(),
        }
    }

    pub fn with_mean(&self, mean: BoundingBox) -> Self {
        BoxDistribution {
            family: self.family,
            mean,
            params: self.params.clone(),
        }
    }
}

impl TryFrom<RawBoxDistribution> for BoxDistribution {
    type Error = Error;
    fn try_from(r: RawBoxDistribution) -> Result<Self> {
        Self::new(r.family, r.mean, r.params)
    }
}

impl From<BoxDistribution> for RawBoxDistribution {
    fn from(b: BoxDistribution) -> Self {
        RawBoxDistribution {
            family: b.family,
            mean: b.mean,
            params: b.params,
        }
    }
}

/// One detection read as a Bernoulli random finite set: empty with
/// probability `1 - r`, otherwise a single object drawn from
/// `p_cls(c) * p_reg(b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBernoulli", into = "RawBernoulli")]
pub struct BernoulliComponent {
    r: f64,
    cls: ClassDistribution,
    bbox: BoxDistribution,
}

#[derive(Serialize, Deserialize)]
struct RawBernoulli {
    r: f64,
    cls: ClassDistribution,
    #[serde(rename = "box")]
    bbox: BoxDistribution,
}

impl BernoulliComponent {
    /// `r = 0` and `r = 1` are accepted; they produce infinite log-terms
    /// downstream.
    pub fn new(r: f64, cls: ClassDistribution, bbox: BoxDistribution) -> Result<Self> {
        check_probability("existence probability", r)?;
        Ok(BernoulliComponent { r, cls, bbox })
    }

    pub fn existence(&self) -> f64 {
        self.r
    }

    pub fn class_dist(&self) -> &ClassDistribution {
        &self.cls
    }

    pub fn box_dist(&self) -> &BoxDistribution {
        &self.bbox
    }

    pub fn with_existence(&self, r: f64) -> Result<Self> {
        Self::new(r, self.cls.clone(), self.bbox.clone())
    }

    pub fn with_box(&self, bbox: BoxDistribution) -> Self {
        BernoulliComponent {
            r: self.r,
            cls: self.cls.clone(),
            bbox,
        }
    }
}

impl TryFrom<RawBernoulli> for BernoulliComponent {
    type Error = Error;
    fn try_from(r: RawBernoulli) -> Result<Self> {
        Self::new(r.r, r.cls, r.bbox)
    }
}

impl From<BernoulliComponent> for RawBernoulli {
    fn from(b: BernoulliComponent) -> Self {
        RawBernoulli {
            r: b.r,
            cls: b.cls,
            bbox: b.bbox,
        }
    }
}

/// One weighted term `r_i p_i(y)` of a Poisson intensity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityComponent {
    pub weight: f64,
    pub cls: ClassDistribution,
    #[serde(rename = "box")]
    pub bbox: BoxDistribution,
}

/// Unnormalized mixture intensity of a Poisson point process. Because every
/// mixture density integrates to one, the expected cardinality is the sum of
/// the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<IntensityComponent>", into = "Vec<IntensityComponent>")]
pub struct PoissonIntensity {
    components: Vec<IntensityComponent>,
    expected_cardinality: f64,
}

impl PoissonIntensity {
    pub fn new(components: Vec<IntensityComponent>) -> Result<Self> {
        for c in &components {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::InvalidWeight(c.weight));
            }
        }
        let expected_cardinality = components.iter().map(|c| c.weight).sum();
        Ok(PoissonIntensity {
            components,
            expected_cardinality,
        })
    }

    /// Zero intensity; a PMB with this PPP is a plain multi-Bernoulli.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn components(&self) -> &[IntensityComponent] {
        &self.components
    }

    /// `lambda_bar`, the integral of the intensity.
    pub fn expected_cardinality(&self) -> f64 {
        self.expected_cardinality
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

impl TryFrom<Vec<IntensityComponent>> for PoissonIntensity {
    type Error = Error;
    fn try_from(v: Vec<IntensityComponent>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PoissonIntensity> for Vec<IntensityComponent> {
    fn from(p: PoissonIntensity) -> Self {
        p.components
    }
}

/// Predicted distribution over the object set of one image: the union of
/// independent Bernoulli components and a Poisson point process.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PmbDensity {
    pub bernoullis: Vec<BernoulliComponent>,
    pub ppp: PoissonIntensity,
}

impl PmbDensity {
    pub fn new(bernoullis: Vec<BernoulliComponent>, ppp: PoissonIntensity) -> Self {
        PmbDensity { bernoullis, ppp }
    }

    pub fn multi_bernoulli(bernoullis: Vec<BernoulliComponent>) -> Self {
        PmbDensity {
            bernoullis,
            ppp: PoissonIntensity::empty(),
        }
    }

    /// Copy with every existence probability capped at `1 - eps`.
    pub fn clamp_existence(&self, eps: f64) -> Self {
        let cap = 1.0 - eps;
        let bernoullis = self
            .bernoullis
            .iter()
            .map(|b| BernoulliComponent {
                r: b.r.min(cap),
                ..b.clone()
            })
            .collect();
        PmbDensity {
            bernoullis,
            ppp: self.ppp.clone(),
        }
    }
}

/// A ground-truth object `y = (c, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub class_id: usize,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

impl GroundTruthObject {
    pub fn new(class_id: usize, bbox: BoundingBox) -> Self {
        GroundTruthObject { class_id, bbox }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
}

/// Maps dataset category ids to contiguous class indices `0..C`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Category>", into = "Vec<Category>")]
pub struct LabelMap {
    categories: Vec<Category>,
    index: BTreeMap<u64, usize>,
}

impl TryFrom<Vec<Category>> for LabelMap {
    type Error = Error;
    fn try_from(categories: Vec<Category>) -> Result<Self> {
        Self::new(categories)
    }
}

impl From<LabelMap> for Vec<Category> {
    fn from(map: LabelMap) -> Self {
        map.categories
    }
}

impl LabelMap {
    /// Class indices follow the order of `categories`.
    pub fn new(categories: Vec<Category>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, c) in categories.iter().enumerate() {
            if index.insert(c.id, i).is_some() {
                return Err(Error::schema("categories", format!("duplicate category id {}", c.id)));
            }
        }
        Ok(LabelMap { categories, index })
    }

    pub fn num_classes(&self) -> usize {
        self.categories.len()
    }

    pub fn class_index(&self, category_id: u64) -> Option<usize> {
        self.index.get(&category_id).copied()
    }

    pub fn category(&self, class_index: usize) -> Option<&Category> {
        self.categories.get(class_index)
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }
}

/// Where a ground-truth object is assigned: a distinct Bernoulli component
/// or the Poisson point process. Bernoulli targets order before the PPP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Bernoulli(usize),
    Ppp,
}

/// One association of every ground-truth object to a target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub gt_to_target: Vec<Target>,
    /// Sum of the selected cost-matrix entries.
    pub total_cost: f64,
}

impl Assignment {
    /// `(bernoulli, gt)` pairs in ground-truth order.
    pub fn matched_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.gt_to_target.iter().enumerate().filter_map(|(j, t)| match t {
            Target::Bernoulli(i) => Some((*i, j)),
            Target::Ppp => None,
        })
    }

    pub fn ppp_objects(&self) -> impl Iterator<Item = usize> + '_ {
        self.gt_to_target
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == Target::Ppp)
            .map(|(j, _)| j)
    }

    /// For each of `m` Bernoulli components, the object it explains.
    pub fn bernoulli_to_gt(&self, m: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; m];
        for (i, j) in self.matched_pairs() {
            out[i] = Some(j);
        }
        out
    }
}

/// Single-best-assignment split of the NLL, in nats. `classification` carries
/// the matched existence factor `-log(r_i p_cls)`; `ppp_rate + missed_match`
/// together form the missed-object term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NllDecomposition {
    pub regression: f64,
    pub classification: f64,
    pub false_detection: f64,
    pub missed_match: f64,
    pub ppp_rate: f64,
    pub matched: usize,
    pub unmatched: usize,
    pub ppp_matched: usize,
}

impl NllDecomposition {
    pub fn total(&self) -> f64 {
        self.regression + self.classification + self.false_detection + self.missed_match + self.ppp_rate
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NllReport {
    /// `-log f(Y)` over the retained assignments; `+inf` if none is feasible.
    pub nll: f64,
    /// Log-likelihood of each retained assignment, best first.
    pub per_assignment_loglik: Vec<f64>,
    pub best_assignment: Option<Assignment>,
    /// Split of the best assignment's NLL; `None` when nothing is feasible.
    pub decomposition: Option<NllDecomposition>,
    pub q_used: usize,
}

impl NllReport {
    /// NLL of the single best assignment.
    pub fn best_nll(&self, expected_cardinality: f64) -> f64 {
        match self.per_assignment_loglik.first() {
            Some(ll) => expected_cardinality - ll,
            None => f64::INFINITY,
        }
    }
}

fn check_probability(what: &'static str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability { what, value: p });
    }
    Ok(())
}
