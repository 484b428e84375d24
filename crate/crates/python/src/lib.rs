//! Python bindings for the `pmb_nll` crate.
//!
//! Boxes cross the boundary as `(x1, y1, x2, y2)` sequences; class indices
//! are zero-based.

use pmb::detr::{
    mb_matching_cost_constant_scale, mb_matching_cost_full, optimal_permutation as permutation, DetrClassTerm, DetrCost,
};
use pmb::evaluate::{evaluate_image as evaluate, EvalOptions};
use pmb::io::filter::NmsMode;
use pmb::io::predictions::RequestedFamily;
use pmb::scoring::{self, DEFAULT_Q};
use pmb::selftest::{run_selftest, SelftestConfig};
use pmb::{
    BernoulliComponent, BoundingBox, BoxDistribution, BoxFamily, ClassDistribution, GroundTruthObject,
    IntensityComponent, NllDecomposition, NllReport, PmbDensity, PoissonIntensity, Target,
};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: pmb::Error) -> PyErr {
    if e.is_data_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyOSError::new_err(e.to_string())
    }
}

fn bbox(b: [f64; 4]) -> PyResult<BoundingBox> {
    BoundingBox::try_from(b).map_err(err)
}

fn parse_family(name: &str) -> Result<BoxFamily, String> {
    match name {
        "laplace" => Ok(BoxFamily::LaplaceIndependent),
        "gaussian" => Ok(BoxFamily::GaussianDiagonal),
        "gaussian_cholesky" => Ok(BoxFamily::GaussianFullCholesky),
        other => Err(format!(
            "unknown box family {other:?}; expected laplace, gaussian or gaussian_cholesky"
        )),
    }
}

fn family_name(f: BoxFamily) -> &'static str {
    match f {
        BoxFamily::LaplaceIndependent => "laplace",
        BoxFamily::GaussianDiagonal => "gaussian",
        BoxFamily::GaussianFullCholesky => "gaussian_cholesky",
    }
}

fn parse_nms(name: &str) -> Result<NmsMode, String> {
    match name {
        "class_wise" => Ok(NmsMode::ClassWise),
        "class_agnostic" => Ok(NmsMode::ClassAgnostic),
        "off" => Ok(NmsMode::Off),
        other => Err(format!(
            "unknown nms mode {other:?}; expected class_wise, class_agnostic or off"
        )),
    }
}

fn parse_requested(name: &str) -> Result<RequestedFamily, String> {
    match name {
        "laplace" => Ok(RequestedFamily::Laplace),
        "gaussian" => Ok(RequestedFamily::Gaussian),
        "native" => Ok(RequestedFamily::Native),
        other => Err(format!(
            "unknown family {other:?}; expected laplace, gaussian or native"
        )),
    }
}

fn value_err(e: String) -> PyErr {
    PyValueError::new_err(e)
}

/// A ground-truth object: class index and corner box.
#[pyclass(name = "GroundTruth", module = "pmb_nll", frozen)]
struct PyGroundTruth {
    inner: GroundTruthObject,
}

#[pymethods]
impl PyGroundTruth {
    #[new]
    fn new(class_id: usize, bbox_xyxy: [f64; 4]) -> PyResult<Self> {
        Ok(PyGroundTruth {
            inner: GroundTruthObject::new(class_id, bbox(bbox_xyxy)?),
        })
    }

    #[getter]
    fn class_id(&self) -> usize {
        self.inner.class_id
    }

    #[getter]
    fn bbox(&self) -> [f64; 4] {
        self.inner.bbox.to_array()
    }

    fn __repr__(&self) -> String {
        format!("GroundTruth({}, {:?})", self.inner.class_id, self.inner.bbox.to_array())
    }
}

/// One detection: existence probability, class distribution and box density.
#[pyclass(name = "Bernoulli", module = "pmb_nll", frozen)]
struct PyBernoulli {
    inner: BernoulliComponent,
}

#[pymethods]
impl PyBernoulli {
    /// `params` holds four Laplace scales, four Gaussian sigmas, or the ten
    /// row-major lower-triangular Cholesky entries.
    #[new]
    #[pyo3(signature = (r, class_probs, mean, params, family = "laplace"))]
    fn new(r: f64, class_probs: Vec<f64>, mean: [f64; 4], params: Vec<f64>, family: &str) -> PyResult<Self> {
        let family = parse_family(family).map_err(value_err)?;
        let dist = BoxDistribution::new(family, bbox(mean)?, params).map_err(err)?;
        let cls = ClassDistribution::new(class_probs).map_err(err)?;
        Ok(PyBernoulli {
            inner: BernoulliComponent::new(r, cls, dist).map_err(err)?,
        })
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.existence()
    }

    #[getter]
    fn class_probs(&self) -> Vec<f64> {
        self.inner.class_dist().probs().to_vec()
    }

    #[getter]
    fn mean(&self) -> [f64; 4] {
        self.inner.box_dist().mean().to_array()
    }

    #[getter]
    fn params(&self) -> Vec<f64> {
        self.inner.box_dist().params().to_vec()
    }

    #[getter]
    fn family(&self) -> &'static str {
        family_name(self.inner.box_dist().family())
    }

    fn __repr__(&self) -> String {
        format!(
            "Bernoulli(r={}, mean={:?}, family={:?})",
            self.inner.existence(),
            self.mean(),
            self.family()
        )
    }
}

/// Bernoulli components plus a Poisson intensity built from weighted
/// components.
#[pyclass(name = "Pmb", module = "pmb_nll", frozen)]
struct PyPmb {
    inner: PmbDensity,
}

#[pymethods]
impl PyPmb {
    /// Each intensity entry contributes weight `r` with its class and box
    /// densities.
    #[new]
    #[pyo3(signature = (bernoullis, intensity = Vec::new()))]
    fn new(bernoullis: Vec<PyRef<'_, PyBernoulli>>, intensity: Vec<PyRef<'_, PyBernoulli>>) -> PyResult<Self> {
        let comps = intensity
            .iter()
            .map(|b| IntensityComponent {
                weight: b.inner.existence(),
                cls: b.inner.class_dist().clone(),
                bbox: b.inner.box_dist().clone(),
            })
            .collect();
        Ok(PyPmb {
            inner: PmbDensity::new(components(&bernoullis), PoissonIntensity::new(comps).map_err(err)?),
        })
    }

    #[getter]
    fn bernoullis(&self) -> Vec<PyBernoulli> {
        self.inner
            .bernoullis
            .iter()
            .map(|b| PyBernoulli { inner: b.clone() })
            .collect()
    }

    #[getter]
    fn intensity_weights(&self) -> Vec<f64> {
        self.inner.ppp.components().iter().map(|c| c.weight).collect()
    }

    /// Expected number of objects the intensity accounts for.
    #[getter]
    fn expected_cardinality(&self) -> f64 {
        self.inner.ppp.expected_cardinality()
    }

    fn __repr__(&self) -> String {
        format!(
            "Pmb({} Bernoulli, intensity mass {})",
            self.inner.bernoullis.len(),
            self.inner.ppp.expected_cardinality()
        )
    }
}

/// Result of scoring one image.
#[pyclass(name = "NllReport", module = "pmb_nll", frozen)]
struct PyNllReport {
    inner: NllReport,
}

#[pymethods]
impl PyNllReport {
    #[getter]
    fn nll(&self) -> f64 {
        self.inner.nll
    }

    #[getter]
    fn q_used(&self) -> usize {
        self.inner.q_used
    }

    #[getter]
    fn per_assignment_loglik(&self) -> Vec<f64> {
        self.inner.per_assignment_loglik.clone()
    }

    /// For each object, the Bernoulli index it is matched to, or `None` for
    /// the intensity. `None` overall when nothing is feasible.
    #[getter]
    fn best_assignment(&self) -> Option<Vec<Option<usize>>> {
        self.inner.best_assignment.as_ref().map(|a| targets(&a.gt_to_target))
    }

    #[getter]
    fn decomposition<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyDict>>> {
        self.inner.decomposition.map(|d| decomposition_dict(py, &d)).transpose()
    }

    fn __repr__(&self) -> String {
        format!("NllReport(nll={}, q_used={})", self.inner.nll, self.inner.q_used)
    }
}

fn targets(t: &[Target]) -> Vec<Option<usize>> {
    t.iter()
        .map(|t| match t {
            Target::Bernoulli(i) => Some(*i),
            Target::Ppp => None,
        })
        .collect()
}

fn decomposition_dict<'py>(py: Python<'py>, d: &NllDecomposition) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("regression", d.regression)?;
    out.set_item("classification", d.classification)?;
    out.set_item("false_detection", d.false_detection)?;
    out.set_item("missed_match", d.missed_match)?;
    out.set_item("ppp_rate", d.ppp_rate)?;
    out.set_item("matched", d.matched)?;
    out.set_item("unmatched", d.unmatched)?;
    out.set_item("ppp_matched", d.ppp_matched)?;
    Ok(out)
}

fn components(preds: &[PyRef<'_, PyBernoulli>]) -> Vec<BernoulliComponent> {
    preds.iter().map(|p| p.inner.clone()).collect()
}

fn objects(gts: &[PyRef<'_, PyGroundTruth>]) -> Vec<GroundTruthObject> {
    gts.iter().map(|g| g.inner).collect()
}

/// Splits detections at `r_threshold`: the rest become intensity mass.
#[pyfunction]
#[pyo3(signature = (preds, r_threshold = 0.1))]
fn build_pmb(preds: Vec<PyRef<'_, PyBernoulli>>, r_threshold: f64) -> PyResult<PyPmb> {
    Ok(PyPmb {
        inner: pmb::ppp::build_pmb(&components(&preds), r_threshold).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (pmb, gts, q = DEFAULT_Q))]
fn pmb_nll(
    py: Python<'_>,
    pmb: PyRef<'_, PyPmb>,
    gts: Vec<PyRef<'_, PyGroundTruth>>,
    q: usize,
) -> PyResult<PyNllReport> {
    let gts = objects(&gts);
    let pmb = &pmb.inner;
    let inner = py.detach(|| scoring::pmb_nll(pmb, &gts, q)).map_err(err)?;
    Ok(PyNllReport { inner })
}

#[pyfunction]
#[pyo3(signature = (preds, gts, q = DEFAULT_Q))]
fn mb_nll(
    py: Python<'_>,
    preds: Vec<PyRef<'_, PyBernoulli>>,
    gts: Vec<PyRef<'_, PyGroundTruth>>,
    q: usize,
) -> PyResult<PyNllReport> {
    let (preds, gts) = (components(&preds), objects(&gts));
    let inner = py.detach(|| scoring::mb_nll(&preds, &gts, q)).map_err(err)?;
    Ok(PyNllReport { inner })
}

/// Single-best-assignment split of the NLL, or `None` when infeasible.
#[pyfunction]
fn decompose<'py>(
    py: Python<'py>,
    pmb: PyRef<'_, PyPmb>,
    gts: Vec<PyRef<'_, PyGroundTruth>>,
) -> PyResult<Option<Bound<'py, PyDict>>> {
    let d = scoring::decompose(&pmb.inner, &objects(&gts)).map_err(err)?;
    d.map(|d| decomposition_dict(py, &d)).transpose()
}

/// Full per-image pipeline: NMS, top-k, split, score.
#[pyfunction]
#[pyo3(signature = (
    preds, gts, q = DEFAULT_Q, r_threshold = 0.1, nms = "class_wise", nms_iou = 0.5, top_k = 100, clamp_r = None
))]
#[allow(clippy::too_many_arguments)]
fn evaluate_image(
    py: Python<'_>,
    preds: Vec<PyRef<'_, PyBernoulli>>,
    gts: Vec<PyRef<'_, PyGroundTruth>>,
    q: usize,
    r_threshold: f64,
    nms: &str,
    nms_iou: f64,
    top_k: usize,
    clamp_r: Option<f64>,
) -> PyResult<PyNllReport> {
    let opts = EvalOptions {
        q,
        r_threshold,
        nms: parse_nms(nms).map_err(value_err)?,
        nms_iou,
        top_k,
        clamp_r,
    };
    let (preds, gts) = (components(&preds), objects(&gts));
    let result = py.detach(|| evaluate(0, &preds, &gts, &opts)).map_err(err)?;
    Ok(PyNllReport { inner: result.report })
}

/// Loss, per-object assignment and per-prediction gradients.
type TrainingResult<'py> = (f64, Vec<Option<usize>>, Vec<Bound<'py, PyDict>>);

/// Property name, cases checked, cases failed.
type Outcome = (String, usize, usize);

/// Training loss over Laplace predictions, with its assignment and analytic
/// gradients (`d_existence`, `d_mean`, `d_scale` per prediction).
#[pyfunction]
fn training_loss<'py>(
    py: Python<'py>,
    preds: Vec<PyRef<'_, PyBernoulli>>,
    gts: Vec<PyRef<'_, PyGroundTruth>>,
) -> PyResult<TrainingResult<'py>> {
    let (tl, grads) = scoring::training_loss_gradients(&components(&preds), &objects(&gts)).map_err(err)?;
    let grads = grads
        .iter()
        .map(|g| {
            let d = PyDict::new(py);
            d.set_item("d_existence", g.d_existence)?;
            d.set_item("d_mean", g.d_mean)?;
            d.set_item("d_scale", g.d_scale)?;
            Ok(d)
        })
        .collect::<PyResult<_>>()?;
    Ok((tl.loss, targets(&tl.assignment.gt_to_target), grads))
}

/// Minimum-cost matching of predictions to objects padded with background.
/// `cost` is `detr`, `mb_constant` (shared scale `s`) or `mb_full`.
#[pyfunction]
#[pyo3(signature = (preds, gts, cost = "detr", s = 0.2, lambda_iou = 2.0, lambda_l1 = 5.0, detr_class = "prob"))]
#[allow(clippy::too_many_arguments)]
fn optimal_permutation(
    preds: Vec<PyRef<'_, PyBernoulli>>,
    gts: Vec<PyRef<'_, PyGroundTruth>>,
    cost: &str,
    s: f64,
    lambda_iou: f64,
    lambda_l1: f64,
    detr_class: &str,
) -> PyResult<(Vec<Option<usize>>, f64)> {
    let (preds, gts) = (components(&preds), objects(&gts));
    let class_term = match detr_class {
        "prob" => DetrClassTerm::Probability,
        "log" => DetrClassTerm::LogProbability,
        other => return Err(value_err(format!("unknown detr_class {other:?}; expected prob or log"))),
    };
    let detr = DetrCost {
        lambda_iou,
        lambda_l1,
        class_term,
    };
    let p = match cost {
        "detr" => permutation(|g, p| detr.cost(g, p), &preds, &gts),
        "mb_constant" => permutation(|g, p| mb_matching_cost_constant_scale(g, p, s), &preds, &gts),
        "mb_full" => permutation(mb_matching_cost_full, &preds, &gts),
        other => {
            return Err(value_err(format!(
                "unknown cost {other:?}; expected detr, mb_constant or mb_full"
            )))
        }
    }
    .map_err(err)?;
    Ok((p.pred_to_gt, p.total_cost))
}

/// COCO annotations as `{image_id: [GroundTruth, ...]}`.
#[pyfunction]
#[pyo3(signature = (path, include_crowd = false))]
fn read_ground_truth(path: std::path::PathBuf, include_crowd: bool) -> PyResult<Vec<(u64, Vec<PyGroundTruth>)>> {
    let ds = pmb::io::coco::read_ground_truth(&path).map_err(err)?;
    Ok(ds
        .images
        .iter()
        .map(|im| {
            let objs = im
                .objects(include_crowd)
                .into_iter()
                .map(|inner| PyGroundTruth { inner })
                .collect();
            (im.id, objs)
        })
        .collect())
}

/// Prediction documents as `[(image_id, [Bernoulli, ...]), ...]`, with
/// classes indexed by the ground truth's category order.
#[pyfunction]
#[pyo3(signature = (path, ground_truth, family = "laplace"))]
fn read_predictions(
    path: std::path::PathBuf,
    ground_truth: std::path::PathBuf,
    family: &str,
) -> PyResult<Vec<(u64, Vec<PyBernoulli>)>> {
    let family = parse_requested(family).map_err(value_err)?;
    let ds = pmb::io::coco::read_ground_truth(&ground_truth).map_err(err)?;
    let preds = pmb::io::predictions::read_predictions(&path, &ds.labels, family).map_err(err)?;
    Ok(preds
        .into_iter()
        .map(|(id, v)| (id, v.into_iter().map(|inner| PyBernoulli { inner }).collect()))
        .collect())
}

/// Runs the seeded property suites; returns `(passed, [(name, checked, failures)])`.
#[pyfunction]
#[pyo3(signature = (seed = pmb::selftest::DEFAULT_SEED, iterations = 50))]
fn selftest(py: Python<'_>, seed: u64, iterations: usize) -> PyResult<(bool, Vec<Outcome>)> {
    let cfg = SelftestConfig {
        seed,
        iterations,
        fault: None,
    };
    let report = py.detach(|| run_selftest(&cfg)).map_err(err)?;
    let outcomes = report
        .outcomes
        .iter()
        .map(|o| (o.name.to_string(), o.checked, o.failures))
        .collect();
    Ok((report.passed(), outcomes))
}

#[pymodule]
#[pyo3(name = "pmb_nll")]
fn python_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGroundTruth>()?;
    m.add_class::<PyBernoulli>()?;
    m.add_class::<PyPmb>()?;
    m.add_class::<PyNllReport>()?;
    m.add_function(wrap_pyfunction!(build_pmb, m)?)?;
    m.add_function(wrap_pyfunction!(pmb_nll, m)?)?;
    m.add_function(wrap_pyfunction!(mb_nll, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_image, m)?)?;
    m.add_function(wrap_pyfunction!(training_loss, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_permutation, m)?)?;
    m.add_function(wrap_pyfunction!(read_ground_truth, m)?)?;
    m.add_function(wrap_pyfunction!(read_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add("DEFAULT_Q", DEFAULT_Q)?;
    Ok(())
}
