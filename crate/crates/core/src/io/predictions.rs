//! Versioned prediction documents.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "image_id": 42,
//!   "detections": [{
//!     "box_mean": [x1, y1, x2, y2],
//!     "spatial": {"family": "laplace_scales", "params": [s1, s2, s3, s4]},
//!     "class": {"encoding": "foreground_probs", "values": [p_1, ..., p_C]},
//!     "r": 0.83
//!   }]
//! }
//! ```
//!
//! `spatial.family` is one of `laplace_scales` (4 values), `gaussian_sigma`
//! (4) or `cholesky_lower` (10, row-major lower triangle). `class.encoding`
//! is `foreground_probs` (C values plus a separate `r`) or `full_probs`
//! (C + 1 values with background last and no `r`). Class vectors follow the
//! label map's class-index order. A file holds one document or an array of
//! them; a directory is read as all of its `*.json` files.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_json, read_file};
use crate::error::{Error, Result};
use crate::types::{
    BernoulliComponent, BoundingBox, BoxDistribution, BoxFamily, ClassDistribution, LabelMap, CHOLESKY_DIAGONAL,
    CLASS_SUM_TOLERANCE,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Accepted deviation of a class vector's sum from one. Vectors within it
/// are renormalised.
pub const INPUT_SUM_TOLERANCE: f64 = 1e-6;

pub type Predictions = BTreeMap<u64, Vec<BernoulliComponent>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionDocument {
    pub schema_version: u32,
    pub image_id: u64,
    pub detections: Vec<Detection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub box_mean: [f64; 4],
    pub spatial: Spatial,
    pub class: ClassEncoding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialFamily {
    LaplaceScales,
    GaussianSigma,
    CholeskyLower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spatial {
    pub family: SpatialFamily,
    pub params: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    ForegroundProbs,
    FullProbs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEncoding {
    pub encoding: Encoding,
    pub values: Vec<f64>,
}

/// Box family the predictions are converted to on load.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestedFamily {
    /// Independent Laplace; Gaussian sigmas and Cholesky diagonals map to
    /// `s = sigma / sqrt(2)`, off-diagonal Cholesky entries are dropped.
    #[default]
    Laplace,
    /// Gaussian; Laplace scales map to `sigma = s sqrt(2)`, Cholesky input
    /// keeps its full covariance.
    Gaussian,
    /// Whatever the document stores.
    Native,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(PredictionDocument),
    Many(Vec<PredictionDocument>),
}

/// Reads a prediction file or a directory of them, keyed by image id.
pub fn read_predictions(path: &Path, labels: &LabelMap, family: RequestedFamily) -> Result<Predictions> {
    let mut out = Predictions::new();
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
            .collect::<Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|x| x == "json"));
        files.sort();
        for f in files {
            let text = read_file(&f)?;
            merge(
                &mut out,
                parse_predictions(&text, &f.display().to_string(), labels, family)?,
                &f.display().to_string(),
            )?;
        }
    } else {
        let text = read_file(path)?;
        out = parse_predictions(&text, &path.display().to_string(), labels, family)?;
    }
    Ok(out)
}

fn merge(into: &mut Predictions, from: Predictions, context: &str) -> Result<()> {
    for (id, preds) in from {
        if into.insert(id, preds).is_some() {
            return Err(Error::schema(
                context,
                format!("image_id {id} appears in more than one document"),
            ));
        }
    }
    Ok(())
}

/// Parses one document or an array of documents.
pub fn parse_predictions(text: &str, context: &str, labels: &LabelMap, family: RequestedFamily) -> Result<Predictions> {
    let docs = match parse_json::<OneOrMany>(text, context) {
        Ok(OneOrMany::One(d)) => vec![d],
        Ok(OneOrMany::Many(v)) => v,
        // the untagged error is uninformative; retry as a single document to
        // get field context
        Err(_) => vec![parse_json::<PredictionDocument>(text, context)?],
    };
    let mut out = Predictions::new();
    for doc in docs {
        let ctx = format!("{context}: image_id {}", doc.image_id);
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::schema(
                ctx,
                format!(
                    "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                    doc.schema_version
                ),
            ));
        }
        let preds = doc
            .detections
            .iter()
            .enumerate()
            .map(|(k, d)| {
                convert_detection(d, labels.num_classes(), family)
                    .map_err(|e| Error::schema(format!("{ctx} detections[{k}]"), e))
            })
            .collect::<Result<Vec<_>>>()?;
        merge(&mut out, BTreeMap::from([(doc.image_id, preds)]), context)?;
    }
    Ok(out)
}

fn convert_detection(d: &Detection, num_classes: usize, family: RequestedFamily) -> Result<BernoulliComponent> {
    let mean = BoundingBox::try_from(d.box_mean)?;
    let bbox = convert_spatial(&d.spatial, mean, family)?;
    let values = &d.class.values;
    if values.is_empty() {
        return Err(Error::EmptyClassDistribution);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("class values"));
    }
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidProbability {
                what: "class value",
                value: v,
            });
        }
    }
    let (r, foreground) = match d.class.encoding {
        Encoding::ForegroundProbs => {
            expect_len("foreground_probs", values.len(), num_classes)?;
            let r =
                d.r.ok_or_else(|| Error::schema("r", "foreground_probs requires an existence probability r"))?;
            check_sum(values)?;
            (r, values.clone())
        }
        Encoding::FullProbs => {
            expect_len("full_probs", values.len(), num_classes + 1)?;
            if d.r.is_some() {
                return Err(Error::schema(
                    "r",
                    "full_probs carries r implicitly; remove the r field",
                ));
            }
            check_sum(values)?;
            let (fg, bg) = values.split_at(num_classes);
            let r = 1.0 - bg[0];
            if r <= 0.0 || fg.iter().sum::<f64>() <= 0.0 {
                return Err(Error::schema("class", "background probability 1 leaves r = 0"));
            }
            (r, fg.to_vec())
        }
    };
    BernoulliComponent::new(r, ClassDistribution::new(normalise(foreground))?, bbox)
}

fn expect_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::schema(what, format!("expected {expected} values, got {got}")));
    }
    Ok(())
}

fn check_sum(values: &[f64]) -> Result<()> {
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > INPUT_SUM_TOLERANCE {
        return Err(Error::NotNormalized { sum });
    }
    Ok(())
}

// Left untouched when already normalised so that written files round-trip.
fn normalise(mut p: Vec<f64>) -> Vec<f64> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > CLASS_SUM_TOLERANCE {
        p.iter_mut().for_each(|v| *v /= sum);
    }
    p
}

fn convert_spatial(s: &Spatial, mean: BoundingBox, family: RequestedFamily) -> Result<BoxDistribution> {
    let p = &s.params;
    let four = |p: &[f64]| -> Result<[f64; 4]> {
        p.try_into().map_err(|_| Error::ScaleCount {
            expected: 4,
            got: p.len(),
        })
    };
    match (s.family, family) {
        (SpatialFamily::LaplaceScales, RequestedFamily::Laplace | RequestedFamily::Native) => {
            BoxDistribution::laplace(mean, four(p)?)
        }
        (SpatialFamily::LaplaceScales, RequestedFamily::Gaussian) => {
            BoxDistribution::gaussian_diagonal(mean, four(p)?.map(|s| s * SQRT_2))
        }
        (SpatialFamily::GaussianSigma, RequestedFamily::Laplace) => {
            BoxDistribution::gaussian_diagonal(mean, four(p)?).map(|d| d.to_laplace())
        }
        (SpatialFamily::GaussianSigma, _) => BoxDistribution::gaussian_diagonal(mean, four(p)?),
        (SpatialFamily::CholeskyLower, RequestedFamily::Laplace) => {
            if p.len() != 10 {
                return Err(Error::ScaleCount {
                    expected: 10,
                    got: p.len(),
                });
            }
            BoxDistribution::laplace(mean, CHOLESKY_DIAGONAL.map(|k| p[k] / SQRT_2))
        }
        (SpatialFamily::CholeskyLower, _) => BoxDistribution::new(BoxFamily::GaussianFullCholesky, mean, p.clone()),
    }
}

/// Native-family document for one image: the inverse of loading with
/// [`RequestedFamily::Native`].
pub fn to_document(image_id: u64, preds: &[BernoulliComponent]) -> PredictionDocument {
    PredictionDocument {
        schema_version: SCHEMA_VERSION,
        image_id,
        detections: preds
            .iter()
            .map(|p| {
                let d = p.box_dist();
                Detection {
                    box_mean: d.mean().to_array(),
                    spatial: Spatial {
                        family: match d.family() {
                            BoxFamily::LaplaceIndependent => SpatialFamily::LaplaceScales,
                            BoxFamily::GaussianDiagonal => SpatialFamily::GaussianSigma,
                            BoxFamily::GaussianFullCholesky => SpatialFamily::CholeskyLower,
                        },
                        params: d.params().to_vec(),
                    },
                    class: ClassEncoding {
                        encoding: Encoding::ForegroundProbs,
                        values: p.class_dist().probs().to_vec(),
                    },
                    r: Some(p.existence()),
                }
            })
            .collect(),
    }
}

/// Writes every image as an array of documents.
pub fn write_predictions(path: &Path, preds: &Predictions) -> Result<()> {
    let docs: Vec<_> = preds.iter().map(|(id, p)| to_document(*id, p)).collect();
    let text = serde_json::to_string_pretty(&docs).map_err(|e| Error::schema("predictions", e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
