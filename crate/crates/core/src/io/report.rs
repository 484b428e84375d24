//! Per-image result rows, dataset aggregates and contribution histograms.
//!
//! Non-finite numbers are written as the strings `inf`, `-inf` and `NaN` in
//! both formats; missing decomposition fields are empty cells in CSV and
//! `null` in JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::evaluate::ImageResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// `.json` selects JSON; anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }
}

fn nats<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&v.to_string())
    }
}

fn opt_nats<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => nats(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageRow {
    pub image_id: u64,
    #[serde(serialize_with = "nats")]
    pub nll: f64,
    pub q_used: usize,
    #[serde(serialize_with = "opt_nats")]
    pub regression: Option<f64>,
    #[serde(serialize_with = "opt_nats")]
    pub classification: Option<f64>,
    #[serde(serialize_with = "opt_nats")]
    pub false_detection: Option<f64>,
    #[serde(serialize_with = "opt_nats")]
    pub missed_match: Option<f64>,
    #[serde(serialize_with = "nats")]
    pub ppp_rate: f64,
    pub matched: usize,
    pub unmatched: usize,
    pub ppp_matched: usize,
    pub infinite: bool,
}

impl From<&ImageResult> for ImageRow {
    fn from(r: &ImageResult) -> Self {
        let d = r.report.decomposition;
        ImageRow {
            image_id: r.image_id,
            nll: r.report.nll,
            q_used: r.report.q_used,
            regression: d.map(|d| d.regression),
            classification: d.map(|d| d.classification),
            false_detection: d.map(|d| d.false_detection),
            missed_match: d.map(|d| d.missed_match),
            ppp_rate: r.expected_cardinality,
            matched: d.map_or(0, |d| d.matched),
            unmatched: d.map_or(0, |d| d.unmatched),
            ppp_matched: d.map_or(0, |d| d.ppp_matched),
            infinite: r.report.nll == f64::INFINITY,
        }
    }
}

/// Dataset summary. Per-image means run over the included images;
/// per-prediction means divide summed terms by the number of predictions (or
/// objects) they were summed over.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub images: usize,
    pub included: usize,
    pub infinite: usize,
    pub excluded_infinite: usize,
    /// True when no image is included, in which case every mean is NaN.
    pub empty: bool,
    #[serde(serialize_with = "nats")]
    pub mean_nll: f64,
    #[serde(serialize_with = "nats")]
    pub mean_regression: f64,
    #[serde(serialize_with = "nats")]
    pub mean_classification: f64,
    #[serde(serialize_with = "nats")]
    pub mean_false_detection: f64,
    #[serde(serialize_with = "nats")]
    pub mean_missed_match: f64,
    #[serde(serialize_with = "nats")]
    pub mean_ppp_rate: f64,
    #[serde(serialize_with = "nats")]
    pub regression_per_match: f64,
    #[serde(serialize_with = "nats")]
    pub classification_per_match: f64,
    #[serde(serialize_with = "nats")]
    pub false_detection_per_unmatched: f64,
    #[serde(serialize_with = "nats")]
    pub missed_match_per_ppp_object: f64,
}

fn ratio(num: f64, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num / den as f64
    }
}

/// Aggregates rows in the order given; sort by image id beforehand for
/// reproducible sums.
pub fn aggregate(rows: &[ImageRow], exclude_infinite: bool) -> Aggregate {
    let infinite = rows.iter().filter(|r| r.infinite).count();
    let included: Vec<&ImageRow> = rows.iter().filter(|r| !(exclude_infinite && r.infinite)).collect();
    let n = included.len();
    let sum = |f: fn(&ImageRow) -> Option<f64>| -> f64 { included.iter().filter_map(|r| f(r)).sum() };
    let decomposed = included.iter().filter(|r| r.regression.is_some()).count();
    let count = |f: fn(&ImageRow) -> usize| -> usize { included.iter().map(|r| f(r)).sum() };
    let (reg, cls, fd, mm) = (
        sum(|r| r.regression),
        sum(|r| r.classification),
        sum(|r| r.false_detection),
        sum(|r| r.missed_match),
    );
    Aggregate {
        images: rows.len(),
        included: n,
        infinite,
        excluded_infinite: if exclude_infinite { infinite } else { 0 },
        empty: n == 0,
        mean_nll: ratio(sum(|r| Some(r.nll)), n),
        mean_regression: ratio(reg, decomposed),
        mean_classification: ratio(cls, decomposed),
        mean_false_detection: ratio(fd, decomposed),
        mean_missed_match: ratio(mm, decomposed),
        mean_ppp_rate: ratio(sum(|r| Some(r.ppp_rate)), n),
        regression_per_match: ratio(reg, count(|r| r.matched)),
        classification_per_match: ratio(cls, count(|r| r.matched)),
        false_detection_per_unmatched: ratio(fd, count(|r| r.unmatched)),
        missed_match_per_ppp_object: ratio(mm, count(|r| r.ppp_matched)),
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    rows: &'a [ImageRow],
    aggregate: &'a Aggregate,
}

/// Path of the aggregate file written next to a CSV report.
pub fn aggregate_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_aggregate.csv"))
}

/// CSV writes `path` (one row per image) and its `_aggregate.csv` sibling
/// (`statistic,value`); JSON writes `{"rows": [...], "aggregate": {...}}`.
pub fn write_report(path: &Path, format: ReportFormat, rows: &[ImageRow], agg: &Aggregate) -> Result<()> {
    match format {
        ReportFormat::Json => {
            let text = serde_json::to_string_pretty(&JsonReport { rows, aggregate: agg })
                .map_err(|e| Error::schema("report", e))?;
            std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
        }
        ReportFormat::Csv => {
            let mut w = csv_writer(path)?;
            if rows.is_empty() {
                w.write_record(ROW_HEADER)?;
            }
            for r in rows {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;

            let agg_path = aggregate_path(path);
            let mut w = csv_writer(&agg_path)?;
            w.write_record(["statistic", "value"])?;
            let value = serde_json::to_value(agg).map_err(|e| Error::schema("report", e))?;
            for key in AGGREGATE_ORDER {
                let cell = match &value[key] {
                    serde_json::Value::String(s) => s.clone(),
                    v => v.to_string(),
                };
                w.write_record([key, cell.as_str()])?;
            }
            w.flush().map_err(|e| Error::io(&agg_path, e))
        }
    }
}

const ROW_HEADER: [&str; 12] = [
    "image_id",
    "nll",
    "q_used",
    "regression",
    "classification",
    "false_detection",
    "missed_match",
    "ppp_rate",
    "matched",
    "unmatched",
    "ppp_matched",
    "infinite",
];

const AGGREGATE_ORDER: [&str; 15] = [
    "images",
    "included",
    "infinite",
    "excluded_infinite",
    "empty",
    "mean_nll",
    "mean_regression",
    "mean_classification",
    "mean_false_detection",
    "mean_missed_match",
    "mean_ppp_rate",
    "regression_per_match",
    "classification_per_match",
    "false_detection_per_unmatched",
    "missed_match_per_ppp_object",
];

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Regression,
    Classification,
    FalseDetection,
    MissedMatch,
}

impl Term {
    pub const ALL: [Term; 4] = [
        Term::Regression,
        Term::Classification,
        Term::FalseDetection,
        Term::MissedMatch,
    ];

    /// Upper end of the histogram range; larger values land in the last bin.
    pub fn clip(self) -> f64 {
        match self {
            Term::Regression | Term::MissedMatch => 40.0,
            Term::Classification | Term::FalseDetection => 3.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Term::Regression => "regression",
            Term::Classification => "classification",
            Term::FalseDetection => "false_detection",
            Term::MissedMatch => "missed_match",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    All,
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 4] = [SizeClass::All, SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    /// COCO size class of a box area: below `32^2`, below `96^2`, or larger.
    pub fn of_area(area: f64) -> Self {
        if area < 32.0 * 32.0 {
            SizeClass::Small
        } else if area < 96.0 * 96.0 {
            SizeClass::Medium
        } else {
            SizeClass::Large
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SizeClass::All => "all",
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramRow {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: u64,
    pub size_class: &'static str,
    pub term: &'static str,
}

/// Counts of per-prediction and per-object contributions, binned on
/// `[0, term.clip()]` with values outside clamped into the end bins.
/// Matched and missed terms use the object's box area for the size class,
/// false detections the prediction's box mean.
#[derive(Clone, Debug)]
pub struct Histograms {
    bins: usize,
    counts: Vec<u64>,
}

impl Histograms {
    pub fn new(bins: usize) -> Self {
        let bins = bins.max(1);
        Histograms {
            bins,
            counts: vec![0; Term::ALL.len() * SizeClass::ALL.len() * bins],
        }
    }

    fn slot(&self, term: Term, size: SizeClass) -> usize {
        (term as usize * SizeClass::ALL.len() + size as usize) * self.bins
    }

    pub fn add(&mut self, term: Term, area: f64, value: f64) {
        let bin = if value.is_nan() {
            return;
        } else {
            ((value / term.clip()) * self.bins as f64)
                .floor()
                .clamp(0.0, (self.bins - 1) as f64) as usize
        };
        for size in [SizeClass::All, SizeClass::of_area(area)] {
            let k = self.slot(term, size) + bin;
            self.counts[k] += 1;
        }
    }

    pub fn add_image(&mut self, r: &ImageResult) {
        let Some(c) = &r.contributions else { return };
        for m in &c.matched {
            let area = r.object_areas[m.object];
            self.add(Term::Regression, area, m.regression);
            self.add(Term::Classification, area, m.classification);
        }
        for f in &c.false_detections {
            self.add(Term::FalseDetection, r.bernoulli_areas[f.bernoulli], f.value);
        }
        for m in &c.missed {
            self.add(Term::MissedMatch, r.object_areas[m.object], m.value);
        }
    }

    pub fn rows(&self) -> Vec<HistogramRow> {
        let mut out = Vec::with_capacity(self.counts.len());
        for term in Term::ALL {
            let width = term.clip() / self.bins as f64;
            for size in SizeClass::ALL {
                let base = self.slot(term, size);
                for b in 0..self.bins {
                    out.push(HistogramRow {
                        bin_left: b as f64 * width,
                        bin_right: (b + 1) as f64 * width,
                        count: self.counts[base + b],
                        size_class: size.name(),
                        term: term.name(),
                    });
                }
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
