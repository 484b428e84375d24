//! Reading ground truth and predictions, inference-time filtering, and
//! report output.

pub mod coco;
pub mod filter;
pub mod predictions;
pub mod report;

pub use coco::{parse_ground_truth, read_ground_truth, Annotation, Dataset, ImageRecord};
pub use filter::{inference_filter, NmsMode};
pub use predictions::{parse_predictions, read_predictions, write_predictions, Predictions, RequestedFamily};
pub use report::{aggregate, write_report, Aggregate, Histograms, ImageRow, ReportFormat};

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Deserializes JSON, reporting the failing field path and position.
pub(crate) fn parse_json<T: DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(context, format!("{path}: {}", e.into_inner()))
    })
}
