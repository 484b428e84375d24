//! Ground truth in a subset of the COCO annotation format.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;

use super::{parse_json, read_file};
use crate::error::{Error, Result};
use crate::types::{BoundingBox, Category, GroundTruthObject, LabelMap};

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
    #[serde(default)]
    width: Option<f64>,
    #[serde(default)]
    height: Option<f64>,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    /// `[x, y, w, h]`
    bbox: [f64; 4],
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u64,
    #[serde(default)]
    name: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub id: u64,
    pub object: GroundTruthObject,
    pub crowd: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub id: u64,
    pub width: Option<f64>,
    pub height: Option<f64>,
    pub annotations: Vec<Annotation>,
}

impl ImageRecord {
    /// Ground-truth objects in annotation order, crowd regions included only
    /// on request.
    pub fn objects(&self, include_crowd: bool) -> Vec<GroundTruthObject> {
        self.annotations
            .iter()
            .filter(|a| include_crowd || !a.crowd)
            .map(|a| a.object)
            .collect()
    }
}

/// Images sorted by id, with class indices assigned in ascending category-id
/// order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    pub labels: LabelMap,
}

impl Dataset {
    pub fn image(&self, id: u64) -> Option<&ImageRecord> {
        self.images
            .binary_search_by_key(&id, |im| im.id)
            .ok()
            .map(|k| &self.images[k])
    }
}

pub fn read_ground_truth(path: &Path) -> Result<Dataset> {
    let text = read_file(path)?;
    parse_ground_truth(&text, &path.display().to_string())
}

/// Parses COCO JSON; `context` names the source in error messages.
pub fn parse_ground_truth(text: &str, context: &str) -> Result<Dataset> {
    let file: CocoFile = parse_json(text, context)?;

    let mut cats: Vec<Category> = file
        .categories
        .into_iter()
        .map(|c| Category { id: c.id, name: c.name })
        .collect();
    cats.sort_by_key(|c| c.id);
    let labels = LabelMap::new(cats).map_err(|e| Error::schema(context, e))?;

    let mut images: BTreeMap<u64, ImageRecord> = BTreeMap::new();
    for im in file.images {
        let rec = ImageRecord {
            id: im.id,
            width: im.width,
            height: im.height,
            annotations: Vec::new(),
        };
        if images.insert(im.id, rec).is_some() {
            return Err(Error::schema(context, format!("duplicate image id {}", im.id)));
        }
    }

    let mut seen = BTreeSet::new();
    for (k, a) in file.annotations.into_iter().enumerate() {
        let at = || format!("{context}: annotations[{k}] (id {})", a.id);
        if !seen.insert(a.id) {
            return Err(Error::schema(at(), "duplicate annotation id"));
        }
        let class_id = labels
            .class_index(a.category_id)
            .ok_or_else(|| Error::schema(at(), format!("unknown category_id {}", a.category_id)))?;
        let [x, y, w, h] = a.bbox;
        if w < 0.0 || h < 0.0 {
            return Err(Error::schema(at(), "bbox has negative width or height"));
        }
        let bbox = BoundingBox::new(x, y, x + w, y + h).map_err(|e| Error::schema(at(), e))?;
        let image = images
            .get_mut(&a.image_id)
            .ok_or_else(|| Error::schema(at(), format!("unknown image_id {}", a.image_id)))?;
        image.annotations.push(Annotation {
            id: a.id,
            object: GroundTruthObject::new(class_id, bbox),
            crowd: a.iscrowd != 0,
        });
    }

    Ok(Dataset {
        images: images.into_values().collect(),
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "images": [{"id": 7, "width": 640, "height": 480}, {"id": 3}],
        "annotations": [
            {"id": 1, "image_id": 7, "category_id": 18, "bbox": [10, 20, 30, 40]},
            {"id": 2, "image_id": 7, "category_id": 1, "bbox": [0, 0, 5, 5], "iscrowd": 1}
        ],
        "categories": [{"id": 18, "name": "dog"}, {"id": 1, "name": "person"}]
    }"#;

    #[test]
    fn converts_xywh_and_orders_labels() {
        let ds = parse_ground_truth(SAMPLE, "sample").unwrap();
        assert_eq!(ds.images.iter().map(|i| i.id).collect::<Vec<_>>(), vec![3, 7]);
        assert_eq!(ds.labels.class_index(1), Some(0));
        assert_eq!(ds.labels.class_index(18), Some(1));
        let im = ds.image(7).unwrap();
        assert_eq!(im.annotations[0].object.bbox.to_array(), [10.0, 20.0, 40.0, 60.0]);
        assert_eq!(im.annotations[0].object.class_id, 1);
        assert_eq!(im.objects(false).len(), 1);
        assert_eq!(im.objects(true).len(), 2);
        assert!(ds.image(3).unwrap().annotations.is_empty());
    }

    #[test]
    fn rejects_duplicates_and_unknown_references() {
        let dup = SAMPLE.replace(r#""id": 2, "image_id""#, r#""id": 1, "image_id""#);
        let err = parse_ground_truth(&dup, "dup").unwrap_err().to_string();
        assert!(err.contains("duplicate annotation id"), "{err}");

        let unknown = SAMPLE.replace(r#""category_id": 18"#, r#""category_id": 99"#);
        let err = parse_ground_truth(&unknown, "cat").unwrap_err().to_string();
        assert!(err.contains("unknown category_id 99"), "{err}");

        let orphan = SAMPLE.replace(
            r#""image_id": 7, "category_id": 1"#,
            r#""image_id": 8, "category_id": 1"#,
        );
        assert!(parse_ground_truth(&orphan, "img").is_err());
    }

    #[test]
    fn malformed_input_names_the_field() {
        let bad = SAMPLE.replace("[10, 20, 30, 40]", r#""oops""#);
        let err = parse_ground_truth(&bad, "bad").unwrap_err().to_string();
        assert!(err.contains("annotations[0].bbox"), "{err}");
        assert!(err.contains("line"), "{err}");
    }
}
