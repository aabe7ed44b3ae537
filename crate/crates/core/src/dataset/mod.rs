//! Annotation datasets: COCO / VIA ingestion, stratified splitting and
//! coordinate-space preprocessing.
//!
//! Pixel data is never touched. Every transform here maps box geometry and
//! image metadata only.

mod coco;
mod split;
mod transform;
mod via;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use coco::{emit_coco, parse_coco};
pub use split::{stratified_split, SplitConfig};
pub use transform::{
    augment, random_augmentation, resize_plan, AugmentedImage, PixelNormalization, ResizePlan,
    Transform,
};
pub use via::parse_via;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("annotation {annotation_id} references unknown {kind} {id}")]
    DanglingReference {
        annotation_id: u64,
        kind: &'static str,
        id: u64,
    },
    #[error("annotation {annotation_id} has a degenerate box")]
    DegenerateBox { annotation_id: u64 },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u64 },
    #[error("invalid category {0:?}: names must be unique and non-empty")]
    InvalidCategory(String),
    #[error("invalid image {image_id}: width and height must be positive")]
    InvalidImage { image_id: u64 },
    #[error("region {region} of {file:?} has unsupported shape {shape:?}")]
    UnsupportedShape {
        file: String,
        region: usize,
        shape: String,
    },
    #[error("region {region} of {file:?} has no class attribute")]
    MissingClassAttribute { file: String, region: usize },
    #[error("category {0:?} has no images to stratify")]
    EmptyStratum(String),
    #[error("image {image_id} has no annotations and cannot be stratified")]
    UnannotatedImage { image_id: u64 },
    #[error("train fraction {0} is outside (0, 1)")]
    InvalidFraction(f64),
    #[error("zero dimension in resize request")]
    ZeroDimension,
}

/// Axis-aligned box in pixel coordinates, serialized COCO style as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("invalid box [{x}, {y}, {w}, {h}]: origin must be non-negative and size positive")]
pub struct InvalidBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, InvalidBox> {
        let finite = x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite();
        if !finite || x < 0.0 || y < 0.0 || w <= 0.0 || h <= 0.0 {
            return Err(InvalidBox { x, y, w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn width(&self) -> f64 {
        self.w
    }

    pub fn height(&self) -> f64 {
        self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Area shared with `other`; zero when the boxes only touch or are disjoint.
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Clips the box to `[0, width] x [0, height]`. `None` if nothing remains.
    pub fn clamp_to(&self, width: f64, height: f64) -> Option<BoundingBox> {
        let x0 = self.x.clamp(0.0, width);
        let y0 = self.y.clamp(0.0, height);
        let x1 = self.right().clamp(0.0, width);
        let y1 = self.bottom().clamp(0.0, height);
        BoundingBox::new(x0, y0, x1 - x0, y1 - y0).ok()
    }

    pub fn fits_within(&self, width: f64, height: f64) -> bool {
        self.right() <= width && self.bottom() <= height
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = InvalidBox;

    fn try_from([x, y, w, h]: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(x, y, w, h)
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryLabel {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: BoundingBox,
}

/// Images, their box annotations and the category vocabulary, with
/// referential integrity checked at construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    images: Vec<ImageRecord>,
    annotations: Vec<Annotation>,
    categories: Vec<CategoryLabel>,
}

impl Dataset {
    pub fn new(
        images: Vec<ImageRecord>,
        annotations: Vec<Annotation>,
        categories: Vec<CategoryLabel>,
    ) -> Result<Self, DatasetError> {
        let mut image_ids = HashSet::new();
        for image in &images {
            if !image_ids.insert(image.id) {
                return Err(DatasetError::DuplicateId {
                    kind: "image",
                    id: image.id,
                });
            }
            if image.width == 0 || image.height == 0 {
                return Err(DatasetError::InvalidImage { image_id: image.id });
            }
        }

        let mut category_ids = HashSet::new();
        let mut names = HashSet::new();
        for category in &categories {
            if !category_ids.insert(category.id) {
                return Err(DatasetError::DuplicateId {
                    kind: "category",
                    id: u64::from(category.id),
                });
            }
            if category.name.is_empty() || !names.insert(category.name.as_str()) {
                return Err(DatasetError::InvalidCategory(category.name.clone()));
            }
        }

        let mut annotation_ids = HashSet::new();
        for ann in &annotations {
            if !annotation_ids.insert(ann.id) {
                return Err(DatasetError::DuplicateId {
                    kind: "annotation",
                    id: ann.id,
                });
            }
            if !image_ids.contains(&ann.image_id) {
                return Err(DatasetError::DanglingReference {
                    annotation_id: ann.id,
                    kind: "image",
                    id: ann.image_id,
                });
            }
            if !category_ids.contains(&ann.category_id) {
                return Err(DatasetError::DanglingReference {
                    annotation_id: ann.id,
                    kind: "category",
                    id: u64::from(ann.category_id),
                });
            }
        }

        Ok(Self {
            images,
            annotations,
            categories,
        })
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn categories(&self) -> &[CategoryLabel] {
        &self.categories
    }

    pub fn image(&self, image_id: u64) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.id == image_id)
    }

    pub fn category_name(&self, category_id: u32) -> Option<&str> {
        self.categories
            .iter()
            .find(|c| c.id == category_id)
            .map(|c| c.name.as_str())
    }

    pub fn category_id(&self, name: &str) -> Option<u32> {
        self.categories.iter().find(|c| c.name == name).map(|c| c.id)
    }

    /// Annotations grouped by image id, each group in input order.
    pub fn annotations_by_image(&self) -> HashMap<u64, Vec<&Annotation>> {
        let mut out: HashMap<u64, Vec<&Annotation>> = HashMap::new();
        for ann in &self.annotations {
            out.entry(ann.image_id).or_default().push(ann);
        }
        out
    }

    /// Keeps only the listed images (original order) and their annotations.
    pub fn subset(&self, keep: &HashSet<u64>) -> Dataset {
        Dataset {
            images: self
                .images
                .iter()
                .filter(|i| keep.contains(&i.id))
                .cloned()
                .collect(),
            annotations: self
                .annotations
                .iter()
                .filter(|a| keep.contains(&a.image_id))
                .cloned()
                .collect(),
            categories: self.categories.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_rejects_degenerate_sizes() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(BoundingBox::new(-1.0, 0.0, 1.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, f64::NAN, 1.0, 1.0).is_err());
        assert_eq!(BoundingBox::new(1.0, 2.0, 3.0, 4.0).unwrap().area(), 12.0);
    }

    #[test]
    fn clamp_drops_boxes_outside_the_image() {
        let b = BoundingBox::new(90.0, 90.0, 20.0, 20.0).unwrap();
        let c = b.clamp_to(100.0, 100.0).unwrap();
        assert_eq!(<[f64; 4]>::from(c), [90.0, 90.0, 10.0, 10.0]);
        let outside = BoundingBox::new(120.0, 0.0, 5.0, 5.0).unwrap();
        assert!(outside.clamp_to(100.0, 100.0).is_none());
    }

    #[test]
    fn dataset_rejects_duplicate_category_names() {
        let cats = vec![
            CategoryLabel { id: 1, name: "cable".into() },
            CategoryLabel { id: 2, name: "cable".into() },
        ];
        assert_eq!(
            Dataset::new(vec![], vec![], cats),
            Err(DatasetError::InvalidCategory("cable".into()))
        );
    }
}
