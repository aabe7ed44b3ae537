use serde::{Deserialize, Serialize};

use super::{Annotation, BoundingBox, CategoryLabel, Dataset, DatasetError, ImageRecord};

#[derive(Deserialize)]
struct CocoDocument {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CategoryLabel>,
}

#[derive(Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
}

// Extra COCO keys (segmentation, iscrowd, area) are ignored on read.
#[derive(Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u32,
    bbox: [f64; 4],
}

#[derive(Serialize)]
struct CocoAnnotationOut<'a> {
    id: u64,
    image_id: u64,
    category_id: u32,
    bbox: &'a BoundingBox,
    area: f64,
    iscrowd: u8,
}

#[derive(Serialize)]
struct CocoDocumentOut<'a> {
    images: &'a [ImageRecord],
    annotations: Vec<CocoAnnotationOut<'a>>,
    categories: &'a [CategoryLabel],
}

/// Parses a COCO detection document (`images`, `annotations`, `categories`).
pub fn parse_coco(bytes: &[u8]) -> Result<Dataset, DatasetError> {
    let doc: CocoDocument = serde_json::from_slice(bytes)
        .map_err(|e| DatasetError::MalformedDocument(e.to_string()))?;

    let images = doc
        .images
        .into_iter()
        .map(|i| ImageRecord {
            id: i.id,
            file_name: i.file_name,
            width: i.width,
            height: i.height,
        })
        .collect();

    let annotations = doc
        .annotations
        .into_iter()
        .map(|a| {
            let bbox = BoundingBox::try_from(a.bbox)
                .map_err(|_| DatasetError::DegenerateBox { annotation_id: a.id })?;
            Ok(Annotation {
                id: a.id,
                image_id: a.image_id,
                category_id: a.category_id,
                bbox,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;

    Dataset::new(images, annotations, doc.categories)
}

/// Canonical COCO serialization: pretty-printed, fixed key order, trailing newline.
pub fn emit_coco(dataset: &Dataset) -> String {
    let doc = CocoDocumentOut {
        images: dataset.images(),
        annotations: dataset
            .annotations()
            .iter()
            .map(|a| CocoAnnotationOut {
                id: a.id,
                image_id: a.image_id,
                category_id: a.category_id,
                bbox: &a.bbox,
                area: a.bbox.area(),
                iscrowd: 0,
            })
            .collect(),
        categories: dataset.categories(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("dataset serializes");
    out.push('\n');
    out
}
