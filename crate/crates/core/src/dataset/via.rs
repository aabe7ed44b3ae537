use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};

use super::{Annotation, BoundingBox, CategoryLabel, Dataset, DatasetError, ImageRecord};

/// Parses a VIA (VGG Image Annotator) project export with rectangular regions.
///
/// Accepts either the bare per-file map or a full project with
/// `_via_img_metadata`. Files are numbered in key order, categories by sorted
/// class name. VIA does not store image dimensions; `file_attributes.width`
/// and `file_attributes.height` are used when present, otherwise the extent
/// of the file's regions.
pub fn parse_via(bytes: &[u8]) -> Result<Dataset, DatasetError> {
    let root: Value = serde_json::from_slice(bytes)
        .map_err(|e| DatasetError::MalformedDocument(e.to_string()))?;
    let files = root
        .get("_via_img_metadata")
        .unwrap_or(&root)
        .as_object()
        .ok_or_else(|| DatasetError::MalformedDocument("expected an object of files".into()))?;

    struct Region {
        class: String,
        bbox: BoundingBox,
    }
    struct File {
        name: String,
        dims: Option<(u32, u32)>,
        regions: Vec<Region>,
    }

    let mut parsed = Vec::with_capacity(files.len());
    for (key, entry) in files {
        let entry = entry
            .as_object()
            .ok_or_else(|| DatasetError::MalformedDocument(format!("file entry {key:?}")))?;
        let name = entry
            .get("filename")
            .and_then(Value::as_str)
            .unwrap_or(key)
            .to_string();

        let regions: Vec<&Value> = match entry.get("regions") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(list)) => list.iter().collect(),
            Some(Value::Object(map)) => map.values().collect(),
            Some(_) => {
                return Err(DatasetError::MalformedDocument(format!(
                    "regions of {name:?} must be a list"
                )))
            }
        };

        let mut out = Vec::with_capacity(regions.len());
        for (idx, region) in regions.into_iter().enumerate() {
            let shape = region
                .get("shape_attributes")
                .and_then(Value::as_object)
                .ok_or_else(|| {
                    DatasetError::MalformedDocument(format!(
                        "region {idx} of {name:?} lacks shape_attributes"
                    ))
                })?;
            let shape_name = shape.get("name").and_then(Value::as_str).unwrap_or("");
            if shape_name != "rect" {
                return Err(DatasetError::UnsupportedShape {
                    file: name.clone(),
                    region: idx,
                    shape: shape_name.to_string(),
                });
            }
            let class = region
                .get("region_attributes")
                .and_then(|a| a.get("class"))
                .and_then(Value::as_str)
                .filter(|c| !c.is_empty())
                .ok_or_else(|| DatasetError::MissingClassAttribute {
                    file: name.clone(),
                    region: idx,
                })?;
            let coord = |k: &str| {
                shape.get(k).and_then(Value::as_f64).ok_or_else(|| {
                    DatasetError::MalformedDocument(format!(
                        "region {idx} of {name:?} lacks numeric {k}"
                    ))
                })
            };
            let bbox = BoundingBox::new(coord("x")?, coord("y")?, coord("width")?, coord("height")?)
                .map_err(|_| DatasetError::DegenerateBox {
                    annotation_id: idx as u64,
                })?;
            out.push(Region {
                class: class.to_string(),
                bbox,
            });
        }

        let dims = entry
            .get("file_attributes")
            .and_then(Value::as_object)
            .and_then(|attrs| Some((dimension(attrs, "width")?, dimension(attrs, "height")?)));
        parsed.push(File {
            name,
            dims,
            regions: out,
        });
    }

    let classes: BTreeSet<&str> = parsed
        .iter()
        .flat_map(|f| f.regions.iter().map(|r| r.class.as_str()))
        .collect();
    let category_ids: BTreeMap<&str, u32> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, i as u32 + 1))
        .collect();
    let categories = category_ids
        .iter()
        .map(|(name, id)| CategoryLabel {
            id: *id,
            name: (*name).to_string(),
        })
        .collect();

    let mut images = Vec::with_capacity(parsed.len());
    let mut annotations = Vec::new();
    for (i, file) in parsed.iter().enumerate() {
        let image_id = i as u64 + 1;
        let (width, height) = file.dims.unwrap_or_else(|| {
            let w = file.regions.iter().map(|r| r.bbox.right()).fold(1.0, f64::max);
            let h = file.regions.iter().map(|r| r.bbox.bottom()).fold(1.0, f64::max);
            (w.ceil() as u32, h.ceil() as u32)
        });
        images.push(ImageRecord {
            id: image_id,
            file_name: file.name.clone(),
            width,
            height,
        });
        for region in &file.regions {
            annotations.push(Annotation {
                id: annotations.len() as u64 + 1,
                image_id,
                category_id: category_ids[region.class.as_str()],
                bbox: region.bbox,
            });
        }
    }

    Dataset::new(images, annotations, categories)
}

fn dimension(attrs: &Map<String, Value>, key: &str) -> Option<u32> {
    match attrs.get(key)? {
        Value::Number(n) => n.as_u64().and_then(|v| u32::try_from(v).ok()),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .filter(|v| *v > 0)
}
