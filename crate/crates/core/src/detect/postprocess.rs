use std::cmp::Ordering;

use super::{DetectError, Detection};
use crate::dataset::BoundingBox;

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Indices of `detections` ordered by descending score, ties by input position.
pub(crate) fn score_order(detections: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&i, &j| {
        detections[j]
            .score()
            .total_cmp(&detections[i].score())
            .then(i.cmp(&j))
    });
    order
}

/// Class-wise greedy non-maximum suppression for a single image.
///
/// A detection is dropped when its IoU with an already kept detection of the
/// same class exceeds `iou_threshold`. Output is sorted by descending score.
pub fn nms(detections: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>, DetectError> {
    if let Some(first) = detections.first() {
        if let Some(other) = detections.iter().find(|d| d.image_id != first.image_id) {
            return Err(DetectError::MixedImages(first.image_id, other.image_id));
        }
    }

    let mut kept: Vec<&Detection> = Vec::new();
    for idx in score_order(detections) {
        let cand = &detections[idx];
        let suppressed = kept.iter().any(|k| {
            k.category_id == cand.category_id
                && iou(&k.bbox, &cand.bbox).partial_cmp(&iou_threshold) == Some(Ordering::Greater)
        });
        if !suppressed {
            kept.push(cand);
        }
    }
    Ok(kept.into_iter().cloned().collect())
}
