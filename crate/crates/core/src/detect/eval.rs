use serde::Serialize;

use super::postprocess::{iou, score_order};
use super::{DetectError, Detection};
use crate::dataset::{Annotation, Dataset};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchOutcome {
    TruePositive,
    FalsePositive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub image_id: u64,
    pub category_id: u32,
    pub score: f64,
    pub outcome: MatchOutcome,
    pub ground_truth_id: Option<u64>,
    /// IoU with the matched ground truth, or the best same-class overlap for a
    /// false positive (0 when there was none).
    pub iou: f64,
}

impl MatchResult {
    pub fn is_true_positive(&self) -> bool {
        self.outcome == MatchOutcome::TruePositive
    }
}

/// Greedy matching of detections to ground truths.
///
/// Detections are visited by descending score. Each one claims the unmatched
/// ground truth of the same image and class with the highest IoU, provided
/// that IoU reaches `iou_threshold`; otherwise it is a false positive.
pub fn match_detections(
    detections: &[Detection],
    ground_truths: &[Annotation],
    iou_threshold: f64,
) -> Vec<MatchResult> {
    let mut used = vec![false; ground_truths.len()];
    score_order(detections)
        .into_iter()
        .map(|idx| {
            let det = &detections[idx];
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in ground_truths.iter().enumerate() {
                if used[g] || gt.image_id != det.image_id || gt.category_id != det.category_id {
                    continue;
                }
                let overlap = iou(&det.bbox, &gt.bbox);
                if best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((g, overlap));
                }
            }
            let (outcome, ground_truth_id, overlap) = match best {
                Some((g, overlap)) if overlap >= iou_threshold => {
                    used[g] = true;
                    (MatchOutcome::TruePositive, Some(ground_truths[g].id), overlap)
                }
                Some((_, overlap)) => (MatchOutcome::FalsePositive, None, overlap),
                None => (MatchOutcome::FalsePositive, None, 0.0),
            };
            MatchResult {
                image_id: det.image_id,
                category_id: det.category_id,
                score: det.score(),
                outcome,
                ground_truth_id,
                iou: overlap,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecisionRecallCurve {
    /// `(recall, precision)` after each detection in score order.
    pub points: Vec<(f64, f64)>,
    pub ap: f64,
}

/// 11-point interpolated average precision.
///
/// Results are re-sorted by descending score (stable), so per-image match
/// lists can simply be concatenated.
pub fn average_precision(results: &[MatchResult], num_ground_truths: usize) -> PrecisionRecallCurve {
    let mut sorted: Vec<&MatchResult> = results.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    if num_ground_truths == 0 {
        let ap = if sorted.is_empty() { 1.0 } else { 0.0 };
        return PrecisionRecallCurve {
            points: vec![(0.0, 0.0); sorted.len()],
            ap,
        };
    }

    let mut tp = 0usize;
    let points: Vec<(f64, f64)> = sorted
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.is_true_positive() {
                tp += 1;
            }
            (
                tp as f64 / num_ground_truths as f64,
                tp as f64 / (i + 1) as f64,
            )
        })
        .collect();

    let ap = (0..=10)
        .map(|step| {
            let anchor = f64::from(step) / 10.0;
            points
                .iter()
                .filter(|(recall, _)| *recall >= anchor)
                .map(|(_, precision)| *precision)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 11.0;

    PrecisionRecallCurve { points, ap }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCurve {
    pub category_id: u32,
    pub num_ground_truths: usize,
    pub curve: PrecisionRecallCurve,
}

/// Unweighted mean AP over classes that have at least one ground truth.
pub fn mean_average_precision(per_class: &[ClassCurve]) -> Result<f64, DetectError> {
    let evaluable: Vec<f64> = per_class
        .iter()
        .filter(|c| c.num_ground_truths > 0)
        .map(|c| c.curve.ap)
        .collect();
    if evaluable.is_empty() {
        return Err(DetectError::NoEvaluableClass);
    }
    Ok(evaluable.iter().sum::<f64>() / evaluable.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub category_id: u32,
    pub name: String,
    pub num_ground_truths: usize,
    pub num_detections: usize,
    pub true_positives: usize,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub iou_threshold: f64,
    pub classes: Vec<ClassReport>,
    pub map: f64,
}

impl EvaluationReport {
    /// Fixed-point text table, four decimals.
    pub fn to_text(&self) -> String {
        let mut out = format!("IoU threshold {:.2}\n", self.iou_threshold);
        out.push_str(&format!(
            "{:<24} {:>6} {:>6} {:>6} {:>8}\n",
            "class", "gt", "dets", "tp", "AP"
        ));
        for c in &self.classes {
            out.push_str(&format!(
                "{:<24} {:>6} {:>6} {:>6} {:>8.4}\n",
                c.name, c.num_ground_truths, c.num_detections, c.true_positives, c.ap
            ));
        }
        out.push_str(&format!("mAP {:.4}\n", self.map));
        out
    }
}

/// Evaluates detections against a ground-truth dataset, class by class.
/// Detections whose category is not in the dataset are ignored.
pub fn evaluate(
    ground_truth: &Dataset,
    detections: &[Detection],
    iou_threshold: f64,
) -> Result<EvaluationReport, DetectError> {
    let mut curves = Vec::new();
    let mut classes = Vec::new();
    for category in ground_truth.categories() {
        let gts: Vec<Annotation> = ground_truth
            .annotations()
            .iter()
            .filter(|a| a.category_id == category.id)
            .cloned()
            .collect();
        let dets: Vec<Detection> = detections
            .iter()
            .filter(|d| d.category_id == category.id)
            .cloned()
            .collect();
        let matches = match_detections(&dets, &gts, iou_threshold);
        let curve = average_precision(&matches, gts.len());
        classes.push(ClassReport {
            category_id: category.id,
            name: category.name.clone(),
            num_ground_truths: gts.len(),
            num_detections: dets.len(),
            true_positives: matches.iter().filter(|m| m.is_true_positive()).count(),
            ap: curve.ap,
        });
        curves.push(ClassCurve {
            category_id: category.id,
            num_ground_truths: gts.len(),
            curve,
        });
    }
    let map = mean_average_precision(&curves)?;
    Ok(EvaluationReport {
        iou_threshold,
        classes,
        map,
    })
}
