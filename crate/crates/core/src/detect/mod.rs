//! Detection post-processing and evaluation.
//!
//! IoU and class-wise greedy NMS live in [`postprocess`]; greedy matching,
//! 11-point interpolated AP and mAP in [`eval`]. The [`Detector`] trait stands
//! in for the on-device model, with [`MockDetector`] replaying scripted output.

pub mod eval;
mod mock;
pub mod postprocess;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::BoundingBox;

pub use eval::{
    average_precision, evaluate, match_detections, mean_average_precision, ClassCurve, ClassReport,
    EvaluationReport, MatchOutcome, MatchResult, PrecisionRecallCurve, DEFAULT_IOU_THRESHOLD,
};
pub use mock::{Detector, FrameDescriptor, MockDetector, ScriptedDetection};
pub use postprocess::{iou, nms};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("detections span more than one image ({0} and {1})")]
    MixedImages(u64, u64),
    #[error("no class has any ground truth")]
    NoEvaluableClass,
    #[error("no scripted detections for image {0}")]
    UnknownImage(u64),
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("scripted detection for image {found} filed under image {expected}")]
    ScriptMismatch { expected: u64, found: u64 },
    #[error("line {line}: {message}")]
    MalformedPrediction { line: usize, message: String },
}

#[derive(Debug, Deserialize)]
struct RawDetection {
    image_id: u64,
    category_id: u32,
    bbox: BoundingBox,
    score: f64,
}

/// A predicted box with class and confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDetection")]
pub struct Detection {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: BoundingBox,
    score: f64,
}

impl Detection {
    pub fn new(
        image_id: u64,
        category_id: u32,
        bbox: BoundingBox,
        score: f64,
    ) -> Result<Self, DetectError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(DetectError::InvalidScore(score));
        }
        Ok(Self {
            image_id,
            category_id,
            bbox,
            score,
        })
    }

    pub fn score(&self) -> f64 {
        self.score
    }
}

impl TryFrom<RawDetection> for Detection {
    type Error = DetectError;

    fn try_from(r: RawDetection) -> Result<Self, Self::Error> {
        Detection::new(r.image_id, r.category_id, r.bbox, r.score)
    }
}

/// Reads line-delimited JSON detections. Blank lines are skipped.
pub fn parse_predictions(text: &str) -> Result<Vec<Detection>, DetectError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DetectError::MalformedPrediction {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_predictions(detections: &[Detection]) -> String {
    let mut out = String::new();
    for d in detections {
        out.push_str(&serde_json::to_string(d).expect("detection serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_must_be_a_probability() {
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(Detection::new(1, 1, b, 1.5), Err(DetectError::InvalidScore(1.5)));
        assert!(Detection::new(1, 1, b, 0.0).is_ok());
    }

    #[test]
    fn predictions_ndjson() {
        let text = "{\"image_id\":1,\"category_id\":2,\"bbox\":[0,0,10,10],\"score\":0.5}\n\n\
                    {\"image_id\":2,\"category_id\":1,\"bbox\":[1,1,2,2],\"score\":1.0}\n";
        let dets = parse_predictions(text).unwrap();
        assert_eq!(dets.len(), 2);
        assert_eq!(parse_predictions(&write_predictions(&dets)).unwrap(), dets);

        let bad = "{\"image_id\":1,\"category_id\":2,\"bbox\":[0,0,10,10],\"score\":2}\n";
        assert!(matches!(
            parse_predictions(bad),
            Err(DetectError::MalformedPrediction { line: 1, .. })
        ));
    }
}
