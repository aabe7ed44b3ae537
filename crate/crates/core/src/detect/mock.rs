use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DetectError, Detection};
use crate::dataset::BoundingBox;

/// What the camera hands the detector alongside the image id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameDescriptor {
    pub width: u32,
    pub height: u32,
}

impl Default for FrameDescriptor {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
        }
    }
}

/// An object detector. Returned detections must all carry `image_id`.
pub trait Detector {
    fn detect(&self, image_id: u64, frame: &FrameDescriptor) -> Result<Vec<Detection>, DetectError>;
}

/// One scripted detection; the image id comes from the script key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedDetection {
    pub category_id: u32,
    pub bbox: BoundingBox,
    pub score: f64,
}

/// Replays a fixed image-id → detections script.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockDetector {
    script: BTreeMap<u64, Vec<Detection>>,
}

impl MockDetector {
    pub fn new(script: BTreeMap<u64, Vec<Detection>>) -> Result<Self, DetectError> {
        for (image_id, dets) in &script {
            if let Some(d) = dets.iter().find(|d| d.image_id != *image_id) {
                return Err(DetectError::ScriptMismatch {
                    expected: *image_id,
                    found: d.image_id,
                });
            }
        }
        Ok(Self { script })
    }

    pub fn from_script(
        script: BTreeMap<u64, Vec<ScriptedDetection>>,
    ) -> Result<Self, DetectError> {
        let script = script
            .into_iter()
            .map(|(image_id, dets)| {
                let dets = dets
                    .into_iter()
                    .map(|s| Detection::new(image_id, s.category_id, s.bbox, s.score))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((image_id, dets))
            })
            .collect::<Result<_, DetectError>>()?;
        Ok(Self { script })
    }
}

impl Detector for MockDetector {
    fn detect(&self, image_id: u64, _frame: &FrameDescriptor) -> Result<Vec<Detection>, DetectError> {
        self.script
            .get(&image_id)
            .cloned()
            .ok_or(DetectError::UnknownImage(image_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn detector() -> MockDetector {
        let mut script = BTreeMap::new();
        script.insert(
            1,
            vec![ScriptedDetection {
                category_id: 1,
                bbox: BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
                score: 0.9,
            }],
        );
        MockDetector::from_script(script).unwrap()
    }

    #[test]
    fn echoes_the_script() {
        let out = detector().detect(1, &FrameDescriptor::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].image_id, out[0].category_id, out[0].score()), (1, 1, 0.9));
    }

    #[test]
    fn unknown_image() {
        assert_eq!(
            detector().detect(2, &FrameDescriptor::default()),
            Err(DetectError::UnknownImage(2))
        );
    }

    #[test]
    fn replay_is_deterministic() {
        let d = detector();
        let frame = FrameDescriptor::default();
        assert_eq!(d.detect(1, &frame), d.detect(1, &frame));
    }

    #[test]
    fn script_must_reference_its_key() {
        let det = Detection::new(5, 1, BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), 0.5).unwrap();
        let mut script = BTreeMap::new();
        script.insert(4, vec![det]);
        assert_eq!(
            MockDetector::new(script),
            Err(DetectError::ScriptMismatch { expected: 4, found: 5 })
        );
    }
}
