//! Simulated edge station: load-cell calibration, weight conversion and the
//! detect → weigh → publish loop.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::future::Future;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{Detector, FrameDescriptor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("known-mass reading equals the zero reading")]
    DegenerateCalibration,
    #[error("known-mass reading is below the zero reading")]
    NegativeScale,
    #[error("reference mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("invalid calibration: tare {tare}, scale {scale}")]
    InvalidParams { tare: f64, scale: f64 },
}

/// Tare offset in raw counts and grams per count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    tare_offset: f64,
    scale: f64,
}

impl CalibrationParams {
    pub fn new(tare_offset: f64, scale: f64) -> Result<Self, CalibrationError> {
        if !tare_offset.is_finite() || !scale.is_finite() || scale <= 0.0 {
            return Err(CalibrationError::InvalidParams {
                tare: tare_offset,
                scale,
            });
        }
        Ok(Self { tare_offset, scale })
    }

    pub fn tare_offset(&self) -> f64 {
        self.tare_offset
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Two-point calibration from an empty-pan reading and one reference mass.
pub fn calibrate_two_point(
    raw_zero: f64,
    raw_known: f64,
    known_mass_g: f64,
) -> Result<CalibrationParams, CalibrationError> {
    if known_mass_g.is_nan() || known_mass_g <= 0.0 {
        return Err(CalibrationError::NonPositiveMass(known_mass_g));
    }
    if raw_known == raw_zero {
        return Err(CalibrationError::DegenerateCalibration);
    }
    if raw_known < raw_zero {
        return Err(CalibrationError::NegativeScale);
    }
    CalibrationParams::new(raw_zero, known_mass_g / (raw_known - raw_zero))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadCellReading {
    pub raw: f64,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightMeasurement {
    pub grams: f64,
    pub timestamp: i64,
    /// Set when the reading sat below tare and was clamped to zero.
    pub clamped: bool,
}

pub fn adc_to_weight(reading: &LoadCellReading, cal: &CalibrationParams) -> WeightMeasurement {
    let grams = (reading.raw - cal.tare_offset) * cal.scale;
    let clamped = reading.raw < cal.tare_offset;
    WeightMeasurement {
        grams: if clamped { 0.0 } else { grams.max(0.0) },
        timestamp: reading.timestamp,
        clamped,
    }
}

/// Noise model for simulated load cells: additive Gaussian on raw counts.
#[derive(Debug, Clone)]
pub struct SyntheticLoadCell {
    params: CalibrationParams,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl SyntheticLoadCell {
    pub fn new(params: CalibrationParams, sigma_counts: f64, seed: u64) -> Self {
        let noise = (sigma_counts > 0.0)
            .then(|| Normal::new(0.0, sigma_counts).expect("finite positive sigma"));
        Self {
            params,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn noiseless(params: CalibrationParams) -> Self {
        Self::new(params, 0.0, 0)
    }

    pub fn raw_for(&mut self, mass_g: f64) -> f64 {
        let ideal = self.params.tare_offset + mass_g / self.params.scale;
        match &self.noise {
            Some(n) => ideal + n.sample(&mut self.rng),
            None => ideal,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TelemetryError {
    #[error("component name is empty")]
    EmptyComponent,
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("weight {0} must be a non-negative number")]
    InvalidWeight(f64),
    #[error("timestamp {0} is negative")]
    InvalidTimestamp(i64),
}

#[derive(Deserialize)]
struct RawTelemetry {
    device_id: String,
    component: String,
    confidence: f64,
    weight_g: f64,
    ts: i64,
}

/// Wire payload published per detected component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTelemetry")]
pub struct TelemetryMessage {
    pub device_id: String,
    pub component: String,
    pub confidence: f64,
    pub weight_g: f64,
    pub ts: i64,
}

impl TryFrom<RawTelemetry> for TelemetryMessage {
    type Error = TelemetryError;

    fn try_from(r: RawTelemetry) -> Result<Self, Self::Error> {
        let msg = TelemetryMessage {
            device_id: r.device_id,
            component: r.component,
            confidence: r.confidence,
            weight_g: r.weight_g,
            ts: r.ts,
        };
        msg.validate()?;
        Ok(msg)
    }
}

impl TelemetryMessage {
    pub fn validate(&self) -> Result<(), TelemetryError> {
        if self.component.is_empty() {
            return Err(TelemetryError::EmptyComponent);
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(TelemetryError::InvalidConfidence(self.confidence));
        }
        if !(self.weight_g.is_finite() && self.weight_g >= 0.0) {
            return Err(TelemetryError::InvalidWeight(self.weight_g));
        }
        if self.ts < 0 {
            return Err(TelemetryError::InvalidTimestamp(self.ts));
        }
        Ok(())
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("telemetry serializes")
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

pub const TOPIC_PREFIX: &str = "ewaste";

pub fn detections_topic(device_id: &str) -> String {
    format!("{TOPIC_PREFIX}/{device_id}/detections")
}

/// Filter matching every station's detections topic.
pub const ALL_DETECTIONS_FILTER: &str = "ewaste/+/detections";

/// One scripted frame: what the camera saw and what the load cell read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub image_id: u64,
    pub raw: f64,
    pub ts: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameDescriptor>,
}

/// Transport used by a station. One call at a time per publisher.
pub trait TelemetryPublisher {
    type Error: Display;

    fn publish(
        &mut self,
        topic: &str,
        payload: Vec<u8>,
    ) -> impl Future<Output = Result<(), Self::Error>> + Send;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StationError {
    #[error("device id {0:?} is empty or contains '/', '+' or '#'")]
    InvalidDeviceId(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StationReport {
    pub published: usize,
    pub no_detection: usize,
    /// Frames the detector rejected or whose class has no name.
    pub failed_frames: usize,
    /// Messages dropped after the publish retry also failed.
    pub dropped: usize,
    pub clamped_weights: usize,
    pub sent: Vec<TelemetryMessage>,
}

/// Runs one station over `events` in order.
///
/// Each frame goes through the detector; the highest-scoring detection (first
/// one on ties) is paired with the converted weight and published to
/// `ewaste/<device_id>/detections`. A failed publish is retried once and then
/// dropped.
pub async fn run_station<D, P>(
    device_id: &str,
    events: &[ScenarioEvent],
    cal: &CalibrationParams,
    detector: &D,
    category_names: &BTreeMap<u32, String>,
    publisher: &mut P,
) -> Result<StationReport, StationError>
where
    D: Detector,
    P: TelemetryPublisher,
{
    if device_id.is_empty() || device_id.contains(['/', '+', '#']) {
        return Err(StationError::InvalidDeviceId(device_id.to_string()));
    }
    let topic = detections_topic(device_id);
    let mut report = StationReport::default();

    for event in events {
        let frame = event.frame.unwrap_or_default();
        let detections = match detector.detect(event.image_id, &frame) {
            Ok(d) => d,
            Err(_) => {
                report.failed_frames += 1;
                continue;
            }
        };
        let Some(best) = detections
            .iter()
            .reduce(|best, d| if d.score() > best.score() { d } else { best })
        else {
            report.no_detection += 1;
            continue;
        };
        let Some(component) = category_names.get(&best.category_id) else {
            report.failed_frames += 1;
            continue;
        };

        let weight = adc_to_weight(
            &LoadCellReading {
                raw: event.raw,
                timestamp: event.ts,
            },
            cal,
        );
        if weight.clamped {
            report.clamped_weights += 1;
        }
        let msg = TelemetryMessage {
            device_id: device_id.to_string(),
            component: component.clone(),
            confidence: best.score(),
            weight_g: weight.grams,
            ts: event.ts,
        };
        let payload = msg.to_json_bytes();

        let mut delivered = publisher.publish(&topic, payload.clone()).await.is_ok();
        if !delivered {
            delivered = publisher.publish(&topic, payload).await.is_ok();
        }
        if delivered {
            report.published += 1;
            report.sent.push(msg);
        } else {
            report.dropped += 1;
        }
    }
    Ok(report)
}
