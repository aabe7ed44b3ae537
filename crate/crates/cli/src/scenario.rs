//! Scenario files for `device run` and `demo`.

use std::collections::{BTreeMap, BTreeSet};

use anyhow::{bail, Context, Result};
use ewaste_core::dataset::BoundingBox;
use ewaste_core::detect::{MockDetector, ScriptedDetection};
use ewaste_core::device::{CalibrationParams, ScenarioEvent, SyntheticLoadCell};
use ewaste_core::pricing::{load_price_table, PriceTable};
use serde::Deserialize;

/// What the mock detector reports for one frame.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ScriptedFrameDetection {
    pub component: String,
    pub score: f64,
    /// `[x, y, w, h]`; defaults to a unit box since only the class matters downstream.
    #[serde(default)]
    pub bbox: Option<BoundingBox>,
}

/// A station event as written in a scenario file: the core event fields plus
/// the detections to script for its image.
#[derive(Debug, Clone, Deserialize)]
pub struct DeviceEvent {
    #[serde(flatten)]
    pub event: ScenarioEvent,
    #[serde(default)]
    pub detections: Vec<ScriptedFrameDetection>,
}

/// Everything a station needs: ordered events, a detector that replays the
/// scripted detections, and the category id → name map.
pub struct StationScript {
    pub events: Vec<ScenarioEvent>,
    pub detector: MockDetector,
    pub names: BTreeMap<u32, String>,
}

impl StationScript {
    pub fn build(events: Vec<DeviceEvent>) -> Result<Self> {
        let components: BTreeSet<&str> = events
            .iter()
            .flat_map(|e| e.detections.iter().map(|d| d.component.as_str()))
            .collect();
        // ids by sorted name, like annotation categories
        let ids: BTreeMap<&str, u32> = components.iter().zip(1..).map(|(c, id)| (*c, id)).collect();
        let names = ids.iter().map(|(c, id)| (*id, c.to_string())).collect();

        let mut script: BTreeMap<u64, Vec<ScriptedDetection>> = BTreeMap::new();
        for e in &events {
            let dets: Vec<ScriptedDetection> = e
                .detections
                .iter()
                .map(|d| {
                    Ok(ScriptedDetection {
                        category_id: ids[d.component.as_str()],
                        bbox: match d.bbox {
                            Some(b) => b,
                            None => BoundingBox::new(0.0, 0.0, 1.0, 1.0)?,
                        },
                        score: d.score,
                    })
                })
                .collect::<Result<_>>()?;
            match script.get(&e.event.image_id) {
                Some(existing) if *existing != dets => {
                    bail!("image {} is scripted twice with different detections", e.event.image_id)
                }
                Some(_) => {}
                None => {
                    script.insert(e.event.image_id, dets);
                }
            }
        }
        let detector = MockDetector::from_script(script).context("invalid scripted detection")?;
        Ok(Self {
            events: events.into_iter().map(|e| e.event).collect(),
            detector,
            names,
        })
    }
}

pub fn parse_device_scenario(bytes: &[u8]) -> Result<StationScript> {
    let events: Vec<DeviceEvent> = serde_json::from_slice(bytes).context("malformed scenario file")?;
    StationScript::build(events)
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct CalibrationSpec {
    pub tare_offset: f64,
    pub scale: f64,
}

/// A demo event names the true mass; the synthetic load cell turns it into
/// a raw reading.
#[derive(Debug, Clone, Deserialize)]
pub struct DemoEvent {
    pub image_id: u64,
    pub ts: i64,
    pub mass_g: f64,
    #[serde(default)]
    pub detections: Vec<ScriptedFrameDetection>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DemoDevice {
    pub id: String,
    pub events: Vec<DemoEvent>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DemoOrder {
    pub category: String,
    pub quantity: i64,
}

/// Counts the run must reproduce.
#[derive(Debug, Clone, Deserialize)]
pub struct Expected {
    pub ingested_quantity: u64,
    pub final_quantities: BTreeMap<String, u64>,
    pub orders_placed: usize,
    pub orders_rejected: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DemoScenario {
    pub calibration: CalibrationSpec,
    /// Standard deviation of the load-cell noise, in raw counts.
    #[serde(default)]
    pub noise_sigma: f64,
    pub prices: serde_json::Value,
    pub devices: Vec<DemoDevice>,
    #[serde(default)]
    pub orders: Vec<DemoOrder>,
    pub expected: Option<Expected>,
}

pub const BUNDLED_DEMO: &str = include_str!("../fixtures/demo_scenario.json");

impl DemoScenario {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let s: DemoScenario = serde_json::from_slice(bytes).context("malformed demo scenario")?;
        if !(s.noise_sigma.is_finite() && s.noise_sigma >= 0.0) {
            bail!("noise_sigma must be a finite, non-negative number");
        }
        if s.devices.is_empty() {
            bail!("demo scenario has no devices");
        }
        s.calibration()?;
        s.price_table()?;
        Ok(s)
    }

    pub fn calibration(&self) -> Result<CalibrationParams> {
        Ok(CalibrationParams::new(self.calibration.tare_offset, self.calibration.scale)?)
    }

    pub fn price_table(&self) -> Result<PriceTable> {
        let bytes = serde_json::to_vec(&self.prices).expect("value serializes");
        Ok(load_price_table(&bytes)?)
    }

    /// Station script for device `index`, raw readings drawn with `seed`.
    pub fn station_script(&self, index: usize, seed: u64) -> Result<StationScript> {
        let device = &self.devices[index];
        let mut cell = SyntheticLoadCell::new(
            self.calibration()?,
            self.noise_sigma,
            seed.wrapping_add(index as u64),
        );
        let events = device
            .events
            .iter()
            .map(|e| DeviceEvent {
                event: ScenarioEvent {
                    image_id: e.image_id,
                    raw: cell.raw_for(e.mass_g),
                    ts: e.ts,
                    frame: None,
                },
                detections: e.detections.clone(),
            })
            .collect();
        StationScript::build(events)
    }
}
