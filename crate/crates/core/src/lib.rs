//! Core building blocks for the e-waste segregation pipeline.
//!
//! * [`dataset`] reads COCO and VIA annotation exports, splits them by class
//!   and applies geometry-only preprocessing.
//! * [`detect`] holds detection post-processing (IoU, NMS) and the AP / mAP
//!   evaluator, plus the detector trait and a scripted mock.
//! * [`device`] converts load-cell counts to grams and drives a simulated
//!   weighing station that publishes telemetry.
//! * [`pricing`] quotes weight-based prices per component category.
//! * [`stats`] carries the built-in e-waste generation tables and growth reports.

pub mod dataset;
pub mod detect;
pub mod device;
pub mod pricing;
pub mod stats;

pub use dataset::{Annotation, BoundingBox, CategoryLabel, Dataset, ImageRecord};
pub use detect::Detection;
pub use device::TelemetryMessage;
