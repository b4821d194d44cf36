//! Two-stage detection of resource-constraint attacks on IoT devices.
//!
//! Stage 1 classifies fixed-duration traffic windows as NORMAL or ATTACKED
//! from protocol features. Stage 2 attributes attacked windows to energy or
//! memory exhaustion by comparing device telemetry with a per-device
//! baseline.

pub mod classifiers;
pub mod error;
pub mod features;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod synthgen;
pub mod telemetry;
pub mod traffic;

pub use error::{Error, Result};
