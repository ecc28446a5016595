//! Analysis toolkit for GPU fleet telemetry with a focus on the
//! execution-idle regime: seconds-to-hours stretches where a job still
//! occupies its GPUs — model resident, power well above deep idle — but no
//! visible compute, memory, or communication activity is taking place.
//!
//! The crate splits into:
//!
//! - [`telemetry`]: sample/job schema, CSV ingestion, job attribution, and
//!   deterministic synthetic fixture generation with ground truth;
//! - [`classifier`]: the three-state taxonomy (deep-idle / exec-idle /
//!   active) and interval detection over per-stream timelines;
//! - [`energy`]: time/energy accounting, fleet and per-job fractions,
//!   sensitivity sweeps, duration quantiles, TDP envelope comparison;
//! - [`preidle`]: what-ran-before-idle fingerprints, density clustering,
//!   and rule-based cluster labeling;
//! - [`sim`]: a deterministic replay simulator for idle-aware frequency
//!   control and pool consolidation policies;
//! - [`scenario`] / [`report`]: the on-disk formats binding it together.

pub mod classifier;
pub mod energy;
pub mod error;
pub mod preidle;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod telemetry;

pub use classifier::{ClassifierConfig, ExecIdleInterval, GpuState, StateTimeline};
pub use error::{Error, Result};
pub use scenario::ScenarioFile;
pub use sim::{FreqSetting, PowerModel, SimConfig};
pub use telemetry::{GpuCatalog, GpuModelSpec, JobRecord, StreamKey, TelemetrySample};
