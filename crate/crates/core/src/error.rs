//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("toml: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("toml: {0}")]
    TomlSer(#[from] toml::ser::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// Two scheduler records claim the same GPU at overlapping times.
    #[error("jobs `{a}` and `{b}` overlap on {hostname}:{gpu_id}")]
    OverlappingJobs {
        a: String,
        b: String,
        hostname: String,
        gpu_id: String,
    },

    /// A stream has no residency flags and its GPU model has no deep-idle
    /// power to fall back on.
    #[error("stream {stream}: residency undeterminable (no proc_resident flags and model `{gpu_name}` lacks a deep-idle power)")]
    ResidencyUndeterminable { stream: String, gpu_name: String },

    #[error("timestamps must be strictly increasing (saw {prev} then {next})")]
    NonMonotonicTimestamps { prev: i64, next: i64 },

    #[error("timeline and samples disagree at index {index} (timeline ts {timeline_ts}, sample ts {sample_ts})")]
    TimelineMismatch {
        index: usize,
        timeline_ts: i64,
        sample_ts: i64,
    },

    #[error("timeline has {timeline} entries but stream has {samples} samples")]
    TimelineLength { timeline: usize, samples: usize },

    #[error("GPU model `{gpu_name}` has no TDP entry")]
    MissingTdp { gpu_name: String },

    #[error("scenario `{name}`: {reason}")]
    Scenario { name: String, reason: String },

    #[error("jobs file line {line}: {reason}")]
    JobsFile { line: usize, reason: String },

    #[error("trace: {0}")]
    Trace(String),

    #[error("sim config: {0}")]
    SimConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
