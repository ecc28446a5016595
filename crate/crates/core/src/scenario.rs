//! On-disk scenario format.
//!
//! A scenario file is a TOML document with a `kind` discriminator; the
//! same `generate` entry point then produces either a telemetry dataset or
//! a request trace. Built-in scenarios are addressable by name so the CLI
//! can run without any file at all.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::trace::{self, TraceScenario};
use crate::telemetry::synth::{self, TelemetryScenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioFile {
    Telemetry(TelemetryScenario),
    Trace(TraceScenario),
}

impl ScenarioFile {
    pub fn name(&self) -> &str {
        match self {
            ScenarioFile::Telemetry(s) => &s.name,
            ScenarioFile::Trace(s) => &s.name,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScenarioFile::Telemetry(s) => s.validate(),
            ScenarioFile::Trace(s) => s.validate(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scenario: ScenarioFile = toml::from_str(text).map_err(Error::from)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(Error::from)
    }

    /// Look up a built-in scenario by name.
    pub fn builtin(name: &str) -> Option<Self> {
        synth::builtin(name)
            .map(ScenarioFile::Telemetry)
            .or_else(|| trace::builtin(name).map(ScenarioFile::Trace))
    }

    pub fn builtin_names() -> Vec<&'static str> {
        synth::BUILTIN_NAMES
            .iter()
            .chain(trace::BUILTIN_NAMES.iter())
            .copied()
            .collect()
    }
}
