//! Deterministic discrete-event replay of serving traces against a modeled
//! GPU pool.
//!
//! The model is intentionally small: FIFO single-request service per GPU, a
//! three-level frequency ladder with a parametric power model, and the
//! execution-idle-aware controller from [`controller`]. Everything runs on
//! an integer-microsecond clock with total event ordering, so identical
//! inputs produce bit-identical results.

pub mod controller;
pub mod engine;
pub mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use self::trace::Request;

/// The frequency ladder: full clocks, reduced SM clocks, or reduced SM and
/// memory clocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreqSetting {
    FMax,
    FMinSm,
    FMinSmMem,
}

impl FreqSetting {
    pub fn as_str(&self) -> &'static str {
        match self {
            FreqSetting::FMax => "f-max",
            FreqSetting::FMinSm => "f-min-sm",
            FreqSetting::FMinSmMem => "f-min-sm-mem",
        }
    }
}

impl std::fmt::Display for FreqSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parametric per-GPU power model. Defaults are the L40S readings: 35 W
/// deep, 105/61/35 W execution-idle across the ladder, 140 W active, with
/// slowdown factors of 1.3 and 2.6 for the reduced settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerModel {
    pub p_deep: f64,
    pub p_exec_idle_f_max: f64,
    pub p_exec_idle_f_min_sm: f64,
    pub p_exec_idle_f_min_sm_mem: f64,
    /// Active power at full clocks. At a reduced setting the model charges
    /// `p_active / slowdown`, so a request's service energy does not depend
    /// on the clock it ran at — only its duration does.
    pub p_active: f64,
    pub slowdown_f_min_sm: f64,
    pub slowdown_f_min_sm_mem: f64,
    /// Seconds for a frequency change to take effect; a request dispatched
    /// to a downscaled GPU waits this long before service starts.
    pub transition_latency: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            p_deep: 35.0,
            p_exec_idle_f_max: 105.0,
            p_exec_idle_f_min_sm: 61.0,
            p_exec_idle_f_min_sm_mem: 35.0,
            p_active: 140.0,
            slowdown_f_min_sm: 1.3,
            slowdown_f_min_sm_mem: 2.6,
            transition_latency: 0.25,
        }
    }
}

impl PowerModel {
    pub fn p_exec_idle(&self, setting: FreqSetting) -> f64 {
        match setting {
            FreqSetting::FMax => self.p_exec_idle_f_max,
            FreqSetting::FMinSm => self.p_exec_idle_f_min_sm,
            FreqSetting::FMinSmMem => self.p_exec_idle_f_min_sm_mem,
        }
    }

    pub fn slowdown(&self, setting: FreqSetting) -> f64 {
        match setting {
            FreqSetting::FMax => 1.0,
            FreqSetting::FMinSm => self.slowdown_f_min_sm,
            FreqSetting::FMinSmMem => self.slowdown_f_min_sm_mem,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = self.p_deep <= self.p_exec_idle_f_min_sm_mem
            && self.p_exec_idle_f_min_sm_mem <= self.p_exec_idle_f_min_sm
            && self.p_exec_idle_f_min_sm <= self.p_exec_idle_f_max
            && self.p_exec_idle_f_max <= self.p_active;
        if !ordered {
            return Err(Error::SimConfig(
                "power model must satisfy p_deep <= p_exec_idle(f-min-sm-mem) <= p_exec_idle(f-min-sm) <= p_exec_idle(f-max) <= p_active".into(),
            ));
        }
        if !(self.slowdown_f_min_sm >= 1.0 && self.slowdown_f_min_sm_mem >= self.slowdown_f_min_sm)
        {
            return Err(Error::SimConfig(
                "slowdowns must satisfy 1 <= slowdown(f-min-sm) <= slowdown(f-min-sm-mem)".into(),
            ));
        }
        if self.transition_latency < 0.0 {
            return Err(Error::SimConfig("transition_latency must be >= 0".into()));
        }
        Ok(())
    }
}

/// Token-throughput model standing in for a real serving engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceRates {
    /// Prefill throughput, input tokens per second.
    pub prefill_rate: f64,
    /// Decode throughput, output tokens per second.
    pub decode_rate: f64,
}

impl Default for ServiceRates {
    fn default() -> Self {
        Self {
            prefill_rate: 2000.0,
            decode_rate: 100.0,
        }
    }
}

/// Baseline service seconds at full clocks times the slowdown factor.
pub fn service_time(request: &Request, rates: &ServiceRates, slowdown: f64) -> f64 {
    (request.input_tokens as f64 / rates.prefill_rate
        + request.output_tokens as f64 / rates.decode_rate)
        * slowdown
}

/// Downscale trigger/cooldown parameters (Algorithm semantics live in
/// [`controller`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// X: accumulated idle seconds that must be exceeded before downscaling.
    pub trigger_threshold: i64,
    /// Y: seconds after a restore during which downscaling is blocked.
    pub cooldown: i64,
    /// ε: control period in seconds.
    pub period: i64,
    /// Ladder setting applied on downscale.
    pub target: FreqSetting,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            trigger_threshold: 3,
            cooldown: 5,
            period: 1,
            target: FreqSetting::FMinSm,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0 && self.trigger_threshold >= self.period) {
            return Err(Error::SimConfig(
                "controller requires trigger_threshold >= period > 0".into(),
            ));
        }
        if self.cooldown < 0 {
            return Err(Error::SimConfig("controller cooldown must be >= 0".into()));
        }
        if self.target == FreqSetting::FMax {
            return Err(Error::SimConfig(
                "controller target must be a reduced setting".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Route each arrival to the least-loaded GPU across the whole pool.
    Balanced,
    /// Route only across the first `active_gpu_count` GPUs; the rest stay
    /// deep-idle for the entire run.
    Consolidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// k for consolidate; ignored for balanced.
    #[serde(default)]
    pub active_gpu_count: Option<usize>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Balanced,
            active_gpu_count: None,
        }
    }
}

impl PolicyConfig {
    /// Indices of the GPUs arrivals may route to.
    pub fn active_set(&self, pool_size: usize) -> Result<Vec<usize>> {
        match self.kind {
            PolicyKind::Balanced => Ok((0..pool_size).collect()),
            PolicyKind::Consolidate => {
                let k = self.active_gpu_count.ok_or_else(|| {
                    Error::SimConfig("consolidate policy requires active_gpu_count".into())
                })?;
                if k == 0 || k > pool_size {
                    return Err(Error::SimConfig(format!(
                        "active_gpu_count must be in 1..={pool_size}, got {k}"
                    )));
                }
                Ok((0..k).collect())
            }
        }
    }
}

/// One complete replay configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Row name in comparison output.
    pub label: String,
    pub pool_size: usize,
    pub power: PowerModel,
    pub policy: PolicyConfig,
    /// Absent = clocks pinned at f-max for the whole run.
    pub controller: Option<ControllerConfig>,
    pub rates: ServiceRates,
    /// Replay horizon in seconds; energy and occupancy are accounted up to
    /// here, while accepted requests run to completion for latency.
    pub duration: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            label: "run".into(),
            pool_size: 1,
            power: PowerModel::default(),
            policy: PolicyConfig::default(),
            controller: None,
            rates: ServiceRates::default(),
            duration: 60.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 {
            return Err(Error::SimConfig("pool_size must be >= 1".into()));
        }
        if !(self.duration > 0.0) {
            return Err(Error::SimConfig("duration must be > 0".into()));
        }
        if !(self.rates.prefill_rate > 0.0 && self.rates.decode_rate > 0.0) {
            return Err(Error::SimConfig("service rates must be > 0".into()));
        }
        self.power.validate()?;
        self.policy.active_set(self.pool_size)?;
        if let Some(c) = &self.controller {
            c.validate()?;
        }
        Ok(())
    }
}

/// A simulate run file: one or more configurations replayed against the
/// same trace, first one being the comparison baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfigFile {
    pub configs: Vec<SimConfig>,
}

impl SimConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SimConfigFile = toml::from_str(text)?;
        file.validate()?;
        Ok(file)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.configs.is_empty() {
            return Err(Error::SimConfig("no configurations given".into()));
        }
        for c in &self.configs {
            c.validate()?;
        }
        let first = &self.configs[0];
        for c in &self.configs[1..] {
            if c.duration != first.duration || c.pool_size != first.pool_size {
                return Err(Error::SimConfig(
                    "all configurations must share pool_size and duration for comparison".into(),
                ));
            }
        }
        Ok(())
    }
}
