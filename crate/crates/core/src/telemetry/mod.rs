//! Telemetry sample, job record, and GPU model types shared by every other
//! module, plus parsing, job attribution, and the synthetic generator.
//!
//! A sample is one per-second reading from one GPU. Optional fields model
//! signals the collector did not produce: absent is *not* zero, and every
//! consumer in this crate treats the two differently.

pub mod attribute;
pub mod parse;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// One per-second telemetry record from a single GPU.
///
/// Field order here is the canonical column order of the on-disk format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub hostname: String,
    /// Device identifier, opaque but stable within a host.
    pub gpu_id: String,
    /// Marketing model name, the key into the [`GpuCatalog`].
    pub gpu_name: String,
    /// Board power draw in watts. The only signal every collector provides.
    pub power: f64,
    /// SM utilization, percent.
    pub sm: Option<f64>,
    /// Tensor-core utilization, percent.
    pub tensor: Option<f64>,
    /// DRAM bandwidth utilization, percent.
    pub dram: Option<f64>,
    pub fp16: Option<f64>,
    pub fp32: Option<f64>,
    pub fp64: Option<f64>,
    /// SM clock, MHz.
    pub sm_clk: Option<f64>,
    /// Memory clock, MHz.
    pub mem_clk: Option<f64>,
    /// PCIe transmit throughput, MB/s.
    pub pcie_tx: Option<f64>,
    pub pcie_rx: Option<f64>,
    /// NVLink transmit throughput, MB/s. Absent on models without NVLink.
    pub nvlink_tx: Option<f64>,
    pub nvlink_rx: Option<f64>,
    /// Host CPU utilization, percent.
    pub cpu_util: Option<f64>,
    /// Host memory utilization, percent.
    pub host_mem_util: Option<f64>,
    /// Host NIC transmit throughput, MB/s.
    pub nic_tx: Option<f64>,
    pub nic_rx: Option<f64>,
    /// Scheduler job id as reported by the host, if any.
    pub job_id: Option<String>,
    pub job_name: Option<String>,
    /// Whether a process had the GPU's context loaded. Collected only by
    /// newer agents; classification falls back to a power heuristic when
    /// absent.
    pub proc_resident: Option<bool>,
}

impl TelemetrySample {
    /// A sample with only the required fields set; everything else absent.
    pub fn new(
        timestamp: i64,
        hostname: impl Into<String>,
        gpu_id: impl Into<String>,
        gpu_name: impl Into<String>,
        power: f64,
    ) -> Self {
        TelemetrySample {
            timestamp,
            hostname: hostname.into(),
            gpu_id: gpu_id.into(),
            gpu_name: gpu_name.into(),
            power,
            sm: None,
            tensor: None,
            dram: None,
            fp16: None,
            fp32: None,
            fp64: None,
            sm_clk: None,
            mem_clk: None,
            pcie_tx: None,
            pcie_rx: None,
            nvlink_tx: None,
            nvlink_rx: None,
            cpu_util: None,
            host_mem_util: None,
            nic_tx: None,
            nic_rx: None,
            job_id: None,
            job_name: None,
            proc_resident: None,
        }
    }

    pub fn signal(&self, kind: SignalKind) -> Option<f64> {
        use SignalKind::*;
        match kind {
            Sm => self.sm,
            Tensor => self.tensor,
            Dram => self.dram,
            Fp16 => self.fp16,
            Fp32 => self.fp32,
            Fp64 => self.fp64,
            SmClk => self.sm_clk,
            MemClk => self.mem_clk,
            PcieTx => self.pcie_tx,
            PcieRx => self.pcie_rx,
            NvlinkTx => self.nvlink_tx,
            NvlinkRx => self.nvlink_rx,
            CpuUtil => self.cpu_util,
            HostMemUtil => self.host_mem_util,
            NicTx => self.nic_tx,
            NicRx => self.nic_rx,
        }
    }

    pub fn set_signal(&mut self, kind: SignalKind, value: f64) {
        use SignalKind::*;
        let slot = match kind {
            Sm => &mut self.sm,
            Tensor => &mut self.tensor,
            Dram => &mut self.dram,
            Fp16 => &mut self.fp16,
            Fp32 => &mut self.fp32,
            Fp64 => &mut self.fp64,
            SmClk => &mut self.sm_clk,
            MemClk => &mut self.mem_clk,
            PcieTx => &mut self.pcie_tx,
            PcieRx => &mut self.pcie_rx,
            NvlinkTx => &mut self.nvlink_tx,
            NvlinkRx => &mut self.nvlink_rx,
            CpuUtil => &mut self.cpu_util,
            HostMemUtil => &mut self.host_mem_util,
            NicTx => &mut self.nic_tx,
            NicRx => &mut self.nic_rx,
        };
        *slot = Some(value);
    }

    /// Validation applied during parsing; `None` means the sample is well
    /// formed. Absent optional fields are always acceptable.
    pub fn field_error(&self) -> Option<&'static str> {
        if self.timestamp < 0 {
            return Some("negative timestamp");
        }
        if self.hostname.is_empty() || self.gpu_id.is_empty() {
            return Some("empty hostname or gpu_id");
        }
        if !(self.power >= 0.0) || !self.power.is_finite() {
            return Some("power out of range");
        }
        let percent = [
            self.sm,
            self.tensor,
            self.dram,
            self.fp16,
            self.fp32,
            self.fp64,
            self.cpu_util,
            self.host_mem_util,
        ];
        for v in percent.into_iter().flatten() {
            if !(0.0..=100.0).contains(&v) {
                return Some("percent signal outside [0, 100]");
            }
        }
        let nonneg = [
            self.sm_clk,
            self.mem_clk,
            self.pcie_tx,
            self.pcie_rx,
            self.nvlink_tx,
            self.nvlink_rx,
            self.nic_tx,
            self.nic_rx,
        ];
        for v in nonneg.into_iter().flatten() {
            if !(v >= 0.0) || !v.is_finite() {
                return Some("negative or non-finite throughput/clock");
            }
        }
        None
    }
}

/// Every optional signal a sample can carry.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Sm,
    Tensor,
    Dram,
    Fp16,
    Fp32,
    Fp64,
    SmClk,
    MemClk,
    PcieTx,
    PcieRx,
    NvlinkTx,
    NvlinkRx,
    CpuUtil,
    HostMemUtil,
    NicTx,
    NicRx,
}

impl SignalKind {
    pub const ALL: [SignalKind; 16] = [
        SignalKind::Sm,
        SignalKind::Tensor,
        SignalKind::Dram,
        SignalKind::Fp16,
        SignalKind::Fp32,
        SignalKind::Fp64,
        SignalKind::SmClk,
        SignalKind::MemClk,
        SignalKind::PcieTx,
        SignalKind::PcieRx,
        SignalKind::NvlinkTx,
        SignalKind::NvlinkRx,
        SignalKind::CpuUtil,
        SignalKind::HostMemUtil,
        SignalKind::NicTx,
        SignalKind::NicRx,
    ];

    /// Compute-side utilization signals, compared against the activity
    /// threshold during classification.
    pub const ACTIVITY: [SignalKind; 6] = [
        SignalKind::Sm,
        SignalKind::Tensor,
        SignalKind::Dram,
        SignalKind::Fp16,
        SignalKind::Fp32,
        SignalKind::Fp64,
    ];

    /// Device communication signals, compared against the comm threshold.
    /// NIC traffic is a host-side signal and deliberately not part of this
    /// set.
    pub const COMM: [SignalKind; 4] = [
        SignalKind::PcieTx,
        SignalKind::PcieRx,
        SignalKind::NvlinkTx,
        SignalKind::NvlinkRx,
    ];
}

/// Workload class from the scheduler, descriptive metadata only.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "kebab-case")]
pub enum JobCategory {
    Serving,
    BatchInference,
    Training,
    Other,
    #[default]
    Unknown,
}

impl JobCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            JobCategory::Serving => "serving",
            JobCategory::BatchInference => "batch-inference",
            JobCategory::Training => "training",
            JobCategory::Other => "other",
            JobCategory::Unknown => "unknown",
        }
    }

    /// Lenient: unrecognized strings become `Unknown` rather than an error.
    pub fn parse_lenient(s: &str) -> JobCategory {
        match s.trim() {
            "serving" => JobCategory::Serving,
            "batch-inference" => JobCategory::BatchInference,
            "training" => JobCategory::Training,
            "other" => JobCategory::Other,
            _ => JobCategory::Unknown,
        }
    }
}

impl fmt::Display for JobCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One GPU slot a job ran on.
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct GpuRef {
    pub hostname: String,
    pub gpu_id: String,
}

impl fmt::Display for GpuRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.hostname, self.gpu_id)
    }
}

/// A scheduler job: the unit samples are attributed to.
///
/// Jobs own their GPUs exclusively for `[start, end]` (inclusive seconds);
/// two jobs may never overlap on the same GPU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub job_name: String,
    pub category: JobCategory,
    pub start: i64,
    pub end: i64,
    pub gpus: BTreeSet<GpuRef>,
}

impl JobRecord {
    pub fn duration(&self) -> i64 {
        self.end - self.start + 1
    }
}

/// Static description of a GPU model. `None` fields mean the model is
/// unknown to the catalog and downstream operations that need the value
/// must fail or skip it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpuModelSpec {
    pub gpu_name: String,
    /// Configured board power limit in watts.
    pub tdp: Option<f64>,
    /// Power draw with no process resident, watts.
    pub deep_idle_power: Option<f64>,
    /// Which optional signals collectors on this model produce.
    #[serde(default)]
    pub available_signals: BTreeSet<SignalKind>,
}

impl GpuModelSpec {
    /// A placeholder for model names the catalog does not know.
    pub fn unknown(gpu_name: impl Into<String>) -> Self {
        GpuModelSpec {
            gpu_name: gpu_name.into(),
            tdp: None,
            deep_idle_power: None,
            available_signals: BTreeSet::new(),
        }
    }
}

/// Identifies one attributed telemetry stream: one job on one GPU.
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct StreamKey {
    pub job_id: String,
    pub hostname: String,
    pub gpu_id: String,
}

impl fmt::Display for StreamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}:{}", self.job_id, self.hostname, self.gpu_id)
    }
}

/// Known GPU models, keyed by `gpu_name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpuCatalog {
    pub models: BTreeMap<String, GpuModelSpec>,
}

impl GpuCatalog {
    pub fn empty() -> Self {
        GpuCatalog {
            models: BTreeMap::new(),
        }
    }

    /// Catalog seeded with the deployed fleet's models. TDPs are the
    /// configured power limits; deep-idle baselines are measured defaults
    /// and can be overridden from a catalog file.
    pub fn default_fleet() -> Self {
        let mut c = GpuCatalog::empty();
        // (name, tdp, deep idle, has nvlink)
        let rows: [(&str, f64, f64, bool); 10] = [
            ("L40S", 400.0, 35.0, false),
            ("RTX A6000", 300.0, 35.0, false),
            ("RTX 6000 Ada", 300.0, 35.0, false),
            ("L40", 300.0, 35.0, false),
            ("A100 80GB PCIe", 300.0, 40.0, false),
            ("RTX PRO 6000", 600.0, 35.0, false),
            ("A100 40GB SXM4", 400.0, 40.0, true),
            ("H100 SXM5", 700.0, 50.0, true),
            ("B200", 1000.0, 50.0, true),
            ("H200", 700.0, 50.0, true),
        ];
        for (name, tdp, deep, nvlink) in rows {
            let mut signals: BTreeSet<SignalKind> = SignalKind::ALL.into_iter().collect();
            if !nvlink {
                signals.remove(&SignalKind::NvlinkTx);
                signals.remove(&SignalKind::NvlinkRx);
            }
            c.insert(GpuModelSpec {
                gpu_name: name.to_string(),
                tdp: Some(tdp),
                deep_idle_power: Some(deep),
                available_signals: signals,
            });
        }
        c
    }

    pub fn insert(&mut self, spec: GpuModelSpec) {
        self.models.insert(spec.gpu_name.clone(), spec);
    }

    pub fn get(&self, gpu_name: &str) -> Option<&GpuModelSpec> {
        self.models.get(gpu_name)
    }

    /// Lookup that never fails: unknown names get an empty spec.
    pub fn get_or_unknown(&self, gpu_name: &str) -> GpuModelSpec {
        self.get(gpu_name)
            .cloned()
            .unwrap_or_else(|| GpuModelSpec::unknown(gpu_name))
    }

    pub fn from_toml_str(s: &str) -> crate::Result<Self> {
        #[derive(Deserialize)]
        struct File {
            models: Vec<GpuModelSpec>,
        }
        let file: File = toml::from_str(s)?;
        let mut c = GpuCatalog::empty();
        for m in file.models {
            c.insert(m);
        }
        Ok(c)
    }

    pub fn to_toml_string(&self) -> crate::Result<String> {
        #[derive(Serialize)]
        struct File<'a> {
            models: Vec<&'a GpuModelSpec>,
        }
        Ok(toml::to_string(&File {
            models: self.models.values().collect(),
        })?)
    }
}

impl Default for GpuCatalog {
    fn default() -> Self {
        GpuCatalog::default_fleet()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absent_is_not_zero() {
        let mut s = TelemetrySample::new(0, "h", "0", "L40S", 35.0);
        assert_eq!(s.signal(SignalKind::Sm), None);
        s.set_signal(SignalKind::Sm, 0.0);
        assert_eq!(s.signal(SignalKind::Sm), Some(0.0));
    }

    #[test]
    fn field_validation_catches_ranges() {
        let mut s = TelemetrySample::new(0, "h", "0", "L40S", 35.0);
        assert!(s.field_error().is_none());
        s.sm = Some(101.0);
        assert!(s.field_error().is_some());
        s.sm = Some(100.0);
        assert!(s.field_error().is_none());
        s.power = -1.0;
        assert!(s.field_error().is_some());
        s.power = f64::NAN;
        assert!(s.field_error().is_some());
    }

    #[test]
    fn default_fleet_has_nvlink_only_where_supported() {
        let c = GpuCatalog::default_fleet();
        assert!(!c.get("L40S").unwrap().available_signals.contains(&SignalKind::NvlinkTx));
        assert!(c.get("H100 SXM5").unwrap().available_signals.contains(&SignalKind::NvlinkTx));
        assert!(c.get("nonexistent").is_none());
        assert_eq!(c.get_or_unknown("nonexistent").tdp, None);
    }

    #[test]
    fn category_parse_is_lenient() {
        assert_eq!(JobCategory::parse_lenient("serving"), JobCategory::Serving);
        assert_eq!(JobCategory::parse_lenient("weird"), JobCategory::Unknown);
    }
}
