//! Synthetic fleet generator.
//!
//! Scenarios describe jobs as phase sequences (deep setup, active execution,
//! low-activity gaps) with target signal levels; the generator emits 1 Hz
//! samples with seeded jitter plus scheduler records, per-second ground-truth
//! states, and a design report stating what the scenario was tuned to.
//!
//! Every emitted real value is quantized to a 1/64 grid. Sums of such values
//! are exact in f64 no matter how they are grouped, which is what lets the
//! energy accounting promise bit-exact conservation on generated datasets.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierConfig, GpuState};
use crate::error::{Error, Result};
use crate::telemetry::{
    GpuCatalog, GpuModelSpec, GpuRef, JobCategory, JobRecord, SignalKind, StreamKey,
    TelemetrySample,
};

/// Snap to the 1/64 grid; see the module docs for why.
pub fn quantize(x: f64) -> f64 {
    (x * 64.0).round() / 64.0
}

fn default_epoch() -> i64 {
    1_700_000_000
}
fn default_true() -> bool {
    true
}
fn default_repeat() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseKind {
    /// No process resident; power at the model's baseline.
    Deep,
    /// Program executing; at least one signal at or above the activity
    /// threshold.
    Active,
    /// Program resident but quiescent: every signal below threshold.
    Gap,
}

/// One contiguous stretch of seconds with a common target profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PhaseKind,
    /// Seconds; one sample per second.
    pub duration: i64,
    /// Mean power target in watts. Defaults per kind when omitted.
    #[serde(default)]
    pub power: Option<f64>,
    /// Uniform power jitter half-width in watts.
    #[serde(default)]
    pub power_jitter: f64,
    /// Mean levels for the signals this phase emits; unlisted signals stay
    /// absent. Empty means a minimal per-kind `sm` profile.
    #[serde(default)]
    pub signals: BTreeMap<SignalKind, f64>,
    /// Relative jitter applied to each listed signal (fraction of the mean).
    #[serde(default)]
    pub signal_jitter: f64,
    /// Intended cause tag for the interval this gap produces; carried into
    /// the design report so labeling accuracy can be scored.
    #[serde(default)]
    pub label: Option<String>,
}

impl Phase {
    fn power_target(&self, spec: &GpuModelSpec) -> f64 {
        if let Some(p) = self.power {
            return p;
        }
        let deep = spec.deep_idle_power.unwrap_or(35.0);
        match self.kind {
            PhaseKind::Deep => deep + 1.0,
            PhaseKind::Active => spec.tdp.map(|t| 0.5 * t).unwrap_or(150.0),
            PhaseKind::Gap => 105.0,
        }
    }

    fn effective_signals(&self) -> BTreeMap<SignalKind, f64> {
        if !self.signals.is_empty() {
            return self.signals.clone();
        }
        let level = match self.kind {
            PhaseKind::Deep => 0.0,
            PhaseKind::Active => 60.0,
            PhaseKind::Gap => 1.5,
        };
        [(SignalKind::Sm, level)].into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpuSlot {
    pub hostname: String,
    pub gpu_id: String,
    pub gpu_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobScenario {
    pub job_id: String,
    #[serde(default)]
    pub job_name: String,
    #[serde(default)]
    pub category: JobCategory,
    /// Job start relative to the scenario epoch, seconds.
    #[serde(default)]
    pub start_offset: i64,
    pub gpus: Vec<GpuSlot>,
    /// Emit explicit proc_resident flags (default) or exercise the
    /// power/activity residency fallback.
    #[serde(default = "default_true")]
    pub emit_residency: bool,
    #[serde(default = "default_repeat")]
    pub repeat: u32,
    pub phases: Vec<Phase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryScenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_epoch")]
    pub epoch: i64,
    /// Extra or overriding GPU models on top of the default catalog.
    #[serde(default)]
    pub catalog: Vec<GpuModelSpec>,
    /// Permit low-activity runs shorter than the default minimum interval
    /// (useful for classifier edge-case fixtures; off by default so
    /// fixtures can't accidentally depend on sub-threshold runs).
    #[serde(default)]
    pub allow_short_gaps: bool,
    pub jobs: Vec<JobScenario>,
}

/// Per-second intended state for one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub key: StreamKey,
    pub timestamp: i64,
    pub state: GpuState,
}

/// Intended cause of one designed low-activity interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTruth {
    pub key: StreamKey,
    pub interval_start: i64,
    pub label: String,
}

/// What the scenario was tuned to produce, computed from targets (not from
/// the jittered samples).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignReport {
    pub scenario: String,
    pub streams: u64,
    pub samples: u64,
    /// Gap share of in-execution (gap + active) time.
    pub designed_time_fraction: Option<f64>,
    /// Gap share of in-execution energy at target powers.
    pub designed_energy_fraction: Option<f64>,
    /// Maximal consecutive gap runs across all streams.
    pub designed_intervals: u64,
    pub window_truth: Vec<WindowTruth>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    /// Canonically sorted, exactly as [`parse_telemetry`] would return them.
    pub samples: Vec<TelemetrySample>,
    pub jobs: Vec<JobRecord>,
    pub truth: Vec<TruthRecord>,
    pub catalog: GpuCatalog,
    pub design: DesignReport,
}

impl TelemetryScenario {
    /// Default catalog overlaid with the scenario's own model entries.
    pub fn resolved_catalog(&self) -> GpuCatalog {
        let mut catalog = GpuCatalog::default_fleet();
        for spec in &self.catalog {
            catalog.insert(spec.clone());
        }
        catalog
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Scenario {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }

    /// Structural and classification-consistency checks. A scenario that
    /// validates generates datasets whose classifier output matches the
    /// ground truth exactly under the default configuration.
    pub fn validate(&self) -> Result<()> {
        let cfg = ClassifierConfig::default();
        let act_pct = cfg.activity_threshold * 100.0;
        let slack = 1.0 / 64.0;
        let catalog = self.resolved_catalog();

        if self.jobs.is_empty() {
            return Err(self.fail("scenario has no jobs"));
        }
        let mut windows: BTreeMap<(String, String), Vec<(i64, i64, String)>> = BTreeMap::new();
        for job in &self.jobs {
            if job.gpus.is_empty() {
                return Err(self.fail(format!("job {} has no gpu slots", job.job_id)));
            }
            if job.phases.is_empty() || job.repeat == 0 {
                return Err(self.fail(format!("job {} has no phases", job.job_id)));
            }
            for slot in &job.gpus {
                let spec = catalog.get(&slot.gpu_name).ok_or_else(|| {
                    self.fail(format!("job {}: unknown gpu model {}", job.job_id, slot.gpu_name))
                })?;
                let deep_power = spec.deep_idle_power;

                let expanded = expand_phases(job);
                let mut seen_active = false;
                let mut t = 0i64;
                for phase in &expanded {
                    if phase.duration < 1 {
                        return Err(self.fail(format!("job {}: phase duration < 1", job.job_id)));
                    }
                    let power = phase.power_target(spec);
                    let p_lo = power - phase.power_jitter - slack;
                    let p_hi = power + phase.power_jitter + slack;
                    if p_lo < 0.0 {
                        return Err(self.fail(format!("job {}: power can go negative", job.job_id)));
                    }
                    let signals = phase.effective_signals();
                    for kind in signals.keys() {
                        if !spec.available_signals.contains(kind) {
                            return Err(self.fail(format!(
                                "job {}: {:?} not available on {}",
                                job.job_id, kind, slot.gpu_name
                            )));
                        }
                    }
                    let hi = |mean: f64| mean * (1.0 + phase.signal_jitter) + slack;
                    let lo = |mean: f64| mean * (1.0 - phase.signal_jitter) - slack;
                    let is_quiet = signals.iter().all(|(kind, mean)| {
                        if SignalKind::ACTIVITY.contains(kind) {
                            hi(*mean) < act_pct
                        } else if SignalKind::COMM.contains(kind) {
                            hi(*mean) < cfg.comm_threshold
                        } else {
                            true
                        }
                    });
                    match phase.kind {
                        PhaseKind::Active => {
                            let loud = signals.iter().any(|(kind, mean)| {
                                (SignalKind::ACTIVITY.contains(kind) && lo(*mean) >= act_pct)
                                    || (SignalKind::COMM.contains(kind)
                                        && lo(*mean) >= cfg.comm_threshold)
                            });
                            if !loud {
                                return Err(self.fail(format!(
                                    "job {}: active phase has no signal reliably at/above threshold",
                                    job.job_id
                                )));
                            }
                            seen_active = true;
                        }
                        PhaseKind::Gap | PhaseKind::Deep => {
                            if !is_quiet {
                                return Err(self.fail(format!(
                                    "job {}: {:?} phase has a signal that can cross threshold",
                                    job.job_id, phase.kind
                                )));
                            }
                        }
                    }
                    if !job.emit_residency {
                        let deep = deep_power.ok_or_else(|| {
                            self.fail(format!(
                                "job {}: residency fallback needs a deep-idle power for {}",
                                job.job_id, slot.gpu_name
                            ))
                        })?;
                        match phase.kind {
                            PhaseKind::Deep => {
                                if seen_active {
                                    return Err(self.fail(format!(
                                        "job {}: deep phase after activity cannot be recovered by the residency fallback",
                                        job.job_id
                                    )));
                                }
                                if p_hi > deep + cfg.residency_power_margin {
                                    return Err(self.fail(format!(
                                        "job {}: deep phase power can exceed the residency margin",
                                        job.job_id
                                    )));
                                }
                            }
                            PhaseKind::Gap
                                if !seen_active
                                    && p_lo <= deep + cfg.residency_power_margin =>
                            {
                                return Err(self.fail(format!(
                                    "job {}: pre-activity gap power too low for the residency fallback",
                                    job.job_id
                                )));
                            }
                            _ => {}
                        }
                    }
                    t += phase.duration;
                }
                if !self.allow_short_gaps {
                    for (_, len) in gap_runs(&expanded) {
                        if len < cfg.min_interval {
                            return Err(self.fail(format!(
                                "job {}: {len} s gap run is shorter than the {} s minimum (set allow_short_gaps to permit)",
                                job.job_id, cfg.min_interval
                            )));
                        }
                    }
                }

                let start = self.epoch + job.start_offset;
                windows
                    .entry((slot.hostname.clone(), slot.gpu_id.clone()))
                    .or_default()
                    .push((start, start + t - 1, job.job_id.clone()));
            }
        }
        for ((host, gpu), mut spans) in windows {
            spans.sort();
            for pair in spans.windows(2) {
                if pair[1].0 <= pair[0].1 {
                    return Err(self.fail(format!(
                        "jobs {} and {} overlap on {host}:{gpu}",
                        pair[0].2, pair[1].2
                    )));
                }
            }
        }
        Ok(())
    }
}

fn expand_phases(job: &JobScenario) -> Vec<Phase> {
    let mut out = Vec::with_capacity(job.phases.len() * job.repeat as usize);
    for _ in 0..job.repeat {
        out.extend(job.phases.iter().cloned());
    }
    out
}

/// Maximal consecutive gap runs as (start offset, length) pairs.
fn gap_runs(expanded: &[Phase]) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let mut t = 0i64;
    let mut run: Option<(i64, i64)> = None;
    for phase in expanded {
        if phase.kind == PhaseKind::Gap {
            run = match run {
                Some((start, len)) => Some((start, len + phase.duration)),
                None => Some((t, phase.duration)),
            };
        } else if let Some(r) = run.take() {
            out.push(r);
        }
        t += phase.duration;
    }
    if let Some(r) = run {
        out.push(r);
    }
    out
}

/// Generate the dataset a scenario describes. Deterministic for a fixed
/// seed, byte for byte.
pub fn generate_synthetic(scenario: &TelemetryScenario, seed: u64) -> Result<SyntheticDataset> {
    scenario.validate()?;
    let catalog = scenario.resolved_catalog();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut samples = Vec::new();
    let mut truth = Vec::new();
    let mut jobs = Vec::new();
    let mut window_truth = Vec::new();
    let mut streams = 0u64;

    // Design accounting over targets.
    let mut gap_time = 0i64;
    let mut active_time = 0i64;
    let mut gap_energy = 0.0f64;
    let mut active_energy = 0.0f64;
    let mut designed_intervals = 0u64;

    for job in &scenario.jobs {
        let expanded = expand_phases(job);
        let job_start = scenario.epoch + job.start_offset;
        let total: i64 = expanded.iter().map(|p| p.duration).sum();
        jobs.push(JobRecord {
            job_id: job.job_id.clone(),
            job_name: if job.job_name.is_empty() {
                job.job_id.clone()
            } else {
                job.job_name.clone()
            },
            category: job.category,
            start: job_start,
            end: job_start + total - 1,
            gpus: job
                .gpus
                .iter()
                .map(|s| GpuRef {
                    hostname: s.hostname.clone(),
                    gpu_id: s.gpu_id.clone(),
                })
                .collect(),
        });

        for slot in &job.gpus {
            streams += 1;
            let spec = catalog.get_or_unknown(&slot.gpu_name);
            let key = StreamKey {
                job_id: job.job_id.clone(),
                hostname: slot.hostname.clone(),
                gpu_id: slot.gpu_id.clone(),
            };

            for (run_start, _) in gap_runs(&expanded) {
                designed_intervals += 1;
                let labeled = label_at(&expanded, run_start);
                if let Some(label) = labeled {
                    window_truth.push(WindowTruth {
                        key: key.clone(),
                        interval_start: job_start + run_start,
                        label,
                    });
                }
            }

            let mut t = job_start;
            for phase in &expanded {
                let power_target = phase.power_target(&spec);
                let signals = phase.effective_signals();
                match phase.kind {
                    PhaseKind::Gap => {
                        gap_time += phase.duration;
                        gap_energy += phase.duration as f64 * power_target;
                    }
                    PhaseKind::Active => {
                        active_time += phase.duration;
                        active_energy += phase.duration as f64 * power_target;
                    }
                    PhaseKind::Deep => {}
                }
                for _ in 0..phase.duration {
                    let jit: f64 = if phase.power_jitter > 0.0 {
                        rng.random_range(-phase.power_jitter..=phase.power_jitter)
                    } else {
                        0.0
                    };
                    let power = quantize((power_target + jit).max(0.0));
                    let mut sample =
                        TelemetrySample::new(t, &slot.hostname, &slot.gpu_id, &slot.gpu_name, power);
                    for (&kind, &mean) in &signals {
                        let jit: f64 = if phase.signal_jitter > 0.0 && mean != 0.0 {
                            rng.random_range(-1.0..=1.0) * mean * phase.signal_jitter
                        } else {
                            0.0
                        };
                        let mut v = quantize(mean + jit).max(0.0);
                        if SignalKind::ACTIVITY.contains(&kind)
                            || matches!(kind, SignalKind::CpuUtil | SignalKind::HostMemUtil)
                        {
                            v = v.min(100.0);
                        }
                        sample.set_signal(kind, v);
                    }
                    if job.emit_residency {
                        sample.proc_resident = Some(phase.kind != PhaseKind::Deep);
                    }
                    sample.job_id = Some(job.job_id.clone());
                    samples.push(sample);
                    truth.push(TruthRecord {
                        key: key.clone(),
                        timestamp: t,
                        state: match phase.kind {
                            PhaseKind::Deep => GpuState::DeepIdle,
                            PhaseKind::Gap => GpuState::ExecIdle,
                            PhaseKind::Active => GpuState::Active,
                        },
                    });
                    t += 1;
                }
            }
        }
    }

    samples.sort_by(|a, b| {
        (&a.hostname, &a.gpu_id, a.timestamp).cmp(&(&b.hostname, &b.gpu_id, b.timestamp))
    });
    truth.sort_by(|a, b| (&a.key, a.timestamp).cmp(&(&b.key, b.timestamp)));

    let exec_time = gap_time + active_time;
    let exec_energy = gap_energy + active_energy;
    let design = DesignReport {
        scenario: scenario.name.clone(),
        streams,
        samples: samples.len() as u64,
        designed_time_fraction: (exec_time > 0).then(|| gap_time as f64 / exec_time as f64),
        designed_energy_fraction: (exec_energy > 0.0).then(|| gap_energy / exec_energy),
        designed_intervals,
        window_truth,
    };

    Ok(SyntheticDataset {
        samples,
        jobs,
        truth,
        catalog,
        design,
    })
}

/// Label of the gap phase starting the run at offset `run_start`, if any.
fn label_at(expanded: &[Phase], run_start: i64) -> Option<String> {
    let mut t = 0i64;
    for phase in expanded {
        if t == run_start && phase.kind == PhaseKind::Gap {
            return phase.label.clone();
        }
        t += phase.duration;
    }
    None
}

// ---------------------------------------------------------------------------
// Built-in scenarios.
// ---------------------------------------------------------------------------

fn phase(
    kind: PhaseKind,
    duration: i64,
    power: f64,
    power_jitter: f64,
    signals: &[(SignalKind, f64)],
    signal_jitter: f64,
) -> Phase {
    Phase {
        kind,
        duration,
        power: Some(power),
        power_jitter,
        signals: signals.iter().copied().collect(),
        signal_jitter,
        label: None,
    }
}

/// One short job: 60 s setup, 120 s execution, 30 s quiescent tail.
pub fn single_job() -> TelemetryScenario {
    TelemetryScenario {
        name: "single-job".into(),
        description: "one serving job with a setup stretch, steady execution, and one idle gap".into(),
        epoch: default_epoch(),
        catalog: Vec::new(),
        allow_short_gaps: false,
        jobs: vec![JobScenario {
            job_id: "sj-1".into(),
            job_name: "serve-demo".into(),
            category: JobCategory::Serving,
            start_offset: 0,
            gpus: vec![GpuSlot {
                hostname: "h1".into(),
                gpu_id: "0".into(),
                gpu_name: "L40S".into(),
            }],
            emit_residency: true,
            repeat: 1,
            phases: vec![
                phase(PhaseKind::Deep, 60, 36.0, 1.5, &[(SignalKind::Sm, 0.0)], 0.0),
                phase(
                    PhaseKind::Active,
                    120,
                    200.0,
                    1.5,
                    &[(SignalKind::Sm, 60.0), (SignalKind::Dram, 40.0)],
                    0.2,
                ),
                phase(
                    PhaseKind::Gap,
                    30,
                    110.0,
                    1.5,
                    &[(SignalKind::Sm, 1.5), (SignalKind::Dram, 1.0)],
                    0.2,
                ),
            ],
        }],
    }
}

/// Fleet mix tuned so the quiescent gaps are exactly 15% of in-execution
/// time and 10% of in-execution energy by construction: each cycle pairs
/// 255 s of execution at 162 W with a 45 s gap at 102 W.
pub fn cluster_mix() -> TelemetryScenario {
    let cycle = |job_id: &str,
                 category: JobCategory,
                 start_offset: i64,
                 slots: Vec<GpuSlot>|
     -> JobScenario {
        JobScenario {
            job_id: job_id.into(),
            job_name: String::new(),
            category,
            start_offset,
            gpus: slots,
            emit_residency: true,
            repeat: 24,
            phases: vec![
                phase(
                    PhaseKind::Active,
                    255,
                    162.0,
                    2.0,
                    &[(SignalKind::Sm, 65.0), (SignalKind::Dram, 45.0)],
                    0.2,
                ),
                phase(
                    PhaseKind::Gap,
                    45,
                    102.0,
                    2.0,
                    &[(SignalKind::Sm, 1.5), (SignalKind::Dram, 1.0)],
                    0.2,
                ),
            ],
        }
    };
    let slot = |h: &str, g: &str, name: &str| GpuSlot {
        hostname: h.into(),
        gpu_id: g.into(),
        gpu_name: name.into(),
    };
    let mut jobs = vec![
        cycle("cm-a", JobCategory::Serving, 0, vec![slot("h1", "0", "L40S")]),
        cycle("cm-b", JobCategory::Serving, 600, vec![slot("h1", "1", "L40S")]),
        cycle("cm-c", JobCategory::Training, 1200, vec![slot("h2", "0", "A100 40GB SXM4")]),
        cycle("cm-d", JobCategory::BatchInference, 1800, vec![slot("h2", "1", "RTX A6000")]),
        cycle(
            "cm-e",
            JobCategory::Training,
            2400,
            vec![slot("h3", "0", "L40S"), slot("h3", "1", "L40S")],
        ),
        cycle("cm-f", JobCategory::Serving, 3000, vec![slot("h4", "0", "RTX A6000")]),
    ];
    // Prefix each job with a deep setup stretch; it is outside the
    // in-execution denominator so the designed fractions are unaffected.
    for (job, deep_power) in jobs.iter_mut().zip([36.0, 36.0, 41.0, 36.0, 36.0, 36.0]) {
        job.phases.insert(
            0,
            phase(PhaseKind::Deep, 300, deep_power, 1.5, &[(SignalKind::Sm, 0.0)], 0.0),
        );
        // Setup belongs once at the head, not once per cycle: move it out by
        // unrolling manually.
        let mut unrolled = vec![job.phases[0].clone()];
        for _ in 0..job.repeat {
            unrolled.extend(job.phases[1..].iter().cloned());
        }
        job.phases = unrolled;
        job.repeat = 1;
    }
    TelemetryScenario {
        name: "cluster-mix".into(),
        description: "heterogeneous fleet tuned to 15% quiescent time and 10% quiescent energy within execution".into(),
        epoch: default_epoch(),
        catalog: Vec::new(),
        allow_short_gaps: false,
        jobs,
    }
}

/// Corpus whose pre-gap execution windows carry distinct transfer
/// fingerprints in a 48/33/17/2 mixture (pcie / compute-to-idle / nic /
/// nvlink), for exercising window clustering and labeling end to end.
pub fn preidle_mix() -> TelemetryScenario {
    struct Template {
        label: &'static str,
        active_power: f64,
        /// Relative signal jitter of the active phase. The tiny nvlink
        /// family (2% of windows) gets a tighter spread: with only 8
        /// members its k-th neighbor distance is the family diameter, so
        /// at the dense families' jitter it would dissolve into noise
        /// under the k-distance radius heuristic.
        active_jitter: f64,
        active: Vec<(SignalKind, f64)>,
        gap: Vec<(SignalKind, f64)>,
    }
    let low = |nvlink: bool| {
        let mut v = vec![
            (SignalKind::Sm, 1.5),
            (SignalKind::Dram, 1.0),
            (SignalKind::PcieTx, 20.0),
            (SignalKind::PcieRx, 15.0),
            (SignalKind::CpuUtil, 5.0),
            (SignalKind::NicTx, 1.0),
            (SignalKind::NicRx, 1.0),
        ];
        if nvlink {
            v.push((SignalKind::NvlinkTx, 0.5));
            v.push((SignalKind::NvlinkRx, 0.5));
        }
        v
    };
    let pcie = Template {
        label: "pcie-heavy",
        active_power: 150.0,
        active_jitter: 0.05,
        active: vec![
            (SignalKind::Sm, 60.0),
            (SignalKind::Dram, 30.0),
            (SignalKind::PcieTx, 8000.0),
            (SignalKind::PcieRx, 6000.0),
            (SignalKind::CpuUtil, 80.0),
            (SignalKind::NicTx, 5.0),
            (SignalKind::NicRx, 5.0),
        ],
        gap: low(false),
    };
    let compute = |nvlink: bool| Template {
        label: "compute-to-idle",
        active_power: 170.0,
        active_jitter: 0.05,
        active: {
            let mut v = vec![
                (SignalKind::Sm, 90.0),
                (SignalKind::Dram, 70.0),
                (SignalKind::PcieTx, 100.0),
                (SignalKind::PcieRx, 80.0),
                (SignalKind::CpuUtil, 8.0),
                (SignalKind::NicTx, 2.0),
                (SignalKind::NicRx, 2.0),
            ];
            if nvlink {
                v.push((SignalKind::NvlinkTx, 3.0));
                v.push((SignalKind::NvlinkRx, 2.0));
            }
            v
        },
        gap: low(nvlink),
    };
    let nic = Template {
        label: "nic-heavy",
        active_power: 150.0,
        active_jitter: 0.05,
        active: vec![
            (SignalKind::Sm, 55.0),
            (SignalKind::Dram, 25.0),
            (SignalKind::PcieTx, 200.0),
            (SignalKind::PcieRx, 150.0),
            (SignalKind::NicTx, 1200.0),
            (SignalKind::NicRx, 900.0),
            (SignalKind::CpuUtil, 75.0),
        ],
        gap: low(false),
    };
    let nvlink = Template {
        label: "nvlink-heavy",
        active_power: 180.0,
        active_jitter: 0.01,
        active: vec![
            (SignalKind::Sm, 70.0),
            (SignalKind::Dram, 45.0),
            (SignalKind::PcieTx, 300.0),
            (SignalKind::PcieRx, 200.0),
            (SignalKind::NvlinkTx, 20000.0),
            (SignalKind::NvlinkRx, 18000.0),
            (SignalKind::CpuUtil, 10.0),
            (SignalKind::NicTx, 2.0),
            (SignalKind::NicRx, 2.0),
        ],
        gap: low(true),
    };

    let make = |job_id: &str, host: &str, gpu: &str, model: &str, cycles: u32, tpl: &Template| {
        let mut gap_phase = phase(PhaseKind::Gap, 8, 105.0, 1.0, &tpl.gap, 0.05);
        gap_phase.label = Some(tpl.label.to_string());
        JobScenario {
            job_id: job_id.into(),
            job_name: String::new(),
            category: JobCategory::Serving,
            start_offset: 0,
            gpus: vec![GpuSlot {
                hostname: host.into(),
                gpu_id: gpu.into(),
                gpu_name: model.into(),
            }],
            emit_residency: true,
            repeat: cycles,
            phases: vec![
                phase(PhaseKind::Active, 12, tpl.active_power, 1.0, &tpl.active, tpl.active_jitter),
                gap_phase,
            ],
        }
    };
    let with_setup = |mut job: JobScenario| {
        let mut unrolled = vec![phase(PhaseKind::Deep, 30, 36.0, 1.0, &[(SignalKind::Sm, 0.0)], 0.0)];
        for _ in 0..job.repeat {
            unrolled.extend(job.phases.iter().cloned());
        }
        job.phases = unrolled;
        job.repeat = 1;
        job
    };

    let compute_plain = compute(false);
    let compute_nvl = compute(true);
    let jobs = vec![
        with_setup(make("pm-pcie-1", "h1", "0", "L40S", 48, &pcie)),
        with_setup(make("pm-pcie-2", "h2", "0", "L40S", 48, &pcie)),
        with_setup(make("pm-pcie-3", "h3", "0", "L40S", 48, &pcie)),
        with_setup(make("pm-pcie-4", "h4", "0", "L40S", 48, &pcie)),
        with_setup(make("pm-comp-1", "h5", "0", "L40S", 44, &compute_plain)),
        with_setup(make("pm-comp-2", "h5", "1", "L40S", 44, &compute_plain)),
        with_setup(make("pm-comp-3", "h6", "0", "A100 40GB SXM4", 44, &compute_nvl)),
        with_setup(make("pm-nic-1", "h7", "0", "L40S", 34, &nic)),
        with_setup(make("pm-nic-2", "h7", "1", "L40S", 34, &nic)),
        with_setup(make("pm-nvl-1", "h6", "1", "A100 40GB SXM4", 8, &nvlink)),
    ];
    TelemetryScenario {
        name: "preidle-mix".into(),
        description: "pre-gap fingerprints injected at a 48/33/17/2 pcie/compute/nic/nvlink mixture".into(),
        epoch: default_epoch(),
        catalog: Vec::new(),
        allow_short_gaps: false,
        jobs,
    }
}

pub fn builtin(name: &str) -> Option<TelemetryScenario> {
    match name {
        "single-job" => Some(single_job()),
        "cluster-mix" => Some(cluster_mix()),
        "preidle-mix" => Some(preidle_mix()),
        _ => None,
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["single-job", "cluster-mix", "preidle-mix"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for name in BUILTIN_NAMES {
            builtin(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn single_job_shape() {
        let ds = generate_synthetic(&single_job(), 7).unwrap();
        assert_eq!(ds.samples.len(), 210);
        assert_eq!(ds.jobs.len(), 1);
        assert_eq!(ds.truth.len(), 210);
        let deep = ds.truth.iter().filter(|t| t.state == GpuState::DeepIdle).count();
        let active = ds.truth.iter().filter(|t| t.state == GpuState::Active).count();
        let gap = ds.truth.iter().filter(|t| t.state == GpuState::ExecIdle).count();
        assert_eq!((deep, active, gap), (60, 120, 30));
        // Job record covers exactly the emitted span.
        assert_eq!(ds.jobs[0].duration(), 210);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = generate_synthetic(&single_job(), 42).unwrap();
        let b = generate_synthetic(&single_job(), 42).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = generate_synthetic(&single_job(), 43).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn cluster_mix_designed_fractions_are_exact() {
        let d = cluster_mix();
        d.validate().unwrap();
        let ds = generate_synthetic(&d, 1).unwrap();
        assert_eq!(ds.design.designed_time_fraction, Some(0.15));
        assert_eq!(ds.design.designed_energy_fraction, Some(0.1));
        assert_eq!(ds.design.streams, 7);
    }

    #[test]
    fn preidle_mix_label_mixture() {
        let ds = generate_synthetic(&preidle_mix(), 1).unwrap();
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for w in &ds.design.window_truth {
            *counts.entry(w.label.as_str()).or_default() += 1;
        }
        assert_eq!(counts["pcie-heavy"], 192);
        assert_eq!(counts["compute-to-idle"], 132);
        assert_eq!(counts["nic-heavy"], 68);
        assert_eq!(counts["nvlink-heavy"], 8);
        assert_eq!(ds.design.designed_intervals, 400);
    }

    #[test]
    fn all_values_are_quantized() {
        let ds = generate_synthetic(&cluster_mix(), 5).unwrap();
        for s in ds.samples.iter().take(2000) {
            assert_eq!(s.power, quantize(s.power));
            if let Some(v) = s.sm {
                assert_eq!(v, quantize(v));
            }
        }
    }

    #[test]
    fn short_gap_runs_are_rejected_unless_allowed() {
        let mut sc = single_job();
        sc.jobs[0].phases[2].duration = 3;
        assert!(sc.validate().is_err());
        sc.allow_short_gaps = true;
        sc.validate().unwrap();
    }

    #[test]
    fn nvlink_on_l40s_is_rejected() {
        let mut sc = single_job();
        sc.jobs[0].phases[1]
            .signals
            .insert(SignalKind::NvlinkTx, 100.0);
        assert!(sc.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let sc = single_job();
        let text = toml::to_string(&sc).unwrap();
        let back: TelemetryScenario = toml::from_str(&text).unwrap();
        assert_eq!(back, sc);
    }
}
