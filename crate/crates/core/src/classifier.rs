//! Three-state classification of per-second GPU samples.
//!
//! A second is **deep-idle** when no program is resident, **execution-idle**
//! when a program is resident but every reported activity signal sits below
//! the activity threshold and every reported link counter sits below the
//! communication threshold, and **active** otherwise. Absent signals are
//! omitted from the rule — a missing counter is never treated as zero.
//!
//! Low-activity seconds only count as execution-idle once they form a
//! sustained run of at least `min_interval` seconds; shorter runs are folded
//! back into active time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telemetry::{GpuModelSpec, SignalKind, StreamKey, TelemetrySample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Activity cutoff as a fraction of full utilization; a percent-scale
    /// signal is "low" when it is strictly below `activity_threshold * 100`.
    pub activity_threshold: f64,
    /// Link-traffic cutoff in MB/s (decimal), compared strictly.
    pub comm_threshold: f64,
    /// Minimum sustained run length, in seconds, for a low-activity run to
    /// qualify as an execution-idle interval.
    pub min_interval: i64,
    /// Largest tolerated hole (missing seconds) inside a run before the run
    /// is split in two.
    pub max_sample_gap: i64,
    /// Watts above the model's deep-idle baseline beyond which the residency
    /// fallback assumes a program is loaded.
    pub residency_power_margin: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            activity_threshold: 0.05,
            comm_threshold: 1000.0,
            min_interval: 5,
            max_sample_gap: 2,
            residency_power_margin: 10.0,
        }
    }
}

impl ClassifierConfig {
    /// Activity threshold on the percent scale the telemetry reports.
    pub fn activity_threshold_pct(&self) -> f64 {
        self.activity_threshold * 100.0
    }
}

/// Per-sample classification before run-length filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleActivityClass {
    /// Nothing resident on the GPU.
    NoProgram,
    /// Resident but every reported signal is below threshold.
    LowActivityResident,
    /// At least one reported signal at or above threshold.
    Active,
}

/// Final per-second state after run-length filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GpuState {
    DeepIdle,
    ExecIdle,
    Active,
}

impl GpuState {
    pub fn as_str(&self) -> &'static str {
        match self {
            GpuState::DeepIdle => "deep-idle",
            GpuState::ExecIdle => "exec-idle",
            GpuState::Active => "active",
        }
    }
}

impl std::fmt::Display for GpuState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One observed second with its final state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub timestamp: i64,
    pub state: GpuState,
}

/// Final states for every observed second of one stream, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTimeline {
    pub key: StreamKey,
    pub entries: Vec<TimelineEntry>,
}

/// A qualifying sustained low-activity run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecIdleInterval {
    pub key: StreamKey,
    /// Timestamp of the first member sample.
    pub start: i64,
    /// Timestamp of the last member sample.
    pub end: i64,
    /// `end - start + 1`: wall seconds covered, holes included.
    pub duration: i64,
    /// Joules summed over *observed* member samples at 1 s each; holes
    /// contribute nothing.
    pub energy: f64,
    /// `energy / duration`.
    pub mean_power: f64,
}

/// True when some reported signal puts the sample at or above a threshold.
pub fn sample_has_activity(sample: &TelemetrySample, cfg: &ClassifierConfig) -> bool {
    let act_pct = cfg.activity_threshold_pct();
    for kind in SignalKind::ACTIVITY {
        if let Some(v) = sample.signal(kind) {
            if v >= act_pct {
                return true;
            }
        }
    }
    for kind in SignalKind::COMM {
        if let Some(v) = sample.signal(kind) {
            if v >= cfg.comm_threshold {
                return true;
            }
        }
    }
    false
}

/// Classify one sample given a residency verdict for that second.
pub fn classify_sample(
    sample: &TelemetrySample,
    resident: bool,
    cfg: &ClassifierConfig,
) -> SampleActivityClass {
    if !resident {
        return SampleActivityClass::NoProgram;
    }
    if sample_has_activity(sample, cfg) {
        SampleActivityClass::Active
    } else {
        SampleActivityClass::LowActivityResident
    }
}

/// Per-sample residency verdicts for one stream, in sample order.
///
/// A reported `proc_resident` flag wins for its sample. When the flag is
/// absent the fallback declares the GPU resident from the first sample with
/// activity onward, or whenever power clears the model's deep-idle baseline
/// by more than the configured margin — and it needs that baseline, so a
/// model without one is an error the moment the fallback is consulted.
pub fn detect_residency(
    samples: &[TelemetrySample],
    spec: &GpuModelSpec,
    cfg: &ClassifierConfig,
) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(samples.len());
    let mut seen_activity = false;
    for sample in samples {
        if sample_has_activity(sample, cfg) {
            seen_activity = true;
        }
        let resident = match sample.proc_resident {
            Some(flag) => flag,
            None => {
                let deep = spec.deep_idle_power.ok_or_else(|| Error::ResidencyUndeterminable {
                    stream: format!("{}:{}", sample.hostname, sample.gpu_id),
                    gpu_name: sample.gpu_name.clone(),
                })?;
                seen_activity || sample.power > deep + cfg.residency_power_margin
            }
        };
        out.push(resident);
    }
    Ok(out)
}

/// Group consecutive low-activity samples into runs, qualify runs by
/// duration, and emit the final timeline plus the qualifying intervals.
///
/// A run tolerates holes of up to `max_sample_gap` missing seconds; a larger
/// hole splits it. Runs shorter than `min_interval` are relabeled active.
pub fn detect_intervals(
    key: &StreamKey,
    samples: &[TelemetrySample],
    classes: &[SampleActivityClass],
    cfg: &ClassifierConfig,
) -> (StateTimeline, Vec<ExecIdleInterval>) {
    debug_assert_eq!(samples.len(), classes.len());
    let mut entries: Vec<TimelineEntry> = samples
        .iter()
        .zip(classes)
        .map(|(s, c)| TimelineEntry {
            timestamp: s.timestamp,
            state: match c {
                SampleActivityClass::NoProgram => GpuState::DeepIdle,
                SampleActivityClass::LowActivityResident => GpuState::ExecIdle,
                SampleActivityClass::Active => GpuState::Active,
            },
        })
        .collect();

    let mut intervals = Vec::new();
    let mut run: Vec<usize> = Vec::new();
    let mut flush = |run: &mut Vec<usize>, entries: &mut Vec<TimelineEntry>| {
        if run.is_empty() {
            return;
        }
        let start = samples[run[0]].timestamp;
        let end = samples[*run.last().unwrap()].timestamp;
        let duration = end - start + 1;
        if duration >= cfg.min_interval {
            let energy: f64 = run.iter().map(|&i| samples[i].power).sum();
            intervals.push(ExecIdleInterval {
                key: key.clone(),
                start,
                end,
                duration,
                energy,
                mean_power: energy / duration as f64,
            });
        } else {
            for &i in run.iter() {
                entries[i].state = GpuState::Active;
            }
        }
        run.clear();
    };

    for (i, class) in classes.iter().enumerate() {
        if *class != SampleActivityClass::LowActivityResident {
            flush(&mut run, &mut entries);
            continue;
        }
        if let Some(&prev) = run.last() {
            let hole = samples[i].timestamp - samples[prev].timestamp - 1;
            if hole > cfg.max_sample_gap {
                flush(&mut run, &mut entries);
            }
        }
        run.push(i);
    }
    flush(&mut run, &mut entries);

    (
        StateTimeline {
            key: key.clone(),
            entries,
        },
        intervals,
    )
}

/// Full pipeline for one stream: residency, per-sample classes, run-length
/// filtering. Timestamps must be strictly increasing.
pub fn classify_stream(
    key: &StreamKey,
    samples: &[TelemetrySample],
    spec: &GpuModelSpec,
    cfg: &ClassifierConfig,
) -> Result<(StateTimeline, Vec<ExecIdleInterval>)> {
    for pair in samples.windows(2) {
        if pair[1].timestamp <= pair[0].timestamp {
            return Err(Error::NonMonotonicTimestamps {
                prev: pair[0].timestamp,
                next: pair[1].timestamp,
            });
        }
    }
    let residency = detect_residency(samples, spec, cfg)?;
    let classes: Vec<SampleActivityClass> = samples
        .iter()
        .zip(&residency)
        .map(|(s, &r)| classify_sample(s, r, cfg))
        .collect();
    Ok(detect_intervals(key, samples, &classes, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::GpuCatalog;

    fn cfg() -> ClassifierConfig {
        ClassifierConfig::default()
    }

    fn key() -> StreamKey {
        StreamKey {
            job_id: "j1".into(),
            hostname: "h1".into(),
            gpu_id: "0".into(),
        }
    }

    fn sample(ts: i64, power: f64) -> TelemetrySample {
        TelemetrySample::new(ts, "h1", "0", "L40S", power)
    }

    #[test]
    fn low_signals_resident_is_low() {
        let mut s = sample(0, 100.0);
        s.sm = Some(3.0);
        s.dram = Some(2.0);
        assert_eq!(classify_sample(&s, true, &cfg()), SampleActivityClass::LowActivityResident);
    }

    #[test]
    fn threshold_is_strict() {
        let mut s = sample(0, 100.0);
        s.sm = Some(5.0); // exactly the 5% cutoff: not below it
        assert_eq!(classify_sample(&s, true, &cfg()), SampleActivityClass::Active);
        s.sm = Some(4.999);
        assert_eq!(classify_sample(&s, true, &cfg()), SampleActivityClass::LowActivityResident);
        s.pcie_tx = Some(1000.0);
        assert_eq!(classify_sample(&s, true, &cfg()), SampleActivityClass::Active);
    }

    #[test]
    fn all_signals_absent_counts_as_low() {
        let s = sample(0, 100.0);
        assert_eq!(classify_sample(&s, true, &cfg()), SampleActivityClass::LowActivityResident);
        assert_eq!(classify_sample(&s, false, &cfg()), SampleActivityClass::NoProgram);
    }

    #[test]
    fn nic_traffic_alone_does_not_make_a_sample_active() {
        // Host NIC counters describe the node, not the GPU; they feed the
        // fingerprints but not the state rule.
        let mut s = sample(0, 100.0);
        s.nic_tx = Some(50_000.0);
        assert_eq!(classify_sample(&s, true, &cfg()), SampleActivityClass::LowActivityResident);
    }

    #[test]
    fn big_hole_splits_a_run_into_two_intervals() {
        // Ten low seconds with a five-second hole in the middle: the hole
        // exceeds max_sample_gap, so two five-second intervals come out.
        let mut samples = Vec::new();
        for ts in 0..5 {
            let mut s = sample(ts, 100.0);
            s.sm = Some(1.0);
            s.proc_resident = Some(true);
            samples.push(s);
        }
        for ts in 10..15 {
            let mut s = sample(ts, 100.0);
            s.sm = Some(1.0);
            s.proc_resident = Some(true);
            samples.push(s);
        }
        let spec = GpuCatalog::default_fleet().get_or_unknown("L40S");
        let (timeline, intervals) = classify_stream(&key(), &samples, &spec, &cfg()).unwrap();
        assert_eq!(intervals.len(), 2);
        assert_eq!((intervals[0].start, intervals[0].end, intervals[0].duration), (0, 4, 5));
        assert_eq!((intervals[1].start, intervals[1].end, intervals[1].duration), (10, 14, 5));
        assert!(timeline.entries.iter().all(|e| e.state == GpuState::ExecIdle));
    }

    #[test]
    fn small_hole_is_bridged_and_costs_no_energy() {
        // Low seconds 0..=2 and 5..=7; the hole is 2 s <= max_sample_gap.
        let mut samples = Vec::new();
        for ts in [0, 1, 2, 5, 6, 7] {
            let mut s = sample(ts, 100.0);
            s.sm = Some(1.0);
            s.proc_resident = Some(true);
            samples.push(s);
        }
        let spec = GpuCatalog::default_fleet().get_or_unknown("L40S");
        let (_, intervals) = classify_stream(&key(), &samples, &spec, &cfg()).unwrap();
        assert_eq!(intervals.len(), 1);
        let iv = &intervals[0];
        assert_eq!((iv.start, iv.end, iv.duration), (0, 7, 8));
        assert_eq!(iv.energy, 600.0); // six observed seconds at 100 W
        assert_eq!(iv.mean_power, 75.0); // averaged over the full 8 s span
    }

    #[test]
    fn short_runs_fold_back_into_active() {
        let mut samples = Vec::new();
        for ts in 0..3 {
            let mut s = sample(ts, 100.0);
            s.sm = Some(1.0);
            s.proc_resident = Some(true);
            samples.push(s);
        }
        let mut busy = sample(3, 200.0);
        busy.sm = Some(80.0);
        busy.proc_resident = Some(true);
        samples.push(busy);
        let spec = GpuCatalog::default_fleet().get_or_unknown("L40S");
        let (timeline, intervals) = classify_stream(&key(), &samples, &spec, &cfg()).unwrap();
        assert!(intervals.is_empty());
        assert!(timeline.entries.iter().all(|e| e.state == GpuState::Active));
    }

    #[test]
    fn unpowered_gpu_without_flag_is_deep_idle() {
        // 60 s at 36 W on a 35 W-baseline model, no flags, no signals:
        // fallback says nothing resident, so no interval appears.
        let samples: Vec<_> = (0..60).map(|ts| sample(ts, 36.0)).collect();
        let spec = GpuCatalog::default_fleet().get_or_unknown("L40S");
        let (timeline, intervals) = classify_stream(&key(), &samples, &spec, &cfg()).unwrap();
        assert!(intervals.is_empty());
        assert!(timeline.entries.iter().all(|e| e.state == GpuState::DeepIdle));
    }

    #[test]
    fn activity_makes_residency_stick() {
        // First sample runs hot; later quiet low-power samples stay
        // resident because a program was seen executing.
        let mut first = sample(0, 200.0);
        first.sm = Some(80.0);
        let mut samples = vec![first];
        for ts in 1..8 {
            samples.push(sample(ts, 40.0));
        }
        let spec = GpuCatalog::default_fleet().get_or_unknown("L40S");
        let residency = detect_residency(&samples, &spec, &cfg()).unwrap();
        assert!(residency.iter().all(|&r| r));
        let (_, intervals) = classify_stream(&key(), &samples, &spec, &cfg()).unwrap();
        assert_eq!(intervals.len(), 1);
        assert_eq!((intervals[0].start, intervals[0].end), (1, 7));
    }

    #[test]
    fn fallback_without_baseline_is_an_error() {
        let samples = vec![sample(0, 36.0)];
        let spec = GpuModelSpec::unknown("mystery");
        let err = detect_residency(&samples, &spec, &cfg()).unwrap_err();
        assert!(matches!(err, Error::ResidencyUndeterminable { .. }));
        // The explicit flag sidesteps the baseline requirement.
        let mut flagged = sample(0, 36.0);
        flagged.proc_resident = Some(false);
        assert_eq!(detect_residency(&[flagged], &spec, &cfg()).unwrap(), vec![false]);
    }

    #[test]
    fn reported_flag_wins_over_power() {
        // Hot power but the flag says nothing is resident: believe the flag.
        let mut s = sample(0, 200.0);
        s.proc_resident = Some(false);
        let spec = GpuCatalog::default_fleet().get_or_unknown("L40S");
        assert_eq!(detect_residency(&[s], &spec, &cfg()).unwrap(), vec![false]);
    }

    #[test]
    fn non_monotonic_timestamps_are_rejected() {
        let samples = vec![sample(5, 100.0), sample(5, 100.0)];
        let spec = GpuCatalog::default_fleet().get_or_unknown("L40S");
        let err = classify_stream(&key(), &samples, &spec, &cfg()).unwrap_err();
        assert!(matches!(err, Error::NonMonotonicTimestamps { prev: 5, next: 5 }));
    }
}
