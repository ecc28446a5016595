//! Energy integration and per-state accounting.
//!
//! Power is integrated by the rectangle rule at the 1 Hz sample period:
//! every observed sample contributes `power × 1 s`, missing seconds
//! contribute nothing. All sums run left to right in timestamp order (and
//! streams in sorted key order), so regrouping checks can demand
//! bit-identical totals rather than approximate ones.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::classifier::{
    classify_stream, ClassifierConfig, ExecIdleInterval, GpuState, StateTimeline,
};
use crate::error::{Error, Result};
use crate::telemetry::{GpuCatalog, JobRecord, StreamKey, TelemetrySample};

/// Total joules over one stream. Timestamps must be strictly increasing.
pub fn integrate_energy(samples: &[TelemetrySample]) -> Result<f64> {
    let mut total = 0.0;
    let mut prev: Option<i64> = None;
    for s in samples {
        if let Some(p) = prev {
            if s.timestamp <= p {
                return Err(Error::NonMonotonicTimestamps {
                    prev: p,
                    next: s.timestamp,
                });
            }
        }
        prev = Some(s.timestamp);
        total += s.power;
    }
    Ok(total)
}

/// Seconds and joules credited to each state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StateBreakdown {
    pub deep_idle_time: i64,
    pub exec_idle_time: i64,
    pub active_time: i64,
    pub deep_idle_energy: f64,
    pub exec_idle_energy: f64,
    pub active_energy: f64,
}

impl StateBreakdown {
    pub fn total_time(&self) -> i64 {
        self.deep_idle_time + self.exec_idle_time + self.active_time
    }

    pub fn total_energy(&self) -> f64 {
        self.deep_idle_energy + self.exec_idle_energy + self.active_energy
    }

    /// Fold another breakdown in (left to right, `self` then `other`).
    pub fn absorb(&mut self, other: &StateBreakdown) {
        self.deep_idle_time += other.deep_idle_time;
        self.exec_idle_time += other.exec_idle_time;
        self.active_time += other.active_time;
        self.deep_idle_energy += other.deep_idle_energy;
        self.exec_idle_energy += other.exec_idle_energy;
        self.active_energy += other.active_energy;
    }
}

/// Credit each sample's second and energy to exactly its timeline state.
pub fn state_breakdown(
    timeline: &StateTimeline,
    samples: &[TelemetrySample],
) -> Result<StateBreakdown> {
    if timeline.entries.len() != samples.len() {
        return Err(Error::TimelineLength {
            timeline: timeline.entries.len(),
            samples: samples.len(),
        });
    }
    let mut b = StateBreakdown::default();
    for (i, (entry, sample)) in timeline.entries.iter().zip(samples).enumerate() {
        if entry.timestamp != sample.timestamp {
            return Err(Error::TimelineMismatch {
                index: i,
                timeline_ts: entry.timestamp,
                sample_ts: sample.timestamp,
            });
        }
        match entry.state {
            GpuState::DeepIdle => {
                b.deep_idle_time += 1;
                b.deep_idle_energy += sample.power;
            }
            GpuState::ExecIdle => {
                b.exec_idle_time += 1;
                b.exec_idle_energy += sample.power;
            }
            GpuState::Active => {
                b.active_time += 1;
                b.active_energy += sample.power;
            }
        }
    }
    Ok(b)
}

/// Execution-idle share of time and energy, with the denominator
/// restricted to in-execution (execution-idle + active) seconds. Empty
/// denominators yield 0 so fleet aggregation never divides by zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FractionReport {
    pub time_fraction: f64,
    pub energy_fraction: f64,
}

pub fn in_execution_fractions(b: &StateBreakdown) -> FractionReport {
    let time_denom = b.exec_idle_time + b.active_time;
    let energy_denom = b.exec_idle_energy + b.active_energy;
    FractionReport {
        time_fraction: if time_denom > 0 {
            b.exec_idle_time as f64 / time_denom as f64
        } else {
            0.0
        },
        energy_fraction: if energy_denom > 0.0 {
            b.exec_idle_energy / energy_denom
        } else {
            0.0
        },
    }
}

/// Jobs spanning at least `cutoff` seconds (by `end - start`).
pub fn filter_long_jobs(jobs: &[JobRecord], cutoff: i64) -> Vec<JobRecord> {
    jobs.iter()
        .filter(|j| j.end - j.start >= cutoff)
        .cloned()
        .collect()
}

/// One stream taken through classification and accounting.
#[derive(Debug, Clone)]
pub struct StreamAnalysis {
    pub key: StreamKey,
    pub timeline: StateTimeline,
    pub intervals: Vec<ExecIdleInterval>,
    pub breakdown: StateBreakdown,
}

/// Classify and account every stream, in sorted key order.
pub fn analyze_streams(
    streams: &BTreeMap<StreamKey, Vec<TelemetrySample>>,
    catalog: &GpuCatalog,
    cfg: &ClassifierConfig,
) -> Result<Vec<StreamAnalysis>> {
    let mut out = Vec::with_capacity(streams.len());
    for (key, samples) in streams {
        if samples.is_empty() {
            continue;
        }
        let spec = catalog.get_or_unknown(&samples[0].gpu_name);
        let (timeline, intervals) = classify_stream(key, samples, &spec, cfg)?;
        let breakdown = state_breakdown(&timeline, samples)?;
        out.push(StreamAnalysis {
            key: key.clone(),
            timeline,
            intervals,
            breakdown,
        });
    }
    Ok(out)
}

/// Merge stream breakdowns per job id, in sorted stream order.
pub fn job_breakdowns(analyses: &[StreamAnalysis]) -> BTreeMap<String, StateBreakdown> {
    let mut out: BTreeMap<String, StateBreakdown> = BTreeMap::new();
    for a in analyses {
        out.entry(a.key.job_id.clone())
            .or_default()
            .absorb(&a.breakdown);
    }
    out
}

/// One fraction report per job, sorted by job id.
pub fn per_job_fractions(
    breakdowns: &BTreeMap<String, StateBreakdown>,
) -> Vec<(String, FractionReport)> {
    breakdowns
        .iter()
        .map(|(job_id, b)| (job_id.clone(), in_execution_fractions(b)))
        .collect()
}

/// Sorted values with cumulative ranks `(i+1)/n`.
pub fn fraction_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect()
}

/// One sensitivity row: fleet fractions recomputed end to end for a
/// (job-cutoff, min-interval) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub cutoff: i64,
    pub min_interval: i64,
    pub jobs: u64,
    pub time_fraction: f64,
    pub energy_fraction: f64,
}

pub fn robustness_sweep(
    streams: &BTreeMap<StreamKey, Vec<TelemetrySample>>,
    jobs: &[JobRecord],
    catalog: &GpuCatalog,
    base: &ClassifierConfig,
    cutoffs: &[i64],
    min_intervals: &[i64],
) -> Result<Vec<RobustnessRow>> {
    let mut rows = Vec::with_capacity(cutoffs.len() * min_intervals.len());
    for &cutoff in cutoffs {
        let retained = filter_long_jobs(jobs, cutoff);
        let ids: BTreeSet<&str> = retained.iter().map(|j| j.job_id.as_str()).collect();
        for &min_interval in min_intervals {
            let cfg = ClassifierConfig {
                min_interval,
                ..base.clone()
            };
            let mut fleet = StateBreakdown::default();
            for (key, samples) in streams {
                if samples.is_empty() || !ids.contains(key.job_id.as_str()) {
                    continue;
                }
                let spec = catalog.get_or_unknown(&samples[0].gpu_name);
                let (timeline, _) = classify_stream(key, samples, &spec, &cfg)?;
                fleet.absorb(&state_breakdown(&timeline, samples)?);
            }
            let f = in_execution_fractions(&fleet);
            rows.push(RobustnessRow {
                cutoff,
                min_interval,
                jobs: retained.len() as u64,
                time_fraction: f.time_fraction,
                energy_fraction: f.energy_fraction,
            });
        }
    }
    Ok(rows)
}

/// Nearest-rank quantile: 1-based index `ceil(p * n)` into the sorted
/// slice. Panics on an empty slice — callers gate on non-emptiness.
pub fn nearest_rank<T: Copy>(sorted: &[T], p: f64) -> T {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let n = sorted.len();
    let idx = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[idx - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurationStats {
    pub count: u64,
    pub p50: i64,
    pub p90: i64,
    pub p99: i64,
}

/// Duration quantiles over qualifying intervals; `None` when there are no
/// intervals to rank.
pub fn interval_duration_stats(intervals: &[ExecIdleInterval]) -> Option<DurationStats> {
    if intervals.is_empty() {
        return None;
    }
    let mut durations: Vec<i64> = intervals.iter().map(|iv| iv.duration).collect();
    durations.sort_unstable();
    Some(DurationStats {
        count: durations.len() as u64,
        p50: nearest_rank(&durations, 0.50),
        p90: nearest_rank(&durations, 0.90),
        p99: nearest_rank(&durations, 0.99),
    })
}

/// Sorted interval durations with cumulative ranks.
pub fn duration_cdf(intervals: &[ExecIdleInterval]) -> Vec<(i64, f64)> {
    let mut durations: Vec<i64> = intervals.iter().map(|iv| iv.duration).collect();
    durations.sort_unstable();
    let n = durations.len() as f64;
    durations
        .into_iter()
        .enumerate()
        .map(|(i, d)| (d, (i + 1) as f64 / n))
        .collect()
}

/// Observed energy as a share of the TDP upper bound
/// `Σ count × tdp × window`. Every counted model must declare a TDP.
pub fn tdp_comparison(
    counts: &BTreeMap<String, u64>,
    catalog: &GpuCatalog,
    window: i64,
    observed_energy: f64,
) -> Result<f64> {
    let mut bound = 0.0;
    for (gpu_name, &count) in counts {
        let tdp = catalog
            .get(gpu_name)
            .and_then(|m| m.tdp)
            .ok_or_else(|| Error::MissingTdp {
                gpu_name: gpu_name.clone(),
            })?;
        bound += count as f64 * tdp * window as f64;
    }
    if bound <= 0.0 {
        return Ok(0.0);
    }
    Ok(observed_energy / bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::TimelineEntry;

    fn sample(ts: i64, power: f64) -> TelemetrySample {
        TelemetrySample::new(ts, "h1", "0", "L40S", power)
    }

    fn key() -> StreamKey {
        StreamKey {
            job_id: "j1".into(),
            hostname: "h1".into(),
            gpu_id: "0".into(),
        }
    }

    #[test]
    fn rectangle_rule_totals() {
        let ten: Vec<_> = (0..10).map(|ts| sample(ts, 100.0)).collect();
        assert_eq!(integrate_energy(&ten).unwrap(), 1000.0);
        assert_eq!(integrate_energy(&[]).unwrap(), 0.0);
        let mixed = vec![sample(0, 100.0), sample(1, 200.0), sample(2, 300.0)];
        assert_eq!(integrate_energy(&mixed).unwrap(), 600.0);
    }

    #[test]
    fn unordered_input_is_an_error() {
        let samples = vec![sample(1, 100.0), sample(0, 100.0)];
        assert!(matches!(
            integrate_energy(&samples),
            Err(Error::NonMonotonicTimestamps { prev: 1, next: 0 })
        ));
    }

    /// 60 deep seconds at 35 W, 30 execution-idle at 110 W, 120 active at
    /// 200 W.
    fn three_state_fixture() -> (StateTimeline, Vec<TelemetrySample>) {
        let mut entries = Vec::new();
        let mut samples = Vec::new();
        let mut push = |ts: i64, state: GpuState, power: f64| {
            entries.push(TimelineEntry {
                timestamp: ts,
                state,
            });
            samples.push(sample(ts, power));
        };
        let mut ts = 0;
        for _ in 0..60 {
            push(ts, GpuState::DeepIdle, 35.0);
            ts += 1;
        }
        for _ in 0..30 {
            push(ts, GpuState::ExecIdle, 110.0);
            ts += 1;
        }
        for _ in 0..120 {
            push(ts, GpuState::Active, 200.0);
            ts += 1;
        }
        (
            StateTimeline {
                key: key(),
                entries,
            },
            samples,
        )
    }

    #[test]
    fn breakdown_credits_each_state() {
        let (timeline, samples) = three_state_fixture();
        let b = state_breakdown(&timeline, &samples).unwrap();
        assert_eq!(
            (b.deep_idle_time, b.exec_idle_time, b.active_time),
            (60, 30, 120)
        );
        assert_eq!(
            (b.deep_idle_energy, b.exec_idle_energy, b.active_energy),
            (2100.0, 3300.0, 24000.0)
        );
        assert_eq!(b.total_energy(), integrate_energy(&samples).unwrap());
        assert_eq!(b.total_time(), 210);
    }

    #[test]
    fn all_active_stream_zeroes_other_states() {
        let samples: Vec<_> = (0..5).map(|ts| sample(ts, 150.0)).collect();
        let timeline = StateTimeline {
            key: key(),
            entries: samples
                .iter()
                .map(|s| TimelineEntry {
                    timestamp: s.timestamp,
                    state: GpuState::Active,
                })
                .collect(),
        };
        let b = state_breakdown(&timeline, &samples).unwrap();
        assert_eq!((b.deep_idle_time, b.deep_idle_energy), (0, 0.0));
        assert_eq!((b.exec_idle_time, b.exec_idle_energy), (0, 0.0));
    }

    #[test]
    fn mismatched_timeline_is_an_error() {
        let (mut timeline, samples) = three_state_fixture();
        timeline.entries[3].timestamp = 999;
        assert!(matches!(
            state_breakdown(&timeline, &samples),
            Err(Error::TimelineMismatch { index: 3, .. })
        ));
        timeline.entries.pop();
        assert!(matches!(
            state_breakdown(&timeline, &samples),
            Err(Error::TimelineLength { .. })
        ));
    }

    #[test]
    fn in_execution_fraction_examples() {
        let (timeline, samples) = three_state_fixture();
        let b = state_breakdown(&timeline, &samples).unwrap();
        let f = in_execution_fractions(&b);
        assert_eq!(f.time_fraction, 30.0 / 150.0);
        assert!((f.energy_fraction - 3300.0 / 27300.0).abs() < 1e-12);
        // Empty denominator: all-deep breakdown.
        let deep_only = StateBreakdown {
            deep_idle_time: 10,
            deep_idle_energy: 350.0,
            ..Default::default()
        };
        assert_eq!(in_execution_fractions(&deep_only), FractionReport::default());
    }

    fn job(id: &str, start: i64, end: i64) -> JobRecord {
        JobRecord {
            job_id: id.into(),
            job_name: id.into(),
            category: Default::default(),
            start,
            end,
            gpus: Default::default(),
        }
    }

    #[test]
    fn long_job_filter_uses_span() {
        let jobs = vec![job("3h", 0, 10_800), job("119m", 0, 7_140)];
        let kept = filter_long_jobs(&jobs, 7_200);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].job_id, "3h");
        assert_eq!(filter_long_jobs(&jobs, 0).len(), 2);
    }

    #[test]
    fn two_point_cdf() {
        let cdf = fraction_cdf(&[0.30, 0.10]);
        assert_eq!(cdf, vec![(0.10, 0.5), (0.30, 1.0)]);
        assert!(fraction_cdf(&[]).is_empty());
    }

    fn interval(duration: i64) -> ExecIdleInterval {
        ExecIdleInterval {
            key: key(),
            start: 0,
            end: duration - 1,
            duration,
            energy: duration as f64 * 100.0,
            mean_power: 100.0,
        }
    }

    #[test]
    fn nearest_rank_quantiles() {
        let ivs: Vec<_> = [9, 44, 5, 9].into_iter().map(interval).collect();
        let stats = interval_duration_stats(&ivs).unwrap();
        assert_eq!(stats.p50, 9);
        assert_eq!(stats.p90, 44);
        assert_eq!(stats.count, 4);
        let same = vec![interval(7); 13];
        let stats = interval_duration_stats(&same).unwrap();
        assert_eq!((stats.p50, stats.p90, stats.p99), (7, 7, 7));
        assert!(interval_duration_stats(&[]).is_none());
    }

    #[test]
    fn tdp_ratio_examples() {
        let mut catalog = GpuCatalog::default_fleet();
        catalog.insert(crate::telemetry::GpuModelSpec {
            tdp: Some(350.0),
            ..crate::telemetry::GpuModelSpec::unknown("X350")
        });
        let counts: BTreeMap<String, u64> = [("X350".to_string(), 1)].into();
        // 350 W TDP over 100 s bounds energy at 35,000 J.
        assert!((tdp_comparison(&counts, &catalog, 100, 14_560.0).unwrap() - 0.416).abs() < 1e-12);
        assert_eq!(
            tdp_comparison(&counts, &catalog, 100, 35_000.0).unwrap(),
            1.0
        );
        assert_eq!(tdp_comparison(&counts, &catalog, 100, 0.0).unwrap(), 0.0);
        let unknown: BTreeMap<String, u64> = [("mystery".to_string(), 2)].into();
        assert!(matches!(
            tdp_comparison(&unknown, &catalog, 100, 1.0),
            Err(Error::MissingTdp { .. })
        ));
    }
}
