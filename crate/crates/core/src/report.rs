//! Bundle serialization: the line-record files a command run emits.
//!
//! Everything here is deterministic — fixed column orders, map iteration in
//! key order, floats printed with the shortest round-trip representation —
//! so identical analyses produce byte-identical bundles.
//!
//! Three artifacts are also readable back (`attributed.jsonl`,
//! `timelines.csv`, `intervals.csv`): they carry the classified dataset
//! from an analysis run into the pre-idle stage.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::classifier::{ExecIdleInterval, GpuState, StateTimeline, TimelineEntry};
use crate::energy::{DurationStats, FractionReport, RobustnessRow, StreamAnalysis};
use crate::error::{Error, Result};
use crate::preidle::{
    Clustering, FeatureGroup, Fingerprint, LabelReport, PreIdleWindow, WindowExtraction,
};
use crate::sim::engine::{ComparisonRow, SimResult};
use crate::telemetry::parse::ParseStats;
use crate::telemetry::synth::TruthRecord;
use crate::telemetry::{StreamKey, TelemetrySample};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_state(s: &str) -> Option<GpuState> {
    match s {
        "deep-idle" => Some(GpuState::DeepIdle),
        "exec-idle" => Some(GpuState::ExecIdle),
        "active" => Some(GpuState::Active),
        _ => None,
    }
}

fn bad_row(file: &str, line: usize, reason: &str) -> Error {
    Error::Trace(format!("{file} line {line}: {reason}"))
}

// ---------------------------------------------------------------------------
// Attributed samples (JSON lines, one stream per line)

#[derive(Serialize, Deserialize)]
struct AttributedLine {
    key: StreamKey,
    samples: Vec<TelemetrySample>,
}

pub fn write_attributed<W: Write>(
    mut w: W,
    streams: &BTreeMap<StreamKey, Vec<TelemetrySample>>,
) -> Result<()> {
    for (key, samples) in streams {
        let line = AttributedLine {
            key: key.clone(),
            samples: samples.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_attributed<R: Read>(r: R) -> Result<BTreeMap<StreamKey, Vec<TelemetrySample>>> {
    let mut out = BTreeMap::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: AttributedLine = serde_json::from_str(&line)?;
        out.insert(parsed.key, parsed.samples);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Timelines

pub fn write_timelines<W: Write>(w: W, timelines: &[&StateTimeline]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["job_id", "hostname", "gpu_id", "timestamp", "state"])?;
    for tl in timelines {
        for e in &tl.entries {
            wtr.write_record([
                tl.key.job_id.as_str(),
                tl.key.hostname.as_str(),
                tl.key.gpu_id.as_str(),
                &e.timestamp.to_string(),
                e.state.as_str(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_timelines<R: Read>(r: R) -> Result<BTreeMap<StreamKey, StateTimeline>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out: BTreeMap<StreamKey, StateTimeline> = BTreeMap::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        if record.len() != 5 {
            return Err(bad_row("timelines", line, "expected 5 fields"));
        }
        let key = StreamKey {
            job_id: record[0].to_string(),
            hostname: record[1].to_string(),
            gpu_id: record[2].to_string(),
        };
        let timestamp: i64 = record[3]
            .parse()
            .map_err(|_| bad_row("timelines", line, "bad timestamp"))?;
        let state = parse_state(&record[4])
            .ok_or_else(|| bad_row("timelines", line, "unknown state"))?;
        out.entry(key.clone())
            .or_insert_with(|| StateTimeline {
                key,
                entries: Vec::new(),
            })
            .entries
            .push(TimelineEntry { timestamp, state });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Exec-idle intervals

pub fn write_intervals<W: Write>(w: W, intervals: &[ExecIdleInterval]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "job_id",
        "hostname",
        "gpu_id",
        "start",
        "end",
        "duration",
        "energy",
        "mean_power",
    ])?;
    for iv in intervals {
        wtr.write_record([
            iv.key.job_id.as_str(),
            iv.key.hostname.as_str(),
            iv.key.gpu_id.as_str(),
            &iv.start.to_string(),
            &iv.end.to_string(),
            &iv.duration.to_string(),
            &iv.energy.to_string(),
            &iv.mean_power.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_intervals<R: Read>(r: R) -> Result<Vec<ExecIdleInterval>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        if record.len() != 8 {
            return Err(bad_row("intervals", line, "expected 8 fields"));
        }
        let num = |i: usize, what: &str| -> Result<i64> {
            record[i]
                .parse()
                .map_err(|_| bad_row("intervals", line, what))
        };
        let fnum = |i: usize, what: &str| -> Result<f64> {
            record[i]
                .parse()
                .map_err(|_| bad_row("intervals", line, what))
        };
        out.push(ExecIdleInterval {
            key: StreamKey {
                job_id: record[0].to_string(),
                hostname: record[1].to_string(),
                gpu_id: record[2].to_string(),
            },
            start: num(3, "bad start")?,
            end: num(4, "bad end")?,
            duration: num(5, "bad duration")?,
            energy: fnum(6, "bad energy")?,
            mean_power: fnum(7, "bad mean_power")?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Analysis tables (write-only)

pub fn write_breakdowns<W: Write>(w: W, analyses: &[StreamAnalysis]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "job_id",
        "hostname",
        "gpu_id",
        "deep_idle_time",
        "exec_idle_time",
        "active_time",
        "deep_idle_energy",
        "exec_idle_energy",
        "active_energy",
    ])?;
    for a in analyses {
        let b = &a.breakdown;
        wtr.write_record([
            a.key.job_id.as_str(),
            a.key.hostname.as_str(),
            a.key.gpu_id.as_str(),
            &b.deep_idle_time.to_string(),
            &b.exec_idle_time.to_string(),
            &b.active_time.to_string(),
            &b.deep_idle_energy.to_string(),
            &b.exec_idle_energy.to_string(),
            &b.active_energy.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One fleet-level row: the pooled breakdown plus in-execution fractions.
pub fn write_fleet<W: Write>(
    w: W,
    fleet: &crate::energy::StateBreakdown,
    fractions: &FractionReport,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "deep_idle_time",
        "exec_idle_time",
        "active_time",
        "deep_idle_energy",
        "exec_idle_energy",
        "active_energy",
        "time_fraction",
        "energy_fraction",
    ])?;
    wtr.write_record([
        fleet.deep_idle_time.to_string(),
        fleet.exec_idle_time.to_string(),
        fleet.active_time.to_string(),
        fleet.deep_idle_energy.to_string(),
        fleet.exec_idle_energy.to_string(),
        fleet.active_energy.to_string(),
        fractions.time_fraction.to_string(),
        fractions.energy_fraction.to_string(),
    ])?;
    wtr.flush()?;
    Ok(())
}

pub fn write_per_job_fractions<W: Write>(w: W, rows: &[(String, FractionReport)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["job_id", "time_fraction", "energy_fraction"])?;
    for (job_id, f) in rows {
        wtr.write_record([
            job_id.as_str(),
            &f.time_fraction.to_string(),
            &f.energy_fraction.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Sorted-value CDF: one `(value, cumulative)` row per point.
pub fn write_cdf<W: Write, T: std::fmt::Display>(
    w: W,
    value_column: &str,
    points: &[(T, f64)],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([value_column, "cumulative"])?;
    for (v, c) in points {
        wtr.write_record([v.to_string(), c.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_robustness<W: Write>(w: W, rows: &[RobustnessRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "cutoff",
        "min_interval",
        "jobs",
        "time_fraction",
        "energy_fraction",
    ])?;
    for r in rows {
        wtr.write_record([
            r.cutoff.to_string(),
            r.min_interval.to_string(),
            r.jobs.to_string(),
            r.time_fraction.to_string(),
            r.energy_fraction.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Interval-duration quantiles; header only when there were no intervals.
pub fn write_duration_stats<W: Write>(w: W, stats: Option<&DurationStats>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["count", "p50", "p90", "p99"])?;
    if let Some(s) = stats {
        wtr.write_record([
            s.count.to_string(),
            s.p50.to_string(),
            s.p90.to_string(),
            s.p99.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Observed energy against the TDP envelope; the ratio column is empty when
/// the envelope could not be computed (unknown TDP).
pub fn write_tdp<W: Write>(w: W, observed: f64, window: i64, ratio: Option<f64>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["observed_energy", "window", "tdp_ratio"])?;
    wtr.write_record([observed.to_string(), window.to_string(), opt(ratio)])?;
    wtr.flush()?;
    Ok(())
}

pub fn write_ingest<W: Write>(
    w: W,
    stats: &ParseStats,
    streams: u64,
    unallocated: u64,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "lines",
        "malformed",
        "duplicates",
        "unknown_gpu_samples",
        "unknown_gpu_names",
        "streams",
        "unallocated",
    ])?;
    let names: Vec<&str> = stats.unknown_gpu_names.iter().map(|s| s.as_str()).collect();
    wtr.write_record([
        stats.lines.to_string(),
        stats.malformed.to_string(),
        stats.duplicates.to_string(),
        stats.unknown_gpu_samples.to_string(),
        names.join(";"),
        streams.to_string(),
        unallocated.to_string(),
    ])?;
    wtr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Pre-idle tables

fn feature_columns(prefix: &str) -> Vec<String> {
    let mut cols = Vec::with_capacity(12);
    for g in FeatureGroup::ALL {
        cols.push(format!("{prefix}{}_mean", g.as_str()));
        cols.push(format!("{prefix}{}_max", g.as_str()));
    }
    cols
}

pub fn write_windows<W: Write>(w: W, extraction: &WindowExtraction) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["job_id", "hostname", "gpu_id", "interval_start", "samples"])?;
    for win in &extraction.windows {
        wtr.write_record([
            win.key.job_id.as_str(),
            win.key.hostname.as_str(),
            win.key.gpu_id.as_str(),
            &win.interval_start.to_string(),
            &win.samples.len().to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_fingerprints<W: Write>(
    w: W,
    windows: &[PreIdleWindow],
    fingerprints: &[Fingerprint],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![
        "job_id".to_string(),
        "hostname".to_string(),
        "gpu_id".to_string(),
        "interval_start".to_string(),
    ];
    header.extend(feature_columns(""));
    wtr.write_record(&header)?;
    for (win, fp) in windows.iter().zip(fingerprints) {
        let mut row = vec![
            win.key.job_id.clone(),
            win.key.hostname.clone(),
            win.key.gpu_id.clone(),
            win.interval_start.to_string(),
        ];
        for agg in &fp.groups {
            row.push(opt(agg.mean));
            row.push(opt(agg.max));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_clusters<W: Write>(w: W, report: &LabelReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![
        "cluster_id".to_string(),
        "size".to_string(),
        "label".to_string(),
    ];
    header.extend(feature_columns("z_"));
    wtr.write_record(&header)?;
    for c in &report.clusters {
        let mut row = vec![
            c.cluster_id.to_string(),
            c.size.to_string(),
            c.label.as_str().to_string(),
        ];
        for dim in &c.centroid {
            row.push(opt(*dim));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-window cluster assignment and label; noise windows get empty cells.
pub fn write_window_labels<W: Write>(
    w: W,
    windows: &[PreIdleWindow],
    clustering: &Clustering,
    report: &LabelReport,
) -> Result<()> {
    let labels = report.window_labels(clustering);
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "job_id",
        "hostname",
        "gpu_id",
        "interval_start",
        "cluster_id",
        "label",
    ])?;
    for ((win, assignment), label) in windows.iter().zip(&clustering.assignments).zip(&labels) {
        wtr.write_record([
            win.key.job_id.as_str(),
            win.key.hostname.as_str(),
            win.key.gpu_id.as_str(),
            &win.interval_start.to_string(),
            &assignment.map(|c| c.to_string()).unwrap_or_default(),
            label.map(|l| l.as_str()).unwrap_or(""),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_shares<W: Write>(w: W, report: &LabelReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["label", "share"])?;
    for (label, share) in &report.shares {
        wtr.write_record([label.as_str(), &share.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_preidle_summary<W: Write>(
    w: W,
    extraction: &WindowExtraction,
    clustering: &Clustering,
    report: &LabelReport,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "windows",
        "skipped_intervals",
        "clusters",
        "labeled_windows",
        "noise_windows",
        "radius",
    ])?;
    wtr.write_record([
        extraction.windows.len().to_string(),
        extraction.skipped.to_string(),
        clustering.cluster_count.to_string(),
        report.labeled_windows.to_string(),
        report.noise_windows.to_string(),
        clustering.radius.to_string(),
    ])?;
    wtr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Simulation tables

pub fn write_latencies<W: Write>(w: W, result: &SimResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "id",
        "arrival",
        "gpu",
        "dispatched",
        "completed",
        "latency",
    ])?;
    for r in &result.requests {
        wtr.write_record([
            r.id.to_string(),
            r.arrival.to_string(),
            r.gpu.to_string(),
            r.dispatched.to_string(),
            r.completed.to_string(),
            r.latency.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_gpu_outcomes<W: Write>(w: W, result: &SimResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "gpu",
        "routed",
        "deep_s",
        "exec_idle_s",
        "transition_s",
        "service_s",
        "energy",
        "requests",
    ])?;
    let s = |us: u64| (us as f64 / 1e6).to_string();
    for g in &result.gpus {
        wtr.write_record([
            g.gpu.to_string(),
            g.routed.to_string(),
            s(g.deep_us),
            s(g.exec_idle_us),
            s(g.transition_us),
            s(g.service_us),
            g.energy.to_string(),
            g.requests.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_actions<W: Write>(w: W, result: &SimResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "gpu", "action"])?;
    for a in &result.actions {
        wtr.write_record([a.t.to_string(), a.gpu.to_string(), a.action.as_str().into()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_sim_summaries<W: Write>(w: W, results: &[SimResult]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "label",
        "duration",
        "requests",
        "dropped_after_horizon",
        "total_energy",
        "avg_power",
        "p50_latency",
        "p95_latency",
        "p99_latency",
        "busy_fraction",
        "downscales",
        "restores",
    ])?;
    for r in results {
        let s = &r.summary;
        wtr.write_record([
            s.label.clone(),
            s.duration.to_string(),
            s.requests.to_string(),
            s.dropped_after_horizon.to_string(),
            s.total_energy.to_string(),
            s.avg_power.to_string(),
            opt(s.p50_latency),
            opt(s.p95_latency),
            opt(s.p99_latency),
            s.busy_fraction.to_string(),
            s.downscales.to_string(),
            s.restores.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_comparison<W: Write>(w: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "label",
        "total_energy",
        "energy_ratio",
        "avg_power",
        "p95_latency",
        "p95_ratio",
        "busy_fraction",
        "busy_ratio",
    ])?;
    for r in rows {
        wtr.write_record([
            r.label.clone(),
            r.total_energy.to_string(),
            opt(r.energy_ratio),
            r.avg_power.to_string(),
            opt(r.p95_latency),
            opt(r.p95_ratio),
            r.busy_fraction.to_string(),
            opt(r.busy_ratio),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Ground truth from generators

pub fn write_truth<W: Write>(w: W, truth: &[TruthRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["job_id", "hostname", "gpu_id", "timestamp", "state"])?;
    for t in truth {
        wtr.write_record([
            t.key.job_id.as_str(),
            t.key.hostname.as_str(),
            t.key.gpu_id.as_str(),
            &t.timestamp.to_string(),
            t.state.as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Designed cause of each low-activity interval a generator emitted.
pub fn write_window_truth<W: Write>(
    w: W,
    truth: &[crate::telemetry::synth::WindowTruth],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["job_id", "hostname", "gpu_id", "interval_start", "label"])?;
    for t in truth {
        wtr.write_record([
            t.key.job_id.as_str(),
            t.key.hostname.as_str(),
            t.key.gpu_id.as_str(),
            &t.interval_start.to_string(),
            t.label.as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(r: R) -> Result<Vec<TruthRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        if record.len() != 5 {
            return Err(bad_row("truth", line, "expected 5 fields"));
        }
        out.push(TruthRecord {
            key: StreamKey {
                job_id: record[0].to_string(),
                hostname: record[1].to_string(),
                gpu_id: record[2].to_string(),
            },
            timestamp: record[3]
                .parse()
                .map_err(|_| bad_row("truth", line, "bad timestamp"))?,
            state: parse_state(&record[4])
                .ok_or_else(|| bad_row("truth", line, "unknown state"))?,
        });
    }
    Ok(out)
}
