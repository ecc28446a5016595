//! Line-record ingestion and serialization for telemetry and job files.
//!
//! Telemetry is CSV with a header row; an empty field means the signal was
//! not collected. Malformed lines are counted and skipped rather than
//! aborting the whole file, since a single bad collector record must not
//! take down a fleet-wide analysis.

use std::collections::HashSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::telemetry::{GpuCatalog, GpuRef, JobCategory, JobRecord, TelemetrySample};

/// Ingestion counters reported alongside the parsed samples.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseStats {
    /// Data lines seen (excluding the header).
    pub lines: u64,
    /// Lines rejected by format or field validation.
    pub malformed: u64,
    /// Well-formed samples dropped because an earlier sample already
    /// claimed the same (hostname, gpu_id, timestamp).
    pub duplicates: u64,
    /// Retained samples whose gpu_name the catalog does not know.
    pub unknown_gpu_samples: u64,
    pub unknown_gpu_names: std::collections::BTreeSet<String>,
}

impl ParseStats {
    fn absorb(&mut self, other: ParseStats) {
        self.lines += other.lines;
        self.malformed += other.malformed;
        self.duplicates += other.duplicates;
        self.unknown_gpu_samples += other.unknown_gpu_samples;
        self.unknown_gpu_names.extend(other.unknown_gpu_names);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTelemetry {
    /// Sorted by (hostname, gpu_id, timestamp); duplicates removed
    /// keep-first in input order.
    pub samples: Vec<TelemetrySample>,
    pub stats: ParseStats,
}

/// Parse one telemetry file. Never fails on bad data lines, only on I/O or
/// a missing/unreadable header.
pub fn parse_telemetry<R: Read>(reader: R, catalog: &GpuCatalog) -> Result<ParsedTelemetry> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let mut stats = ParseStats::default();
    let mut raw: Vec<TelemetrySample> = Vec::new();
    for record in rdr.deserialize::<TelemetrySample>() {
        stats.lines += 1;
        match record {
            Ok(sample) => {
                if sample.field_error().is_some() {
                    stats.malformed += 1;
                } else {
                    raw.push(sample);
                }
            }
            Err(e) => {
                // I/O problems are fatal; shape/parse problems are counted.
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(e.into());
                }
                stats.malformed += 1;
            }
        }
    }

    let samples = finalize(raw, catalog, &mut stats);
    Ok(ParsedTelemetry { samples, stats })
}

/// Combine per-file parses into one dataset, re-applying keep-first
/// deduplication across files in argument order.
pub fn merge_parsed(parts: Vec<ParsedTelemetry>, catalog: &GpuCatalog) -> ParsedTelemetry {
    let mut stats = ParseStats::default();
    let mut raw = Vec::new();
    for mut part in parts {
        // Unknown-model accounting is recomputed below over the merged set.
        part.stats.unknown_gpu_samples = 0;
        part.stats.unknown_gpu_names.clear();
        stats.absorb(part.stats);
        raw.extend(part.samples);
    }
    let samples = finalize(raw, catalog, &mut stats);
    ParsedTelemetry { samples, stats }
}

fn finalize(
    raw: Vec<TelemetrySample>,
    catalog: &GpuCatalog,
    stats: &mut ParseStats,
) -> Vec<TelemetrySample> {
    let mut seen: HashSet<(String, String, i64)> = HashSet::with_capacity(raw.len());
    let mut samples: Vec<TelemetrySample> = Vec::with_capacity(raw.len());
    for sample in raw {
        let key = (
            sample.hostname.clone(),
            sample.gpu_id.clone(),
            sample.timestamp,
        );
        if seen.insert(key) {
            if catalog.get(&sample.gpu_name).is_none() {
                stats.unknown_gpu_samples += 1;
                stats.unknown_gpu_names.insert(sample.gpu_name.clone());
            }
            samples.push(sample);
        } else {
            stats.duplicates += 1;
        }
    }
    samples.sort_by(|a, b| {
        (&a.hostname, &a.gpu_id, a.timestamp).cmp(&(&b.hostname, &b.gpu_id, b.timestamp))
    });
    samples
}

/// Serialize samples in the canonical column order. Round-trips exactly
/// through [`parse_telemetry`].
pub fn write_telemetry<W: Write>(writer: W, samples: &[TelemetrySample]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for s in samples {
        wtr.serialize(s)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Job files are CSV: `job_id,job_name,category,start,end,gpus` where
/// `gpus` is a semicolon-separated list of `hostname:gpu_id` slots.
pub fn parse_jobs<R: Read>(reader: R) -> Result<Vec<JobRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let mut jobs = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let record = record?;
        let fail = |reason: &str| Error::JobsFile {
            line,
            reason: reason.to_string(),
        };
        if record.len() != 6 {
            return Err(fail("expected 6 fields"));
        }
        let job_id = record[0].trim().to_string();
        if job_id.is_empty() {
            return Err(fail("empty job_id"));
        }
        let start: i64 = record[3]
            .trim()
            .parse()
            .map_err(|_| fail("bad start timestamp"))?;
        let end: i64 = record[4]
            .trim()
            .parse()
            .map_err(|_| fail("bad end timestamp"))?;
        if end < start {
            return Err(fail("end before start"));
        }
        let mut gpus = std::collections::BTreeSet::new();
        for part in record[5].split(';') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (hostname, gpu_id) = part
                .split_once(':')
                .ok_or_else(|| fail("gpu slot is not hostname:gpu_id"))?;
            if hostname.is_empty() || gpu_id.is_empty() {
                return Err(fail("gpu slot is not hostname:gpu_id"));
            }
            gpus.insert(GpuRef {
                hostname: hostname.to_string(),
                gpu_id: gpu_id.to_string(),
            });
        }
        if gpus.is_empty() {
            return Err(fail("job has no gpu assignments"));
        }
        jobs.push(JobRecord {
            job_id,
            job_name: record[1].trim().to_string(),
            category: JobCategory::parse_lenient(&record[2]),
            start,
            end,
            gpus,
        });
    }
    Ok(jobs)
}

pub fn write_jobs<W: Write>(writer: W, jobs: &[JobRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["job_id", "job_name", "category", "start", "end", "gpus"])?;
    for j in jobs {
        let gpus = j
            .gpus
            .iter()
            .map(|g| format!("{}:{}", g.hostname, g.gpu_id))
            .collect::<Vec<_>>()
            .join(";");
        wtr.write_record([
            j.job_id.as_str(),
            j.job_name.as_str(),
            j.category.as_str(),
            &j.start.to_string(),
            &j.end.to_string(),
            &gpus,
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
