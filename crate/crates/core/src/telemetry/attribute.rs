//! Assign samples to the jobs that occupied their GPUs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::telemetry::{JobRecord, StreamKey, TelemetrySample};

/// Partition of a dataset into per-(job, GPU) streams plus the leftovers.
#[derive(Debug, Clone, Default)]
pub struct Attribution {
    /// Samples per attributed stream, in timestamp order.
    pub streams: BTreeMap<StreamKey, Vec<TelemetrySample>>,
    /// Samples covered by no job window, in input order.
    pub unallocated: Vec<TelemetrySample>,
}

impl Attribution {
    pub fn total_samples(&self) -> usize {
        self.streams.values().map(Vec::len).sum::<usize>() + self.unallocated.len()
    }

    /// Streams belonging to one job, in key order.
    pub fn job_streams<'a>(
        &'a self,
        job_id: &'a str,
    ) -> impl Iterator<Item = (&'a StreamKey, &'a Vec<TelemetrySample>)> {
        self.streams
            .iter()
            .filter(move |(k, _)| k.job_id == job_id)
    }
}

/// Attribute each sample to the job whose window `[start, end]` covers its
/// timestamp on its GPU. Fails if two jobs claim the same GPU at
/// overlapping times, naming both offenders.
pub fn attribute_samples(
    samples: &[TelemetrySample],
    jobs: &[JobRecord],
) -> Result<Attribution> {
    // Per-GPU interval index: (start, end, job index), sorted by start.
    let mut index: BTreeMap<(&str, &str), Vec<(i64, i64, usize)>> = BTreeMap::new();
    for (ji, job) in jobs.iter().enumerate() {
        for gpu in &job.gpus {
            index
                .entry((gpu.hostname.as_str(), gpu.gpu_id.as_str()))
                .or_default()
                .push((job.start, job.end, ji));
        }
    }
    for (gpu, intervals) in index.iter_mut() {
        intervals.sort_by_key(|&(start, end, _)| (start, end));
        for pair in intervals.windows(2) {
            let (_, prev_end, prev_ji) = pair[0];
            let (next_start, _, next_ji) = pair[1];
            if next_start <= prev_end {
                return Err(Error::OverlappingJobs {
                    a: jobs[prev_ji].job_id.clone(),
                    b: jobs[next_ji].job_id.clone(),
                    hostname: gpu.0.to_string(),
                    gpu_id: gpu.1.to_string(),
                });
            }
        }
    }

    let mut out = Attribution::default();
    for sample in samples {
        let slot = index.get(&(sample.hostname.as_str(), sample.gpu_id.as_str()));
        let hit = slot.and_then(|intervals| {
            // Last interval starting at or before the sample; disjointness
            // makes it the only candidate.
            let pos = intervals.partition_point(|&(start, _, _)| start <= sample.timestamp);
            if pos == 0 {
                return None;
            }
            let (start, end, ji) = intervals[pos - 1];
            (start <= sample.timestamp && sample.timestamp <= end).then_some(ji)
        });
        match hit {
            Some(ji) => {
                let key = StreamKey {
                    job_id: jobs[ji].job_id.clone(),
                    hostname: sample.hostname.clone(),
                    gpu_id: sample.gpu_id.clone(),
                };
                out.streams.entry(key).or_default().push(sample.clone());
            }
            None => out.unallocated.push(sample.clone()),
        }
    }
    for stream in out.streams.values_mut() {
        stream.sort_by_key(|s| s.timestamp);
    }
    Ok(out)
}
