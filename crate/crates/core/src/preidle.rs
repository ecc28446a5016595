//! Pre-idle fingerprinting.
//!
//! For every qualifying execution-idle interval we grab up to 10 s of the
//! telemetry that led into it (stopping at the edge of the nearest preceding
//! active stretch), summarize each window into per-signal-group mean/max
//! features, standardize those over the window population, cluster them with
//! a deterministic density method, and name each cluster by the group that
//! stands out in its centroid.
//!
//! Absent signals stay absent throughout: a GPU that never reports NVLink
//! contributes no NVLink feature, and distances between partially observed
//! fingerprints are computed over the shared dimensions only, rescaled by
//! `sqrt(total/shared)` so sparsity does not shrink them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::{ExecIdleInterval, GpuState, StateTimeline};
use crate::energy::nearest_rank;
use crate::telemetry::{StreamKey, TelemetrySample};

/// Signal groups summarized per window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureGroup {
    Pcie,
    Nic,
    Nvlink,
    Sm,
    Dram,
    Cpu,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 6] = [
        FeatureGroup::Pcie,
        FeatureGroup::Nic,
        FeatureGroup::Nvlink,
        FeatureGroup::Sm,
        FeatureGroup::Dram,
        FeatureGroup::Cpu,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureGroup::Pcie => "pcie",
            FeatureGroup::Nic => "nic",
            FeatureGroup::Nvlink => "nvlink",
            FeatureGroup::Sm => "sm",
            FeatureGroup::Dram => "dram",
            FeatureGroup::Cpu => "cpu",
        }
    }

    /// The group's reading for one sample: max over whichever of its
    /// signals the sample reports, `None` when it reports none of them.
    fn sample_value(&self, s: &TelemetrySample) -> Option<f64> {
        let candidates: &[Option<f64>] = match self {
            FeatureGroup::Pcie => &[s.pcie_tx, s.pcie_rx],
            FeatureGroup::Nic => &[s.nic_tx, s.nic_rx],
            FeatureGroup::Nvlink => &[s.nvlink_tx, s.nvlink_rx],
            FeatureGroup::Sm => &[s.sm, s.tensor, s.fp16, s.fp32, s.fp64],
            FeatureGroup::Dram => &[s.dram],
            FeatureGroup::Cpu => &[s.cpu_util],
        };
        candidates
            .iter()
            .flatten()
            .copied()
            .reduce(f64::max)
    }
}

/// Telemetry covering up to `window_len` seconds before one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct PreIdleWindow {
    pub key: StreamKey,
    /// Start timestamp of the interval the window precedes.
    pub interval_start: i64,
    /// Window samples in time order, all strictly before `interval_start`.
    pub samples: Vec<TelemetrySample>,
}

#[derive(Debug, Clone, Default)]
pub struct WindowExtraction {
    pub windows: Vec<PreIdleWindow>,
    /// Intervals with no preceding active sample in range.
    pub skipped: u64,
}

/// Collect the pre-idle window for every interval: samples in
/// `[start - window_len, start)` walking back only while the timeline says
/// active, so the window never reaches past the preceding active segment.
pub fn extract_windows(
    intervals: &[ExecIdleInterval],
    timelines: &BTreeMap<StreamKey, StateTimeline>,
    streams: &BTreeMap<StreamKey, Vec<TelemetrySample>>,
    window_len: i64,
) -> WindowExtraction {
    let mut out = WindowExtraction::default();
    for interval in intervals {
        let (Some(samples), Some(timeline)) =
            (streams.get(&interval.key), timelines.get(&interval.key))
        else {
            out.skipped += 1;
            continue;
        };
        let idx = samples.partition_point(|s| s.timestamp < interval.start);
        let mut collected = Vec::new();
        for j in (0..idx).rev() {
            if samples[j].timestamp < interval.start - window_len
                || timeline.entries[j].state != GpuState::Active
            {
                break;
            }
            collected.push(samples[j].clone());
        }
        if collected.is_empty() {
            out.skipped += 1;
            continue;
        }
        collected.reverse();
        out.windows.push(PreIdleWindow {
            key: interval.key.clone(),
            interval_start: interval.start,
            samples: collected,
        });
    }
    out
}

/// Mean and max of one group over a window; absent when no window sample
/// reports any of the group's signals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupAggregate {
    pub mean: Option<f64>,
    pub max: Option<f64>,
}

/// Window summary in native units, one aggregate per group in
/// [`FeatureGroup::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub groups: [GroupAggregate; 6],
}

impl Fingerprint {
    pub fn group(&self, g: FeatureGroup) -> GroupAggregate {
        self.groups[FeatureGroup::ALL.iter().position(|x| *x == g).unwrap()]
    }
}

pub fn featurize(window: &PreIdleWindow) -> Fingerprint {
    let mut groups = [GroupAggregate::default(); 6];
    for (slot, group) in groups.iter_mut().zip(FeatureGroup::ALL) {
        let values: Vec<f64> = window
            .samples
            .iter()
            .filter_map(|s| group.sample_value(s))
            .collect();
        if !values.is_empty() {
            let sum: f64 = values.iter().sum();
            *slot = GroupAggregate {
                mean: Some(sum / values.len() as f64),
                max: values.iter().copied().reduce(f64::max),
            };
        }
    }
    Fingerprint { groups }
}

/// Standardized feature vector: 12 dimensions, `[group][mean, max]` in
/// group order, absent where the fingerprint had no value.
pub type FeatureVector = [Option<f64>; 12];

fn raw_vector(fp: &Fingerprint) -> FeatureVector {
    let mut v = [None; 12];
    for (g, agg) in fp.groups.iter().enumerate() {
        v[2 * g] = agg.mean;
        v[2 * g + 1] = agg.max;
    }
    v
}

/// Z-score every dimension over the fingerprint population; a dimension
/// with zero variance standardizes to 0 wherever present.
pub fn standardize(fingerprints: &[Fingerprint]) -> Vec<FeatureVector> {
    let raw: Vec<FeatureVector> = fingerprints.iter().map(raw_vector).collect();
    let mut out = raw.clone();
    for dim in 0..12 {
        let values: Vec<f64> = raw.iter().filter_map(|v| v[dim]).collect();
        if values.is_empty() {
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for v in out.iter_mut() {
            if let Some(x) = v[dim] {
                v[dim] = Some(if sd > 0.0 { (x - mean) / sd } else { 0.0 });
            }
        }
    }
    out
}

/// Euclidean distance over the dimensions both vectors report, rescaled by
/// `sqrt(total/shared)`; no shared dimensions → infinite.
pub fn feature_distance(a: &FeatureVector, b: &FeatureVector) -> f64 {
    let mut shared = 0usize;
    let mut sum = 0.0;
    for dim in 0..12 {
        if let (Some(x), Some(y)) = (a[dim], b[dim]) {
            shared += 1;
            sum += (x - y) * (x - y);
        }
    }
    if shared == 0 {
        return f64::INFINITY;
    }
    (sum * (12.0 / shared as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    /// Minimum neighborhood population (the point itself counts) for a
    /// core point, and the smallest cluster that can form.
    pub min_cluster_size: usize,
    /// Explicit neighborhood radius in standardized units; when absent the
    /// radius is set to the 90th-percentile k-nearest-neighbor distance
    /// with k = `min_cluster_size`.
    pub neighborhood_radius: Option<f64>,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            min_cluster_size: 5,
            neighborhood_radius: None,
        }
    }
}

/// Flat density clustering result; assignments parallel the input order,
/// `None` meaning noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<Option<usize>>,
    pub cluster_count: usize,
    /// Radius actually used (resolved from the heuristic when not given).
    pub radius: f64,
    pub standardized: Vec<FeatureVector>,
}

/// Density clustering on standardized features: points with at least
/// `min_cluster_size` neighbors within the radius are core, clusters are
/// the connected components of core points plus any border points within
/// radius of them, everything else is noise. Fully deterministic: cluster
/// ids and border attachment follow input order.
pub fn cluster_windows(fingerprints: &[Fingerprint], params: &ClusterParams) -> Clustering {
    let standardized = standardize(fingerprints);
    let n = standardized.len();
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = feature_distance(&standardized[i], &standardized[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let radius = params.neighborhood_radius.unwrap_or_else(|| {
        // k-distance heuristic: p90 of each point's k-th nearest neighbor.
        let k = params.min_cluster_size;
        let mut kdists: Vec<f64> = Vec::new();
        for i in 0..n {
            let mut row: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| dist[i * n + j])
                .filter(|d| d.is_finite())
                .collect();
            if row.len() < k {
                continue;
            }
            row.sort_by(f64::total_cmp);
            kdists.push(row[k - 1]);
        }
        if kdists.is_empty() {
            return 1.0;
        }
        kdists.sort_by(f64::total_cmp);
        nearest_rank(&kdists, 0.9)
    });

    let mut assignments: Vec<Option<usize>> = vec![None; n];
    let mut cluster_count = 0usize;
    if n >= params.min_cluster_size {
        let neighbors = |i: usize| -> Vec<usize> {
            (0..n).filter(|&j| dist[i * n + j] <= radius).collect()
        };
        let core: Vec<bool> = (0..n)
            .map(|i| neighbors(i).len() >= params.min_cluster_size)
            .collect();
        for seed in 0..n {
            if !core[seed] || assignments[seed].is_some() {
                continue;
            }
            let id = cluster_count;
            cluster_count += 1;
            assignments[seed] = Some(id);
            let mut queue = std::collections::VecDeque::from([seed]);
            while let Some(p) = queue.pop_front() {
                for j in neighbors(p) {
                    if assignments[j].is_some() {
                        continue;
                    }
                    assignments[j] = Some(id);
                    if core[j] {
                        queue.push_back(j);
                    }
                }
            }
        }
    }

    Clustering {
        assignments,
        cluster_count,
        radius,
        standardized,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreIdleLabel {
    PcieHeavy,
    NicHeavy,
    NvlinkHeavy,
    ComputeToIdle,
    Other,
}

impl PreIdleLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PreIdleLabel::PcieHeavy => "pcie-heavy",
            PreIdleLabel::NicHeavy => "nic-heavy",
            PreIdleLabel::NvlinkHeavy => "nvlink-heavy",
            PreIdleLabel::ComputeToIdle => "compute-to-idle",
            PreIdleLabel::Other => "other",
        }
    }
}

impl std::fmt::Display for PreIdleLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelRules {
    /// A group is dominant when its standardized max exceeds the runner-up
    /// by at least this many z-units.
    pub dominance_margin: f64,
    /// CPU counts as elevated at or above this standardized level.
    pub cpu_elevated: f64,
}

impl Default for LabelRules {
    fn default() -> Self {
        Self {
            dominance_margin: 0.5,
            cpu_elevated: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledCluster {
    pub cluster_id: usize,
    pub size: u64,
    pub label: PreIdleLabel,
    /// Mean standardized feature vector over members (per-dimension over
    /// the members reporting that dimension).
    pub centroid: FeatureVector,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelReport {
    pub clusters: Vec<LabeledCluster>,
    /// Share of each label over labeled (non-noise) windows; sums to 1
    /// when anything was labeled.
    pub shares: BTreeMap<PreIdleLabel, f64>,
    pub labeled_windows: u64,
    pub noise_windows: u64,
}

impl LabelReport {
    /// Per-window labels in input order, `None` for noise.
    pub fn window_labels(&self, clustering: &Clustering) -> Vec<Option<PreIdleLabel>> {
        clustering
            .assignments
            .iter()
            .map(|a| a.map(|id| self.clusters[id].label))
            .collect()
    }
}

/// Index of a group's `max` dimension inside a [`FeatureVector`].
fn max_dim(g: FeatureGroup) -> usize {
    2 * FeatureGroup::ALL.iter().position(|x| *x == g).unwrap() + 1
}

/// Name a centroid by its standout group. Transfer groups compete on their
/// standardized window-max level: NVLink wins outright; PCIe and NIC also
/// need elevated CPU (the host is doing the moving); compute (max of SM
/// and DRAM) wins when it stands out; anything without a clear winner is
/// `other`.
fn label_centroid(centroid: &FeatureVector, rules: &LabelRules) -> PreIdleLabel {
    let compute = match (
        centroid[max_dim(FeatureGroup::Sm)],
        centroid[max_dim(FeatureGroup::Dram)],
    ) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    };
    let competitors = [
        (PreIdleLabel::NvlinkHeavy, centroid[max_dim(FeatureGroup::Nvlink)]),
        (PreIdleLabel::PcieHeavy, centroid[max_dim(FeatureGroup::Pcie)]),
        (PreIdleLabel::NicHeavy, centroid[max_dim(FeatureGroup::Nic)]),
        (PreIdleLabel::ComputeToIdle, compute),
    ];
    let mut present: Vec<(PreIdleLabel, f64)> = competitors
        .iter()
        .filter_map(|(l, v)| v.map(|v| (*l, v)))
        .collect();
    if present.is_empty() {
        return PreIdleLabel::Other;
    }
    present.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (top, top_z) = present[0];
    let runner_up = present.get(1).map(|(_, z)| *z).unwrap_or(f64::NEG_INFINITY);
    if top_z - runner_up < rules.dominance_margin {
        return PreIdleLabel::Other;
    }
    let cpu_elevated = centroid[max_dim(FeatureGroup::Cpu)]
        .map(|z| z >= rules.cpu_elevated)
        .unwrap_or(false);
    match top {
        PreIdleLabel::NvlinkHeavy => PreIdleLabel::NvlinkHeavy,
        PreIdleLabel::PcieHeavy if cpu_elevated => PreIdleLabel::PcieHeavy,
        PreIdleLabel::NicHeavy if cpu_elevated => PreIdleLabel::NicHeavy,
        PreIdleLabel::ComputeToIdle => PreIdleLabel::ComputeToIdle,
        _ => PreIdleLabel::Other,
    }
}

/// Label every cluster from its centroid and compute label shares over the
/// labeled windows.
pub fn label_clusters(clustering: &Clustering, rules: &LabelRules) -> LabelReport {
    let mut report = LabelReport::default();
    for id in 0..clustering.cluster_count {
        let members: Vec<usize> = clustering
            .assignments
            .iter()
            .enumerate()
            .filter_map(|(i, a)| (*a == Some(id)).then_some(i))
            .collect();
        let mut centroid: FeatureVector = [None; 12];
        for (dim, slot) in centroid.iter_mut().enumerate() {
            let values: Vec<f64> = members
                .iter()
                .filter_map(|&i| clustering.standardized[i][dim])
                .collect();
            if !values.is_empty() {
                *slot = Some(values.iter().sum::<f64>() / values.len() as f64);
            }
        }
        report.clusters.push(LabeledCluster {
            cluster_id: id,
            size: members.len() as u64,
            label: label_centroid(&centroid, rules),
            centroid,
        });
    }
    report.noise_windows = clustering.assignments.iter().filter(|a| a.is_none()).count() as u64;
    report.labeled_windows = clustering.assignments.len() as u64 - report.noise_windows;
    if report.labeled_windows > 0 {
        for c in &report.clusters {
            *report.shares.entry(c.label).or_insert(0.0) +=
                c.size as f64 / report.labeled_windows as f64;
        }
    }
    report
}
