//! `execidle preidle`: fingerprint the telemetry immediately before each
//! execution-idle interval, cluster the fingerprints, and label the
//! clusters. Consumes the bundle a previous `analyze` run wrote.

use std::fs::File;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use execidle_core::preidle::{
    cluster_windows, extract_windows, featurize, label_clusters, ClusterParams, LabelRules,
};
use execidle_core::report;

use crate::manifest::RunManifest;
use crate::output;

#[derive(Debug, Args)]
pub struct PreidleArgs {
    /// Bundle directory from a previous `analyze` run.
    #[arg(long)]
    pub analysis: PathBuf,

    /// Report bundle directory.
    #[arg(long, default_value = "execidle-preidle-out")]
    pub out_dir: PathBuf,

    /// Seconds of telemetry to take before each interval.
    #[arg(long, default_value_t = 10)]
    pub window_len: i64,

    /// Minimum neighborhood population for a core point (and the k used by
    /// the radius heuristic).
    #[arg(long, default_value_t = ClusterParams::default().min_cluster_size)]
    pub min_cluster_size: usize,

    /// Neighborhood radius in standardized feature space; estimated from
    /// the k-distance distribution when omitted.
    #[arg(long)]
    pub radius: Option<f64>,

    /// How far the leading group must stand above the runner-up, in
    /// standard deviations, before a cluster takes its name.
    #[arg(long, default_value_t = LabelRules::default().dominance_margin)]
    pub dominance_margin: f64,

    /// Host-CPU z-score at or above which transfer labels are considered
    /// host-driven.
    #[arg(long, default_value_t = LabelRules::default().cpu_elevated)]
    pub cpu_elevated: f64,
}

pub fn run(args: &PreidleArgs) -> Result<()> {
    let open = |name: &str| -> Result<File> {
        let path = args.analysis.join(name);
        File::open(&path).with_context(|| format!("opening {}", path.display()))
    };
    let streams = report::read_attributed(open("attributed.jsonl")?)?;
    let timelines = report::read_timelines(open("timelines.csv")?)?;
    let intervals = report::read_intervals(open("intervals.csv")?)?;

    let mut manifest = RunManifest::new("preidle");
    for name in ["attributed.jsonl", "timelines.csv", "intervals.csv"] {
        manifest.add_input(&args.analysis.join(name))?;
    }
    manifest.set("window_len", args.window_len);
    manifest.set("min_cluster_size", args.min_cluster_size);
    manifest.set(
        "radius",
        args.radius
            .map(|r| r.to_string())
            .unwrap_or_else(|| "auto".to_string()),
    );
    manifest.set("dominance_margin", args.dominance_margin);
    manifest.set("cpu_elevated", args.cpu_elevated);

    let extraction = extract_windows(&intervals, &timelines, &streams, args.window_len);
    let fingerprints: Vec<_> = extraction.windows.iter().map(featurize).collect();
    let params = ClusterParams {
        min_cluster_size: args.min_cluster_size,
        neighborhood_radius: args.radius,
    };
    let clustering = cluster_windows(&fingerprints, &params);
    let rules = LabelRules {
        dominance_margin: args.dominance_margin,
        cpu_elevated: args.cpu_elevated,
    };
    let labels = label_clusters(&clustering, &rules);
    if labels.labeled_windows == 0 {
        eprintln!(
            "warning: no clusters found ({} window(s), all noise); share table is empty",
            extraction.windows.len()
        );
    }

    let out = &args.out_dir;
    report::write_windows(output::create(out, "windows.csv")?, &extraction)?;
    report::write_fingerprints(
        output::create(out, "fingerprints.csv")?,
        &extraction.windows,
        &fingerprints,
    )?;
    report::write_clusters(output::create(out, "clusters.csv")?, &labels)?;
    report::write_window_labels(
        output::create(out, "window_labels.csv")?,
        &extraction.windows,
        &clustering,
        &labels,
    )?;
    report::write_shares(output::create(out, "shares.csv")?, &labels)?;
    report::write_preidle_summary(
        output::create(out, "summary.csv")?,
        &extraction,
        &clustering,
        &labels,
    )?;
    manifest.write(out)?;

    output::heading("pre-idle fingerprints");
    output::kv("intervals", intervals.len());
    output::kv("windows", extraction.windows.len());
    output::kv("skipped (no lead-in)", extraction.skipped);
    output::kv("clusters", clustering.cluster_count);
    output::kv("radius", format!("{:.4}", clustering.radius));
    output::kv(
        "labeled / noise",
        format!("{} / {}", labels.labeled_windows, labels.noise_windows),
    );
    for (label, share) in &labels.shares {
        output::kv(&format!("share {label}"), output::pct(*share));
    }
    output::done(&args.out_dir);
    Ok(())
}
