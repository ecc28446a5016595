//! `execidle analyze`: ingest telemetry + job schedule, classify every
//! stream, and emit the accounting bundle.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use execidle_core::classifier::ClassifierConfig;
use execidle_core::energy::{
    self, analyze_streams, filter_long_jobs, fraction_cdf, in_execution_fractions,
    job_breakdowns, per_job_fractions, robustness_sweep, StateBreakdown,
};
use execidle_core::report;
use execidle_core::telemetry::attribute::attribute_samples;
use execidle_core::telemetry::parse::{merge_parsed, parse_jobs, parse_telemetry};
use execidle_core::telemetry::{GpuCatalog, StreamKey, TelemetrySample};

use crate::manifest::RunManifest;
use crate::output;

/// Job-cutoff × min-interval grid for the sensitivity table.
const ROBUSTNESS_CUTOFFS: [i64; 2] = [3600, 7200];
const ROBUSTNESS_MIN_INTERVALS: [i64; 3] = [1, 5, 10];

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Telemetry CSV file; repeat for multiple files.
    #[arg(long, required = true)]
    pub telemetry: Vec<PathBuf>,

    /// Job schedule CSV.
    #[arg(long)]
    pub jobs: PathBuf,

    /// GPU model catalog TOML; defaults to the built-in fleet.
    #[arg(long)]
    pub catalog: Option<PathBuf>,

    /// Report bundle directory.
    #[arg(long, default_value = "execidle-out")]
    pub out_dir: PathBuf,

    /// Activity cutoff as a fraction of full utilization.
    #[arg(long, default_value_t = ClassifierConfig::default().activity_threshold)]
    pub activity_threshold: f64,

    /// Link-traffic cutoff, MB/s.
    #[arg(long, default_value_t = ClassifierConfig::default().comm_threshold)]
    pub comm_threshold: f64,

    /// Minimum sustained seconds for an execution-idle interval.
    #[arg(long, default_value_t = ClassifierConfig::default().min_interval)]
    pub min_interval: i64,

    /// Largest missing-sample hole bridged inside a run, seconds.
    #[arg(long, default_value_t = ClassifierConfig::default().max_sample_gap)]
    pub max_sample_gap: i64,

    /// Watts above deep idle that imply residency when flags are absent.
    #[arg(long, default_value_t = ClassifierConfig::default().residency_power_margin)]
    pub residency_power_margin: f64,

    /// Ignore jobs shorter than this many seconds (0 keeps everything).
    #[arg(long, default_value_t = 7200)]
    pub job_cutoff: i64,
}

impl AnalyzeArgs {
    fn classifier(&self) -> ClassifierConfig {
        ClassifierConfig {
            activity_threshold: self.activity_threshold,
            comm_threshold: self.comm_threshold,
            min_interval: self.min_interval,
            max_sample_gap: self.max_sample_gap,
            residency_power_margin: self.residency_power_margin,
        }
    }
}

pub fn run(args: &AnalyzeArgs) -> Result<()> {
    let catalog = match &args.catalog {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            GpuCatalog::from_toml_str(&text)?
        }
        None => GpuCatalog::default_fleet(),
    };
    let cfg = args.classifier();

    let mut manifest = RunManifest::new("analyze");
    for path in &args.telemetry {
        manifest.add_input(path)?;
    }
    manifest.add_input(&args.jobs)?;
    if let Some(path) = &args.catalog {
        manifest.add_input(path)?;
    }
    manifest.set("activity_threshold", args.activity_threshold);
    manifest.set("comm_threshold", args.comm_threshold);
    manifest.set("min_interval", args.min_interval);
    manifest.set("max_sample_gap", args.max_sample_gap);
    manifest.set("residency_power_margin", args.residency_power_margin);
    manifest.set("job_cutoff", args.job_cutoff);
    manifest.set(
        "catalog",
        args.catalog
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "builtin".to_string()),
    );
    manifest.set(
        "robustness_cutoffs",
        ROBUSTNESS_CUTOFFS.map(|c| c.to_string()).join(";"),
    );
    manifest.set(
        "robustness_min_intervals",
        ROBUSTNESS_MIN_INTERVALS.map(|c| c.to_string()).join(";"),
    );

    // Ingest.
    let mut parts = Vec::with_capacity(args.telemetry.len());
    for path in &args.telemetry {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        parts.push(parse_telemetry(file, &catalog)?);
    }
    let parsed = merge_parsed(parts, &catalog);
    let jobs_file =
        File::open(&args.jobs).with_context(|| format!("opening {}", args.jobs.display()))?;
    let jobs = parse_jobs(jobs_file)?;
    if parsed.stats.malformed > 0 {
        eprintln!(
            "warning: skipped {} malformed telemetry line(s)",
            parsed.stats.malformed
        );
    }
    if !parsed.stats.unknown_gpu_names.is_empty() {
        let names: Vec<&str> = parsed
            .stats
            .unknown_gpu_names
            .iter()
            .map(|s| s.as_str())
            .collect();
        eprintln!("warning: unknown GPU model(s): {}", names.join(", "));
    }

    // Attribute everything once; the headline analysis then narrows to
    // jobs meeting the cutoff while the sensitivity sweep reuses the full
    // attribution.
    let attribution = attribute_samples(&parsed.samples, &jobs)?;
    let retained = filter_long_jobs(&jobs, args.job_cutoff);
    let retained_ids: BTreeSet<&str> = retained.iter().map(|j| j.job_id.as_str()).collect();
    let streams: BTreeMap<StreamKey, Vec<TelemetrySample>> = attribution
        .streams
        .iter()
        .filter(|(k, _)| retained_ids.contains(k.job_id.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();

    // Classify and account.
    let analyses = analyze_streams(&streams, &catalog, &cfg)?;
    let mut fleet = StateBreakdown::default();
    for a in &analyses {
        fleet.absorb(&a.breakdown);
    }
    let fractions = in_execution_fractions(&fleet);
    let per_job = per_job_fractions(&job_breakdowns(&analyses));
    let time_cdf = fraction_cdf(
        &per_job
            .iter()
            .map(|(_, f)| f.time_fraction)
            .collect::<Vec<_>>(),
    );
    let energy_cdf = fraction_cdf(
        &per_job
            .iter()
            .map(|(_, f)| f.energy_fraction)
            .collect::<Vec<_>>(),
    );
    let intervals: Vec<_> = analyses
        .iter()
        .flat_map(|a| a.intervals.iter().cloned())
        .collect();
    let duration_stats = energy::interval_duration_stats(&intervals);
    let duration_cdf = energy::duration_cdf(&intervals);
    let robustness = robustness_sweep(
        &attribution.streams,
        &jobs,
        &catalog,
        &cfg,
        &ROBUSTNESS_CUTOFFS,
        &ROBUSTNESS_MIN_INTERVALS,
    )?;

    // TDP envelope over the observation span, counting distinct devices
    // per model. A model without a TDP entry degrades to a warning and an
    // empty ratio rather than failing the whole analysis.
    let mut devices: BTreeMap<String, BTreeSet<(String, String)>> = BTreeMap::new();
    let mut span: Option<(i64, i64)> = None;
    for samples in streams.values() {
        for s in samples {
            devices
                .entry(s.gpu_name.clone())
                .or_default()
                .insert((s.hostname.clone(), s.gpu_id.clone()));
            span = Some(match span {
                None => (s.timestamp, s.timestamp),
                Some((lo, hi)) => (lo.min(s.timestamp), hi.max(s.timestamp)),
            });
        }
    }
    let counts: BTreeMap<String, u64> = devices
        .iter()
        .map(|(name, set)| (name.clone(), set.len() as u64))
        .collect();
    let window = span.map(|(lo, hi)| hi - lo + 1).unwrap_or(0);
    let observed = fleet.total_energy();
    let tdp_ratio = match energy::tdp_comparison(&counts, &catalog, window, observed) {
        Ok(r) => Some(r),
        Err(e) => {
            eprintln!("warning: TDP comparison unavailable: {e}");
            None
        }
    };

    // Emit the bundle.
    let out = &args.out_dir;
    report::write_ingest(
        output::create(out, "ingest.csv")?,
        &parsed.stats,
        streams.len() as u64,
        attribution.unallocated.len() as u64,
    )?;
    report::write_attributed(output::create(out, "attributed.jsonl")?, &streams)?;
    let timeline_refs: Vec<_> = analyses.iter().map(|a| &a.timeline).collect();
    report::write_timelines(output::create(out, "timelines.csv")?, &timeline_refs)?;
    report::write_intervals(output::create(out, "intervals.csv")?, &intervals)?;
    report::write_breakdowns(output::create(out, "breakdowns.csv")?, &analyses)?;
    report::write_fleet(output::create(out, "fleet.csv")?, &fleet, &fractions)?;
    report::write_per_job_fractions(output::create(out, "per_job_fractions.csv")?, &per_job)?;
    report::write_cdf(
        output::create(out, "fraction_cdf_time.csv")?,
        "time_fraction",
        &time_cdf,
    )?;
    report::write_cdf(
        output::create(out, "fraction_cdf_energy.csv")?,
        "energy_fraction",
        &energy_cdf,
    )?;
    report::write_duration_stats(
        output::create(out, "durations.csv")?,
        duration_stats.as_ref(),
    )?;
    report::write_cdf(
        output::create(out, "duration_cdf.csv")?,
        "duration",
        &duration_cdf,
    )?;
    report::write_robustness(output::create(out, "robustness.csv")?, &robustness)?;
    report::write_tdp(output::create(out, "tdp.csv")?, observed, window, tdp_ratio)?;
    manifest.write(out)?;

    // Human summary.
    output::heading("analysis");
    output::kv("telemetry files", args.telemetry.len());
    output::kv("data lines", parsed.stats.lines);
    output::kv("malformed / duplicates", format!(
        "{} / {}",
        parsed.stats.malformed, parsed.stats.duplicates
    ));
    output::kv("jobs (after cutoff)", format!("{} ({})", jobs.len(), retained.len()));
    output::kv("streams", streams.len());
    output::kv("unallocated samples", attribution.unallocated.len());
    output::kv(
        "fleet time (deep/exec-idle/active)",
        format!(
            "{} / {} / {} s",
            fleet.deep_idle_time, fleet.exec_idle_time, fleet.active_time
        ),
    );
    output::kv("exec-idle time fraction", output::pct(fractions.time_fraction));
    output::kv(
        "exec-idle energy fraction",
        output::pct(fractions.energy_fraction),
    );
    if let Some(d) = &duration_stats {
        output::kv(
            "interval durations",
            format!("{} intervals, p50 {} s, p90 {} s, p99 {} s", d.count, d.p50, d.p90, d.p99),
        );
    } else {
        output::kv("interval durations", "none");
    }
    match tdp_ratio {
        Some(r) => output::kv("TDP ratio", format!("{r:.3}")),
        None => output::kv("TDP ratio", "unavailable"),
    }
    output::done(&args.out_dir);
    Ok(())
}
