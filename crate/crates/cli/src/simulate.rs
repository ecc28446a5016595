//! `execidle simulate`: replay a request trace against one or more pool
//! configurations and compare them.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use execidle_core::report;
use execidle_core::sim::engine::{compare_policies, run_simulation};
use execidle_core::sim::trace::parse_trace;
use execidle_core::sim::SimConfigFile;

use crate::manifest::RunManifest;
use crate::output;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Request trace CSV (arrival_s, input_tokens, output_tokens).
    #[arg(long)]
    pub trace: PathBuf,

    /// Simulation config TOML; each `[[configs]]` entry is one run.
    #[arg(long)]
    pub config: PathBuf,

    /// Report bundle directory.
    #[arg(long, default_value = "execidle-sim-out")]
    pub out_dir: PathBuf,
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let configs = SimConfigFile::from_toml_str(&text)?;

    // Labels become file names; collisions would silently overwrite.
    let mut seen = BTreeSet::new();
    for config in &configs.configs {
        let sanitized = output::sanitize_label(&config.label);
        if !seen.insert(sanitized.clone()) {
            bail!("duplicate config label `{}` (as `{sanitized}`)", config.label);
        }
    }

    let trace_file =
        File::open(&args.trace).with_context(|| format!("opening {}", args.trace.display()))?;
    let parsed = parse_trace(trace_file, None)?;
    if parsed.rejected > 0 {
        eprintln!("warning: skipped {} malformed trace line(s)", parsed.rejected);
    }

    let mut manifest = RunManifest::new("simulate");
    manifest.add_input(&args.trace)?;
    manifest.add_input(&args.config)?;
    for config in &configs.configs {
        manifest.set(
            &format!("config.{}.seed", config.label),
            config.seed,
        );
    }
    manifest.set("configs", configs.configs.len());

    let mut results = Vec::with_capacity(configs.configs.len());
    for config in &configs.configs {
        results.push(run_simulation(&parsed.requests, config)?);
    }
    let comparison = compare_policies(&results);

    let out = &args.out_dir;
    for result in &results {
        let stem = output::sanitize_label(&result.summary.label);
        report::write_latencies(output::create(out, &format!("{stem}.latencies.csv"))?, result)?;
        report::write_gpu_outcomes(output::create(out, &format!("{stem}.gpus.csv"))?, result)?;
        report::write_actions(output::create(out, &format!("{stem}.actions.csv"))?, result)?;
    }
    report::write_sim_summaries(output::create(out, "summary.csv")?, &results)?;
    report::write_comparison(output::create(out, "comparison.csv")?, &comparison)?;
    manifest.write(out)?;

    output::heading("simulation");
    output::kv("requests", parsed.requests.len());
    for row in &comparison {
        let ratio = |r: Option<f64>| {
            r.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
        };
        output::kv(
            &row.label,
            format!(
                "avg {:.1} W (x{}), p95 {} (x{}), busy {}",
                row.avg_power,
                ratio(row.energy_ratio),
                row.p95_latency
                    .map(|l| format!("{l:.3} s"))
                    .unwrap_or_else(|| "-".into()),
                ratio(row.p95_ratio),
                output::pct(row.busy_fraction),
            ),
        );
    }
    output::done(&args.out_dir);
    Ok(())
}
