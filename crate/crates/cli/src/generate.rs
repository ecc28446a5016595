//! `execidle generate`: produce synthetic telemetry or trace fixtures with
//! ground truth, from a scenario file or a named built-in.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use execidle_core::report;
use execidle_core::scenario::ScenarioFile;
use execidle_core::sim::trace::{generate_trace, write_trace};
use execidle_core::telemetry::parse::{write_jobs, write_telemetry};
use execidle_core::telemetry::synth::generate_synthetic;

use crate::manifest::RunManifest;
use crate::output;

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scenario TOML file.
    #[arg(long, conflicts_with = "builtin")]
    pub scenario: Option<PathBuf>,

    /// Name of a built-in scenario (see --list).
    #[arg(long)]
    pub builtin: Option<String>,

    /// List built-in scenario names and exit.
    #[arg(long)]
    pub list: bool,

    /// RNG seed; the same seed reproduces the fixture byte for byte.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Fixture output directory.
    #[arg(long, default_value = "execidle-fixture")]
    pub out_dir: PathBuf,
}

pub fn run(args: &GenerateArgs) -> Result<()> {
    if args.list {
        for name in ScenarioFile::builtin_names() {
            println!("{name}");
        }
        return Ok(());
    }

    let (scenario, source) = match (&args.scenario, &args.builtin) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            (ScenarioFile::from_toml_str(&text)?, path.display().to_string())
        }
        (None, Some(name)) => match ScenarioFile::builtin(name) {
            Some(s) => (s, format!("builtin:{name}")),
            None => bail!(
                "unknown built-in scenario `{name}` (try --list)"
            ),
        },
        _ => bail!("exactly one of --scenario or --builtin is required"),
    };

    let mut manifest = RunManifest::new("generate");
    if let Some(path) = &args.scenario {
        manifest.add_input(path)?;
    }
    manifest.seed = Some(args.seed);
    manifest.set("scenario", &source);
    manifest.set("name", scenario.name());

    let out = &args.out_dir;
    match &scenario {
        ScenarioFile::Telemetry(telemetry_scenario) => {
            let dataset = generate_synthetic(telemetry_scenario, args.seed)?;
            write_telemetry(output::create(out, "telemetry.csv")?, &dataset.samples)?;
            write_jobs(output::create(out, "jobs.csv")?, &dataset.jobs)?;
            report::write_truth(output::create(out, "truth.csv")?, &dataset.truth)?;
            report::write_window_truth(
                output::create(out, "window_truth.csv")?,
                &dataset.design.window_truth,
            )?;
            serde_json::to_writer_pretty(output::create(out, "design.json")?, &dataset.design)?;
            if !telemetry_scenario.catalog.is_empty() {
                let toml = dataset.catalog.to_toml_string()?;
                std::io::Write::write_all(
                    &mut output::create(out, "catalog.toml")?,
                    toml.as_bytes(),
                )?;
            }
            manifest.write(out)?;

            output::heading("telemetry fixture");
            output::kv("scenario", scenario.name());
            output::kv("seed", args.seed);
            output::kv("streams", dataset.design.streams);
            output::kv("samples", dataset.design.samples);
            if let Some(f) = dataset.design.designed_time_fraction {
                output::kv("designed time fraction", output::pct(f));
            }
            if let Some(f) = dataset.design.designed_energy_fraction {
                output::kv("designed energy fraction", output::pct(f));
            }
            output::kv("designed intervals", dataset.design.designed_intervals);
        }
        ScenarioFile::Trace(trace_scenario) => {
            let requests = generate_trace(trace_scenario, args.seed)?;
            write_trace(output::create(out, "trace.csv")?, &requests)?;
            manifest.write(out)?;

            output::heading("trace fixture");
            output::kv("scenario", scenario.name());
            output::kv("seed", args.seed);
            output::kv("requests", requests.len());
            output::kv("duration", format!("{} s", trace_scenario.duration));
        }
    }
    output::done(&args.out_dir);
    Ok(())
}
