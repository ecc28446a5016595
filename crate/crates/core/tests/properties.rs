//! Randomized invariant checks over the analysis and replay pipelines.
//!
//! Unit tests pin hand-computed cases; these properties cover the claims
//! that should hold for *any* input: format round-trips, classification
//! against an independent linear-scan oracle, exact conservation under
//! regrouping, threshold monotonicity, and replay determinism and energy
//! monotonicity.

use std::collections::BTreeSet;

use proptest::collection::vec;
use proptest::prelude::*;

use execidle_core::classifier::{
    classify_sample, classify_stream, GpuState, SampleActivityClass,
};
use execidle_core::energy::{
    analyze_streams, fraction_cdf, in_execution_fractions, integrate_energy, job_breakdowns,
    nearest_rank, StateBreakdown,
};
use execidle_core::preidle::{
    cluster_windows, feature_distance, ClusterParams, FeatureVector, Fingerprint, GroupAggregate,
};
use execidle_core::sim::controller::{controller_step, ControllerAction, ControllerState};
use execidle_core::sim::engine::run_simulation;
use execidle_core::sim::trace::{parse_trace, write_trace, Request};
use execidle_core::sim::{
    service_time, ControllerConfig, FreqSetting, PolicyConfig, PolicyKind, PowerModel,
    ServiceRates,
};
use execidle_core::telemetry::attribute::attribute_samples;
use execidle_core::telemetry::parse::{parse_telemetry, write_telemetry};
use execidle_core::telemetry::synth::{
    generate_synthetic, GpuSlot, JobScenario, Phase, PhaseKind, TelemetryScenario,
};
use execidle_core::telemetry::{GpuRef, JobCategory, JobRecord, SignalKind};
use execidle_core::{ClassifierConfig, GpuCatalog, GpuModelSpec, SimConfig, StreamKey, TelemetrySample};

fn l40s() -> GpuModelSpec {
    GpuCatalog::default_fleet().get_or_unknown("L40S")
}

fn key() -> StreamKey {
    StreamKey {
        job_id: "j1".into(),
        hostname: "h1".into(),
        gpu_id: "0".into(),
    }
}

// ---------------------------------------------------------------------------
// Stream generation: per-sample behavior is drawn from a small menu that
// deliberately includes both threshold boundaries (activity exactly at 5%,
// communication exactly at 1000 MB/s) and samples reporting no signals at
// all. Every sample carries an explicit residency flag so the classifier
// properties are independent of the power fallback.

#[derive(Debug, Clone, Copy)]
enum SampleShape {
    QuietSm(f64),    // resident, sm below threshold
    QuietComm(f64),  // resident, pcie below threshold, no activity signals
    NoSignals,       // resident, nothing reported at all
    LoudSm(f64),     // resident, sm at or above threshold
    LoudComm(f64),   // resident, pcie at or above threshold
    Vacated,         // nothing resident
}

fn arb_shape() -> impl Strategy<Value = SampleShape> {
    prop_oneof![
        3 => (0.0f64..4.9).prop_map(SampleShape::QuietSm),
        1 => Just(SampleShape::QuietSm(4.984375)), // highest on-grid value below 5
        2 => (0.0f64..990.0).prop_map(SampleShape::QuietComm),
        1 => Just(SampleShape::NoSignals),
        3 => (5.0f64..100.0).prop_map(SampleShape::LoudSm),
        1 => Just(SampleShape::LoudSm(5.0)),
        2 => (1000.0f64..20000.0).prop_map(SampleShape::LoudComm),
        1 => Just(SampleShape::LoudComm(1000.0)),
        2 => Just(SampleShape::Vacated),
    ]
}

fn build_stream(start: i64, steps: Vec<(i64, SampleShape, f64)>) -> Vec<TelemetrySample> {
    let k = key();
    let mut t = start;
    let mut out = Vec::with_capacity(steps.len());
    for (gap, shape, power) in steps {
        t += gap;
        let mut s = TelemetrySample::new(t, &k.hostname, &k.gpu_id, "L40S", power);
        s.job_id = Some(k.job_id.clone());
        s.proc_resident = Some(!matches!(shape, SampleShape::Vacated));
        match shape {
            SampleShape::QuietSm(v) | SampleShape::LoudSm(v) => s.set_signal(SignalKind::Sm, v),
            SampleShape::QuietComm(v) | SampleShape::LoudComm(v) => {
                s.set_signal(SignalKind::PcieTx, v)
            }
            SampleShape::NoSignals | SampleShape::Vacated => {}
        }
        out.push(s);
    }
    out
}

fn arb_stream() -> impl Strategy<Value = Vec<TelemetrySample>> {
    (
        1_000_000i64..2_000_000,
        vec((1i64..=4, arb_shape(), 20.0f64..200.0), 1..120),
    )
        .prop_map(|(start, steps)| build_stream(start, steps))
}

/// Independent re-derivation of interval detection: a plain left-to-right
/// scan over per-sample classes, splitting runs on holes and filtering by
/// wall duration. Energy is summed over members in stream order.
fn oracle_scan(
    samples: &[TelemetrySample],
    classes: &[SampleActivityClass],
    cfg: &ClassifierConfig,
) -> (Vec<GpuState>, Vec<(i64, i64, i64, f64)>) {
    let mut states: Vec<GpuState> = classes
        .iter()
        .map(|c| match c {
            SampleActivityClass::NoProgram => GpuState::DeepIdle,
            _ => GpuState::Active,
        })
        .collect();
    let mut intervals = Vec::new();
    let mut i = 0;
    while i < samples.len() {
        if classes[i] != SampleActivityClass::LowActivityResident {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < samples.len()
            && classes[j + 1] == SampleActivityClass::LowActivityResident
            && samples[j + 1].timestamp - samples[j].timestamp - 1 <= cfg.max_sample_gap
        {
            j += 1;
        }
        let (start, end) = (samples[i].timestamp, samples[j].timestamp);
        if end - start + 1 >= cfg.min_interval {
            for state in &mut states[i..=j] {
                *state = GpuState::ExecIdle;
            }
            let energy = samples[i..=j].iter().fold(0.0, |acc, s| acc + s.power);
            intervals.push((start, end, end - start + 1, energy));
        }
        i = j + 1;
    }
    (states, intervals)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn interval_detection_matches_linear_scan_oracle(samples in arb_stream()) {
        let cfg = ClassifierConfig::default();
        let spec = l40s();
        let classes: Vec<SampleActivityClass> = samples
            .iter()
            .map(|s| classify_sample(s, s.proc_resident.unwrap(), &cfg))
            .collect();
        let (want_states, want_intervals) = oracle_scan(&samples, &classes, &cfg);

        let (timeline, intervals) = classify_stream(&key(), &samples, &spec, &cfg).unwrap();
        let got_states: Vec<GpuState> = timeline.entries.iter().map(|e| e.state).collect();
        prop_assert_eq!(got_states, want_states);
        prop_assert_eq!(intervals.len(), want_intervals.len());
        for (iv, (start, end, duration, energy)) in intervals.iter().zip(&want_intervals) {
            prop_assert_eq!(iv.start, *start);
            prop_assert_eq!(iv.end, *end);
            prop_assert_eq!(iv.duration, *duration);
            prop_assert_eq!(iv.energy, *energy); // same fold order, so bitwise
            prop_assert_eq!(iv.mean_power, *energy / *duration as f64);
        }
    }

    #[test]
    fn raising_min_interval_only_filters_intervals(
        samples in arb_stream(),
        short in 1i64..=4,
        long in 5i64..=12,
    ) {
        let spec = l40s();
        let lax = ClassifierConfig { min_interval: short, ..Default::default() };
        let strict = ClassifierConfig { min_interval: long, ..lax.clone() };

        let (_, lax_iv) = classify_stream(&key(), &samples, &spec, &lax).unwrap();
        let (strict_tl, strict_iv) = classify_stream(&key(), &samples, &spec, &strict).unwrap();

        // The runs themselves do not depend on min_interval; the stricter
        // setting keeps exactly the long-enough subset.
        let expect: Vec<_> = lax_iv.into_iter().filter(|iv| iv.duration >= long).collect();
        prop_assert_eq!(strict_iv, expect);

        let lax_time = {
            let (tl, _) = classify_stream(&key(), &samples, &spec, &lax).unwrap();
            tl.entries.iter().filter(|e| e.state == GpuState::ExecIdle).count()
        };
        let strict_time = strict_tl
            .entries
            .iter()
            .filter(|e| e.state == GpuState::ExecIdle)
            .count();
        prop_assert!(strict_time <= lax_time);
    }

    #[test]
    fn raising_thresholds_never_removes_exec_idle_time(
        samples in arb_stream(),
        act_lo in 0.01f64..0.4,
        act_extra in 0.0f64..0.5,
        comm_lo in 200.0f64..1500.0,
        comm_extra in 0.0f64..2000.0,
    ) {
        let spec = l40s();
        let lo = ClassifierConfig {
            activity_threshold: act_lo,
            comm_threshold: comm_lo,
            ..Default::default()
        };
        let hi = ClassifierConfig {
            activity_threshold: act_lo + act_extra,
            comm_threshold: comm_lo + comm_extra,
            ..lo.clone()
        };

        let count = |cfg: &ClassifierConfig| {
            let (tl, _) = classify_stream(&key(), &samples, &spec, cfg).unwrap();
            tl.entries.iter().filter(|e| e.state == GpuState::ExecIdle).count()
        };
        // Higher thresholds classify weakly more samples as low-activity,
        // and low runs only ever grow or merge from that.
        prop_assert!(count(&lo) <= count(&hi));
    }
}

// ---------------------------------------------------------------------------
// CSV round-trips. Floats print in shortest round-trip form, so parsing the
// written file must reproduce every sample and request exactly.

fn arb_percent() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![
        2 => Just(None),
        4 => (0.0f64..=100.0).prop_map(Some),
        1 => Just(Some(0.0)),
    ]
}

fn arb_rate() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![
        2 => Just(None),
        4 => (0.0f64..50_000.0).prop_map(Some),
    ]
}

fn arb_full_sample() -> impl Strategy<Value = TelemetrySample> {
    (
        (
            0.0f64..2000.0,
            arb_percent(),
            arb_percent(),
            arb_percent(),
            arb_rate(),
            arb_rate(),
            arb_rate(),
        ),
        (
            arb_rate(),
            arb_percent(),
            arb_rate(),
            proptest::option::of(any::<bool>()),
            proptest::option::of("[a-z]{1,6}"),
            // Commas exercise csv quoting. Empty strings are excluded:
            // an empty field is the encoding of an absent one.
            proptest::option::of("[a-z, ]{1,10}"),
        ),
    )
        .prop_map(|((power, sm, tensor, dram, sm_clk, pcie_tx, nvlink_rx),
                    (nic_tx, cpu_util, mem_clk, proc_resident, job_id, job_name))| {
            let mut s = TelemetrySample::new(0, "h", "0", "L40S", power);
            s.sm = sm;
            s.tensor = tensor;
            s.dram = dram;
            s.sm_clk = sm_clk;
            s.mem_clk = mem_clk;
            s.pcie_tx = pcie_tx;
            s.nvlink_rx = nvlink_rx;
            s.nic_tx = nic_tx;
            s.cpu_util = cpu_util;
            s.proc_resident = proc_resident;
            s.job_id = job_id;
            s.job_name = job_name;
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn telemetry_csv_round_trips_exactly(
        rows in vec(arb_full_sample(), 1..40),
        hosts in 1usize..=2,
    ) {
        // Assign canonical (hostname, gpu_id, timestamp) keys so the parsed
        // order matches the written order.
        let mut samples = rows;
        let per_host = samples.len().div_ceil(hosts);
        for (i, s) in samples.iter_mut().enumerate() {
            s.hostname = format!("h{}", i / per_host);
            s.timestamp = 1_000 + (i % per_host) as i64;
        }
        let mut buf = Vec::new();
        write_telemetry(&mut buf, &samples).unwrap();
        let parsed = parse_telemetry(buf.as_slice(), &GpuCatalog::default_fleet()).unwrap();
        prop_assert_eq!(parsed.stats.malformed, 0);
        prop_assert_eq!(parsed.stats.duplicates, 0);
        prop_assert_eq!(parsed.samples, samples);
    }

    #[test]
    fn trace_csv_round_trips_exactly(
        rows in vec((0.0f64..5000.0, 1u64..100_000, 1u64..10_000), 1..60),
    ) {
        let mut rows = rows;
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let requests: Vec<Request> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (arrival, input_tokens, output_tokens))| Request {
                id: i as u64 + 1,
                arrival,
                input_tokens,
                output_tokens,
            })
            .collect();
        let mut buf = Vec::new();
        write_trace(&mut buf, &requests).unwrap();
        let parsed = parse_trace(buf.as_slice(), None).unwrap();
        prop_assert_eq!(parsed.rejected, 0);
        prop_assert_eq!(parsed.beyond_horizon, 0);
        prop_assert_eq!(parsed.requests, requests);
    }
}

// ---------------------------------------------------------------------------
// Conservation. Synthetic powers sit on a 1/64 W grid, so every partial sum
// is exact in f64 and any regrouping of the same samples must agree to the
// bit: per-state totals against a straight integration, and per-job totals
// against the fleet fold.

fn phase(kind: PhaseKind, duration: i64, power_jitter: f64, signal_jitter: f64) -> Phase {
    Phase {
        kind,
        duration,
        power: None,
        power_jitter,
        signals: Default::default(),
        signal_jitter,
        label: None,
    }
}

fn arb_job(idx: usize) -> impl Strategy<Value = JobScenario> {
    (
        any::<bool>(),
        0i64..40,
        5i64..20,
        vec((3i64..15, 5i64..12), 1..4),
        3i64..10,
        0.0f64..2.0,
        0.0f64..0.1,
        1u32..=2,
        1usize..=2,
    )
        .prop_map(
            move |(emit, offset, deep, cycles, tail, pj, sj, repeat, slots)| {
                let mut phases = Vec::new();
                // A deep prefix is only recoverable by the residency
                // fallback before any activity, so fallback jobs skip it.
                if emit {
                    phases.push(phase(PhaseKind::Deep, deep, pj, sj));
                }
                for (active, gap) in cycles {
                    phases.push(phase(PhaseKind::Active, active, pj, sj));
                    phases.push(phase(PhaseKind::Gap, gap, pj, sj));
                }
                phases.push(phase(PhaseKind::Active, tail, pj, sj));
                JobScenario {
                    job_id: format!("job-{idx}"),
                    job_name: String::new(),
                    category: JobCategory::Unknown,
                    start_offset: offset,
                    gpus: (0..slots)
                        .map(|g| GpuSlot {
                            hostname: format!("host-{idx}"),
                            gpu_id: g.to_string(),
                            gpu_name: "L40S".into(),
                        })
                        .collect(),
                    emit_residency: emit,
                    repeat,
                    phases,
                }
            },
        )
}

fn arb_scenario() -> impl Strategy<Value = TelemetryScenario> {
    (1usize..=3)
        .prop_flat_map(|n| (0..n).map(arb_job).collect::<Vec<_>>())
        .prop_map(|jobs| TelemetryScenario {
            name: "prop".into(),
            description: String::new(),
            epoch: 1_700_000_000,
            catalog: Vec::new(),
            allow_short_gaps: false,
            jobs,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn regrouping_conserves_time_and_energy_exactly(
        scenario in arb_scenario(),
        seed in any::<u64>(),
    ) {
        let dataset = generate_synthetic(&scenario, seed).expect("scenario rejected");
        prop_assert_eq!(dataset.truth.len(), dataset.samples.len());

        let attribution = attribute_samples(&dataset.samples, &dataset.jobs).unwrap();
        prop_assert!(attribution.unallocated.is_empty());
        prop_assert_eq!(attribution.total_samples(), dataset.samples.len());

        let cfg = ClassifierConfig::default();
        let analyses = analyze_streams(&attribution.streams, &dataset.catalog, &cfg).unwrap();

        let mut fleet = StateBreakdown::default();
        let mut direct_time = 0i64;
        let mut direct_energy = 0.0f64;
        for a in &analyses {
            fleet.absorb(&a.breakdown);
            let samples = &attribution.streams[&a.key];
            direct_time += samples.len() as i64;
            direct_energy += integrate_energy(samples).unwrap();
        }
        prop_assert_eq!(fleet.total_time(), direct_time);
        prop_assert_eq!(fleet.total_energy(), direct_energy);

        let mut by_job = StateBreakdown::default();
        for b in job_breakdowns(&analyses).values() {
            by_job.absorb(b);
        }
        prop_assert_eq!(by_job, fleet);

        let f = in_execution_fractions(&fleet);
        prop_assert!((0.0..=1.0).contains(&f.time_fraction));
        prop_assert!((0.0..=1.0).contains(&f.energy_fraction));
    }
}

// ---------------------------------------------------------------------------
// Attribution is a partition: every sample lands in exactly one stream of a
// covering job or in the unallocated pile, with nothing lost or invented.

fn arb_jobs_and_samples() -> impl Strategy<Value = (Vec<JobRecord>, Vec<TelemetrySample>)> {
    let jobs = vec((1i64..30, 5i64..50), 1..4).prop_map(|spans| {
        let mut jobs = Vec::new();
        for (slot, label) in [("a", "ja"), ("b", "jb")] {
            let mut t = 0i64;
            for (i, (gap, len)) in spans.iter().enumerate() {
                t += gap;
                jobs.push(JobRecord {
                    job_id: format!("{label}-{i}"),
                    job_name: String::new(),
                    category: JobCategory::Unknown,
                    start: t,
                    end: t + len,
                    gpus: BTreeSet::from([GpuRef {
                        hostname: slot.into(),
                        gpu_id: "0".into(),
                    }]),
                });
                t += len + 1;
            }
        }
        jobs
    });
    let samples = vec((0usize..=2, 0i64..400, 30.0f64..300.0), 0..80).prop_map(|rows| {
        rows.into_iter()
            .map(|(slot, t, power)| {
                let host = ["a", "b", "c"][slot];
                TelemetrySample::new(t, host, "0", "L40S", power)
            })
            .collect::<Vec<_>>()
    });
    (jobs, samples)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn attribution_partitions_all_samples((jobs, samples) in arb_jobs_and_samples()) {
        let covers = |job: &JobRecord, s: &TelemetrySample| {
            job.start <= s.timestamp
                && s.timestamp <= job.end
                && job.gpus.iter().any(|g| g.hostname == s.hostname && g.gpu_id == s.gpu_id)
        };
        let attribution = attribute_samples(&samples, &jobs).unwrap();
        prop_assert_eq!(attribution.total_samples(), samples.len());
        for (key, members) in &attribution.streams {
            let job = jobs.iter().find(|j| j.job_id == key.job_id).unwrap();
            for s in members {
                prop_assert_eq!(&s.hostname, &key.hostname);
                prop_assert_eq!(&s.gpu_id, &key.gpu_id);
                prop_assert!(covers(job, s));
            }
        }
        for s in &attribution.unallocated {
            prop_assert!(!jobs.iter().any(|j| covers(j, s)));
        }
    }
}

// ---------------------------------------------------------------------------
// Quantiles and CDFs.

proptest! {
    #[test]
    fn nearest_rank_picks_monotone_elements(
        values in vec(-1_000_000i64..1_000_000, 1..200),
        p1 in 0.001f64..=1.0,
        p2 in 0.001f64..=1.0,
    ) {
        let mut sorted = values;
        sorted.sort_unstable();
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        let (qlo, qhi) = (nearest_rank(&sorted, lo), nearest_rank(&sorted, hi));
        prop_assert!(sorted.contains(&qlo));
        prop_assert!(qlo <= qhi);
        prop_assert_eq!(nearest_rank(&sorted, 1.0), *sorted.last().unwrap());
    }

    #[test]
    fn cdf_is_sorted_and_ends_at_one(values in vec(0.0f64..1.0, 1..200)) {
        let cdf = fraction_cdf(&values);
        prop_assert_eq!(cdf.len(), values.len());
        for pair in cdf.windows(2) {
            prop_assert!(pair[0].0 <= pair[1].0);
            prop_assert!(pair[0].1 < pair[1].1);
        }
        prop_assert!((cdf.last().unwrap().1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fractions_ignore_deep_idle(
        times in vec(0i64..1_000_000, 3),
        energies in vec(0.0f64..1e9, 3),
        other_deep_time in 0i64..1_000_000,
        other_deep_energy in 0.0f64..1e9,
    ) {
        let b = StateBreakdown {
            deep_idle_time: times[0],
            exec_idle_time: times[1],
            active_time: times[2],
            deep_idle_energy: energies[0],
            exec_idle_energy: energies[1],
            active_energy: energies[2],
        };
        let mut swapped = b;
        swapped.deep_idle_time = other_deep_time;
        swapped.deep_idle_energy = other_deep_energy;
        prop_assert_eq!(in_execution_fractions(&b), in_execution_fractions(&swapped));
        let f = in_execution_fractions(&b);
        prop_assert!((0.0..=1.0).contains(&f.time_fraction));
        prop_assert!((0.0..=1.0).contains(&f.energy_fraction));
    }
}

// ---------------------------------------------------------------------------
// Controller: folding the step function must match a direct transcription
// of its stated behavior, for arbitrary parameters and activity sequences.

proptest! {
    #[test]
    fn controller_fold_matches_transcription(
        period in 1i64..=2,
        extra in 0i64..=6,
        cooldown in 0i64..=8,
        t0 in 0i64..=5,
        target_mem in any::<bool>(),
        lows in vec(any::<bool>(), 0..60),
    ) {
        let cfg = ControllerConfig {
            trigger_threshold: period + extra,
            cooldown,
            period,
            target: if target_mem { FreqSetting::FMinSmMem } else { FreqSetting::FMinSm },
        };
        cfg.validate().unwrap();

        let mut state = ControllerState::default();
        let mut got = Vec::new();
        let mut want = Vec::new();
        let (mut c, mut cool, mut down) = (0i64, 0i64, false);
        for (i, low) in lows.iter().enumerate() {
            let t = t0 + i as i64 * period;
            let (next, action) = controller_step(&state, &cfg, t, *low);
            state = next;
            got.push(action);

            if *low {
                c += period;
            } else {
                c = 0;
                if down {
                    down = false;
                    cool = t + cooldown;
                    want.push(ControllerAction::Restore);
                    continue;
                }
            }
            if c > cfg.trigger_threshold && t >= cool && !down {
                down = true;
                want.push(ControllerAction::Downscale);
            } else {
                want.push(ControllerAction::None);
            }
        }
        prop_assert_eq!(got, want);
        prop_assert_eq!(state.downscaled, down);
        prop_assert_eq!(state.c, c);
    }
}

// ---------------------------------------------------------------------------
// Replay. Helpers build arbitrary traces and configurations; the properties
// check determinism, exact occupancy accounting, and the two energy/latency
// monotonicity claims of the power model.

fn arb_trace(n: impl Strategy<Value = usize>, max_arrival: f64) -> impl Strategy<Value = Vec<Request>> {
    n.prop_flat_map(move |n| vec((0.0..max_arrival, 1u64..6000, 1u64..400), n))
        .prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (arrival, input_tokens, output_tokens))| Request {
                    id: i as u64 + 1,
                    arrival,
                    input_tokens,
                    output_tokens,
                })
                .collect()
        })
}

fn arb_controller() -> impl Strategy<Value = Option<ControllerConfig>> {
    proptest::option::of((1i64..=5, 0i64..=6, any::<bool>()).prop_map(
        |(trigger, cooldown, mem)| ControllerConfig {
            trigger_threshold: trigger,
            cooldown,
            period: 1,
            target: if mem { FreqSetting::FMinSmMem } else { FreqSetting::FMinSm },
        },
    ))
}

fn arb_config() -> impl Strategy<Value = SimConfig> {
    (
        1usize..=3,
        any::<bool>(),
        1usize..=3,
        arb_controller(),
        60u32..150,
    )
        .prop_map(|(pool, consolidate, k, controller, duration)| SimConfig {
            label: "prop".into(),
            pool_size: pool,
            power: PowerModel::default(),
            policy: if consolidate {
                PolicyConfig {
                    kind: PolicyKind::Consolidate,
                    active_gpu_count: Some(k.min(pool)),
                }
            } else {
                PolicyConfig::default()
            },
            controller,
            rates: ServiceRates::default(),
            duration: duration as f64,
            seed: 0,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn replay_is_deterministic_and_conserves_occupancy(
        requests in arb_trace(0usize..30, 200.0),
        config in arb_config(),
    ) {
        let a = run_simulation(&requests, &config).unwrap();
        let b = run_simulation(&requests, &config).unwrap();
        prop_assert_eq!(&a, &b);

        let horizon_us = (config.duration * 1e6).round() as u64;
        for g in &a.gpus {
            prop_assert_eq!(
                g.deep_us + g.exec_idle_us + g.transition_us + g.service_us,
                horizon_us
            );
        }
        prop_assert_eq!(
            a.summary.requests + a.summary.dropped_after_horizon,
            requests.len() as u64
        );
        prop_assert!((0.0..=1.0).contains(&a.summary.busy_fraction));
    }

    #[test]
    fn controller_never_increases_energy_on_one_gpu(
        requests in arb_trace(0usize..25, 100.0),
        trigger in 1i64..=5,
        cooldown in 0i64..=6,
        target_mem in any::<bool>(),
    ) {
        let mut pinned = SimConfig {
            duration: 120.0,
            ..SimConfig::default()
        };
        pinned.label = "pinned".into();
        let mut controlled = pinned.clone();
        controlled.label = "controlled".into();
        controlled.controller = Some(ControllerConfig {
            trigger_threshold: trigger,
            cooldown,
            period: 1,
            target: if target_mem { FreqSetting::FMinSmMem } else { FreqSetting::FMinSm },
        });

        let base = run_simulation(&requests, &pinned).unwrap();
        let ctl = run_simulation(&requests, &controlled).unwrap();
        prop_assert!(
            ctl.summary.total_energy <= base.summary.total_energy * (1.0 + 1e-9),
            "controlled {} J > pinned {} J",
            ctl.summary.total_energy,
            base.summary.total_energy
        );
    }

    #[test]
    fn lowering_idle_power_lowers_energy_on_fixed_actions(
        requests in arb_trace(0usize..25, 150.0),
        config in arb_config(),
        sm_frac in 0.0f64..=1.0,
        max_frac in 0.0f64..=1.0,
    ) {
        let mut cheaper = config.clone();
        // Lower the reduced-ladder idle draws while keeping the ordering
        // p_deep <= mem <= sm <= max intact.
        let p = &mut cheaper.power;
        p.p_exec_idle_f_min_sm =
            p.p_deep + sm_frac * (p.p_exec_idle_f_min_sm - p.p_deep);
        p.p_exec_idle_f_max = p.p_exec_idle_f_min_sm
            + max_frac * (p.p_exec_idle_f_max - p.p_exec_idle_f_min_sm);

        let base = run_simulation(&requests, &config).unwrap();
        let cut = run_simulation(&requests, &cheaper).unwrap();
        // Power never feeds back into scheduling, so the action trace and
        // every request outcome must be identical...
        prop_assert_eq!(&cut.actions, &base.actions);
        prop_assert_eq!(&cut.requests, &base.requests);
        // ...and only the billed energy may move, downward.
        prop_assert!(cut.summary.total_energy <= base.summary.total_energy * (1.0 + 1e-9));
    }

    #[test]
    fn slowdown_weakly_increases_every_latency_on_fixed_routing(
        gaps in vec((60.0f64..80.0, 1u64..4000, 1u64..200), 1..5),
        first in 6.0f64..10.0,
        s1 in 1.0f64..3.0,
        extra in 0.01f64..1.0,
    ) {
        // Arrivals are spaced so far apart that the controller has
        // downscaled again before every dispatch, for either slowdown: the
        // action schedule is fixed and each latency is transition + W * s.
        let mut requests = Vec::new();
        let mut t = first;
        for (i, (gap, input, output)) in gaps.iter().enumerate() {
            requests.push(Request {
                id: i as u64 + 1,
                arrival: t,
                input_tokens: *input,
                output_tokens: *output,
            });
            t += gap;
        }
        let run = |s: f64| {
            let mut config = SimConfig {
                duration: t + 80.0,
                ..SimConfig::default()
            };
            config.power.slowdown_f_min_sm = 1.0;
            config.power.slowdown_f_min_sm_mem = s;
            config.controller = Some(ControllerConfig {
                target: FreqSetting::FMinSmMem,
                ..ControllerConfig::default()
            });
            run_simulation(&requests, &config).unwrap()
        };
        let slow = run(s1);
        let slower = run(s1 + extra);
        prop_assert_eq!(slow.summary.downscales, slower.summary.downscales);
        prop_assert_eq!(slow.requests.len(), requests.len());
        for (a, b) in slow.requests.iter().zip(&slower.requests) {
            prop_assert_eq!(a.id, b.id);
            prop_assert!(b.latency >= a.latency);
            let req = &requests[a.id as usize - 1];
            let w = service_time(req, &ServiceRates::default(), 1.0);
            prop_assert!((a.latency - (0.25 + w * s1)).abs() < 3e-6);
        }
    }
}

// ---------------------------------------------------------------------------
// Pre-idle features and clustering.

fn arb_feature_vector() -> impl Strategy<Value = FeatureVector> {
    proptest::array::uniform12(prop_oneof![
        2 => Just(None),
        5 => (-5.0f64..5.0).prop_map(Some),
    ])
}

fn arb_fingerprints() -> impl Strategy<Value = Vec<Fingerprint>> {
    let group = prop_oneof![
        1 => Just((None, None)),
        3 => (0.0f64..100.0, 0.0f64..20.0).prop_map(|(mean, d)| (Some(mean), Some(mean + d))),
    ];
    let fp = proptest::array::uniform6(group).prop_map(|groups| Fingerprint {
        groups: groups.map(|(mean, max)| GroupAggregate { mean, max }),
    });
    vec(fp, 0..30)
}

proptest! {
    #[test]
    fn feature_distance_is_symmetric(a in arb_feature_vector(), b in arb_feature_vector()) {
        let d = feature_distance(&a, &b);
        prop_assert_eq!(d, feature_distance(&b, &a));
        prop_assert!(d >= 0.0);
        let shared = (0..12).any(|i| a[i].is_some() && b[i].is_some());
        prop_assert_eq!(d.is_finite(), shared);
        if a.iter().any(Option::is_some) {
            prop_assert_eq!(feature_distance(&a, &a), 0.0);
        }
    }

    #[test]
    fn clustering_partitions_every_window(
        fingerprints in arb_fingerprints(),
        min_cluster_size in 2usize..=5,
        radius in proptest::option::of(0.1f64..3.0),
    ) {
        let params = ClusterParams { min_cluster_size, neighborhood_radius: radius };
        let clustering = cluster_windows(&fingerprints, &params);
        prop_assert_eq!(clustering.assignments.len(), fingerprints.len());
        prop_assert!(clustering.radius >= 0.0);

        let mut seen = vec![false; clustering.cluster_count];
        for a in clustering.assignments.iter().flatten() {
            prop_assert!(*a < clustering.cluster_count);
            seen[*a] = true;
        }
        // Cluster ids are dense: every id has at least one member.
        prop_assert!(seen.into_iter().all(|s| s));
        if fingerprints.len() < min_cluster_size {
            prop_assert_eq!(clustering.cluster_count, 0);
        }
    }
}
