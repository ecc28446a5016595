//! Throughput benchmarks for the three hot paths: per-stream interval
//! detection, fingerprint clustering, and trace replay.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use execidle_core::classifier::{classify_stream, ClassifierConfig};
use execidle_core::preidle::{cluster_windows, ClusterParams, Fingerprint, GroupAggregate};
use execidle_core::sim::engine::run_simulation;
use execidle_core::sim::trace::{generate_trace, steady_burst};
use execidle_core::sim::{ControllerConfig, SimConfig};
use execidle_core::telemetry::{GpuCatalog, StreamKey, TelemetrySample};

/// One day of 1 Hz telemetry alternating 50 s busy / 30 s quiet.
fn day_long_stream() -> Vec<TelemetrySample> {
    (0..86_400)
        .map(|t| {
            let busy = t % 80 < 50;
            let mut s = TelemetrySample::new(
                1_700_000_000 + t,
                "bench-host",
                "0",
                "L40S",
                if busy { 210.0 } else { 98.0 },
            );
            s.sm = Some(if busy { 62.0 } else { 1.2 });
            s.dram = Some(if busy { 41.0 } else { 0.8 });
            s.proc_resident = Some(true);
            s
        })
        .collect()
}

fn bench_interval_detection(c: &mut Criterion) {
    let samples = day_long_stream();
    let key = StreamKey {
        job_id: "bench".into(),
        hostname: "bench-host".into(),
        gpu_id: "0".into(),
    };
    let catalog = GpuCatalog::default_fleet();
    let model = catalog.get_or_unknown("L40S");
    let cfg = ClassifierConfig::default();
    c.bench_function("classify_stream_86400", |b| {
        b.iter(|| classify_stream(&key, black_box(&samples), &model, &cfg).unwrap())
    });
}

fn bench_clustering(c: &mut Criterion) {
    // Four synthetic families, 800 fingerprints total.
    let fingerprints: Vec<Fingerprint> = (0..800)
        .map(|i| {
            let family = i % 4;
            let wobble = (i / 4) as f64 * 0.001;
            let level = |base: f64| GroupAggregate {
                mean: Some(base * (0.8 + wobble)),
                max: Some(base * (1.0 + wobble)),
            };
            let mut groups = [GroupAggregate::default(); 6];
            groups[5] = level(10.0 + 20.0 * family as f64);
            groups[3] = level(30.0 + 15.0 * family as f64);
            groups[family.min(2)] = level(5000.0);
            Fingerprint { groups }
        })
        .collect();
    c.bench_function("cluster_windows_800", |b| {
        b.iter(|| cluster_windows(black_box(&fingerprints), &ClusterParams::default()))
    });
}

fn bench_replay(c: &mut Criterion) {
    let trace = generate_trace(&steady_burst(), 1).unwrap();
    let config = SimConfig {
        pool_size: 8,
        duration: 600.0,
        controller: Some(ControllerConfig::default()),
        ..Default::default()
    };
    c.bench_function("replay_steady_burst_8gpu", |b| {
        b.iter(|| run_simulation(black_box(&trace), &config).unwrap())
    });
}

criterion_group!(
    benches,
    bench_interval_detection,
    bench_clustering,
    bench_replay
);
criterion_main!(benches);
