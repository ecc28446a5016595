//! Event-driven replay engine.
//!
//! Time is integer microseconds. Events are totally ordered by
//! (time, kind-priority, insertion sequence) with completions before
//! arrivals before controller ticks at equal times, so a run is a pure
//! function of its inputs.
//!
//! Service model: FIFO, one request at a time per GPU. A request dispatched
//! while the GPU is downscaled first waits out the transition latency (paid
//! at the old setting's idle power) and then runs its whole service time at
//! the dispatch-time setting's slowdown; clock changes take effect only at
//! controller ticks, so an in-flight request is never re-timed. Active
//! power is `p_active / slowdown`, which makes a request's service energy
//! independent of the clock it ran at — the slowdown shows up purely as
//! latency and as longer occupancy.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use super::controller::{controller_step, ControllerAction, ControllerState};
use super::trace::Request;
use super::{service_time, FreqSetting, SimConfig};
use crate::energy::nearest_rank;
use crate::error::{Error, Result};

const US: f64 = 1_000_000.0;

fn secs_to_us(s: f64) -> u64 {
    (s * US).round() as u64
}

fn us_to_secs(us: u64) -> f64 {
    us as f64 / US
}

/// Event priority at equal timestamps: completions free a GPU before the
/// next arrival routes, and the controller tick observes the second only
/// after its boundary events have settled.
const PRIO_COMPLETION: u8 = 0;
const PRIO_ARRIVAL: u8 = 1;
const PRIO_TICK: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    t: u64,
    prio: u8,
    seq: u64,
    /// Completion: GPU index; arrival: request index; tick: unused.
    arg: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SegKind {
    Transition,
    Service,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    start: u64,
    end: u64,
    kind: SegKind,
    power: f64,
}

struct Gpu {
    routed: bool,
    setting: FreqSetting,
    ctl: ControllerState,
    queue: VecDeque<usize>,
    busy: bool,
    /// Non-overlapping, ascending busy spans (transition + service).
    segments: Vec<Segment>,
    /// Setting changes as (tick µs, new setting), ascending.
    setting_changes: Vec<(u64, FreqSetting)>,
}

/// What happened to one accepted request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub id: u64,
    pub arrival: f64,
    pub gpu: usize,
    pub dispatched: f64,
    pub completed: f64,
    pub latency: f64,
}

/// Per-GPU occupancy (microseconds, summing exactly to the horizon) and
/// energy over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpuOutcome {
    pub gpu: usize,
    pub routed: bool,
    pub deep_us: u64,
    pub exec_idle_us: u64,
    pub transition_us: u64,
    pub service_us: u64,
    pub energy: f64,
    pub requests: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    /// Tick time, epoch seconds.
    pub t: i64,
    pub gpu: usize,
    pub action: ControllerAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub label: String,
    pub duration: f64,
    pub requests: u64,
    pub dropped_after_horizon: u64,
    pub total_energy: f64,
    pub avg_power: f64,
    pub p50_latency: Option<f64>,
    pub p95_latency: Option<f64>,
    pub p99_latency: Option<f64>,
    /// Σ service time / (pool size × duration), both clipped at the horizon.
    pub busy_fraction: f64,
    pub downscales: u64,
    pub restores: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub summary: SimSummary,
    pub requests: Vec<RequestOutcome>,
    pub gpus: Vec<GpuOutcome>,
    pub actions: Vec<ActionRecord>,
}

/// True when any busy span intersects the open-closed window
/// `(win_start, win_end]` with positive measure.
fn overlaps_busy(segments: &[Segment], win_start: u64, win_end: u64) -> bool {
    for seg in segments.iter().rev() {
        if seg.end <= win_start {
            // Ends ascend, so everything earlier finished even sooner.
            return false;
        }
        if seg.start < win_end {
            return true;
        }
    }
    false
}

/// Replay `requests` against the configured pool. Deterministic; accepted
/// requests run to completion (even past the horizon) for latency, while
/// energy and occupancy are clipped at the horizon.
pub fn run_simulation(requests: &[Request], config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let horizon = secs_to_us(config.duration);
    let model = &config.power;
    let transition_us = secs_to_us(model.transition_latency);

    let mut accepted: Vec<Request> = Vec::with_capacity(requests.len());
    let mut dropped_after_horizon = 0u64;
    for r in requests {
        if r.arrival < 0.0 {
            return Err(Error::Trace(format!("negative arrival {}", r.arrival)));
        }
        if r.arrival > config.duration {
            dropped_after_horizon += 1;
        } else {
            accepted.push(*r);
        }
    }
    accepted.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));

    let active_set = config.policy.active_set(config.pool_size)?;
    let mut gpus: Vec<Gpu> = (0..config.pool_size)
        .map(|i| Gpu {
            routed: active_set.contains(&i),
            setting: FreqSetting::FMax,
            ctl: ControllerState::default(),
            queue: VecDeque::new(),
            busy: false,
            segments: Vec::new(),
            setting_changes: Vec::new(),
        })
        .collect();

    let mut heap: BinaryHeap<Reverse<Event>> = BinaryHeap::new();
    let mut seq = 0u64;
    let push = |heap: &mut BinaryHeap<Reverse<Event>>, t: u64, prio: u8, arg: usize, seq: &mut u64| {
        heap.push(Reverse(Event {
            t,
            prio,
            seq: *seq,
            arg,
        }));
        *seq += 1;
    };
    for (idx, r) in accepted.iter().enumerate() {
        push(&mut heap, secs_to_us(r.arrival), PRIO_ARRIVAL, idx, &mut seq);
    }
    if let Some(ctl) = &config.controller {
        let period_us = ctl.period as u64 * 1_000_000;
        let mut t = period_us;
        while us_to_secs(t) <= config.duration {
            push(&mut heap, t, PRIO_TICK, 0, &mut seq);
            t += period_us;
        }
    }

    let mut outcomes: Vec<Option<RequestOutcome>> = vec![None; accepted.len()];
    let mut actions: Vec<ActionRecord> = Vec::new();

    // Dispatch the head of a GPU's queue if it is free. Returns the
    // completion time to schedule.
    let dispatch = |g: usize,
                    now: u64,
                    gpus: &mut Vec<Gpu>,
                    accepted: &[Request],
                    outcomes: &mut Vec<Option<RequestOutcome>>|
     -> Option<u64> {
        let gpu = &mut gpus[g];
        if gpu.busy {
            return None;
        }
        let req_idx = gpu.queue.pop_front()?;
        let setting = gpu.setting;
        let wait = if setting != FreqSetting::FMax {
            transition_us
        } else {
            0
        };
        let slowdown = model.slowdown(setting);
        let service_us = secs_to_us(service_time(&accepted[req_idx], &config.rates, slowdown));
        let service_start = now + wait;
        let end = service_start + service_us;
        if wait > 0 {
            gpu.segments.push(Segment {
                start: now,
                end: service_start,
                kind: SegKind::Transition,
                power: model.p_exec_idle(setting),
            });
        }
        gpu.segments.push(Segment {
            start: service_start,
            end,
            kind: SegKind::Service,
            power: model.p_active / slowdown,
        });
        gpu.busy = true;
        let r = &accepted[req_idx];
        outcomes[req_idx] = Some(RequestOutcome {
            id: r.id,
            arrival: r.arrival,
            gpu: g,
            dispatched: us_to_secs(now),
            completed: us_to_secs(end),
            latency: us_to_secs(end) - r.arrival,
        });
        Some(end)
    };

    while let Some(Reverse(ev)) = heap.pop() {
        match ev.prio {
            PRIO_COMPLETION => {
                let g = ev.arg;
                gpus[g].busy = false;
                if let Some(end) = dispatch(g, ev.t, &mut gpus, &accepted, &mut outcomes) {
                    push(&mut heap, end, PRIO_COMPLETION, g, &mut seq);
                }
            }
            PRIO_ARRIVAL => {
                let req_idx = ev.arg;
                // Least-loaded routing over the active set, lowest index on
                // ties.
                let g = *active_set
                    .iter()
                    .min_by_key(|&&i| (gpus[i].queue.len() + gpus[i].busy as usize, i))
                    .expect("active set is non-empty");
                gpus[g].queue.push_back(req_idx);
                if let Some(end) = dispatch(g, ev.t, &mut gpus, &accepted, &mut outcomes) {
                    push(&mut heap, end, PRIO_COMPLETION, g, &mut seq);
                }
            }
            PRIO_TICK => {
                let ctl = config.controller.as_ref().expect("tick without controller");
                let period_us = ctl.period as u64 * 1_000_000;
                let t_s = (ev.t / 1_000_000) as i64;
                for &g in &active_set {
                    let low = !overlaps_busy(&gpus[g].segments, ev.t - period_us, ev.t);
                    let (next, action) = controller_step(&gpus[g].ctl, ctl, t_s, low);
                    gpus[g].ctl = next;
                    match action {
                        ControllerAction::Downscale => {
                            gpus[g].setting = ctl.target;
                            gpus[g].setting_changes.push((ev.t, ctl.target));
                            actions.push(ActionRecord {
                                t: t_s,
                                gpu: g,
                                action,
                            });
                        }
                        ControllerAction::Restore => {
                            gpus[g].setting = FreqSetting::FMax;
                            gpus[g].setting_changes.push((ev.t, FreqSetting::FMax));
                            actions.push(ActionRecord {
                                t: t_s,
                                gpu: g,
                                action,
                            });
                        }
                        ControllerAction::None => {}
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    // Account occupancy and energy per GPU over [0, horizon].
    let mut gpu_outcomes = Vec::with_capacity(config.pool_size);
    for (i, gpu) in gpus.iter().enumerate() {
        let mut out = GpuOutcome {
            gpu: i,
            routed: gpu.routed,
            deep_us: 0,
            exec_idle_us: 0,
            transition_us: 0,
            service_us: 0,
            energy: 0.0,
            requests: 0,
        };
        if !gpu.routed {
            out.deep_us = horizon;
            out.energy = model.p_deep * us_to_secs(horizon);
            gpu_outcomes.push(out);
            continue;
        }
        let changes = &gpu.setting_changes;
        let mut ptr = 0usize;
        let mut cur = FreqSetting::FMax;
        let integrate_idle = |from: u64, to: u64, ptr: &mut usize, cur: &mut FreqSetting, out: &mut GpuOutcome| {
            let mut from = from;
            while *ptr < changes.len() && changes[*ptr].0 <= from {
                *cur = changes[*ptr].1;
                *ptr += 1;
            }
            while from < to {
                let piece_end = match changes.get(*ptr) {
                    Some(&(t, _)) if t < to => t,
                    _ => to,
                };
                out.exec_idle_us += piece_end - from;
                out.energy += model.p_exec_idle(*cur) * us_to_secs(piece_end - from);
                if let Some(&(t, s)) = changes.get(*ptr) {
                    if t == piece_end {
                        *cur = s;
                        *ptr += 1;
                    }
                }
                from = piece_end;
            }
        };
        let mut cursor = 0u64;
        for seg in &gpu.segments {
            let busy_start = seg.start.min(horizon);
            let busy_end = seg.end.min(horizon);
            integrate_idle(cursor, busy_start, &mut ptr, &mut cur, &mut out);
            if busy_end > busy_start {
                let len = busy_end - busy_start;
                match seg.kind {
                    SegKind::Transition => out.transition_us += len,
                    SegKind::Service => out.service_us += len,
                }
                out.energy += seg.power * us_to_secs(len);
            }
            cursor = cursor.max(busy_end);
            if seg.kind == SegKind::Service {
                out.requests += 1;
            }
        }
        integrate_idle(cursor, horizon, &mut ptr, &mut cur, &mut out);
        debug_assert_eq!(
            out.deep_us + out.exec_idle_us + out.transition_us + out.service_us,
            horizon
        );
        gpu_outcomes.push(out);
    }

    let request_outcomes: Vec<RequestOutcome> = outcomes
        .into_iter()
        .map(|o| o.expect("every accepted request is eventually served"))
        .collect();
    let mut latencies: Vec<f64> = request_outcomes.iter().map(|r| r.latency).collect();
    latencies.sort_by(f64::total_cmp);
    let quantile = |p: f64| -> Option<f64> {
        (!latencies.is_empty()).then(|| nearest_rank(&latencies, p))
    };
    let total_energy: f64 = gpu_outcomes.iter().map(|g| g.energy).sum();
    let service_total: u64 = gpu_outcomes.iter().map(|g| g.service_us).sum();
    let summary = SimSummary {
        label: config.label.clone(),
        duration: config.duration,
        requests: request_outcomes.len() as u64,
        dropped_after_horizon,
        total_energy,
        avg_power: total_energy / config.duration,
        p50_latency: quantile(0.50),
        p95_latency: quantile(0.95),
        p99_latency: quantile(0.99),
        busy_fraction: us_to_secs(service_total) / (config.pool_size as f64 * config.duration),
        downscales: actions
            .iter()
            .filter(|a| a.action == ControllerAction::Downscale)
            .count() as u64,
        restores: actions
            .iter()
            .filter(|a| a.action == ControllerAction::Restore)
            .count() as u64,
    };

    Ok(SimResult {
        summary,
        requests: request_outcomes,
        gpus: gpu_outcomes,
        actions,
    })
}

/// One comparison line, normalized to the first (baseline) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub total_energy: f64,
    pub energy_ratio: Option<f64>,
    pub avg_power: f64,
    pub p95_latency: Option<f64>,
    pub p95_ratio: Option<f64>,
    pub busy_fraction: f64,
    pub busy_ratio: Option<f64>,
}

pub fn compare_policies(results: &[SimResult]) -> Vec<ComparisonRow> {
    let Some(base) = results.first() else {
        return Vec::new();
    };
    let ratio = |x: f64, b: f64| (b != 0.0).then(|| x / b);
    results
        .iter()
        .map(|r| ComparisonRow {
            label: r.summary.label.clone(),
            total_energy: r.summary.total_energy,
            energy_ratio: ratio(r.summary.total_energy, base.summary.total_energy),
            avg_power: r.summary.avg_power,
            p95_latency: r.summary.p95_latency,
            p95_ratio: match (r.summary.p95_latency, base.summary.p95_latency) {
                (Some(x), Some(b)) if b != 0.0 => Some(x / b),
                _ => None,
            },
            busy_fraction: r.summary.busy_fraction,
            busy_ratio: ratio(r.summary.busy_fraction, base.summary.busy_fraction),
        })
        .collect()
}
