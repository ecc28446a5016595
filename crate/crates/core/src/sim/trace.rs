//! Serving-trace input: parsing, thinning, gap statistics, and synthetic
//! trace scenarios.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One serving request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Request {
    /// Input line number (before sorting); opaque identity.
    pub id: u64,
    /// Seconds relative to replay start.
    pub arrival: f64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceParseOutcome {
    /// Arrival-sorted (stable on ties) accepted requests.
    pub requests: Vec<Request>,
    /// Lines dropped for being malformed, having a negative arrival, or
    /// zero tokens.
    pub rejected: u64,
    /// Well-formed requests arriving after the horizon.
    pub beyond_horizon: u64,
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    arrival_s: f64,
    input_tokens: u64,
    output_tokens: u64,
}

pub const TRACE_HEADER: &str = "arrival_s,input_tokens,output_tokens";

/// Read a `arrival_s,input_tokens,output_tokens` file. Bad lines are
/// counted, not fatal; I/O failures are.
pub fn parse_trace<R: Read>(reader: R, horizon: Option<f64>) -> Result<TraceParseOutcome> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut out = TraceParseOutcome::default();
    for (line, row) in csv_reader.deserialize::<TraceRow>().enumerate() {
        let id = line as u64 + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    return Err(e.into());
                }
                out.rejected += 1;
                continue;
            }
        };
        if !(row.arrival_s >= 0.0) || row.input_tokens == 0 || row.output_tokens == 0 {
            out.rejected += 1;
            continue;
        }
        if let Some(h) = horizon {
            if row.arrival_s > h {
                out.beyond_horizon += 1;
                continue;
            }
        }
        out.requests.push(Request {
            id,
            arrival: row.arrival_s,
            input_tokens: row.input_tokens,
            output_tokens: row.output_tokens,
        });
    }
    out.requests.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
    Ok(out)
}

pub fn write_trace<W: Write>(writer: W, requests: &[Request]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["arrival_s", "input_tokens", "output_tokens"])?;
    for r in requests {
        w.write_record(&[
            r.arrival.to_string(),
            r.input_tokens.to_string(),
            r.output_tokens.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Independent Bernoulli retention at `keep_probability`, one draw per
/// request in order; arrivals are untouched, so the result is a true
/// subset and burst structure survives.
pub fn thin_trace(requests: &[Request], keep_probability: f64, seed: u64) -> Result<Vec<Request>> {
    if !(keep_probability > 0.0 && keep_probability <= 1.0) {
        return Err(Error::Trace(format!(
            "keep_probability must be in (0, 1], got {keep_probability}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(requests
        .iter()
        .filter(|_| rng.random_bool(keep_probability))
        .copied()
        .collect())
}

/// Successive arrival differences pooled across per-GPU streams; streams
/// with fewer than two requests contribute nothing.
pub fn pooled_gaps(streams: &[Vec<f64>]) -> Vec<f64> {
    let mut gaps = Vec::new();
    for arrivals in streams {
        for pair in arrivals.windows(2) {
            gaps.push(pair[1] - pair[0]);
        }
    }
    gaps
}

/// CDF of pooled inter-request gaps as (gap, cumulative rank) points.
pub fn inter_request_cdf(streams: &[Vec<f64>]) -> Vec<(f64, f64)> {
    crate::energy::fraction_cdf(&pooled_gaps(streams))
}

/// Midpoint median of the pooled gaps (mean of the two central order
/// statistics for even counts), `None` when no stream has two requests.
pub fn gap_median(streams: &[Vec<f64>]) -> Option<f64> {
    let mut gaps = pooled_gaps(streams);
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len();
    Some(if n % 2 == 1 {
        gaps[n / 2]
    } else {
        (gaps[n / 2 - 1] + gaps[n / 2]) / 2.0
    })
}

/// Synthetic arrival process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "kebab-case")]
pub enum ArrivalProcess {
    /// Exponential inter-arrival gaps at `rate` requests/second.
    Poisson { rate: f64 },
    /// `burst_size` simultaneous requests every `period` seconds, starting
    /// at t = 0.
    BurstTrain { burst_size: u32, period: f64 },
}

/// Uniform integer token ranges, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenRange {
    pub input_min: u64,
    pub input_max: u64,
    pub output_min: u64,
    pub output_max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceScenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Seconds of arrivals to generate.
    pub duration: f64,
    pub arrivals: ArrivalProcess,
    pub tokens: TokenRange,
}

impl TraceScenario {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::Scenario {
                name: self.name.clone(),
                reason: reason.into(),
            })
        };
        if !(self.duration > 0.0) {
            return fail("duration must be > 0");
        }
        match self.arrivals {
            ArrivalProcess::Poisson { rate } if !(rate > 0.0) => {
                return fail("poisson rate must be > 0")
            }
            ArrivalProcess::BurstTrain { burst_size, period }
                if burst_size == 0 || !(period > 0.0) =>
            {
                return fail("burst train needs burst_size >= 1 and period > 0")
            }
            _ => {}
        }
        let t = &self.tokens;
        if t.input_min == 0 || t.output_min == 0 || t.input_max < t.input_min || t.output_max < t.output_min
        {
            return fail("token ranges must be non-empty with minima >= 1");
        }
        Ok(())
    }
}

/// Generate the scenario's requests, arrival-sorted with ids in emission
/// order. Per request the generator draws gap (Poisson only), then input
/// tokens, then output tokens, so a fixed seed pins the whole trace.
pub fn generate_trace(scenario: &TraceScenario, seed: u64) -> Result<Vec<Request>> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut requests = Vec::new();
    let tokens = &scenario.tokens;
    let draw_tokens = |rng: &mut ChaCha8Rng| {
        (
            rng.random_range(tokens.input_min..=tokens.input_max),
            rng.random_range(tokens.output_min..=tokens.output_max),
        )
    };
    let push = |arrival: f64, rng: &mut ChaCha8Rng, requests: &mut Vec<Request>| {
        let (input_tokens, output_tokens) = draw_tokens(rng);
        requests.push(Request {
            id: requests.len() as u64 + 1,
            arrival,
            input_tokens,
            output_tokens,
        });
    };
    match scenario.arrivals {
        ArrivalProcess::Poisson { rate } => {
            let exp = Exp::new(rate).map_err(|e| Error::Trace(e.to_string()))?;
            let mut t = 0.0f64;
            loop {
                t += exp.sample(&mut rng);
                if t > scenario.duration {
                    break;
                }
                push(t, &mut rng, &mut requests);
            }
        }
        ArrivalProcess::BurstTrain { burst_size, period } => {
            let mut k = 0u64;
            loop {
                let t = k as f64 * period;
                if t >= scenario.duration {
                    break;
                }
                for _ in 0..burst_size {
                    push(t, &mut rng, &mut requests);
                }
                k += 1;
            }
        }
    }
    Ok(requests)
}

/// Poisson arrivals whose median gap is 5 s (rate ln 2 / 5), an hour long:
/// the bursty single-GPU stream the controller experiments replay.
pub fn bursty_trace() -> TraceScenario {
    TraceScenario {
        name: "bursty-trace".into(),
        description: "hour-long Poisson arrivals with a 5 s median inter-request gap".into(),
        duration: 3600.0,
        arrivals: ArrivalProcess::Poisson {
            rate: std::f64::consts::LN_2 / 5.0,
        },
        tokens: TokenRange {
            input_min: 400,
            input_max: 800,
            output_min: 30,
            output_max: 60,
        },
    }
}

/// Four identical one-second requests every two seconds for ten minutes:
/// a 25%-duty load for the consolidation comparison.
pub fn steady_burst() -> TraceScenario {
    TraceScenario {
        name: "steady-burst".into(),
        description: "fixed 4-request bursts every 2 s at one service-second per request".into(),
        duration: 600.0,
        arrivals: ArrivalProcess::BurstTrain {
            burst_size: 4,
            period: 2.0,
        },
        tokens: TokenRange {
            input_min: 1000,
            input_max: 1000,
            output_min: 50,
            output_max: 50,
        },
    }
}

pub fn builtin(name: &str) -> Option<TraceScenario> {
    match name {
        "bursty-trace" => Some(bursty_trace()),
        "steady-burst" => Some(steady_burst()),
        _ => None,
    }
}

pub const BUILTIN_NAMES: [&str; 2] = ["bursty-trace", "steady-burst"];
