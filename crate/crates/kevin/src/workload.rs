//! Synthetic flow workload generation (skewed elephant/mice mixes,
//! all-to-all, permutation) and CSV trace ingestion, all seeded for
//! reproducibility.

use std::fmt;
use std::io::BufRead;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::debruijn::AddressSpace;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload parameter {key}: {reason}")]
    InvalidParameter { key: &'static str, reason: String },
    #[error("trace line {line}: {reason}")]
    Trace { line: usize, reason: String },
    #[error("io error reading trace: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Skewed,
    AllToAll,
    Permutation,
    Trace,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Pattern::Skewed => "skewed",
            Pattern::AllToAll => "all_to_all",
            Pattern::Permutation => "permutation",
            Pattern::Trace => "trace",
        };
        f.write_str(s)
    }
}

/// How ToR endpoints are written in trace files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceAddressing {
    Symbols,
    Index,
}

#[derive(Debug, Clone)]
pub struct WorkloadSpec {
    pub pattern: Pattern,
    pub duration: f64,
    /// Mean flow arrival rate (flows per time unit) for the skewed pattern.
    pub arrival_rate: f64,
    pub elephant_bytes: f64,
    pub mice_bytes: f64,
    /// Fraction of bytes concentrated on the elephant pair set.
    pub elephant_byte_fraction: f64,
    /// Fraction of ordered ToR pairs designated as elephant pairs.
    pub pair_fraction: f64,
    /// Draw sizes from a Pareto tail around the configured means instead of
    /// fixed sizes.
    pub heavy_tail: bool,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            pattern: Pattern::Skewed,
            duration: 10.0,
            arrival_rate: 10.0,
            elephant_bytes: 1e7,
            mice_bytes: 1e4,
            elephant_byte_fraction: 0.9,
            pair_fraction: 0.1,
            heavy_tail: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub arrival: f64,
    pub src: usize,
    pub dst: usize,
    pub bytes: f64,
}

fn validate(spec: &WorkloadSpec) -> Result<(), WorkloadError> {
    let checks: [(&'static str, bool, String); 6] = [
        (
            "workload.duration",
            spec.duration > 0.0,
            format!("must be positive, got {}", spec.duration),
        ),
        (
            "workload.rate",
            spec.arrival_rate > 0.0,
            format!("must be positive, got {}", spec.arrival_rate),
        ),
        (
            "workload.elephant_bytes",
            spec.elephant_bytes > 0.0,
            format!("must be positive, got {}", spec.elephant_bytes),
        ),
        (
            "workload.mice_bytes",
            spec.mice_bytes > 0.0,
            format!("must be positive, got {}", spec.mice_bytes),
        ),
        (
            "workload.elephant_byte_fraction",
            (0.0..=1.0).contains(&spec.elephant_byte_fraction),
            format!("must be in [0, 1], got {}", spec.elephant_byte_fraction),
        ),
        (
            "workload.pair_fraction",
            spec.pair_fraction > 0.0 && spec.pair_fraction <= 1.0,
            format!("must be in (0, 1], got {}", spec.pair_fraction),
        ),
    ];
    for (key, ok, reason) in checks {
        if !ok {
            return Err(WorkloadError::InvalidParameter { key, reason });
        }
    }
    Ok(())
}

/// Pareto draw with the given mean (shape fixed at 2.5).
fn pareto(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    const SHAPE: f64 = 2.5;
    let scale = mean * (SHAPE - 1.0) / SHAPE;
    scale / rng.gen::<f64>().max(f64::MIN_POSITIVE).powf(1.0 / SHAPE)
}

fn flow_size(rng: &mut ChaCha8Rng, mean: f64, heavy_tail: bool) -> f64 {
    if heavy_tail {
        pareto(rng, mean)
    } else {
        mean
    }
}

pub fn generate(spec: &WorkloadSpec, n: usize) -> Result<Vec<FlowSpec>, WorkloadError> {
    validate(spec)?;
    assert!(n >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut flows = match spec.pattern {
        Pattern::AllToAll => all_to_all(spec, n, &mut rng),
        Pattern::Permutation => permutation(spec, n, &mut rng),
        Pattern::Skewed => skewed(spec, n, &mut rng),
        Pattern::Trace => {
            return Err(WorkloadError::InvalidParameter {
                key: "workload.pattern",
                reason: "trace pattern requires workload.trace".into(),
            })
        }
    };
    sort_by_arrival(&mut flows);
    Ok(flows)
}

/// One flow per ordered pair, arrivals spread uniformly over the duration.
fn all_to_all(spec: &WorkloadSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<FlowSpec> {
    let mut flows = Vec::with_capacity(n * (n - 1));
    for src in 0..n {
        for dst in 0..n {
            if src != dst {
                flows.push(FlowSpec {
                    arrival: rng.gen::<f64>() * spec.duration,
                    src,
                    dst,
                    bytes: flow_size(rng, spec.mice_bytes, spec.heavy_tail),
                });
            }
        }
    }
    flows
}

/// Each ToR sends one elephant to a distinct ToR (a fixed-point-free
/// permutation).
fn permutation(spec: &WorkloadSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<FlowSpec> {
    let mut targets: Vec<usize> = (0..n).collect();
    loop {
        targets.shuffle(rng);
        if targets.iter().enumerate().all(|(i, &t)| i != t) {
            break;
        }
    }
    (0..n)
        .map(|src| FlowSpec {
            arrival: rng.gen::<f64>() * spec.duration,
            src,
            dst: targets[src],
            bytes: flow_size(rng, spec.elephant_bytes, spec.heavy_tail),
        })
        .collect()
}

/// Poisson arrivals; a seeded subset of ordered pairs carries the
/// configured byte fraction as fixed-size elephants, the rest are mice.
fn skewed(spec: &WorkloadSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<FlowSpec> {
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|s| (0..n).filter(move |&t| t != s).map(move |t| (s, t)))
        .collect();
    pairs.shuffle(rng);
    let elephant_count = ((pairs.len() as f64 * spec.pair_fraction).ceil() as usize)
        .clamp(1, pairs.len().saturating_sub(1).max(1));
    let (elephant_pairs, mice_pairs) = pairs.split_at(elephant_count);

    // per-flow elephant probability that realizes the byte fraction in
    // expectation: q E (1 - f) = f (1 - q) m
    let f = spec.elephant_byte_fraction;
    let q = f * spec.mice_bytes
        / (spec.elephant_bytes * (1.0 - f) + f * spec.mice_bytes);

    let mut flows = Vec::new();
    let mut t = 0.0;
    loop {
        t += -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln() / spec.arrival_rate;
        if t >= spec.duration {
            break;
        }
        let elephant = !mice_pairs.is_empty() && rng.gen::<f64>() < q || mice_pairs.is_empty();
        let (pool, mean) = if elephant {
            (elephant_pairs, spec.elephant_bytes)
        } else {
            (mice_pairs, spec.mice_bytes)
        };
        let (src, dst) = pool[rng.gen_range(0..pool.len())];
        flows.push(FlowSpec {
            arrival: t,
            src,
            dst,
            bytes: flow_size(rng, mean, spec.heavy_tail),
        });
    }
    flows
}

fn sort_by_arrival(flows: &mut [FlowSpec]) {
    flows.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
}

/// Parse a `arrival,src,dst,bytes` CSV trace. Endpoints are ToR symbol
/// strings or indices depending on `addressing`; output is sorted by
/// arrival (stable on ties).
pub fn load_trace(
    path: &Path,
    space: &AddressSpace,
    addressing: TraceAddressing,
) -> Result<Vec<FlowSpec>, WorkloadError> {
    let file = std::fs::File::open(path)?;
    parse_trace(std::io::BufReader::new(file), space, addressing)
}

pub fn parse_trace<R: BufRead>(
    reader: R,
    space: &AddressSpace,
    addressing: TraceAddressing,
) -> Result<Vec<FlowSpec>, WorkloadError> {
    let err = |line: usize, reason: String| WorkloadError::Trace { line, reason };
    let parse_endpoint = |field: &str, line: usize| -> Result<usize, WorkloadError> {
        let idx = match addressing {
            TraceAddressing::Symbols => space
                .parse(field)
                .map_err(|e| err(line, format!("bad address {field:?}: {e}")))?,
            TraceAddressing::Index => field
                .parse::<usize>()
                .map_err(|_| err(line, format!("bad index {field:?}")))?,
        };
        if idx >= space.node_count() {
            return Err(err(
                line,
                format!("tor {field:?} out of range for {} nodes", space.node_count()),
            ));
        }
        Ok(idx)
    };

    let mut flows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if i == 0 {
            if trimmed != "arrival,src,dst,bytes" {
                return Err(err(1, format!("expected header arrival,src,dst,bytes, got {trimmed:?}")));
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(err(lineno, format!("expected 4 fields, got {}", fields.len())));
        }
        let arrival: f64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad arrival {:?}", fields[0])))?;
        if !arrival.is_finite() || arrival < 0.0 {
            return Err(err(lineno, format!("arrival must be non-negative, got {arrival}")));
        }
        let src = parse_endpoint(fields[1].trim(), lineno)?;
        let dst = parse_endpoint(fields[2].trim(), lineno)?;
        if src == dst {
            return Err(err(lineno, format!("self-flow {src} -> {dst} is invalid")));
        }
        let bytes: f64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad byte count {:?}", fields[3])))?;
        if !bytes.is_finite() || bytes <= 0.0 {
            return Err(err(lineno, format!("bytes must be positive, got {bytes}")));
        }
        flows.push(FlowSpec {
            arrival,
            src,
            dst,
            bytes,
        });
    }
    flows.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
    Ok(flows)
}

/// Write flows back in the trace schema (indices as endpoints).
pub fn write_trace(flows: &[FlowSpec]) -> String {
    let mut out = String::from("arrival,src,dst,bytes\n");
    for f in flows {
        out.push_str(&format!("{},{},{},{}\n", f.arrival, f.src, f.dst, f.bytes));
    }
    out
}
