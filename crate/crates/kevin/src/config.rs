//! Flat `key = value` experiment configuration with dotted namespaces.
//! Every key is validated up front; unknown keys are hard errors.

use std::net::Ipv4Addr;
use std::path::PathBuf;

use thiserror::Error;

use crate::debruijn::{KevinTopology, TopologyError};
use crate::ip::{IpAddressingScheme, IpError};
use crate::sched::central::SchedulerTiming;
use crate::sched::dist::DistParams;
use crate::sim::{SchedulerKind, SimParams};
use crate::workload::{Pattern, TraceAddressing, WorkloadSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    MalformedLine { line: usize, text: String },
    #[error("unknown config key {key:?}")]
    UnknownKey { key: String },
    #[error("invalid value {value:?} for key {key}: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("invalid ip scheme: {0}")]
    Ip(#[from] IpError),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub k_s: usize,
    pub k_d: usize,
    pub d: usize,
    pub scheduler: SchedulerKind,
    pub period: f64,
    pub delta: f64,
    pub reservation: f64,
    pub theta_bytes: f64,
    pub window: f64,
    pub request_timeout: f64,
    pub msg_drop_prob: f64,
    pub per_hop_latency: f64,
    pub ip_base: Ipv4Addr,
    pub ip_base_len: u8,
    pub capacity: f64,
    pub seed: u64,
    pub max_time: Option<f64>,
    pub workload: WorkloadSpec,
    pub trace: Option<PathBuf>,
    pub trace_addressing: TraceAddressing,
    pub write_flow_csv: bool,
    pub write_scheduler_csv: bool,
    pub strict_invariants: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            k_s: 2,
            k_d: 0,
            d: 3,
            scheduler: SchedulerKind::None,
            period: 1.0,
            delta: 0.01,
            reservation: 1.0,
            theta_bytes: 1e6,
            window: 1.0,
            request_timeout: 0.1,
            msg_drop_prob: 0.0,
            per_hop_latency: 0.001,
            ip_base: Ipv4Addr::new(10, 0, 0, 0),
            ip_base_len: 8,
            capacity: 1.0,
            seed: 0,
            max_time: None,
            workload: WorkloadSpec::default(),
            trace: None,
            trace_addressing: TraceAddressing::Symbols,
            write_flow_csv: false,
            write_scheduler_csv: false,
            strict_invariants: false,
        }
    }
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| bad(key, value, "not a valid number"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::MalformedLine {
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Apply one key; also the entry point for sweep overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "topology.k_s" => self.k_s = parse_num(key, value)?,
            "topology.k_d" => self.k_d = parse_num(key, value)?,
            "topology.d" => self.d = parse_num(key, value)?,
            "scheduler" => {
                self.scheduler = match value {
                    "none" => SchedulerKind::None,
                    "bfs" => SchedulerKind::Bfs,
                    "greedy" => SchedulerKind::Greedy,
                    "distributed" => SchedulerKind::Distributed,
                    _ => {
                        return Err(bad(
                            key,
                            value,
                            "expected none, bfs, greedy, or distributed",
                        ))
                    }
                }
            }
            "period" => self.period = parse_num(key, value)?,
            "delta" => self.delta = parse_num(key, value)?,
            "reservation" => self.reservation = parse_num(key, value)?,
            "elephant.theta_bytes" => self.theta_bytes = parse_num(key, value)?,
            "elephant.window" => self.window = parse_num(key, value)?,
            "dist.request_timeout" => self.request_timeout = parse_num(key, value)?,
            "dist.msg_drop_prob" => self.msg_drop_prob = parse_num(key, value)?,
            "dist.per_hop_latency" => self.per_hop_latency = parse_num(key, value)?,
            "ip.base_prefix" => {
                self.ip_base = value.parse().map_err(|_| bad(key, value, "not an IPv4 address"))?
            }
            "ip.base_len" => self.ip_base_len = parse_num(key, value)?,
            "link.capacity" => self.capacity = parse_num(key, value)?,
            "seed" => {
                self.seed = parse_num(key, value)?;
                self.workload.seed = self.seed;
            }
            "max_time" => {
                self.max_time = match value {
                    "none" => None,
                    _ => Some(parse_num(key, value)?),
                }
            }
            "workload.pattern" => {
                self.workload.pattern = match value {
                    "skewed" => Pattern::Skewed,
                    "all_to_all" => Pattern::AllToAll,
                    "permutation" => Pattern::Permutation,
                    "trace" => Pattern::Trace,
                    _ => {
                        return Err(bad(
                            key,
                            value,
                            "expected skewed, all_to_all, permutation, or trace",
                        ))
                    }
                }
            }
            "workload.duration" => self.workload.duration = parse_num(key, value)?,
            "workload.rate" => self.workload.arrival_rate = parse_num(key, value)?,
            "workload.elephant_bytes" => self.workload.elephant_bytes = parse_num(key, value)?,
            "workload.mice_bytes" => self.workload.mice_bytes = parse_num(key, value)?,
            "workload.elephant_byte_fraction" => {
                self.workload.elephant_byte_fraction = parse_num(key, value)?
            }
            "workload.pair_fraction" => self.workload.pair_fraction = parse_num(key, value)?,
            "workload.heavy_tail" => self.workload.heavy_tail = parse_bool(key, value)?,
            "workload.trace" => self.trace = Some(PathBuf::from(value)),
            "workload.trace_addressing" => {
                self.trace_addressing = match value {
                    "symbols" => TraceAddressing::Symbols,
                    "index" => TraceAddressing::Index,
                    _ => return Err(bad(key, value, "expected symbols or index")),
                }
            }
            "output.flow_csv" => self.write_flow_csv = parse_bool(key, value)?,
            "output.scheduler_csv" => self.write_scheduler_csv = parse_bool(key, value)?,
            "strict_invariants" => self.strict_invariants = parse_bool(key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let key_err = |key: &str, value: String, reason: &str| Err(bad(key, &value, reason));
        if self.k_s < 2 {
            return key_err("topology.k_s", self.k_s.to_string(), "must be at least 2");
        }
        if self.d < 2 {
            return key_err("topology.d", self.d.to_string(), "must be at least 2");
        }
        for (key, v) in [
            ("period", self.period),
            ("delta", self.delta),
            ("reservation", self.reservation),
            ("elephant.window", self.window),
            ("dist.request_timeout", self.request_timeout),
            ("dist.per_hop_latency", self.per_hop_latency),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return key_err(key, v.to_string(), "must be a non-negative time");
            }
        }
        if !(0.0..=1.0).contains(&self.msg_drop_prob) {
            return key_err(
                "dist.msg_drop_prob",
                self.msg_drop_prob.to_string(),
                "must be in [0, 1]",
            );
        }
        if !(self.capacity > 0.0) {
            return key_err("link.capacity", self.capacity.to_string(), "must be positive");
        }
        if self.scheduler != SchedulerKind::None && self.k_d == 0 {
            return key_err(
                "topology.k_d",
                self.k_d.to_string(),
                "schedulers need at least one reconfigurable switch",
            );
        }
        if self.workload.pattern == Pattern::Trace && self.trace.is_none() {
            return key_err(
                "workload.trace",
                String::new(),
                "trace pattern requires a trace path",
            );
        }
        Ok(())
    }

    pub fn build_topology(&self) -> Result<KevinTopology, ConfigError> {
        Ok(KevinTopology::new(self.k_s, self.d, self.k_d)?)
    }

    pub fn ip_scheme(&self) -> Result<IpAddressingScheme, ConfigError> {
        Ok(IpAddressingScheme::new(
            self.ip_base,
            self.ip_base_len,
            self.k_s,
            self.d,
        )?)
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            capacity: self.capacity,
            scheduler: self.scheduler,
            timing: SchedulerTiming {
                period: self.period,
                delta: self.delta,
                reservation: self.reservation,
            },
            dist: DistParams {
                theta_bytes: self.theta_bytes,
                window: self.window,
                request_timeout: self.request_timeout,
                msg_drop_prob: self.msg_drop_prob,
                per_hop_latency: self.per_hop_latency,
                reconf_delay: self.delta,
                reservation: self.reservation,
            },
            max_time: self.max_time,
            seed: self.seed,
            strict_invariants: self.strict_invariants,
        }
    }
}
