//! Flow-level simulator for a hybrid rack-to-rack network: a de Bruijn
//! backbone built from static matching switches, demand-aware shortcut
//! links on reconfigurable switches, greedy longest-prefix-match routing,
//! and centralized/distributed shortcut schedulers.

pub mod config;
pub mod debruijn;
pub mod forwarding;
pub mod ip;
pub mod sched;
pub mod sim;
pub mod workload;
