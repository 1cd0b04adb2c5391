//! Demand-aware link schedulers: periodic centralized algorithms over a
//! demand matrix, and the distributed receiver-driven protocol.

pub mod central;
pub mod dist;

/// A topology change to be consumed by the simulator: link teardowns take
/// effect at emission time, setups become usable once the reconfiguration
/// delay has elapsed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEvent {
    pub time: f64,
    pub kind: LinkEventKind,
    pub sender: usize,
    pub receiver: usize,
    pub switch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkEventKind {
    Down,
    Up,
}
