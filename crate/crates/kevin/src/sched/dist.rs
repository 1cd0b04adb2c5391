//! Receiver-driven distributed DA-link scheduling: destination-side
//! elephant detection plus a PortRequest/PortApprove/DeclineRequest
//! exchange with tentative reservations and timeouts.
//!
//! Link lifecycle: the sender creates the link (configuring) when it sends
//! PortApprove; the receiver confirms on delivery. A link only goes up once
//! the reconfiguration delay elapsed *and* the receiver confirmed, so an
//! up link always has committed ports on both sides. If the approve is
//! lost, the sender tears its side down at the request timeout.

use std::collections::{BTreeMap, VecDeque};

use crate::debruijn::{DaLink, DaLinkState, KevinTopology};
use crate::sched::{LinkEvent, LinkEventKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistParams {
    pub theta_bytes: f64,
    pub window: f64,
    pub request_timeout: f64,
    pub msg_drop_prob: f64,
    pub per_hop_latency: f64,
    pub reconf_delay: f64,
    pub reservation: f64,
}

/// Exact sliding-window per-source byte counters kept at each destination.
#[derive(Debug, Clone)]
pub struct ElephantDetector {
    window: f64,
    theta: f64,
    counters: BTreeMap<(usize, usize), PairWindow>, // (dst, src)
}

#[derive(Debug, Clone, Default)]
struct PairWindow {
    samples: VecDeque<(f64, f64)>,
    sum: f64,
}

impl PairWindow {
    fn evict(&mut self, horizon: f64) {
        while let Some(&(t, bytes)) = self.samples.front() {
            if t >= horizon {
                break;
            }
            self.sum -= bytes;
            self.samples.pop_front();
        }
        if self.samples.is_empty() {
            self.sum = 0.0;
        }
    }
}

impl ElephantDetector {
    pub fn new(window: f64, theta: f64) -> Self {
        assert!(window > 0.0 && theta >= 0.0);
        ElephantDetector {
            window,
            theta,
            counters: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, dst: usize, src: usize, bytes: f64, now: f64) {
        let w = self.counters.entry((dst, src)).or_default();
        w.evict(now - self.window);
        w.samples.push_back((now, bytes));
        w.sum += bytes;
    }

    pub fn windowed_bytes(&mut self, dst: usize, src: usize, now: f64) -> f64 {
        match self.counters.get_mut(&(dst, src)) {
            Some(w) => {
                w.evict(now - self.window);
                w.sum
            }
            None => 0.0,
        }
    }

    pub fn is_elephant(&mut self, dst: usize, src: usize, now: f64) -> bool {
        self.windowed_bytes(dst, src, now) >= self.theta
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageKind {
    PortRequest { ports: Vec<usize> },
    PortApprove { switch: usize },
    DeclineRequest,
}

impl MessageKind {
    pub fn name(&self) -> &'static str {
        match self {
            MessageKind::PortRequest { .. } => "PortRequest",
            MessageKind::PortApprove { .. } => "PortApprove",
            MessageKind::DeclineRequest => "DeclineRequest",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub from: usize,
    pub to: usize,
    pub send_time: f64,
}

/// Timers the protocol asks the simulator to schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerKind {
    /// Release the destination's tentative ports if the exchange is still
    /// pending.
    TentativeExpiry { receiver: usize, source: usize },
    /// Tear the sender's link down if the receiver never confirmed.
    SenderTimeout {
        sender: usize,
        switch: usize,
        receiver: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistAction {
    Send(ProtocolMessage),
    Link(LinkEvent),
    StartTimer { kind: TimerKind, at: f64 },
}

#[derive(Debug, Clone)]
struct Exchange {
    ports: Vec<usize>,
    expiry: f64,
}

#[derive(Debug, Clone, Copy)]
struct Tentative {
    peer: usize,
    expiry: f64,
}

#[derive(Debug, Clone, Copy)]
struct AwaitConfirm {
    receiver: usize,
}

/// Per-ToR protocol state machines, driven by the simulator's event loop.
#[derive(Debug, Clone)]
pub struct DistProtocol {
    params: DistParams,
    /// Outstanding exchange per (receiver, source); at most one each.
    pending: BTreeMap<(usize, usize), Exchange>,
    /// Tentatively reserved input ports: (node, switch) -> mark.
    tentative: BTreeMap<(usize, usize), Tentative>,
    /// Sender-side links awaiting receiver confirmation: (sender, switch).
    awaiting: BTreeMap<(usize, usize), AwaitConfirm>,
}

impl DistProtocol {
    pub fn new(params: DistParams) -> Self {
        DistProtocol {
            params,
            pending: BTreeMap::new(),
            tentative: BTreeMap::new(),
            awaiting: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &DistParams {
        &self.params
    }

    fn free_input_ports(&self, topo: &KevinTopology, node: usize, now: f64) -> Vec<usize> {
        (0..topo.k_d())
            .filter(|&sw| {
                !self.tentative.contains_key(&(node, sw)) && topo.in_port_free(node, sw, now)
            })
            .collect()
    }

    /// Destination-side reaction to an elephant source: offer free input
    /// ports unless a link or an exchange with this source already exists.
    pub fn on_elephant_detected(
        &mut self,
        topo: &KevinTopology,
        destination: usize,
        source: usize,
        now: f64,
    ) -> Vec<DistAction> {
        if source == destination
            || topo.has_da_link(source, destination)
            || self.pending.contains_key(&(destination, source))
        {
            return Vec::new();
        }
        let ports = self.free_input_ports(topo, destination, now);
        if ports.is_empty() {
            return Vec::new();
        }
        let expiry = now + self.params.request_timeout;
        for &sw in &ports {
            self.tentative.insert(
                (destination, sw),
                Tentative {
                    peer: source,
                    expiry,
                },
            );
        }
        self.pending.insert(
            (destination, source),
            Exchange {
                ports: ports.clone(),
                expiry,
            },
        );
        vec![
            DistAction::Send(ProtocolMessage {
                kind: MessageKind::PortRequest { ports },
                from: destination,
                to: source,
                send_time: now,
            }),
            DistAction::StartTimer {
                kind: TimerKind::TentativeExpiry {
                    receiver: destination,
                    source,
                },
                at: expiry,
            },
        ]
    }

    pub fn on_message(
        &mut self,
        topo: &mut KevinTopology,
        msg: &ProtocolMessage,
        now: f64,
    ) -> Vec<DistAction> {
        match &msg.kind {
            MessageKind::PortRequest { ports } => self.handle_request(topo, msg, ports, now),
            MessageKind::PortApprove { switch } => self.handle_approve(topo, msg, *switch, now),
            MessageKind::DeclineRequest => self.handle_decline(topo, msg, now),
        }
    }

    /// Source side: approve the lowest requested switch with a free output
    /// port and tune the laser (link goes configuring), else decline.
    fn handle_request(
        &mut self,
        topo: &mut KevinTopology,
        msg: &ProtocolMessage,
        ports: &[usize],
        now: f64,
    ) -> Vec<DistAction> {
        let source = msg.to;
        let receiver = msg.from;
        let mut sorted: Vec<usize> = ports.to_vec();
        sorted.sort_unstable();
        let chosen = sorted
            .into_iter()
            .find(|&sw| sw < topo.k_d() && topo.out_port_free(source, sw, now));
        let Some(switch) = chosen else {
            return vec![DistAction::Send(ProtocolMessage {
                kind: MessageKind::DeclineRequest,
                from: source,
                to: receiver,
                send_time: now,
            })];
        };
        let mut actions = Vec::new();
        // displace the expired holders of both ports
        if let Some(old) = topo.clear_da_link(source, switch) {
            self.awaiting.remove(&(old.sender, old.switch));
            if old.is_up() {
                actions.push(DistAction::Link(LinkEvent {
                    time: now,
                    kind: LinkEventKind::Down,
                    sender: old.sender,
                    receiver: old.receiver,
                    switch: old.switch,
                }));
            }
        }
        if let Some(old_sender) = topo.da_in_sender(receiver, switch) {
            if let Some(old) = topo.clear_da_link(old_sender, switch) {
                self.awaiting.remove(&(old.sender, old.switch));
                if old.is_up() {
                    actions.push(DistAction::Link(LinkEvent {
                        time: now,
                        kind: LinkEventKind::Down,
                        sender: old.sender,
                        receiver: old.receiver,
                        switch: old.switch,
                    }));
                }
            }
        }
        topo.set_da_link_with(DaLink {
            sender: source,
            receiver,
            switch,
            state: DaLinkState::Configuring {
                up_at: now + self.params.reconf_delay,
            },
            set_time: now,
            reserved_until: now + self.params.reservation,
            confirmed: false,
        })
        .expect("ports were just cleared");
        self.awaiting.insert(
            (source, switch),
            AwaitConfirm { receiver },
        );
        actions.push(DistAction::Link(LinkEvent {
            time: now + self.params.reconf_delay,
            kind: LinkEventKind::Up,
            sender: source,
            receiver,
            switch,
        }));
        actions.push(DistAction::StartTimer {
            kind: TimerKind::SenderTimeout {
                sender: source,
                switch,
                receiver,
            },
            at: now + self.params.request_timeout,
        });
        actions.push(DistAction::Send(ProtocolMessage {
            kind: MessageKind::PortApprove { switch },
            from: source,
            to: receiver,
            send_time: now,
        }));
        actions
    }

    /// Destination side: commit the approved port, release the other
    /// tentative ports of the exchange. A late approve (the exchange timed
    /// out) is answered with a teardown notice.
    fn handle_approve(
        &mut self,
        topo: &mut KevinTopology,
        msg: &ProtocolMessage,
        switch: usize,
        now: f64,
    ) -> Vec<DistAction> {
        let receiver = msg.to;
        let source = msg.from;
        let valid = self.pending.contains_key(&(receiver, source))
            && matches!(
                self.tentative.get(&(receiver, switch)),
                Some(t) if t.peer == source
            );
        if !valid {
            return vec![DistAction::Send(ProtocolMessage {
                kind: MessageKind::DeclineRequest,
                from: receiver,
                to: source,
                send_time: now,
            })];
        }
        let exchange = self.pending.remove(&(receiver, source)).unwrap();
        for sw in exchange.ports {
            self.tentative.remove(&(receiver, sw));
        }
        let mut actions = Vec::new();
        if let Some(link) = topo.da_link_mut(source, switch) {
            if link.receiver == receiver {
                link.confirmed = true;
                if let DaLinkState::Configuring { up_at } = link.state {
                    if up_at <= now {
                        // the delta-driven up event already fired unconfirmed
                        actions.push(DistAction::Link(LinkEvent {
                            time: now,
                            kind: LinkEventKind::Up,
                            sender: source,
                            receiver,
                            switch,
                        }));
                    }
                }
            }
        }
        actions
    }

    /// Either a decline of our request (at the requesting destination) or a
    /// teardown notice for an unconfirmed link (at the approving source).
    fn handle_decline(
        &mut self,
        topo: &mut KevinTopology,
        msg: &ProtocolMessage,
        now: f64,
    ) -> Vec<DistAction> {
        let node = msg.to;
        let peer = msg.from;
        if let Some(exchange) = self.pending.remove(&(node, peer)) {
            for sw in exchange.ports {
                if matches!(self.tentative.get(&(node, sw)), Some(t) if t.peer == peer) {
                    self.tentative.remove(&(node, sw));
                }
            }
            return Vec::new();
        }
        // teardown notice for a link we approved but the receiver rejected
        let switch = self
            .awaiting
            .iter()
            .find(|((s, _), a)| *s == node && a.receiver == peer)
            .map(|((_, sw), _)| *sw);
        if let Some(switch) = switch {
            self.awaiting.remove(&(node, switch));
            if matches!(topo.da_out(node, switch), Some(l) if l.receiver == peer && !l.confirmed) {
                topo.clear_da_link(node, switch);
                return vec![DistAction::Link(LinkEvent {
                    time: now,
                    kind: LinkEventKind::Down,
                    sender: node,
                    receiver: peer,
                    switch,
                })];
            }
        }
        Vec::new()
    }

    pub fn on_timer(
        &mut self,
        topo: &mut KevinTopology,
        timer: TimerKind,
        now: f64,
    ) -> Vec<DistAction> {
        match timer {
            TimerKind::TentativeExpiry { receiver, source } => {
                let expired = matches!(
                    self.pending.get(&(receiver, source)),
                    Some(e) if e.expiry <= now
                );
                if expired {
                    let exchange = self.pending.remove(&(receiver, source)).unwrap();
                    for sw in exchange.ports {
                        if matches!(self.tentative.get(&(receiver, sw)), Some(t) if t.peer == source)
                        {
                            self.tentative.remove(&(receiver, sw));
                        }
                    }
                }
                Vec::new()
            }
            TimerKind::SenderTimeout {
                sender,
                switch,
                receiver,
            } => {
                let waiting = matches!(
                    self.awaiting.get(&(sender, switch)),
                    Some(a) if a.receiver == receiver
                );
                if !waiting {
                    return Vec::new();
                }
                self.awaiting.remove(&(sender, switch));
                if matches!(
                    topo.da_out(sender, switch),
                    Some(l) if l.receiver == receiver && !l.confirmed
                ) {
                    topo.clear_da_link(sender, switch);
                    return vec![DistAction::Link(LinkEvent {
                        time: now,
                        kind: LinkEventKind::Down,
                        sender,
                        receiver,
                        switch,
                    })];
                }
                Vec::new()
            }
        }
    }

    /// No port may stay tentative past its expiry (given timers fire).
    pub fn oldest_tentative_expiry(&self) -> Option<f64> {
        self.tentative
            .values()
            .map(|t| t.expiry)
            .min_by(f64::total_cmp)
    }

    pub fn has_pending_exchange(&self, receiver: usize, source: usize) -> bool {
        self.pending.contains_key(&(receiver, source))
    }

    /// Up links must be confirmed and never awaiting.
    pub fn check_no_half_open(&self, topo: &KevinTopology) -> bool {
        topo.da_links().all(|l| !l.is_up() || l.confirmed)
    }
}
