//! Centralized DA-link scheduling: a BFS variant that searches for the
//! shortest shortcut-augmented path per demand, and a plain greedy
//! k-matching over the top demands.

use crate::debruijn::{DaLink, DaLinkState, KevinTopology};
use crate::forwarding::greedy_route;
use crate::sched::{LinkEvent, LinkEventKind};

/// Directed per-pair byte volumes with a zero diagonal.
#[derive(Debug, Clone)]
pub struct DemandMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DemandMatrix {
    pub fn new(n: usize) -> Self {
        DemandMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.data[s * self.n + t]
    }

    pub fn add(&mut self, s: usize, t: usize, volume: f64) {
        assert!(volume.is_finite() && volume >= 0.0);
        if s != t {
            self.data[s * self.n + t] += volume;
        }
    }

    /// The largest `limit` positive demands, by decreasing volume; equal
    /// volumes break ties by (source, destination).
    pub fn top_demands(&self, limit: usize) -> Vec<(usize, usize, f64)> {
        let mut all: Vec<(usize, usize, f64)> = (0..self.n)
            .flat_map(|s| (0..self.n).map(move |t| (s, t)))
            .filter_map(|(s, t)| {
                let v = self.get(s, t);
                (v > 0.0).then_some((s, t, v))
            })
            .collect();
        all.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        all.truncate(limit);
        all
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerTiming {
    pub period: f64,
    pub delta: f64,
    pub reservation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkDecision {
    pub sender: usize,
    pub receiver: usize,
    pub switch: usize,
}

/// One row of the per-round decision log.
#[derive(Debug, Clone)]
pub struct DecisionRecord {
    pub demand_src: usize,
    pub demand_dst: usize,
    pub volume: f64,
    pub decision: Option<LinkDecision>,
    pub reason: &'static str,
}

#[derive(Debug, Clone, Default)]
pub struct SchedulerOutcome {
    pub decisions: Vec<LinkDecision>,
    pub records: Vec<DecisionRecord>,
}

/// Free-port bookkeeping for one scheduling round: a port is free when no
/// link holds it or the holder's reservation has expired, and decisions
/// made earlier in the round occupy their ports.
struct PortView {
    out: Vec<Vec<bool>>, // [switch][node]
    inp: Vec<Vec<bool>>,
}

impl PortView {
    fn new(topo: &KevinTopology, now: f64) -> Self {
        let n = topo.node_count();
        let out = (0..topo.k_d())
            .map(|sw| (0..n).map(|v| topo.out_port_free(v, sw, now)).collect())
            .collect();
        let inp = (0..topo.k_d())
            .map(|sw| (0..n).map(|v| topo.in_port_free(v, sw, now)).collect())
            .collect();
        PortView { out, inp }
    }

    fn free_out_switches(&self, v: usize) -> Vec<usize> {
        (0..self.out.len()).filter(|&sw| self.out[sw][v]).collect()
    }

    fn claim(&mut self, d: &LinkDecision) {
        self.out[d.switch][d.sender] = false;
        self.inp[d.switch][d.receiver] = false;
    }
}

/// Greedy path length on the current hybrid topology (up links only).
pub fn dist_kevin(topo: &KevinTopology, s: usize, t: usize, flow_key: u64) -> usize {
    greedy_route(topo, s, t, flow_key)
        .expect("well-formed topology routes greedily")
        .len()
        - 1
}

/// Walk the static greedy path from `s` toward `t`; the first node with a
/// free DA output port is the shortcut head.
fn forward_bruijn(
    topo: &KevinTopology,
    view: &PortView,
    s: usize,
    t: usize,
) -> Option<(usize, Vec<usize>)> {
    let space = topo.space();
    let d = space.d();
    let mut v = s;
    while v != t {
        let switches = view.free_out_switches(v);
        if !switches.is_empty() {
            return Some((v, switches));
        }
        let j = space.distance_idx(v, t);
        let x = space.address_of(t).symbols()[d - j];
        v = space.shift_idx(v, x);
    }
    None
}

/// Backward search from `t` in order of increasing static distance; nodes at
/// equal distance are visited in address order. Returns the shortcut tail
/// and the lowest common free switch.
fn backward_bruijn_bfs(
    topo: &KevinTopology,
    view: &PortView,
    s: usize,
    t: usize,
    switches: &[usize],
) -> Option<(usize, usize)> {
    let space = topo.space();
    let mut ring = vec![t];
    for dist in 0..=space.d() {
        if ring.contains(&s) {
            return None;
        }
        for &z in &ring {
            if let Some(&sw) = switches.iter().find(|&&sw| view.inp[sw][z]) {
                return Some((z, sw));
            }
        }
        let next = dist + 1;
        ring = (0..topo.node_count())
            .filter(|&x| space.distance_idx(x, t) == next)
            .collect();
    }
    None
}

/// Whether `y` is a static out-neighbor of `x` (a shortcut would duplicate
/// a backbone edge).
fn static_neighbors(topo: &KevinTopology, x: usize, y: usize) -> bool {
    (0..topo.k_s() as u8).any(|sym| topo.static_neighbor(x, sym) == y)
}

pub fn bfs_da_links(topo: &KevinTopology, demand: &DemandMatrix, now: f64) -> SchedulerOutcome {
    let mut outcome = SchedulerOutcome::default();
    let mut view = PortView::new(topo, now);
    let space = topo.space();
    for (s, t, volume) in demand.top_demands(topo.k_d() * topo.node_count()) {
        let mut record = DecisionRecord {
            demand_src: s,
            demand_dst: t,
            volume,
            decision: None,
            reason: "",
        };
        let Some((x, switches)) = forward_bruijn(topo, &view, s, t) else {
            record.reason = "no-free-output";
            outcome.records.push(record);
            continue;
        };
        let Some((y, switch)) = backward_bruijn_bfs(topo, &view, s, t, &switches) else {
            record.reason = "no-free-input";
            outcome.records.push(record);
            continue;
        };
        if x == y || static_neighbors(topo, x, y) {
            record.reason = "degenerate-shortcut";
            outcome.records.push(record);
            continue;
        }
        let shortcut_len = space.distance_idx(s, x) + space.distance_idx(y, t) + 1;
        if shortcut_len <= dist_kevin(topo, s, t, 0) {
            let decision = LinkDecision {
                sender: x,
                receiver: y,
                switch,
            };
            view.claim(&decision);
            record.decision = Some(decision);
            record.reason = "set";
            outcome.decisions.push(decision);
        } else {
            record.reason = "no-improvement";
        }
        outcome.records.push(record);
    }
    outcome
}

pub fn greedy_da_links(topo: &KevinTopology, demand: &DemandMatrix, now: f64) -> SchedulerOutcome {
    let mut outcome = SchedulerOutcome::default();
    let mut view = PortView::new(topo, now);
    for (s, t, volume) in demand.top_demands(topo.k_d() * topo.node_count()) {
        let mut record = DecisionRecord {
            demand_src: s,
            demand_dst: t,
            volume,
            decision: None,
            reason: "no-common-switch",
        };
        let common = (0..topo.k_d()).find(|&sw| view.out[sw][s] && view.inp[sw][t]);
        if let Some(switch) = common {
            let decision = LinkDecision {
                sender: s,
                receiver: t,
                switch,
            };
            view.claim(&decision);
            record.decision = Some(decision);
            record.reason = "set";
            outcome.decisions.push(decision);
        }
        outcome.records.push(record);
    }
    outcome
}

#[derive(Debug, Default)]
pub struct ApplyResult {
    pub events: Vec<LinkEvent>,
    pub applied: usize,
}

/// Commit scheduled links to the topology: displaced links go down
/// immediately, new links configure until `now + delta` and hold their
/// ports until `now + delta + reservation`. Decisions whose ports were
/// taken since computation are dropped.
pub fn apply_schedule(
    topo: &mut KevinTopology,
    decisions: &[LinkDecision],
    timing: &SchedulerTiming,
    now: f64,
) -> ApplyResult {
    let mut result = ApplyResult::default();
    for d in decisions {
        if let Some(existing) = topo.da_out(d.sender, d.switch) {
            if existing.receiver == d.receiver {
                // identical link still present: no-op, no events
                continue;
            }
        }
        let out_blocked = !topo.out_port_free(d.sender, d.switch, now);
        let in_blocked = !topo.in_port_free(d.receiver, d.switch, now);
        if out_blocked || in_blocked {
            continue; // stale decision
        }
        if let Some(old) = topo.clear_da_link(d.sender, d.switch) {
            if old.is_up() {
                result.events.push(LinkEvent {
                    time: now,
                    kind: LinkEventKind::Down,
                    sender: old.sender,
                    receiver: old.receiver,
                    switch: old.switch,
                });
            }
        }
        if let Some(old_sender) = topo.da_in_sender(d.receiver, d.switch) {
            if let Some(old) = topo.clear_da_link(old_sender, d.switch) {
                if old.is_up() {
                    result.events.push(LinkEvent {
                        time: now,
                        kind: LinkEventKind::Down,
                        sender: old.sender,
                        receiver: old.receiver,
                        switch: old.switch,
                    });
                }
            }
        }
        let state = if timing.delta > 0.0 {
            DaLinkState::Configuring {
                up_at: now + timing.delta,
            }
        } else {
            DaLinkState::Up
        };
        topo.set_da_link_with(DaLink {
            sender: d.sender,
            receiver: d.receiver,
            switch: d.switch,
            state,
            set_time: now,
            reserved_until: now + timing.delta + timing.reservation,
            confirmed: true,
        })
        .expect("ports were just cleared");
        result.events.push(LinkEvent {
            time: now + timing.delta,
            kind: LinkEventKind::Up,
            sender: d.sender,
            receiver: d.receiver,
            switch: d.switch,
        });
        result.applied += 1;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::debruijn::AddressSpace;

    fn timing(delta: f64, reservation: f64) -> SchedulerTiming {
        SchedulerTiming {
            period: 1.0,
            delta,
            reservation,
        }
    }

    #[test]
    fn single_demand_links_endpoints_directly() {
        // first iteration has x = s and y = t
        let topo = KevinTopology::new(2, 3, 1).unwrap();
        let space = *topo.space();
        let s = space.parse("011").unwrap();
        let t = space.parse("001").unwrap();
        let mut demand = DemandMatrix::new(8);
        demand.add(s, t, 100.0);
        let outcome = bfs_da_links(&topo, &demand, 0.0);
        assert_eq!(
            outcome.decisions,
            vec![LinkDecision {
                sender: s,
                receiver: t,
                switch: 0
            }]
        );
    }

    #[test]
    fn adjacent_demand_sets_no_link() {
        let topo = KevinTopology::new(2, 3, 1).unwrap();
        let space = *topo.space();
        let s = space.parse("011").unwrap();
        let t = space.parse("110").unwrap();
        assert_eq!(space.distance_idx(s, t), 1);
        let mut demand = DemandMatrix::new(8);
        demand.add(s, t, 100.0);
        let outcome = bfs_da_links(&topo, &demand, 0.0);
        assert!(outcome.decisions.is_empty());
        assert_eq!(outcome.records[0].reason, "degenerate-shortcut");
    }

    #[test]
    fn greedy_hand_case() {
        // sorted [(a->b, 100), (a->c, 90), (d->b, 80)], k_d = 1, all free:
        // only (a, b) connects
        let topo = KevinTopology::new(2, 3, 1).unwrap();
        let (a, b, c, d) = (0, 5, 6, 7);
        let mut demand = DemandMatrix::new(8);
        demand.add(a, b, 100.0);
        demand.add(a, c, 90.0);
        demand.add(d, b, 80.0);
        let outcome = greedy_da_links(&topo, &demand, 0.0);
        assert_eq!(
            outcome.decisions,
            vec![LinkDecision {
                sender: a,
                receiver: b,
                switch: 0
            }]
        );
        assert_eq!(
            outcome
                .records
                .iter()
                .filter(|r| r.reason == "no-common-switch")
                .count(),
            2
        );
    }

    #[test]
    fn greedy_empty_demand() {
        let topo = KevinTopology::new(2, 3, 2).unwrap();
        assert!(greedy_da_links(&topo, &DemandMatrix::new(8), 0.0)
            .decisions
            .is_empty());
    }

    #[test]
    fn greedy_single_sender_capped_by_switch_count() {
        let topo = KevinTopology::new(2, 3, 2).unwrap();
        let mut demand = DemandMatrix::new(8);
        for t in 1..6 {
            demand.add(0, t, 100.0 - t as f64);
        }
        let outcome = greedy_da_links(&topo, &demand, 0.0);
        assert_eq!(outcome.decisions.len(), 2);
        assert!(outcome.decisions.iter().all(|d| d.sender == 0));
    }

    #[test]
    fn dist_kevin_static_equals_shift_distance() {
        let topo = KevinTopology::new(2, 4, 1).unwrap();
        let space = *topo.space();
        for s in 0..16 {
            for t in 0..16 {
                assert_eq!(dist_kevin(&topo, s, t, 0), space.distance_idx(s, t));
            }
        }
    }

    #[test]
    fn dist_kevin_sees_shortcut() {
        let mut topo = KevinTopology::new(2, 3, 1).unwrap();
        let space = *topo.space();
        let s = space.parse("011").unwrap();
        topo.set_da_link(s, space.parse("100").unwrap(), 0).unwrap();
        assert_eq!(dist_kevin(&topo, s, space.parse("001").unwrap(), 0), 2);
    }

    #[test]
    fn apply_timing_contract() {
        let mut topo = KevinTopology::new(2, 3, 1).unwrap();
        let d = LinkDecision {
            sender: 3,
            receiver: 1,
            switch: 0,
        };
        let result = apply_schedule(&mut topo, &[d], &timing(2.0, 5.0), 10.0);
        assert_eq!(result.applied, 1);
        let link = topo.da_out(3, 0).unwrap();
        assert_eq!(link.state, DaLinkState::Configuring { up_at: 12.0 });
        assert_eq!(link.reserved_until, 17.0);
        assert_eq!(
            result.events,
            vec![LinkEvent {
                time: 12.0,
                kind: LinkEventKind::Up,
                sender: 3,
                receiver: 1,
                switch: 0
            }]
        );
    }

    #[test]
    fn zero_delta_link_is_up_immediately() {
        let mut topo = KevinTopology::new(2, 3, 1).unwrap();
        let d = LinkDecision {
            sender: 3,
            receiver: 1,
            switch: 0,
        };
        apply_schedule(&mut topo, &[d], &timing(0.0, 0.0), 0.0);
        assert!(topo.da_out(3, 0).unwrap().is_up());
    }

    #[test]
    fn rescheduling_identical_reserved_link_is_noop() {
        let mut topo = KevinTopology::new(2, 3, 1).unwrap();
        let t = timing(0.5, 5.0);
        let d = LinkDecision {
            sender: 3,
            receiver: 1,
            switch: 0,
        };
        let first = apply_schedule(&mut topo, &[d], &t, 0.0);
        assert_eq!(first.applied, 1);
        let second = apply_schedule(&mut topo, &[d], &t, 1.0);
        assert_eq!(second.applied, 0);
        assert!(second.events.is_empty());
        assert_eq!(topo.da_out(3, 0).unwrap().set_time, 0.0);
    }

    #[test]
    fn reserved_link_blocks_conflicting_decision() {
        let mut topo = KevinTopology::new(2, 3, 1).unwrap();
        let t = timing(0.0, 5.0);
        apply_schedule(
            &mut topo,
            &[LinkDecision {
                sender: 3,
                receiver: 1,
                switch: 0,
            }],
            &t,
            0.0,
        );
        // conflicting sender port, still reserved
        let res = apply_schedule(
            &mut topo,
            &[LinkDecision {
                sender: 3,
                receiver: 2,
                switch: 0,
            }],
            &t,
            1.0,
        );
        assert_eq!(res.applied, 0);
        assert_eq!(topo.da_out(3, 0).unwrap().receiver, 1);
        // after the reservation window the link is displaceable
        let res = apply_schedule(
            &mut topo,
            &[LinkDecision {
                sender: 3,
                receiver: 2,
                switch: 0,
            }],
            &t,
            6.0,
        );
        assert_eq!(res.applied, 1);
        assert_eq!(topo.da_out(3, 0).unwrap().receiver, 2);
        assert_eq!(
            res.events[0],
            LinkEvent {
                time: 6.0,
                kind: LinkEventKind::Down,
                sender: 3,
                receiver: 1,
                switch: 0
            }
        );
    }

    #[test]
    fn backward_bfs_visits_rings_in_address_order() {
        let space = AddressSpace::new(2, 3).unwrap();
        let mut topo = KevinTopology::new(2, 3, 1).unwrap();
        // occupy t's input (reservation still active) so the search must
        // move to the distance-1 ring
        let t = space.parse("001").unwrap();
        let filler = space.parse("111").unwrap();
        topo.set_da_link_with(DaLink {
            sender: filler,
            receiver: t,
            switch: 0,
            state: DaLinkState::Up,
            set_time: 0.0,
            reserved_until: 100.0,
            confirmed: true,
        })
        .unwrap();
        let view = PortView::new(&topo, 0.0);
        let s = space.parse("011").unwrap();
        let (y, sw) = backward_bruijn_bfs(&topo, &view, s, t, &[0]).unwrap();
        assert_eq!(sw, 0);
        // distance-1 predecessors of 001 are 000 and 100; 000 comes first
        assert_eq!(y, space.parse("000").unwrap());
    }
}
