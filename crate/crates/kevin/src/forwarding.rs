//! Per-node LPM forwarding tables built from local neighbor knowledge,
//! greedy next-hop selection, and full greedy route computation on the
//! hybrid topology.
//!
//! Each neighbor `z` on port `p` contributes one candidate entry per suffix
//! length: the suffix of `z` of length `l` becomes a table prefix with
//! path length `d - l + 1`. Reduction merges identical prefixes and drops
//! entries shadowed everywhere by longer prefixes.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::debruijn::{Address, KevinTopology, TopologyError};

#[derive(Debug, Error, PartialEq)]
pub enum ForwardingError {
    #[error("duplicate neighbor port {0}")]
    DuplicatePort(Port),
    #[error("neighbor {0} does not share the owner's alphabet and dimension")]
    NeighborMismatch(Address),
    #[error("link-down event for unknown port {0}")]
    UnknownLink(Port),
    #[error("no matching entry for {0}; table is corrupt")]
    NoMatch(Address),
    #[error("route from {0} did not terminate; table state is corrupt")]
    RouteCorrupt(Address),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// An outgoing port: a static port labeled by the entered symbol, or a DA
/// switch index. Static ports order before DA ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Port {
    Static(u8),
    Da(u8),
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Port::Static(i) => write!(f, "{i}"),
            Port::Da(i) => write!(f, "DA{i}"),
        }
    }
}

/// The forwarding decision for a destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hop {
    Local,
    Port(Port),
}

/// A table row: `prefix` holds the concrete symbols, the remaining
/// `d - prefix.len()` positions are wildcards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixEntry {
    pub prefix: Vec<u8>,
    pub ports: BTreeSet<Port>,
    pub path_length: usize,
}

impl PrefixEntry {
    fn matches(&self, dest: &[u8]) -> bool {
        dest.starts_with(&self.prefix)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    prefix: Vec<u8>,
    port: Port,
    path_length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkTableEvent<'a> {
    DaUp { switch: u8, neighbor: &'a Address },
    DaDown { switch: u8 },
}

/// An immutable-by-convention LPM table for one node. Entries are kept in
/// canonical order: prefix length descending, then lexicographic.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardingTable {
    owner: Address,
    neighbors: BTreeMap<Port, Address>,
    candidates: Vec<Candidate>,
    entries: Vec<PrefixEntry>,
}

fn candidates_for(owner: &Address, neighbor: &Address, port: Port) -> Vec<Candidate> {
    let d = owner.d();
    if neighbor == owner {
        // degenerate self-loop neighbor: contributes nothing
        return Vec::new();
    }
    (1..=d)
        .map(|l| Candidate {
            prefix: neighbor.symbols()[d - l..].to_vec(),
            port,
            path_length: d - l + 1,
        })
        .collect()
}

/// Reduce candidates: (a) merge identical prefixes keeping the minimum path
/// length, (b) drop any entry whose matching addresses are all covered by
/// strictly longer prefixes.
fn reduce(candidates: &[Candidate], b: usize, d: usize) -> Vec<PrefixEntry> {
    let mut by_prefix: BTreeMap<Vec<u8>, PrefixEntry> = BTreeMap::new();
    for c in candidates {
        match by_prefix.get_mut(&c.prefix) {
            None => {
                by_prefix.insert(
                    c.prefix.clone(),
                    PrefixEntry {
                        prefix: c.prefix.clone(),
                        ports: BTreeSet::from([c.port]),
                        path_length: c.path_length,
                    },
                );
            }
            Some(e) if c.path_length < e.path_length => {
                e.path_length = c.path_length;
                e.ports = BTreeSet::from([c.port]);
            }
            Some(e) if c.path_length == e.path_length => {
                e.ports.insert(c.port);
            }
            Some(_) => {}
        }
    }

    // Longest first so that coverage is always checked against kept longer
    // entries (a dropped longer entry is itself covered by yet longer ones).
    let mut ordered: Vec<PrefixEntry> = by_prefix.into_values().collect();
    ordered.sort_by(|a, b| b.prefix.len().cmp(&a.prefix.len()).then(a.prefix.cmp(&b.prefix)));

    let mut kept: Vec<PrefixEntry> = Vec::new();
    let mut kept_by_len: Vec<BTreeSet<Vec<u8>>> = vec![BTreeSet::new(); d + 1];
    for e in ordered {
        let l = e.prefix.len();
        let covered = if l == d {
            false
        } else {
            all_matches_covered(&e.prefix, b, d, &kept_by_len)
        };
        if !covered {
            kept_by_len[l].insert(e.prefix.clone());
            kept.push(e);
        }
    }
    kept
}

/// True iff every full-length completion of `prefix` matches some kept
/// entry with a strictly longer prefix.
fn all_matches_covered(
    prefix: &[u8],
    b: usize,
    d: usize,
    kept_by_len: &[BTreeSet<Vec<u8>>],
) -> bool {
    let free = d - prefix.len();
    let total = b.pow(free as u32);
    let mut addr = prefix.to_vec();
    addr.resize(d, 0);
    for combo in 0..total {
        let mut rest = combo;
        for i in (prefix.len()..d).rev() {
            addr[i] = (rest % b) as u8;
            rest /= b;
        }
        let covered = (prefix.len() + 1..=d)
            .any(|len| kept_by_len[len].contains(&addr[..len]));
        if !covered {
            return false;
        }
    }
    true
}

impl ForwardingTable {
    pub fn build(
        owner: Address,
        neighbors: &[(Address, Port)],
    ) -> Result<ForwardingTable, ForwardingError> {
        let mut map = BTreeMap::new();
        for (addr, port) in neighbors {
            if addr.b() != owner.b() || addr.d() != owner.d() {
                return Err(ForwardingError::NeighborMismatch(addr.clone()));
            }
            if map.insert(*port, addr.clone()).is_some() {
                return Err(ForwardingError::DuplicatePort(*port));
            }
        }
        let mut table = ForwardingTable {
            owner,
            neighbors: map,
            candidates: Vec::new(),
            entries: Vec::new(),
        };
        table.candidates = table
            .neighbors
            .iter()
            .flat_map(|(p, z)| candidates_for(&table.owner, z, *p))
            .collect();
        table.reduce_in_place();
        Ok(table)
    }

    fn reduce_in_place(&mut self) {
        self.entries = reduce(&self.candidates, self.owner.b(), self.owner.d());
        self.entries
            .sort_by(|a, b| b.prefix.len().cmp(&a.prefix.len()).then(a.prefix.cmp(&b.prefix)));
    }

    pub fn owner(&self) -> &Address {
        &self.owner
    }

    pub fn neighbors(&self) -> &BTreeMap<Port, Address> {
        &self.neighbors
    }

    /// Non-local entries in canonical order.
    pub fn entries(&self) -> &[PrefixEntry] {
        &self.entries
    }

    /// Apply a local DA link event incrementally: candidates contributed by
    /// the affected port are removed/inserted and the reduction re-run.
    pub fn update_on_link_event(&mut self, event: LinkTableEvent<'_>) -> Result<(), ForwardingError> {
        match event {
            LinkTableEvent::DaUp { switch, neighbor } => {
                if neighbor.b() != self.owner.b() || neighbor.d() != self.owner.d() {
                    return Err(ForwardingError::NeighborMismatch(neighbor.clone()));
                }
                let port = Port::Da(switch);
                // replacing an existing DA neighbor is a displacement
                if self.neighbors.contains_key(&port) {
                    self.candidates.retain(|c| c.port != port);
                }
                self.neighbors.insert(port, neighbor.clone());
                self.candidates
                    .extend(candidates_for(&self.owner, neighbor, port));
            }
            LinkTableEvent::DaDown { switch } => {
                let port = Port::Da(switch);
                if self.neighbors.remove(&port).is_none() {
                    return Err(ForwardingError::UnknownLink(port));
                }
                self.candidates.retain(|c| c.port != port);
            }
        }
        self.reduce_in_place();
        Ok(())
    }

    /// Longest-prefix-match lookup; equal-cost port sets are resolved by
    /// hashing the opaque flow key so one flow stays on one path.
    pub fn lookup(&self, destination: &Address, flow_key: u64) -> Result<Hop, ForwardingError> {
        if destination == &self.owner {
            return Ok(Hop::Local);
        }
        for e in &self.entries {
            if e.matches(destination.symbols()) {
                return Ok(Hop::Port(pick_port(&e.ports, flow_key)));
            }
        }
        Err(ForwardingError::NoMatch(destination.clone()))
    }

    /// Canonical text dump: `<prefix-with-*> <ports> <path-length>` sorted
    /// by (prefix length descending, lexicographic); local entry last.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let d = self.owner.d();
        for e in &self.entries {
            out.push_str(&format!(
                "{} {} {}\n",
                prefix_string(&e.prefix, d),
                ports_string(&e.ports),
                e.path_length
            ));
        }
        out.push_str(&format!("{} Local 0\n", self.owner));
        out
    }
}

pub fn prefix_string(prefix: &[u8], d: usize) -> String {
    let mut s: String = prefix
        .iter()
        .map(|&x| char::from_digit(x as u32, 36).unwrap())
        .collect();
    s.push_str(&"*".repeat(d - prefix.len()));
    s
}

fn ports_string(ports: &BTreeSet<Port>) -> String {
    ports
        .iter()
        .map(|p| p.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn pick_port(ports: &BTreeSet<Port>, flow_key: u64) -> Port {
    let n = ports.len();
    if n == 1 {
        return *ports.iter().next().unwrap();
    }
    let mut h = DefaultHasher::new();
    flow_key.hash(&mut h);
    *ports.iter().nth((h.finish() % n as u64) as usize).unwrap()
}

/// The local neighbor set of `v` on the hybrid topology: static
/// out-neighbors (self-loops excluded) plus up DA out-links.
pub fn neighbors_of(topo: &KevinTopology, v: usize) -> Vec<(Address, Port)> {
    let space = topo.space();
    let mut out: Vec<(Address, Port)> = topo
        .static_out_neighbors(v)
        .map(|(x, w)| (space.address_of(w), Port::Static(x)))
        .collect();
    for i in 0..topo.k_d() {
        if let Some(link) = topo.da_out(v, i) {
            if link.is_up() {
                out.push((space.address_of(link.receiver), Port::Da(i as u8)));
            }
        }
    }
    out
}

pub fn table_for(topo: &KevinTopology, v: usize) -> ForwardingTable {
    let owner = topo.space().address_of(v);
    ForwardingTable::build(owner, &neighbors_of(topo, v)).expect("topology neighbors are valid")
}

/// Resolve the node reached through `port` from `v`.
pub fn port_target(topo: &KevinTopology, v: usize, port: Port) -> Option<usize> {
    match port {
        Port::Static(x) => Some(topo.static_neighbor(v, x)),
        Port::Da(i) => topo.da_out(v, i as usize).filter(|l| l.is_up()).map(|l| l.receiver),
    }
}

/// Greedy LPM walk from `s` to `t` over a prebuilt table set. Returns the
/// hops as (node, chosen port); empty when `s == t`.
pub fn route_ports_with_tables(
    topo: &KevinTopology,
    tables: &[ForwardingTable],
    s: usize,
    t: usize,
    flow_key: u64,
) -> Result<Vec<(usize, Port)>, ForwardingError> {
    let dest = topo.space().address_of(t);
    let mut hops = Vec::new();
    let mut cur = s;
    while cur != t {
        if hops.len() > topo.dimension() {
            return Err(ForwardingError::RouteCorrupt(topo.space().address_of(s)));
        }
        match tables[cur].lookup(&dest, flow_key)? {
            Hop::Local => break,
            Hop::Port(p) => {
                let next = port_target(topo, cur, p)
                    .ok_or_else(|| ForwardingError::RouteCorrupt(topo.space().address_of(cur)))?;
                hops.push((cur, p));
                cur = next;
            }
        }
    }
    Ok(hops)
}

/// Greedy route as the ordered node list, building tables on demand.
pub fn greedy_route(
    topo: &KevinTopology,
    s: usize,
    t: usize,
    flow_key: u64,
) -> Result<Vec<usize>, ForwardingError> {
    let mut path = vec![s];
    let mut cur = s;
    let dest = topo.space().address_of(t);
    while cur != t {
        if path.len() > topo.dimension() + 1 {
            return Err(ForwardingError::RouteCorrupt(topo.space().address_of(s)));
        }
        let table = table_for(topo, cur);
        match table.lookup(&dest, flow_key)? {
            Hop::Local => break,
            Hop::Port(p) => {
                cur = port_target(topo, cur, p)
                    .ok_or_else(|| ForwardingError::RouteCorrupt(topo.space().address_of(cur)))?;
                path.push(cur);
            }
        }
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::debruijn::debruijn_distance;

    fn addr(s: &str) -> Address {
        Address::parse(s, 2).unwrap()
    }

    fn fig3b_table() -> ForwardingTable {
        ForwardingTable::build(
            addr("011"),
            &[(addr("110"), Port::Static(0)), (addr("111"), Port::Static(1))],
        )
        .unwrap()
    }

    fn fig4c_table() -> ForwardingTable {
        ForwardingTable::build(
            addr("011"),
            &[
                (addr("110"), Port::Static(0)),
                (addr("111"), Port::Static(1)),
                (addr("100"), Port::Da(0)),
            ],
        )
        .unwrap()
    }

    fn rows(t: &ForwardingTable) -> Vec<(String, Vec<Port>, usize)> {
        t.entries()
            .iter()
            .map(|e| {
                (
                    prefix_string(&e.prefix, t.owner().d()),
                    e.ports.iter().copied().collect(),
                    e.path_length,
                )
            })
            .collect()
    }

    #[test]
    fn static_table_matches_reduced_table_for_011() {
        let t = fig3b_table();
        assert_eq!(
            rows(&t),
            vec![
                ("110".into(), vec![Port::Static(0)], 1),
                ("111".into(), vec![Port::Static(1)], 1),
                ("10*".into(), vec![Port::Static(0)], 2),
                ("0**".into(), vec![Port::Static(0)], 3),
            ]
        );
    }

    #[test]
    fn hybrid_table_matches_reduced_table_with_da_port() {
        let t = fig4c_table();
        assert_eq!(
            rows(&t),
            vec![
                ("100".into(), vec![Port::Da(0)], 1),
                ("110".into(), vec![Port::Static(0)], 1),
                ("111".into(), vec![Port::Static(1)], 1),
                ("00*".into(), vec![Port::Da(0)], 2),
                ("10*".into(), vec![Port::Static(0)], 2),
                ("0**".into(), vec![Port::Static(0), Port::Da(0)], 3),
            ]
        );
    }

    #[test]
    fn self_loop_neighbor_yields_local_only() {
        let t = ForwardingTable::build(addr("000"), &[(addr("000"), Port::Static(0))]).unwrap();
        assert!(t.entries().is_empty());
        assert_eq!(t.dump(), "000 Local 0\n");
    }

    #[test]
    fn duplicate_port_rejected() {
        let err = ForwardingTable::build(
            addr("011"),
            &[(addr("110"), Port::Static(0)), (addr("111"), Port::Static(0))],
        )
        .unwrap_err();
        assert_eq!(err, ForwardingError::DuplicatePort(Port::Static(0)));
    }

    #[test]
    fn lookup_uses_longest_prefix() {
        let t = fig4c_table();
        // 001 matches 00* -> DA port
        assert_eq!(t.lookup(&addr("001"), 7).unwrap(), Hop::Port(Port::Da(0)));
        // owner address -> local
        assert_eq!(t.lookup(&addr("011"), 7).unwrap(), Hop::Local);
    }

    #[test]
    fn equal_cost_ports_hash_deterministically_and_progress() {
        let t = fig4c_table();
        let mut topo = crate::debruijn::KevinTopology::new(2, 3, 1).unwrap();
        topo.set_da_link(3, 4, 0).unwrap();
        for key in 0..32u64 {
            let hop = t.lookup(&addr("010"), key).unwrap();
            assert_eq!(hop, t.lookup(&addr("010"), key).unwrap());
            match hop {
                Hop::Port(p @ (Port::Static(0) | Port::Da(0))) => {
                    // both options yield 3-hop greedy routes
                    let next = port_target(&topo, 3, p).unwrap();
                    let path = greedy_route(&topo, next, 2, key).unwrap();
                    assert_eq!(path.len() - 1 + 1, 3);
                }
                other => panic!("unexpected hop {other:?}"),
            }
        }
    }

    #[test]
    fn greedy_route_static_worked_example() {
        let topo = crate::debruijn::KevinTopology::build_debruijn(2, 3).unwrap();
        let space = *topo.space();
        let path = greedy_route(&topo, space.parse("011").unwrap(), space.parse("001").unwrap(), 0)
            .unwrap();
        let strs: Vec<String> = path.iter().map(|&v| space.address_of(v).to_string()).collect();
        assert_eq!(strs, vec!["011", "110", "100", "001"]);
    }

    #[test]
    fn greedy_route_uses_da_shortcut() {
        let mut topo = crate::debruijn::KevinTopology::new(2, 3, 1).unwrap();
        let space = *topo.space();
        topo.set_da_link(space.parse("011").unwrap(), space.parse("100").unwrap(), 0)
            .unwrap();
        let path = greedy_route(&topo, space.parse("011").unwrap(), space.parse("001").unwrap(), 0)
            .unwrap();
        let strs: Vec<String> = path.iter().map(|&v| space.address_of(v).to_string()).collect();
        assert_eq!(strs, vec!["011", "100", "001"]);
    }

    #[test]
    fn greedy_route_self_pair() {
        let topo = crate::debruijn::KevinTopology::build_debruijn(2, 3).unwrap();
        assert_eq!(greedy_route(&topo, 5, 5, 0).unwrap(), vec![5]);
    }

    #[test]
    fn configuring_links_are_not_offered() {
        let mut topo = crate::debruijn::KevinTopology::new(2, 3, 1).unwrap();
        topo.set_da_link_with(crate::debruijn::DaLink {
            sender: 3,
            receiver: 4,
            switch: 0,
            state: crate::debruijn::DaLinkState::Configuring { up_at: 5.0 },
            set_time: 0.0,
            reserved_until: 10.0,
            confirmed: true,
        })
        .unwrap();
        assert!(neighbors_of(&topo, 3).iter().all(|(_, p)| *p != Port::Da(0)));
    }

    #[test]
    fn link_up_event_turns_fig3b_into_fig4c() {
        let mut t = fig3b_table();
        t.update_on_link_event(LinkTableEvent::DaUp {
            switch: 0,
            neighbor: &addr("100"),
        })
        .unwrap();
        assert_eq!(t, fig4c_table());
    }

    #[test]
    fn up_then_down_restores_original_table() {
        let orig = fig3b_table();
        let mut t = orig.clone();
        t.update_on_link_event(LinkTableEvent::DaUp {
            switch: 0,
            neighbor: &addr("100"),
        })
        .unwrap();
        t.update_on_link_event(LinkTableEvent::DaDown { switch: 0 }).unwrap();
        assert_eq!(t, orig);
    }

    #[test]
    fn down_event_for_unknown_link_is_an_error() {
        let mut t = fig3b_table();
        assert_eq!(
            t.update_on_link_event(LinkTableEvent::DaDown { switch: 1 }),
            Err(ForwardingError::UnknownLink(Port::Da(1)))
        );
    }

    #[test]
    fn greedy_equals_lpm_exhaustive_small() {
        // every LPM next hop minimizes the shift distance to the destination
        for (b, d) in [(2, 3), (2, 4), (3, 2)] {
            let topo = crate::debruijn::KevinTopology::build_debruijn(b, d).unwrap();
            let space = *topo.space();
            for v in 0..topo.node_count() {
                let table = table_for(&topo, v);
                for t in 0..topo.node_count() {
                    if v == t {
                        continue;
                    }
                    let dest = space.address_of(t);
                    let Hop::Port(p) = table.lookup(&dest, 0).unwrap() else {
                        panic!("non-local pair resolved to local");
                    };
                    let next = port_target(&topo, v, p).unwrap();
                    let best = topo
                        .static_out_neighbors(v)
                        .map(|(_, w)| space.distance_idx(w, t))
                        .min()
                        .unwrap();
                    assert_eq!(space.distance_idx(next, t), best, "v={v} t={t}");
                }
            }
        }
    }

    #[test]
    fn static_table_size_bound() {
        for (b, d) in [(2, 3), (2, 4), (3, 2), (4, 3)] {
            let topo = crate::debruijn::KevinTopology::build_debruijn(b, d).unwrap();
            for v in 0..topo.node_count() {
                assert!(table_for(&topo, v).entries().len() <= b * d);
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn strict_progress_along_routes(seed in 0u64..64, s in 0usize..16, t in 0usize..16) {
                use rand::prelude::*;
                let mut topo = crate::debruijn::KevinTopology::new(2, 4, 2).unwrap();
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                // random DA matchings
                for sw in 0..2 {
                    let mut targets: Vec<usize> = (0..16).collect();
                    targets.shuffle(&mut rng);
                    for (src, &dst) in targets.iter().enumerate().take(8).map(|(i, _)| i).zip(targets.iter()) {
                        if src != dst {
                            let _ = topo.set_da_link(src, dst, sw);
                        }
                    }
                }
                let space = *topo.space();
                let path = greedy_route(&topo, s, t, seed).unwrap();
                prop_assert!(path.len() <= space.d() + 1);
                for w in path.windows(2) {
                    prop_assert!(space.distance_idx(w[0], t) > space.distance_idx(w[1], t));
                }
            }
        }
    }
}
