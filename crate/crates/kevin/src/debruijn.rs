//! b-ary de Bruijn backbone: addresses, shift distance, decomposition into
//! directed perfect matchings, and the demand-aware link layer on top.

use std::fmt;

use thiserror::Error;

const DIGITS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("alphabet size must be at least 2, got {0}")]
    AlphabetTooSmall(usize),
    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("alphabet size {0} exceeds the supported maximum of 36")]
    AlphabetTooLarge(usize),
    #[error("addresses have mismatched alphabet or dimension")]
    ParameterMismatch,
    #[error("invalid address string {0:?}")]
    BadAddressString(String),
    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("da switch index {index} out of range (k_d = {k_d})")]
    SwitchOutOfRange { index: usize, k_d: usize },
    #[error("a node cannot form a da link to itself")]
    SelfLink,
    #[error("port conflict on switch {switch}: {side} port of node {node} is occupied")]
    PortConflict {
        switch: usize,
        node: usize,
        side: &'static str,
    },
}

/// A node label: `d` symbols over the alphabet `[0, b-1]`, most significant
/// symbol first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address {
    b: u8,
    symbols: Vec<u8>,
}

impl Address {
    pub fn new(b: usize, symbols: Vec<u8>) -> Result<Self, TopologyError> {
        if b < 2 {
            return Err(TopologyError::AlphabetTooSmall(b));
        }
        if b > 36 {
            return Err(TopologyError::AlphabetTooLarge(b));
        }
        if symbols.len() < 2 {
            return Err(TopologyError::DimensionTooSmall(symbols.len()));
        }
        if symbols.iter().any(|&s| s as usize >= b) {
            return Err(TopologyError::BadAddressString(format!("{symbols:?}")));
        }
        Ok(Address { b: b as u8, symbols })
    }

    pub fn parse(s: &str, b: usize) -> Result<Self, TopologyError> {
        let symbols = s
            .bytes()
            .map(|c| {
                DIGITS[..b.min(36)]
                    .iter()
                    .position(|&d| d == c.to_ascii_lowercase())
                    .map(|p| p as u8)
                    .ok_or_else(|| TopologyError::BadAddressString(s.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Address::new(b, symbols)
    }

    pub fn b(&self) -> usize {
        self.b as usize
    }

    pub fn d(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    /// Left shift, entering `x` as the new least significant symbol.
    pub fn shift(&self, x: u8) -> Address {
        let mut symbols = self.symbols[1..].to_vec();
        symbols.push(x % self.b);
        Address {
            b: self.b,
            symbols,
        }
    }

    fn same_space(&self, other: &Address) -> bool {
        self.b == other.b && self.symbols.len() == other.symbols.len()
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.symbols {
            write!(f, "{}", DIGITS[s as usize] as char)?;
        }
        Ok(())
    }
}

/// Minimum number of shift operations turning `v` into `w`: the smallest
/// `j` such that the last `d-j` symbols of `v` equal the first `d-j` of `w`.
pub fn debruijn_distance(v: &Address, w: &Address) -> Result<usize, TopologyError> {
    if !v.same_space(w) {
        return Err(TopologyError::ParameterMismatch);
    }
    let d = v.d();
    for j in 0..=d {
        if v.symbols[j..] == w.symbols[..d - j] {
            return Ok(j);
        }
    }
    unreachable!("j = d always matches");
}

/// The (b, d) parameter pair with index/address conversions. Node indices
/// are the base-b value of the address, most significant symbol first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressSpace {
    b: usize,
    d: usize,
    n: usize,
}

impl AddressSpace {
    pub fn new(b: usize, d: usize) -> Result<Self, TopologyError> {
        if b < 2 {
            return Err(TopologyError::AlphabetTooSmall(b));
        }
        if b > 36 {
            return Err(TopologyError::AlphabetTooLarge(b));
        }
        if d < 2 {
            return Err(TopologyError::DimensionTooSmall(d));
        }
        let n = b.checked_pow(d as u32).expect("node count overflow");
        Ok(AddressSpace { b, d, n })
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn address_of(&self, index: usize) -> Address {
        assert!(index < self.n);
        let mut symbols = vec![0u8; self.d];
        let mut rest = index;
        for i in (0..self.d).rev() {
            symbols[i] = (rest % self.b) as u8;
            rest /= self.b;
        }
        Address {
            b: self.b as u8,
            symbols,
        }
    }

    pub fn index_of(&self, addr: &Address) -> Result<usize, TopologyError> {
        if addr.b() != self.b || addr.d() != self.d {
            return Err(TopologyError::ParameterMismatch);
        }
        Ok(addr
            .symbols
            .iter()
            .fold(0usize, |acc, &s| acc * self.b + s as usize))
    }

    pub fn parse(&self, s: &str) -> Result<usize, TopologyError> {
        let addr = Address::parse(s, self.b)?;
        if addr.d() != self.d {
            return Err(TopologyError::BadAddressString(s.to_string()));
        }
        self.index_of(&addr)
    }

    /// Index of the left shift of `v` entering symbol `x`.
    pub fn shift_idx(&self, v: usize, x: u8) -> usize {
        (v * self.b + x as usize) % self.n
    }

    /// Shift distance computed directly on node indices.
    pub fn distance_idx(&self, v: usize, w: usize) -> usize {
        // last d-j symbols of v: v mod b^(d-j); first d-j symbols of w: w / b^j
        let mut suffix_mod = self.n; // b^(d-j)
        let mut prefix_div = 1; // b^j
        for j in 0..=self.d {
            if v % suffix_mod == w / prefix_div {
                return j;
            }
            suffix_mod /= self.b;
            prefix_div *= self.b;
        }
        unreachable!()
    }
}

/// One of the `b` directed perfect matchings whose union is the DB(b, d)
/// edge set: matching `i` maps v to (v_2,...,v_d, (v_1 + i) mod b).
#[derive(Debug, Clone)]
pub struct StaticMatching {
    index: usize,
    mapping: Vec<usize>,
}

impl StaticMatching {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn apply(&self, node: usize) -> usize {
        self.mapping[node]
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }
}

pub fn decompose_matchings(b: usize, d: usize) -> Result<Vec<StaticMatching>, TopologyError> {
    let space = AddressSpace::new(b, d)?;
    let n = space.node_count();
    let msd = n / b; // b^(d-1)
    Ok((0..b)
        .map(|i| {
            let mapping = (0..n)
                .map(|v| {
                    let v1 = v / msd;
                    space.shift_idx(v, ((v1 + i) % b) as u8)
                })
                .collect();
            StaticMatching { index: i, mapping }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DaLinkState {
    Configuring { up_at: f64 },
    Up,
}

/// A directed demand-aware shortcut provided by one reconfigurable switch.
#[derive(Debug, Clone)]
pub struct DaLink {
    pub sender: usize,
    pub receiver: usize,
    pub switch: usize,
    pub state: DaLinkState,
    pub set_time: f64,
    /// Ports of this link count as occupied until this instant.
    pub reserved_until: f64,
    /// Whether the receiver side has acknowledged the link. Centrally
    /// scheduled links are confirmed at creation; the distributed protocol
    /// confirms on PortApprove delivery.
    pub confirmed: bool,
}

impl DaLink {
    pub fn is_up(&self) -> bool {
        matches!(self.state, DaLinkState::Up)
    }
}

#[derive(Debug, Clone, Default)]
struct DaSwitch {
    out: Vec<Option<DaLink>>,
    inp: Vec<Option<usize>>, // receiver -> sender
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetDaOutcome {
    Created,
    AlreadyPresent,
}

/// The hybrid topology: the DB(k_s, d) backbone as k_s static matchings plus
/// per-switch demand-aware link state for k_d reconfigurable switches.
#[derive(Debug, Clone)]
pub struct KevinTopology {
    space: AddressSpace,
    static_matchings: Vec<StaticMatching>,
    da: Vec<DaSwitch>,
}

impl KevinTopology {
    pub fn new(k_s: usize, d: usize, k_d: usize) -> Result<Self, TopologyError> {
        let space = AddressSpace::new(k_s, d)?;
        let static_matchings = decompose_matchings(k_s, d)?;
        let n = space.node_count();
        let da = (0..k_d)
            .map(|_| DaSwitch {
                out: vec![None; n],
                inp: vec![None; n],
            })
            .collect();
        Ok(KevinTopology {
            space,
            static_matchings,
            da,
        })
    }

    /// The static part only (k_d = 0).
    pub fn build_debruijn(b: usize, d: usize) -> Result<Self, TopologyError> {
        Self::new(b, d, 0)
    }

    pub fn space(&self) -> &AddressSpace {
        &self.space
    }

    pub fn node_count(&self) -> usize {
        self.space.node_count()
    }

    pub fn k_s(&self) -> usize {
        self.space.b()
    }

    pub fn k_d(&self) -> usize {
        self.da.len()
    }

    pub fn dimension(&self) -> usize {
        self.space.d()
    }

    pub fn static_matchings(&self) -> &[StaticMatching] {
        &self.static_matchings
    }

    /// Static out-neighbor reached by entering symbol `x` (the port label
    /// in the labeled de Bruijn graph).
    pub fn static_neighbor(&self, v: usize, x: u8) -> usize {
        self.space.shift_idx(v, x)
    }

    /// Static out-neighbors excluding self-loops, as (entered symbol, node).
    pub fn static_out_neighbors(&self, v: usize) -> impl Iterator<Item = (u8, usize)> + '_ {
        (0..self.k_s() as u8).filter_map(move |x| {
            let w = self.space.shift_idx(v, x);
            (w != v).then_some((x, w))
        })
    }

    pub fn da_out(&self, sender: usize, switch: usize) -> Option<&DaLink> {
        self.da[switch].out[sender].as_ref()
    }

    pub fn da_in_sender(&self, receiver: usize, switch: usize) -> Option<usize> {
        self.da[switch].inp[receiver]
    }

    pub fn da_in_link(&self, receiver: usize, switch: usize) -> Option<&DaLink> {
        self.da[switch].inp[receiver].map(|s| self.da[switch].out[s].as_ref().unwrap())
    }

    pub fn da_links(&self) -> impl Iterator<Item = &DaLink> + '_ {
        self.da.iter().flat_map(|sw| sw.out.iter().flatten())
    }

    /// Whether a link sender -> receiver exists (up or configuring) on any
    /// DA switch.
    pub fn has_da_link(&self, sender: usize, receiver: usize) -> bool {
        self.da
            .iter()
            .any(|sw| matches!(&sw.out[sender], Some(l) if l.receiver == receiver))
    }

    pub fn out_port_free(&self, node: usize, switch: usize, now: f64) -> bool {
        match &self.da[switch].out[node] {
            None => true,
            Some(l) => l.reserved_until <= now,
        }
    }

    pub fn in_port_free(&self, node: usize, switch: usize, now: f64) -> bool {
        match self.da_in_link(node, switch) {
            None => true,
            Some(l) => l.reserved_until <= now,
        }
    }

    /// Record a new DA link. Both ports must be free of any link; callers
    /// displace expired links explicitly via `clear_da_link`. Setting a link
    /// identical to an existing one is a no-op.
    pub fn set_da_link_with(&mut self, link: DaLink) -> Result<SetDaOutcome, TopologyError> {
        let n = self.node_count();
        let k_d = self.k_d();
        if link.switch >= k_d {
            return Err(TopologyError::SwitchOutOfRange {
                index: link.switch,
                k_d,
            });
        }
        if link.sender >= n {
            return Err(TopologyError::NodeOutOfRange {
                index: link.sender,
                n,
            });
        }
        if link.receiver >= n {
            return Err(TopologyError::NodeOutOfRange {
                index: link.receiver,
                n,
            });
        }
        if link.sender == link.receiver {
            return Err(TopologyError::SelfLink);
        }
        let sw = &mut self.da[link.switch];
        if let Some(existing) = &sw.out[link.sender] {
            if existing.receiver == link.receiver {
                return Ok(SetDaOutcome::AlreadyPresent);
            }
            return Err(TopologyError::PortConflict {
                switch: link.switch,
                node: link.sender,
                side: "output",
            });
        }
        if sw.inp[link.receiver].is_some() {
            return Err(TopologyError::PortConflict {
                switch: link.switch,
                node: link.receiver,
                side: "input",
            });
        }
        sw.inp[link.receiver] = Some(link.sender);
        let sender = link.sender;
        sw.out[sender] = Some(link);
        Ok(SetDaOutcome::Created)
    }

    /// Convenience: immediately usable link, no reservation.
    pub fn set_da_link(
        &mut self,
        sender: usize,
        receiver: usize,
        switch: usize,
    ) -> Result<SetDaOutcome, TopologyError> {
        self.set_da_link_with(DaLink {
            sender,
            receiver,
            switch,
            state: DaLinkState::Up,
            set_time: 0.0,
            reserved_until: 0.0,
            confirmed: true,
        })
    }

    pub fn clear_da_link(&mut self, sender: usize, switch: usize) -> Option<DaLink> {
        let sw = &mut self.da[switch];
        let link = sw.out[sender].take()?;
        sw.inp[link.receiver] = None;
        Some(link)
    }

    pub fn da_link_mut(&mut self, sender: usize, switch: usize) -> Option<&mut DaLink> {
        self.da[switch].out[sender].as_mut()
    }

    /// Line-oriented edge dump: `<src> <dst> <kind> <switch-index>`, static
    /// edges (including self-loops) first, sorted by (src, switch).
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let space = self.space;
        for v in 0..self.node_count() {
            for m in &self.static_matchings {
                out.push_str(&format!(
                    "{} {} static {}\n",
                    space.address_of(v),
                    space.address_of(m.apply(v)),
                    m.index()
                ));
            }
        }
        for v in 0..self.node_count() {
            for (i, sw) in self.da.iter().enumerate() {
                if let Some(link) = &sw.out[v] {
                    out.push_str(&format!(
                        "{} {} da {}\n",
                        space.address_of(v),
                        space.address_of(link.receiver),
                        i
                    ));
                }
            }
        }
        out
    }

    /// Structural sanity: out/in maps mirror each other and per-switch
    /// degrees are at most one by construction.
    pub fn check_da_consistency(&self) -> bool {
        self.da.iter().all(|sw| {
            sw.out.iter().enumerate().all(|(s, l)| match l {
                Some(l) => l.sender == s && sw.inp[l.receiver] == Some(s),
                None => true,
            }) && sw.inp.iter().enumerate().all(|(r, s)| match s {
                Some(s) => matches!(&sw.out[*s], Some(l) if l.receiver == r),
                None => true,
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn addr(s: &str, b: usize) -> Address {
        Address::parse(s, b).unwrap()
    }

    /// Brute-force Eq. (1) edge set: v -> (v_2,...,v_d, x) for all x.
    fn edge_set(b: usize, d: usize) -> HashSet<(usize, usize)> {
        let space = AddressSpace::new(b, d).unwrap();
        let mut edges = HashSet::new();
        for v in 0..space.node_count() {
            for x in 0..b as u8 {
                edges.insert((v, space.shift_idx(v, x)));
            }
        }
        edges
    }

    /// BFS over the explicit edge set, used as the distance oracle.
    fn bfs_distances(b: usize, d: usize, from: usize) -> Vec<usize> {
        let space = AddressSpace::new(b, d).unwrap();
        let n = space.node_count();
        let mut dist = vec![usize::MAX; n];
        dist[from] = 0;
        let mut queue = std::collections::VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            for x in 0..b as u8 {
                let w = space.shift_idx(v, x);
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    #[test]
    fn db23_shape() {
        let topo = KevinTopology::build_debruijn(2, 3).unwrap();
        assert_eq!(topo.node_count(), 8);
        assert_eq!(topo.static_matchings().len(), 2);
        assert_eq!(edge_set(2, 3).len(), 16);
    }

    #[test]
    fn db23_neighbors_of_011() {
        let topo = KevinTopology::build_debruijn(2, 3).unwrap();
        let space = *topo.space();
        let v = space.parse("011").unwrap();
        let ns: HashSet<String> = topo
            .static_out_neighbors(v)
            .map(|(_, w)| space.address_of(w).to_string())
            .collect();
        assert_eq!(ns, HashSet::from(["110".to_string(), "111".to_string()]));
    }

    #[test]
    fn regularity_with_self_loops() {
        for (b, d) in [(2, 3), (3, 2), (4, 3)] {
            let space = AddressSpace::new(b, d).unwrap();
            let mut indeg = vec![0usize; space.node_count()];
            let mut edges = 0;
            for v in 0..space.node_count() {
                for x in 0..b as u8 {
                    indeg[space.shift_idx(v, x)] += 1;
                    edges += 1;
                }
            }
            assert_eq!(edges, b.pow(d as u32 + 1));
            assert!(indeg.iter().all(|&i| i == b));
        }
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(KevinTopology::build_debruijn(1, 3).is_err());
        assert!(KevinTopology::build_debruijn(2, 1).is_err());
    }

    #[test]
    fn distance_worked_example() {
        assert_eq!(
            debruijn_distance(&addr("011", 2), &addr("001", 2)).unwrap(),
            3
        );
        assert_eq!(
            debruijn_distance(&addr("011", 2), &addr("011", 2)).unwrap(),
            0
        );
    }

    #[test]
    fn distance_rejects_mismatched_spaces() {
        let v = addr("011", 2);
        let w = addr("0112", 3);
        assert!(debruijn_distance(&v, &w).is_err());
    }

    #[test]
    fn distance_equals_bfs_in_db24() {
        let space = AddressSpace::new(2, 4).unwrap();
        for v in 0..space.node_count() {
            let oracle = bfs_distances(2, 4, v);
            for w in 0..space.node_count() {
                assert_eq!(space.distance_idx(v, w), oracle[w], "pair ({v}, {w})");
                let dv = space.address_of(v);
                let dw = space.address_of(w);
                assert_eq!(debruijn_distance(&dv, &dw).unwrap(), oracle[w]);
            }
        }
    }

    #[test]
    fn decomposition_covers_edge_set() {
        for (b, d) in [(2, 3), (3, 2)] {
            let matchings = decompose_matchings(b, d).unwrap();
            assert_eq!(matchings.len(), b);
            let n = b.pow(d as u32);
            let mut union = HashSet::new();
            for m in &matchings {
                // permutation check
                let images: HashSet<_> = m.mapping().iter().collect();
                assert_eq!(images.len(), n);
                for v in 0..n {
                    assert!(union.insert((v, m.apply(v))), "duplicate edge");
                }
            }
            assert_eq!(union, edge_set(b, d));
        }
    }

    #[test]
    fn matching_zero_fixes_constant_addresses() {
        let matchings = decompose_matchings(2, 3).unwrap();
        assert_eq!(matchings[0].apply(0), 0); // 000 -> 000 self-loop
        assert_eq!(matchings[0].apply(7), 7); // 111 -> 111
    }

    #[test]
    fn set_da_link_basic() {
        let mut topo = KevinTopology::new(2, 3, 1).unwrap();
        let space = *topo.space();
        let s = space.parse("011").unwrap();
        let t = space.parse("100").unwrap();
        assert_eq!(topo.set_da_link(s, t, 0).unwrap(), SetDaOutcome::Created);
        assert_eq!(topo.da_out(s, 0).unwrap().receiver, t);
        // identical link again: no-op
        assert_eq!(
            topo.set_da_link(s, t, 0).unwrap(),
            SetDaOutcome::AlreadyPresent
        );
        // second sender to the same receiver input port: rejected
        let u = space.parse("000").unwrap();
        assert_eq!(
            topo.set_da_link(u, t, 0),
            Err(TopologyError::PortConflict {
                switch: 0,
                node: t,
                side: "input"
            })
        );
        assert!(topo.check_da_consistency());
    }

    #[test]
    fn da_self_link_forbidden() {
        let mut topo = KevinTopology::new(2, 3, 1).unwrap();
        assert_eq!(topo.set_da_link(3, 3, 0), Err(TopologyError::SelfLink));
    }

    #[test]
    fn dump_contains_static_and_da_edges() {
        let mut topo = KevinTopology::new(2, 3, 1).unwrap();
        topo.set_da_link(3, 4, 0).unwrap();
        let dump = topo.dump();
        // matching 0 maps 011 to 110 (enters symbol v1 = 0)
        assert!(dump.contains("011 110 static 0"));
        assert!(dump.contains("011 111 static 1"));
        assert!(dump.contains("011 100 da 0"));
        assert_eq!(dump.lines().count(), 17);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn matchings_are_permutations(b in 2usize..5, d in 2usize..5) {
                prop_assume!(b.pow(d as u32) <= 256);
                let matchings = decompose_matchings(b, d).unwrap();
                let n = b.pow(d as u32);
                let mut union = HashSet::new();
                for m in &matchings {
                    let images: HashSet<_> = m.mapping().iter().collect();
                    prop_assert_eq!(images.len(), n);
                    for v in 0..n {
                        prop_assert!(union.insert((v, m.apply(v))));
                    }
                }
                prop_assert_eq!(union.len(), b.pow(d as u32 + 1));
            }

            #[test]
            fn da_degrees_stay_bounded(ops in proptest::collection::vec(
                (0usize..16, 0usize..16, 0usize..2, proptest::bool::ANY), 0..64)) {
                let mut topo = KevinTopology::new(2, 4, 2).unwrap();
                for (s, r, sw, set) in ops {
                    if set {
                        let _ = topo.set_da_link(s, r, sw);
                    } else {
                        topo.clear_da_link(s, sw);
                    }
                    prop_assert!(topo.check_da_consistency());
                }
            }
        }
    }
}
