//! Progressive-filling max-min fair rate allocation over directed links of
//! uniform capacity.

use std::collections::BTreeMap;

/// A directed link of the hybrid topology, identified by its tail node and
/// the outgoing port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkId {
    Static { node: usize, symbol: u8 },
    Da { node: usize, switch: usize },
}

/// Relative slack below which a link counts as saturated.
const SATURATION_TOL: f64 = 1e-12;

/// Water-filling: raise all rates uniformly, freeze flows as their
/// bottleneck links saturate. Every returned rate is the fair share at the
/// flow's bottleneck; no link exceeds `capacity`.
pub fn allocate_rates(paths: &[Vec<LinkId>], capacity: f64) -> Vec<f64> {
    assert!(capacity > 0.0);
    let mut rates = vec![0.0; paths.len()];
    let mut frozen: Vec<bool> = paths.iter().map(Vec::is_empty).collect();
    let mut remaining: BTreeMap<LinkId, f64> = BTreeMap::new();
    for path in paths {
        for &l in path {
            remaining.entry(l).or_insert(capacity);
        }
    }
    loop {
        let mut load: BTreeMap<LinkId, usize> = BTreeMap::new();
        for (i, path) in paths.iter().enumerate() {
            if !frozen[i] {
                for &l in path {
                    *load.entry(l).or_insert(0) += 1;
                }
            }
        }
        if load.is_empty() {
            break;
        }
        let inc = load
            .iter()
            .map(|(l, &c)| remaining[l] / c as f64)
            .fold(f64::INFINITY, f64::min);
        for (i, path) in paths.iter().enumerate() {
            if !frozen[i] {
                rates[i] += inc;
                for &l in path {
                    *remaining.get_mut(&l).unwrap() -= inc;
                }
            }
        }
        for (i, path) in paths.iter().enumerate() {
            if !frozen[i] && path.iter().any(|l| remaining[l] <= capacity * SATURATION_TOL) {
                frozen[i] = true;
            }
        }
    }
    rates
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(node: usize) -> LinkId {
        LinkId::Static { node, symbol: 0 }
    }

    #[test]
    fn k_flows_on_one_link_share_equally() {
        for k in 1..=5 {
            let paths = vec![vec![link(0)]; k];
            let rates = allocate_rates(&paths, 1.0);
            assert!(rates.iter().all(|&r| (r - 1.0 / k as f64).abs() < 1e-12));
        }
    }

    #[test]
    fn star_contention_both_get_half() {
        // A uses one link; B crosses A's link plus another
        let paths = vec![vec![link(0)], vec![link(0), link(1)]];
        let rates = allocate_rates(&paths, 1.0);
        assert!((rates[0] - 0.5).abs() < 1e-12);
        assert!((rates[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unfrozen_flow_takes_leftover_capacity() {
        // two flows bottlenecked on link 0 at 1/2; a third alone on link 1
        // rises to full capacity
        let paths = vec![vec![link(0)], vec![link(0)], vec![link(1)]];
        let rates = allocate_rates(&paths, 2.0);
        assert!((rates[0] - 1.0).abs() < 1e-12);
        assert!((rates[1] - 1.0).abs() < 1e-12);
        assert!((rates[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_input() {
        assert!(allocate_rates(&[], 1.0).is_empty());
    }
}
