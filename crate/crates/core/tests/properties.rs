//! Property tests for the path enumeration and model-building invariants
//! on randomly generated small networks.

use std::collections::BTreeSet;

use proptest::prelude::*;

use fortifynet_core::kshortest::{dijkstra_to_target, k_shortest_paths};
use fortifynet_core::network::{DemandTable, Link, Network};

/// Random strongly-ish connected digraph on 3..=6 nodes: a directed ring
/// plus random chords, with random positive free-flow times.
fn arb_network() -> impl Strategy<Value = Network> {
    (3usize..=6).prop_flat_map(|n| {
        let chords = proptest::collection::vec((0..n, 0..n, 1u32..50), 0..8);
        let ring_times = proptest::collection::vec(1u32..50, n);
        (Just(n), chords, ring_times).prop_map(|(n, chords, ring_times)| {
            let mut links = Vec::new();
            let mut seen = BTreeSet::new();
            for i in 0..n {
                let (tail, head) = (i as u32 + 1, ((i + 1) % n) as u32 + 1);
                seen.insert((tail, head));
                links.push(Link {
                    id: links.len(),
                    tail,
                    head,
                    free_flow_time: ring_times[i] as f64,
                    capacity: 10.0,
                });
            }
            for (a, b, t) in chords {
                let (tail, head) = (a as u32 + 1, b as u32 + 1);
                if tail != head && seen.insert((tail, head)) {
                    links.push(Link {
                        id: links.len(),
                        tail,
                        head,
                        free_flow_time: t as f64,
                        capacity: 10.0,
                    });
                }
            }
            Network::new((1..=n as u32).collect::<Vec<_>>(), links).unwrap()
        })
    })
}

/// All simple paths from `s` to `t` by exhaustive DFS, as edge-id lists.
fn all_simple_paths(net: &Network, s: u32, t: u32) -> Vec<(f64, Vec<usize>)> {
    fn dfs(
        net: &Network,
        node: u32,
        t: u32,
        visited: &mut Vec<u32>,
        edges: &mut Vec<usize>,
        cost: f64,
        out: &mut Vec<(f64, Vec<usize>)>,
    ) {
        if node == t {
            out.push((cost, edges.clone()));
            return;
        }
        for &l in net.out_links(node) {
            let link = net.link(l);
            if visited.contains(&link.head) {
                continue;
            }
            visited.push(link.head);
            edges.push(l);
            dfs(net, link.head, t, visited, edges, cost + link.free_flow_time, out);
            edges.pop();
            visited.pop();
        }
    }
    let mut out = Vec::new();
    dfs(net, s, t, &mut vec![s], &mut Vec::new(), 0.0, &mut out);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The K returned paths are exactly the K cheapest simple paths
    /// (by cost; membership checked as multisets of costs).
    #[test]
    fn kshortest_matches_exhaustive_enumeration(net in arb_network(), k in 1usize..=5) {
        let weights = net.free_flow_weights();
        let paths = k_shortest_paths(&net, &weights, 1, 2, k).unwrap();
        let mut exhaustive = all_simple_paths(&net, 1, 2);
        exhaustive.sort_by(|a, b| a.0.total_cmp(&b.0));
        prop_assert_eq!(paths.len(), k.min(exhaustive.len()));
        for (got, want) in paths.iter().zip(exhaustive.iter()) {
            prop_assert!((got.cost() - want.0).abs() < 1e-9,
                "cost {} vs exhaustive {}", got.cost(), want.0);
        }
    }

    /// Paths are loopless, connected tail-to-head chains, sorted by cost.
    #[test]
    fn kshortest_paths_are_simple_and_sorted(net in arb_network(), k in 1usize..=6) {
        let weights = net.free_flow_weights();
        let paths = k_shortest_paths(&net, &weights, 1, 3, k).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for p in &paths {
            let nodes = p.nodes();
            let unique: BTreeSet<_> = nodes.iter().collect();
            prop_assert_eq!(unique.len(), nodes.len(), "loop in {:?}", nodes);
            prop_assert_eq!(nodes[0], 1);
            prop_assert_eq!(*nodes.last().unwrap(), 3);
            for (i, &e) in p.edges().iter().enumerate() {
                prop_assert_eq!(net.link(e).tail, nodes[i]);
                prop_assert_eq!(net.link(e).head, nodes[i + 1]);
            }
            let cost: f64 = p.edges().iter().map(|&e| weights[e]).sum();
            prop_assert!((cost - p.cost()).abs() < 1e-9);
            prop_assert!(p.cost() >= prev - 1e-12);
            prev = p.cost();
        }
    }

    /// The first path equals the Dijkstra shortest-path distance.
    #[test]
    fn first_path_is_dijkstra_optimal(net in arb_network()) {
        let weights = net.free_flow_weights();
        let (dist, _) = dijkstra_to_target(&net, &weights, 2).unwrap();
        let paths = k_shortest_paths(&net, &weights, 1, 2, 1).unwrap();
        prop_assert!((paths[0].cost() - dist[&1]).abs() < 1e-9);
    }

    /// Enumeration is deterministic across repeated calls.
    #[test]
    fn kshortest_is_deterministic(net in arb_network(), k in 1usize..=6) {
        let weights = net.free_flow_weights();
        let a = k_shortest_paths(&net, &weights, 1, 2, k).unwrap();
        let b = k_shortest_paths(&net, &weights, 1, 2, k).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert_eq!(x.nodes(), y.nodes());
        }
    }

    /// Measures never emit NaN; undefined values are represented as None.
    #[test]
    fn measures_are_nan_free(net in arb_network()) {
        let demand = DemandTable::new([((1u32, 2u32), 5.0)], 1.0).unwrap();
        for mv in fortifynet_core::measures::compute_all(&net, &demand).unwrap() {
            for (&node, value) in &mv.values {
                if let Some(v) = value {
                    prop_assert!(v.is_finite(),
                        "{:?} produced {} at node {}", mv.kind, v, node);
                }
            }
        }
    }
}
