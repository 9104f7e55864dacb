//! Dijkstra-to-target and the priority-queue K-shortest loopless path
//! search used to build per-OD route sets.
//!
//! Candidates are expanded with the reduced cost
//! `cost + w(node,v) - dist[node] + dist[v]` against precomputed
//! shortest-path distances to the target, so partial paths pop from the
//! queue in nondecreasing completed-cost order and the first K arrivals
//! at the target are the K cheapest loopless paths.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, BTreeMap};

use serde_json::{json, Value};
use thiserror::Error;

use crate::network::{DemandTable, Network, NodeId};

#[derive(Debug, Error)]
pub enum PathError {
    #[error("negative weight {weight} on link {link}")]
    NegativeWeight { link: usize, weight: f64 },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no route from {0} to {1}")]
    Disconnected(NodeId, NodeId),
    #[error("weights length {got} does not match link count {expected}")]
    WeightLength { got: usize, expected: usize },
}

/// A loopless directed path stored as an ordered list of link indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    edges: Vec<usize>,
    nodes: Vec<NodeId>,
    cost: f64,
}

impl Path {
    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    /// Node sequence from source to target (a single node for the empty path).
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Path as (tail, head) pairs.
    pub fn edge_pairs(&self, network: &Network) -> Vec<(NodeId, NodeId)> {
        self.edges.iter().map(|&i| (network.link(i).tail, network.link(i).head)).collect()
    }

    pub fn visits(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }
}

fn check_weights(network: &Network, weights: &[f64]) -> Result<(), PathError> {
    if weights.len() != network.links().len() {
        return Err(PathError::WeightLength { got: weights.len(), expected: network.links().len() });
    }
    for (i, &w) in weights.iter().enumerate() {
        if w < 0.0 {
            return Err(PathError::NegativeWeight { link: i, weight: w });
        }
    }
    Ok(())
}

/// Min-heap entry ordered by (cost, lexicographic node sequence).
struct Candidate {
    priority: f64,
    nodes: Vec<NodeId>,
    edges: Vec<usize>,
    cost: f64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority && self.nodes == other.nodes
    }
}
impl Eq for Candidate {}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for BinaryHeap's max-heap: smallest priority first,
        // ties broken by lexicographically smallest node sequence.
        other
            .priority
            .total_cmp(&self.priority)
            .then_with(|| other.nodes.cmp(&self.nodes))
    }
}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path costs from every node to `target`.
///
/// Returns per-node distance (infinity when the target is unreachable)
/// and, for reached nodes other than the target, the first link of a
/// cheapest path toward it.
pub fn dijkstra_to_target(
    network: &Network,
    weights: &[f64],
    target: NodeId,
) -> Result<(BTreeMap<NodeId, f64>, BTreeMap<NodeId, usize>), PathError> {
    check_weights(network, weights)?;
    if !network.contains_node(target) {
        return Err(PathError::UnknownNode(target));
    }
    let mut dist: BTreeMap<NodeId, f64> =
        network.nodes().map(|n| (n, f64::INFINITY)).collect();
    let mut pred: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::new();
    dist.insert(target, 0.0);
    heap.push(Candidate { priority: 0.0, nodes: vec![target], edges: vec![], cost: 0.0 });
    while let Some(c) = heap.pop() {
        let node = c.nodes[0];
        if c.priority > dist[&node] {
            continue;
        }
        // Relax incoming links: distances are measured toward the target.
        for &idx in network.in_links(node) {
            let link = network.link(idx);
            let next = dist[&node] + weights[idx];
            if next < dist[&link.tail] {
                dist.insert(link.tail, next);
                pred.insert(link.tail, idx);
                heap.push(Candidate { priority: next, nodes: vec![link.tail], edges: vec![], cost: next });
            }
        }
    }
    Ok((dist, pred))
}

/// Up to `k` cheapest loopless paths from `source` to `target`, in
/// nondecreasing cost order; equal-cost paths are ordered by node sequence.
pub fn k_shortest_paths(
    network: &Network,
    weights: &[f64],
    source: NodeId,
    target: NodeId,
    k: usize,
) -> Result<Vec<Path>, PathError> {
    assert!(k >= 1, "k must be at least 1");
    check_weights(network, weights)?;
    if !network.contains_node(source) {
        return Err(PathError::UnknownNode(source));
    }
    let (dist, _) = dijkstra_to_target(network, weights, target)?;

    let mut found: Vec<Path> = Vec::new();
    let mut queue: BinaryHeap<Candidate> = BinaryHeap::new();
    if dist[&source].is_finite() {
        queue.push(Candidate {
            priority: dist[&source],
            nodes: vec![source],
            edges: vec![],
            cost: 0.0,
        });
    }
    while let Some(c) = queue.pop() {
        if found.len() >= k {
            break;
        }
        let node = *c.nodes.last().unwrap();
        if node == target {
            found.push(Path { edges: c.edges, nodes: c.nodes, cost: c.cost });
            continue;
        }
        for &idx in network.out_links(node) {
            let link = network.link(idx);
            // Loopless: never revisit a node already on the partial path.
            if c.nodes.contains(&link.head) {
                continue;
            }
            let h = dist[&link.head];
            if !h.is_finite() {
                continue;
            }
            let cost = c.cost + weights[idx];
            let mut nodes = c.nodes.clone();
            nodes.push(link.head);
            let mut edges = c.edges.clone();
            edges.push(idx);
            queue.push(Candidate { priority: cost + h, nodes, edges, cost });
        }
    }
    Ok(found)
}

/// The K enumerated loopless routes per OD pair with link membership.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteSet {
    routes: BTreeMap<(NodeId, NodeId), Vec<Path>>,
}

impl RouteSet {
    pub fn routes(&self, o: NodeId, d: NodeId) -> &[Path] {
        self.routes.get(&(o, d)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn pairs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.routes.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((NodeId, NodeId), &[Path])> + '_ {
        self.routes.iter().map(|(&od, p)| (od, p.as_slice()))
    }

    pub fn route_count(&self) -> usize {
        self.routes.values().map(Vec::len).sum()
    }

    /// Whether link `idx` belongs to any enumerated route.
    pub fn uses_link(&self, idx: usize) -> bool {
        self.routes.values().flatten().any(|p| p.edges().contains(&idx))
    }

    /// `{"(o,d)": [[[tail,head],...],...]}`
    pub fn to_json(&self, network: &Network) -> Value {
        let mut obj = serde_json::Map::new();
        for (&(o, d), paths) in &self.routes {
            let arr: Vec<Value> = paths
                .iter()
                .map(|p| {
                    Value::Array(
                        p.edge_pairs(network).into_iter().map(|(t, h)| json!([t, h])).collect(),
                    )
                })
                .collect();
            obj.insert(format!("({o},{d})"), Value::Array(arr));
        }
        Value::Object(obj)
    }
}

/// Enumerate up to `k` routes for every demanded OD pair.
pub fn build_route_sets(
    network: &Network,
    demand: &DemandTable,
    weights: &[f64],
    k: usize,
) -> Result<RouteSet, PathError> {
    let mut routes = BTreeMap::new();
    for (o, d) in demand.pairs() {
        let paths = k_shortest_paths(network, weights, o, d, k)?;
        if paths.is_empty() {
            return Err(PathError::Disconnected(o, d));
        }
        routes.insert((o, d), paths);
    }
    Ok(RouteSet { routes })
}
