//! The 27 local node-vulnerability measures, grouped into connectivity,
//! accessibility, and criticality families, plus the ranking used to seed
//! disruption scenarios.
//!
//! Three computational groups:
//! * topological measures need only the graph (degree family, betweenness,
//!   closeness/harmonic, eigenvector, Katz, PageRank, neighborhood
//!   connectivity, group centrality, aggregate, average rating, average
//!   path distance, exposure, both complexity measures);
//! * flow measures need a [`FlowContext`] — by default an all-or-nothing
//!   assignment of each OD demand onto its cheapest free-flow route
//!   (φ, proportional flow, weighted node, both Tsallis redundancies);
//! * disruption measures remove one candidate node at a time and
//!   recompute distances and deliveries (average path distance after
//!   disruption, path-distance change, segmentwise, undelivered demand,
//!   weighted node after disruption).
//!
//! Distances are shortest-path costs under free-flow times. Where a
//! quantity is undefined for a node (e.g. closeness of a node that
//! reaches nothing) the vector stores an explicit `None`, never a NaN.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::kshortest::{dijkstra_to_target, k_shortest_paths};
use crate::network::{DemandTable, Network, NodeId};

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("flow context empty: no demand was deliverable")]
    EmptyFlow,
    #[error("measure {0:?} is not in this computational group")]
    WrongGroup(MeasureKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Category {
    Connectivity,
    Accessibility,
    Criticality,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Connectivity => "connectivity",
            Category::Accessibility => "accessibility",
            Category::Criticality => "criticality",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum MeasureKind {
    DegreeCentrality,
    IndegreeCentrality,
    OutdegreeCentrality,
    BetweennessCentrality,
    ClosenessCentrality,
    HarmonicCentrality,
    EigenvectorCentrality,
    KatzCentrality,
    PageRank,
    NeighborhoodConnectivity,
    GroupCentrality,
    AggregateMeasure,
    AverageRating,
    AveragePathDistance,
    AveragePathDistanceAfterDisruption,
    PhiNodeCentrality,
    ProportionalFlow,
    WeightedNode,
    WeightedNodeAfterDisruption,
    UndeliveredDemandAfterDisruption,
    PathDistanceChange,
    Segmentwise,
    Exposure,
    TsallisRedundancy,
    StarTsallisRedundancy,
    ComplexityMeasureTsallis,
    ComplexityMeasureDistribution,
}

use MeasureKind::*;

pub const ALL_MEASURES: [MeasureKind; 27] = [
    DegreeCentrality,
    IndegreeCentrality,
    OutdegreeCentrality,
    BetweennessCentrality,
    ClosenessCentrality,
    HarmonicCentrality,
    EigenvectorCentrality,
    KatzCentrality,
    PageRank,
    NeighborhoodConnectivity,
    GroupCentrality,
    AggregateMeasure,
    AverageRating,
    AveragePathDistance,
    AveragePathDistanceAfterDisruption,
    PhiNodeCentrality,
    ProportionalFlow,
    WeightedNode,
    WeightedNodeAfterDisruption,
    UndeliveredDemandAfterDisruption,
    PathDistanceChange,
    Segmentwise,
    Exposure,
    TsallisRedundancy,
    StarTsallisRedundancy,
    ComplexityMeasureTsallis,
    ComplexityMeasureDistribution,
];

impl MeasureKind {
    pub fn category(self) -> Category {
        match self {
            NeighborhoodConnectivity | PhiNodeCentrality | EigenvectorCentrality
            | ProportionalFlow | DegreeCentrality | IndegreeCentrality | OutdegreeCentrality
            | WeightedNodeAfterDisruption | WeightedNode => Category::Connectivity,
            PageRank | HarmonicCentrality | KatzCentrality | ClosenessCentrality | Exposure
            | BetweennessCentrality | AggregateMeasure | AverageRating => Category::Accessibility,
            UndeliveredDemandAfterDisruption | GroupCentrality | PathDistanceChange
            | AveragePathDistance | AveragePathDistanceAfterDisruption | Segmentwise
            | TsallisRedundancy | StarTsallisRedundancy | ComplexityMeasureTsallis
            | ComplexityMeasureDistribution => Category::Criticality,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DegreeCentrality => "degree",
            IndegreeCentrality => "indegree",
            OutdegreeCentrality => "outdegree",
            BetweennessCentrality => "betweenness",
            ClosenessCentrality => "closeness",
            HarmonicCentrality => "harmonic",
            EigenvectorCentrality => "eigenvector",
            KatzCentrality => "katz",
            PageRank => "pagerank",
            NeighborhoodConnectivity => "neighborhood_connectivity",
            GroupCentrality => "group_centrality",
            AggregateMeasure => "aggregate",
            AverageRating => "average_rating",
            AveragePathDistance => "avg_path_distance",
            AveragePathDistanceAfterDisruption => "avg_path_distance_disrupted",
            PhiNodeCentrality => "phi",
            ProportionalFlow => "proportional_flow",
            WeightedNode => "weighted_node",
            WeightedNodeAfterDisruption => "weighted_node_disrupted",
            UndeliveredDemandAfterDisruption => "undelivered_after_disruption",
            PathDistanceChange => "path_distance_change",
            Segmentwise => "segmentwise",
            Exposure => "exposure",
            TsallisRedundancy => "tsallis_redundancy",
            StarTsallisRedundancy => "star_tsallis_redundancy",
            ComplexityMeasureTsallis => "complexity_tsallis",
            ComplexityMeasureDistribution => "complexity_distribution",
        }
    }

    pub fn is_topological(self) -> bool {
        matches!(
            self,
            DegreeCentrality
                | IndegreeCentrality
                | OutdegreeCentrality
                | BetweennessCentrality
                | ClosenessCentrality
                | HarmonicCentrality
                | EigenvectorCentrality
                | KatzCentrality
                | PageRank
                | NeighborhoodConnectivity
                | GroupCentrality
                | AggregateMeasure
                | AverageRating
                | AveragePathDistance
                | Exposure
                | ComplexityMeasureTsallis
                | ComplexityMeasureDistribution
        )
    }

    pub fn is_flow(self) -> bool {
        matches!(
            self,
            PhiNodeCentrality | ProportionalFlow | WeightedNode | TsallisRedundancy
                | StarTsallisRedundancy
        )
    }

    pub fn is_disruption(self) -> bool {
        matches!(
            self,
            AveragePathDistanceAfterDisruption
                | WeightedNodeAfterDisruption
                | UndeliveredDemandAfterDisruption
                | PathDistanceChange
                | Segmentwise
        )
    }
}

/// One measure's value per node; `None` marks an undefined entry.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureVector {
    pub kind: MeasureKind,
    pub values: BTreeMap<NodeId, Option<f64>>,
}

impl MeasureVector {
    fn from_defined(kind: MeasureKind, values: BTreeMap<NodeId, f64>) -> Self {
        MeasureVector { kind, values: values.into_iter().map(|(n, v)| (n, Some(v))).collect() }
    }

    pub fn value(&self, n: NodeId) -> Option<f64> {
        self.values.get(&n).copied().flatten()
    }
}

/// Descending by value (undefined entries excluded), ties by ascending id.
pub fn rank_nodes(vector: &MeasureVector, top_m: usize) -> Vec<(NodeId, f64)> {
    let mut entries: Vec<(NodeId, f64)> =
        vector.values.iter().filter_map(|(&n, &v)| v.map(|v| (n, v))).collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(top_m);
    entries
}

// ---------------------------------------------------------------------------
// Shared graph primitives

/// d[i][j]: cheapest free-flow cost i→j (infinity when unreachable).
pub fn all_pairs_distances(network: &Network) -> BTreeMap<NodeId, BTreeMap<NodeId, f64>> {
    let weights = network.free_flow_weights();
    let mut d: BTreeMap<NodeId, BTreeMap<NodeId, f64>> =
        network.nodes().map(|n| (n, BTreeMap::new())).collect();
    for target in network.nodes() {
        let (dist, _) = dijkstra_to_target(network, &weights, target).expect("nonnegative weights");
        for (source, cost) in dist {
            d.get_mut(&source).unwrap().insert(target, cost);
        }
    }
    d
}

fn total_degree(network: &Network, n: NodeId) -> usize {
    network.in_links(n).len() + network.out_links(n).len()
}

fn degree_sum(network: &Network) -> usize {
    2 * network.links().len()
}

/// Distinct nodes adjacent to `n` through an edge in either direction.
fn neighbors(network: &Network, n: NodeId) -> Vec<NodeId> {
    let mut set = std::collections::BTreeSet::new();
    for &i in network.incident_links(n) {
        let l = network.link(i);
        set.insert(if l.tail == n { l.head } else { l.tail });
    }
    set.into_iter().collect()
}

/// Fraction of OD pairs whose (deterministic, lexicographically smallest)
/// shortest route passes node i as an intermediate node. The denominator
/// counts pairs for which a route exists.
pub fn betweenness_over_pairs(
    network: &Network,
    pairs: &[(NodeId, NodeId)],
) -> BTreeMap<NodeId, f64> {
    let weights = network.free_flow_weights();
    let mut hits: BTreeMap<NodeId, f64> = network.nodes().map(|n| (n, 0.0)).collect();
    let mut routable = 0usize;
    for &(o, d) in pairs {
        if o == d || !network.contains_node(o) || !network.contains_node(d) {
            continue;
        }
        let paths = k_shortest_paths(network, &weights, o, d, 1).expect("valid endpoints");
        let Some(p) = paths.first() else { continue };
        routable += 1;
        for &n in &p.nodes()[1..p.nodes().len() - 1] {
            *hits.get_mut(&n).unwrap() += 1.0;
        }
    }
    if routable > 0 {
        for v in hits.values_mut() {
            *v /= routable as f64;
        }
    }
    hits
}

fn all_ordered_pairs(network: &Network) -> Vec<(NodeId, NodeId)> {
    let nodes: Vec<NodeId> = network.nodes().collect();
    let mut pairs = Vec::new();
    for &a in &nodes {
        for &b in &nodes {
            if a != b {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

/// All-pairs betweenness (the topological default).
pub fn betweenness_all_pairs(network: &Network) -> BTreeMap<NodeId, f64> {
    betweenness_over_pairs(network, &all_ordered_pairs(network))
}

// ---------------------------------------------------------------------------
// Flow context

/// Flows from assigning every OD demand onto its cheapest free-flow route.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowContext {
    /// Total flow passing each node (routes visiting the node, endpoints included).
    pub node_flow: BTreeMap<NodeId, f64>,
    /// Flow on each link, by link index.
    pub link_flow: BTreeMap<usize, f64>,
    /// Flow delivered per destination node.
    pub delivered: BTreeMap<NodeId, f64>,
    /// The OD pairs the assignment was built from.
    pub od_pairs: Vec<(NodeId, NodeId)>,
}

impl FlowContext {
    /// All-or-nothing assignment; pairs without a route deliver nothing.
    pub fn all_or_nothing(network: &Network, demand: &DemandTable) -> Result<Self, MeasureError> {
        let weights = network.free_flow_weights();
        let mut node_flow: BTreeMap<NodeId, f64> = network.nodes().map(|n| (n, 0.0)).collect();
        let mut link_flow: BTreeMap<usize, f64> = BTreeMap::new();
        let mut delivered: BTreeMap<NodeId, f64> = BTreeMap::new();
        let mut od_pairs = Vec::new();
        for ((o, d), q) in demand.effective() {
            if !network.contains_node(o) || !network.contains_node(d) {
                continue;
            }
            od_pairs.push((o, d));
            let paths = k_shortest_paths(network, &weights, o, d, 1).expect("valid endpoints");
            let Some(p) = paths.first() else { continue };
            for &n in p.nodes() {
                *node_flow.get_mut(&n).unwrap() += q;
            }
            for &e in p.edges() {
                *link_flow.entry(e).or_insert(0.0) += q;
            }
            *delivered.entry(d).or_insert(0.0) += q;
        }
        if delivered.values().sum::<f64>() <= 0.0 {
            return Err(MeasureError::EmptyFlow);
        }
        Ok(FlowContext { node_flow, link_flow, delivered, od_pairs })
    }

    pub fn total_delivered(&self) -> f64 {
        self.delivered.values().sum()
    }

    fn total_node_flow(&self) -> f64 {
        self.node_flow.values().sum()
    }

    fn phi(&self, n: NodeId) -> f64 {
        self.node_flow.get(&n).copied().unwrap_or(0.0) / self.total_delivered()
    }
}

// ---------------------------------------------------------------------------
// Topological measures

const KATZ_ALPHA: f64 = 0.5;
const KATZ_HORIZON: usize = 10;
const PAGERANK_DAMPING: f64 = 0.85;
const TSALLIS_EM: f64 = 1.43;

pub fn topological_measures(network: &Network, kind: MeasureKind) -> MeasureVector {
    assert!(kind.is_topological(), "{kind:?} is not a topological measure");
    let nodes: Vec<NodeId> = network.nodes().collect();
    let deg_sum = degree_sum(network) as f64;
    let degree_share = |deg: usize| -> Option<f64> {
        if deg_sum == 0.0 {
            None
        } else {
            Some(deg as f64 / deg_sum)
        }
    };
    match kind {
        DegreeCentrality => MeasureVector {
            kind,
            values: nodes.iter().map(|&n| (n, degree_share(total_degree(network, n)))).collect(),
        },
        IndegreeCentrality => MeasureVector {
            kind,
            values: nodes.iter().map(|&n| (n, degree_share(network.in_links(n).len()))).collect(),
        },
        OutdegreeCentrality => MeasureVector {
            kind,
            values: nodes
                .iter()
                .map(|&n| (n, degree_share(network.out_links(n).len())))
                .collect(),
        },
        BetweennessCentrality => {
            MeasureVector::from_defined(kind, betweenness_all_pairs(network))
        }
        ClosenessCentrality => {
            let d = all_pairs_distances(network);
            MeasureVector {
                kind,
                values: nodes
                    .iter()
                    .map(|&n| {
                        let sum: f64 =
                            d[&n].iter().filter(|&(&j, v)| j != n && v.is_finite()).map(|(_, v)| v).sum();
                        (n, if sum > 0.0 { Some(1.0 / sum) } else { None })
                    })
                    .collect(),
            }
        }
        HarmonicCentrality => {
            let d = all_pairs_distances(network);
            MeasureVector {
                kind,
                values: nodes
                    .iter()
                    .map(|&n| {
                        // Unreachable nodes contribute zero; zero-distance
                        // (only the node itself) is skipped.
                        let sum: f64 = d[&n]
                            .iter()
                            .filter(|&(&j, v)| j != n && v.is_finite() && *v > 0.0)
                            .map(|(_, v)| 1.0 / v)
                            .sum();
                        (n, Some(sum))
                    })
                    .collect(),
            }
        }
        EigenvectorCentrality => MeasureVector::from_defined(kind, eigenvector(network)),
        KatzCentrality => {
            let mut acc: BTreeMap<NodeId, f64> = nodes.iter().map(|&n| (n, 0.0)).collect();
            let mut v: BTreeMap<NodeId, f64> = nodes.iter().map(|&n| (n, 1.0)).collect();
            let mut scale = 1.0;
            for _ in 0..KATZ_HORIZON {
                // v ← A·v accumulates row sums of successive powers.
                let mut next: BTreeMap<NodeId, f64> = nodes.iter().map(|&n| (n, 0.0)).collect();
                for l in network.links() {
                    *next.get_mut(&l.tail).unwrap() += v[&l.head];
                }
                v = next;
                scale *= KATZ_ALPHA;
                for (&n, a) in acc.iter_mut() {
                    *a += scale * v[&n];
                }
            }
            MeasureVector::from_defined(kind, acc)
        }
        PageRank => MeasureVector::from_defined(kind, pagerank(network)),
        NeighborhoodConnectivity => MeasureVector {
            kind,
            values: nodes
                .iter()
                .map(|&n| {
                    let nb = neighbors(network, n);
                    if nb.is_empty() {
                        (n, None)
                    } else {
                        let mean = nb.iter().map(|&j| total_degree(network, j) as f64).sum::<f64>()
                            / nb.len() as f64;
                        (n, Some(mean))
                    }
                })
                .collect(),
        },
        GroupCentrality => {
            let bc = betweenness_all_pairs(network);
            MeasureVector {
                kind,
                values: nodes
                    .iter()
                    .map(|&n| (n, Some(neighbors(network, n).iter().map(|j| bc[j]).sum())))
                    .collect(),
            }
        }
        AggregateMeasure => aggregate_measure(network),
        AverageRating => {
            // Literally a graph-level constant replicated per node.
            let min_deg = nodes.iter().map(|&n| total_degree(network, n)).min().unwrap_or(0);
            let value = if min_deg == 0 || nodes.is_empty() {
                None
            } else {
                Some(1.0 / (nodes.len() as f64 * min_deg as f64))
            };
            MeasureVector { kind, values: nodes.iter().map(|&n| (n, value)).collect() }
        }
        AveragePathDistance => {
            let d = all_pairs_distances(network);
            MeasureVector {
                kind,
                values: nodes
                    .iter()
                    .map(|&n| {
                        let mut terms = Vec::new();
                        for &j in &nodes {
                            if j == n {
                                continue;
                            }
                            let (a, b) = (d[&n][&j], d[&j][&n]);
                            if a.is_finite() && b.is_finite() {
                                terms.push((a + b) / 2.0);
                            }
                        }
                        if terms.is_empty() {
                            (n, None)
                        } else {
                            (n, Some(terms.iter().sum::<f64>() / terms.len() as f64))
                        }
                    })
                    .collect(),
            }
        }
        Exposure => exposure(network),
        ComplexityMeasureTsallis | ComplexityMeasureDistribution => complexity(network, kind),
        _ => unreachable!(),
    }
}

fn eigenvector(network: &Network) -> BTreeMap<NodeId, f64> {
    let nodes: Vec<NodeId> = network.nodes().collect();
    if nodes.is_empty() {
        return BTreeMap::new();
    }
    let n = nodes.len() as f64;
    let mut x: BTreeMap<NodeId, f64> = nodes.iter().map(|&v| (v, 1.0 / n)).collect();
    for _ in 0..10_000 {
        // Shifted iteration (A + I)x keeps the dominant eigenvector of A
        // while avoiding oscillation on periodic graphs.
        let mut next = x.clone();
        for l in network.links() {
            *next.get_mut(&l.tail).unwrap() += x[&l.head];
        }
        let sum: f64 = next.values().sum();
        if sum > 0.0 {
            for v in next.values_mut() {
                *v /= sum;
            }
        }
        let diff: f64 = nodes.iter().map(|v| (next[v] - x[v]).abs()).sum();
        x = next;
        if diff < 1e-10 {
            break;
        }
    }
    x
}

fn pagerank(network: &Network) -> BTreeMap<NodeId, f64> {
    let nodes: Vec<NodeId> = network.nodes().collect();
    if nodes.is_empty() {
        return BTreeMap::new();
    }
    let n = nodes.len() as f64;
    let mut x: BTreeMap<NodeId, f64> = nodes.iter().map(|&v| (v, 1.0 / n)).collect();
    for _ in 0..100_000 {
        let dangling: f64 =
            nodes.iter().filter(|&&v| network.out_links(v).is_empty()).map(|v| x[v]).sum();
        let mut next: BTreeMap<NodeId, f64> = nodes
            .iter()
            .map(|&v| (v, (1.0 - PAGERANK_DAMPING) / n + PAGERANK_DAMPING * dangling / n))
            .collect();
        for l in network.links() {
            let share = x[&l.tail] / network.out_links(l.tail).len() as f64;
            *next.get_mut(&l.head).unwrap() += PAGERANK_DAMPING * share;
        }
        let diff: f64 = nodes.iter().map(|v| (next[v] - x[v]).abs()).sum();
        x = next;
        if diff < 1e-13 {
            break;
        }
    }
    x
}

fn aggregate_measure(network: &Network) -> MeasureVector {
    let dc = topological_measures(network, DegreeCentrality);
    let hc = topological_measures(network, HarmonicCentrality);
    let bc = topological_measures(network, BetweennessCentrality);
    let mean = |v: &MeasureVector| -> Option<f64> {
        let vals: Vec<f64> = v.values.values().filter_map(|&x| x).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    let (mdc, mhc, mbc) = (mean(&dc), mean(&hc), mean(&bc));
    let w = 1.0 / 3.0;
    // A zero or undefined family mean drops that term rather than dividing
    // by zero.
    let term = |v: Option<f64>, m: Option<f64>| -> f64 {
        match (v, m) {
            (Some(v), Some(m)) if m != 0.0 => w * (v - m) / m,
            _ => 0.0,
        }
    };
    MeasureVector {
        kind: AggregateMeasure,
        values: network
            .nodes()
            .map(|n| {
                (n, Some(term(dc.value(n), mdc) + term(hc.value(n), mhc) + term(bc.value(n), mbc)))
            })
            .collect(),
    }
}

fn exposure(network: &Network) -> MeasureVector {
    let base = all_pairs_distances(network);
    let n_total = network.node_count() as f64;
    let denom = n_total * (n_total - 1.0);
    MeasureVector {
        kind: Exposure,
        values: network
            .nodes()
            .map(|i| {
                if denom <= 0.0 {
                    return (i, None);
                }
                let reduced = network.without_node(i);
                let after = all_pairs_distances(&reduced);
                let mut total = 0.0;
                for k in reduced.nodes() {
                    for l in reduced.nodes() {
                        if k == l {
                            continue;
                        }
                        let (b, a) = (base[&k][&l], after[&k][&l]);
                        // Pairs severed by the removal carry no finite term.
                        if b.is_finite() && a.is_finite() {
                            total += a - b;
                        }
                    }
                }
                (i, Some(total / denom))
            })
            .collect(),
    }
}

fn complexity(network: &Network, kind: MeasureKind) -> MeasureVector {
    let deg_sum = degree_sum(network) as f64;
    let bc = betweenness_all_pairs(network);
    let max_bc = bc.values().fold(0.0f64, |a, &b| a.max(b));
    MeasureVector {
        kind,
        values: network
            .nodes()
            .map(|n| {
                if deg_sum == 0.0 {
                    return (n, None);
                }
                let p = total_degree(network, n) as f64 / deg_sum;
                let v = match kind {
                    ComplexityMeasureDistribution => {
                        if p == 0.0 {
                            0.0
                        } else {
                            p * p.ln()
                        }
                    }
                    ComplexityMeasureTsallis => {
                        let q = 1.0 + max_bc - bc[&n];
                        if (q - 1.0).abs() < 1e-12 {
                            // (p^q − p)/(1 − q) → −p·ln p as q → 1.
                            if p == 0.0 {
                                0.0
                            } else {
                                -p * p.ln()
                            }
                        } else {
                            (p.powf(q) - p) / (1.0 - q)
                        }
                    }
                    _ => unreachable!(),
                };
                (n, Some(v))
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Flow measures

pub fn flow_measures(
    network: &Network,
    flow: &FlowContext,
    kind: MeasureKind,
) -> Result<MeasureVector, MeasureError> {
    if !kind.is_flow() {
        return Err(MeasureError::WrongGroup(kind));
    }
    if flow.total_delivered() <= 0.0 {
        return Err(MeasureError::EmptyFlow);
    }
    let nodes: Vec<NodeId> = network.nodes().collect();
    Ok(match kind {
        PhiNodeCentrality => MeasureVector {
            kind,
            values: nodes.iter().map(|&n| (n, Some(flow.phi(n)))).collect(),
        },
        ProportionalFlow => {
            // CF here is the node's share of total node flow.
            let total = flow.total_node_flow();
            let bc = betweenness_over_pairs(network, &flow.od_pairs);
            MeasureVector {
                kind,
                values: nodes
                    .iter()
                    .map(|&n| {
                        let cf = if total > 0.0 {
                            flow.node_flow.get(&n).copied().unwrap_or(0.0) / total
                        } else {
                            0.0
                        };
                        (n, Some((cf + bc[&n]) / 2.0))
                    })
                    .collect(),
            }
        }
        WeightedNode => {
            let bc = betweenness_over_pairs(network, &flow.od_pairs);
            MeasureVector {
                kind,
                values: nodes.iter().map(|&n| (n, Some((flow.phi(n) + bc[&n]) / 2.0))).collect(),
            }
        }
        StarTsallisRedundancy => MeasureVector {
            kind,
            values: nodes
                .iter()
                .map(|&n| {
                    let fi = flow.node_flow.get(&n).copied().unwrap_or(0.0);
                    if fi <= 0.0 {
                        return (n, Some(0.0));
                    }
                    let sum: f64 = network
                        .out_links(n)
                        .iter()
                        .map(|&e| {
                            let r = flow.link_flow.get(&e).copied().unwrap_or(0.0) / fi;
                            r - r * r
                        })
                        .sum();
                    (n, Some(sum / (TSALLIS_EM - 1.0)))
                })
                .collect(),
        },
        TsallisRedundancy => {
            let total = flow.total_node_flow();
            MeasureVector {
                kind,
                values: nodes
                    .iter()
                    .map(|&n| {
                        if total <= 0.0 {
                            return (n, Some(0.0));
                        }
                        let out: f64 = network
                            .out_links(n)
                            .iter()
                            .map(|&e| flow.link_flow.get(&e).copied().unwrap_or(0.0))
                            .sum();
                        let q_star: f64 = network
                            .out_links(n)
                            .iter()
                            .map(|&e| {
                                let r = flow.link_flow.get(&e).copied().unwrap_or(0.0) / total;
                                r * r
                            })
                            .sum();
                        (n, Some((out / total - q_star) / (TSALLIS_EM - 1.0)))
                    })
                    .collect(),
            }
        }
        _ => unreachable!(),
    })
}

// ---------------------------------------------------------------------------
// Disruption measures

pub fn disruption_measures(
    network: &Network,
    demand: &DemandTable,
    kind: MeasureKind,
) -> Result<MeasureVector, MeasureError> {
    if !kind.is_disruption() {
        return Err(MeasureError::WrongGroup(kind));
    }
    let base_flow = FlowContext::all_or_nothing(network, demand)?;
    let weights = network.free_flow_weights();
    let pairs: Vec<(NodeId, NodeId)> = demand.pairs().collect();

    // Mean shortest OD distance; unreachable/invalid pairs are excluded.
    let mean_od_distance = |net: &Network, skip: Option<NodeId>| -> Option<f64> {
        let w = net.free_flow_weights();
        let mut terms = Vec::new();
        for &(o, d) in &pairs {
            if Some(o) == skip || Some(d) == skip || !net.contains_node(o) || !net.contains_node(d)
            {
                continue;
            }
            let (dist, _) = dijkstra_to_target(net, &w, d).expect("nonnegative weights");
            let c = dist[&o];
            if c.is_finite() {
                terms.push(c);
            }
        }
        if terms.is_empty() {
            None
        } else {
            Some(terms.iter().sum::<f64>() / terms.len() as f64)
        }
    };
    let base_mean = mean_od_distance(network, None);
    let _ = &weights;

    let mut values: BTreeMap<NodeId, Option<f64>> = BTreeMap::new();
    for j in network.nodes() {
        let reduced = network.without_node(j);
        let v = match kind {
            AveragePathDistanceAfterDisruption => mean_od_distance(&reduced, Some(j)),
            PathDistanceChange => match (mean_od_distance(&reduced, Some(j)), base_mean) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            },
            Segmentwise => match (mean_od_distance(&reduced, Some(j)), base_mean) {
                (Some(a), Some(b)) => Some(base_flow.phi(j) * (a - b)),
                _ => None,
            },
            UndeliveredDemandAfterDisruption => {
                let w = reduced.free_flow_weights();
                let mut delivered_after = 0.0;
                for &(o, d) in &pairs {
                    if o == j || d == j {
                        continue;
                    }
                    let (dist, _) =
                        dijkstra_to_target(&reduced, &w, d).expect("nonnegative weights");
                    if dist[&o].is_finite() {
                        delivered_after += demand.effective_demand(o, d).unwrap_or(0.0);
                    }
                }
                Some(delivered_after - base_flow.total_delivered())
            }
            WeightedNodeAfterDisruption => {
                let reduced_pairs: Vec<(NodeId, NodeId)> =
                    pairs.iter().copied().filter(|&(o, d)| o != j && d != j).collect();
                let bc = betweenness_over_pairs(&reduced, &reduced_pairs);
                let sub_demand = DemandTable::new(
                    reduced_pairs
                        .iter()
                        .map(|&(o, d)| ((o, d), demand.effective_demand(o, d).unwrap_or(0.0))),
                    1.0,
                )
                .expect("nonnegative demand");
                let phi_after = FlowContext::all_or_nothing(&reduced, &sub_demand).ok();
                let others: Vec<NodeId> = reduced.nodes().collect();
                if others.is_empty() {
                    None
                } else {
                    let sum: f64 = others
                        .iter()
                        .map(|&i| {
                            let phi = phi_after.as_ref().map(|f| f.phi(i)).unwrap_or(0.0);
                            (phi + bc[&i]) / 2.0
                        })
                        .sum();
                    Some(sum / others.len() as f64)
                }
            }
            _ => unreachable!(),
        };
        values.insert(j, v);
    }
    Ok(MeasureVector { kind, values })
}

/// All 27 measures for one network/demand instance.
pub fn compute_all(
    network: &Network,
    demand: &DemandTable,
) -> Result<Vec<MeasureVector>, MeasureError> {
    let flow = FlowContext::all_or_nothing(network, demand)?;
    ALL_MEASURES
        .iter()
        .map(|&kind| {
            if kind.is_topological() {
                Ok(topological_measures(network, kind))
            } else if kind.is_flow() {
                flow_measures(network, &flow, kind)
            } else {
                disruption_measures(network, demand, kind)
            }
        })
        .collect()
}
