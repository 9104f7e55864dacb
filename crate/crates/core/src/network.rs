//! Directed-network data model and ingestion of TNTP network files and
//! OD demand tables.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// External node label as it appears in the data file (1-based for Sioux Falls).
pub type NodeId = u32;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation: {0}")]
    Validation(String),
    #[error("demand: {0}")]
    Demand(String),
}

/// A directed link with BPR free-flow time `T_l^0` and capacity `V_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: usize,
    pub tail: NodeId,
    pub head: NodeId,
    pub free_flow_time: f64,
    pub capacity: f64,
}

/// Immutable directed network with adjacency and node-incidence indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: BTreeSet<NodeId>,
    links: Vec<Link>,
    out_adj: BTreeMap<NodeId, Vec<usize>>,
    in_adj: BTreeMap<NodeId, Vec<usize>>,
    incident: BTreeMap<NodeId, Vec<usize>>,
}

impl Network {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>, links: Vec<Link>) -> Result<Self, NetworkError> {
        let nodes: BTreeSet<NodeId> = nodes.into_iter().collect();
        let mut out_adj: BTreeMap<NodeId, Vec<usize>> = nodes.iter().map(|&n| (n, vec![])).collect();
        let mut in_adj = out_adj.clone();
        let mut incident = out_adj.clone();
        for (idx, link) in links.iter().enumerate() {
            if link.tail == link.head {
                return Err(NetworkError::Validation(format!(
                    "link {} is a self-loop at node {}",
                    link.id, link.tail
                )));
            }
            if link.capacity <= 0.0 {
                return Err(NetworkError::Validation(format!(
                    "link {} has nonpositive capacity {}",
                    link.id, link.capacity
                )));
            }
            if link.free_flow_time < 0.0 {
                return Err(NetworkError::Validation(format!(
                    "link {} has negative free-flow time {}",
                    link.id, link.free_flow_time
                )));
            }
            for end in [link.tail, link.head] {
                if !nodes.contains(&end) {
                    return Err(NetworkError::Validation(format!(
                        "link {} references unknown node {}",
                        link.id, end
                    )));
                }
            }
            out_adj.get_mut(&link.tail).unwrap().push(idx);
            in_adj.get_mut(&link.head).unwrap().push(idx);
            incident.get_mut(&link.tail).unwrap().push(idx);
            incident.get_mut(&link.head).unwrap().push(idx);
        }
        Ok(Network { nodes, links, out_adj, in_adj, incident })
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains_node(&self, n: NodeId) -> bool {
        self.nodes.contains(&n)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, idx: usize) -> &Link {
        &self.links[idx]
    }

    /// Link indices leaving `n`.
    pub fn out_links(&self, n: NodeId) -> &[usize] {
        self.out_adj.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Link indices entering `n`.
    pub fn in_links(&self, n: NodeId) -> &[usize] {
        self.in_adj.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The subset of links touching node `n` (either endpoint).
    pub fn incident_links(&self, n: NodeId) -> &[usize] {
        self.incident.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn find_link(&self, tail: NodeId, head: NodeId) -> Option<usize> {
        self.out_links(tail).iter().copied().find(|&i| self.links[i].head == head)
    }

    /// Free-flow time per link, in link-index order.
    pub fn free_flow_weights(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.free_flow_time).collect()
    }

    /// Nodes reachable from `source` following directed links.
    pub fn reachable_from(&self, source: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        if !self.nodes.contains(&source) {
            return seen;
        }
        seen.insert(source);
        let mut queue = VecDeque::from([source]);
        while let Some(n) = queue.pop_front() {
            for &idx in self.out_links(n) {
                let head = self.links[idx].head;
                if seen.insert(head) {
                    queue.push_back(head);
                }
            }
        }
        seen
    }

    /// Copy of the network with node `n` and its incident links removed.
    pub fn without_node(&self, n: NodeId) -> Network {
        let nodes: Vec<NodeId> = self.nodes.iter().copied().filter(|&m| m != n).collect();
        let mut links = Vec::new();
        for l in &self.links {
            if l.tail != n && l.head != n {
                let mut l = l.clone();
                l.id = links.len();
                links.push(l);
            }
        }
        Network::new(nodes, links).expect("subnetwork of a valid network is valid")
    }

    /// TNTP-format text that [`parse_tntp`] reads back to an identical network.
    pub fn to_tntp(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "<NUMBER OF NODES> {}", self.nodes.len());
        let _ = writeln!(out, "<NUMBER OF LINKS> {}", self.links.len());
        let _ = writeln!(out, "<END OF METADATA>");
        let _ = writeln!(out, "~ init term capacity length fftime b power speed toll type ;");
        for l in &self.links {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t0.15\t4\t0\t0\t1\t;",
                l.tail, l.head, l.capacity, l.free_flow_time, l.free_flow_time
            );
        }
        out
    }
}

/// Parse a TNTP network file: `<KEY> value` metadata, `~` comments, then
/// link rows `init term capacity length fftime b power speed toll type ;`.
pub fn parse_tntp(text: &str) -> Result<Network, NetworkError> {
    let mut declared_nodes: Option<usize> = None;
    let mut links: Vec<Link> = Vec::new();
    let mut max_node: NodeId = 0;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let stripped = raw.trim();
        if stripped.is_empty() || stripped.starts_with('~') {
            continue;
        }
        if stripped.starts_with('<') {
            if let Some(rest) = stripped.strip_prefix("<NUMBER OF NODES>") {
                let v = rest.trim().parse::<usize>().map_err(|_| NetworkError::Parse {
                    line,
                    msg: format!("bad node count {rest:?}"),
                })?;
                declared_nodes = Some(v);
            }
            continue;
        }
        // Data row; tolerate a trailing semicolon token.
        let row = stripped.trim_end_matches(';').trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split_whitespace().collect();
        if fields.len() < 5 {
            return Err(NetworkError::Parse {
                line,
                msg: format!("expected at least 5 fields, found {}", fields.len()),
            });
        }
        let parse_f = |i: usize, name: &str| -> Result<f64, NetworkError> {
            fields[i].parse::<f64>().map_err(|_| NetworkError::Parse {
                line,
                msg: format!("bad {name} {:?}", fields[i]),
            })
        };
        let tail = fields[0].parse::<NodeId>().map_err(|_| NetworkError::Parse {
            line,
            msg: format!("bad init node {:?}", fields[0]),
        })?;
        let head = fields[1].parse::<NodeId>().map_err(|_| NetworkError::Parse {
            line,
            msg: format!("bad term node {:?}", fields[1]),
        })?;
        let capacity = parse_f(2, "capacity")?;
        let free_flow_time = parse_f(4, "free-flow time")?;
        max_node = max_node.max(tail).max(head);
        links.push(Link { id: links.len(), tail, head, free_flow_time, capacity });
    }

    let n = declared_nodes.ok_or(NetworkError::Parse {
        line: 0,
        msg: "missing <NUMBER OF NODES> metadata".into(),
    })?;
    if max_node as usize > n {
        return Err(NetworkError::Validation(format!(
            "links reference node {max_node} but metadata declares {n} nodes"
        )));
    }
    Network::new(1..=n as NodeId, links)
}

/// OD demand entries; effective demand is `raw * scale_multiplier`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandTable {
    entries: BTreeMap<(NodeId, NodeId), f64>,
    scale_multiplier: f64,
}

impl DemandTable {
    pub fn new(
        entries: impl IntoIterator<Item = ((NodeId, NodeId), f64)>,
        scale_multiplier: f64,
    ) -> Result<Self, NetworkError> {
        if scale_multiplier <= 0.0 {
            return Err(NetworkError::Demand(format!(
                "scale multiplier must be positive, got {scale_multiplier}"
            )));
        }
        let mut map = BTreeMap::new();
        for ((o, d), v) in entries {
            if v < 0.0 {
                return Err(NetworkError::Demand(format!("negative demand {v} for ({o},{d})")));
            }
            if map.insert((o, d), v).is_some() {
                return Err(NetworkError::Demand(format!("duplicate OD pair ({o},{d})")));
            }
        }
        Ok(DemandTable { entries: map, scale_multiplier })
    }

    pub fn scale_multiplier(&self) -> f64 {
        self.scale_multiplier
    }

    /// OD pairs with effective (scaled) demand, in (origin, destination) order.
    pub fn effective(&self) -> impl Iterator<Item = ((NodeId, NodeId), f64)> + '_ {
        self.entries.iter().map(|(&od, &v)| (od, v * self.scale_multiplier))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.entries.keys().copied()
    }

    pub fn effective_demand(&self, o: NodeId, d: NodeId) -> Option<f64> {
        self.entries.get(&(o, d)).map(|v| v * self.scale_multiplier)
    }

    pub fn total_effective(&self) -> f64 {
        self.effective().map(|(_, v)| v).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn origins(&self) -> BTreeSet<NodeId> {
        self.entries.keys().map(|&(o, _)| o).collect()
    }

    pub fn destinations(&self) -> BTreeSet<NodeId> {
        self.entries.keys().map(|&(_, d)| d).collect()
    }
}

/// Parse `origin,destination,demand` CSV text (header required).
pub fn load_demand(csv_text: &str, scale_multiplier: f64) -> Result<DemandTable, NetworkError> {
    let mut lines = csv_text.lines().enumerate();
    let (_, header) = lines.next().ok_or(NetworkError::Demand("empty demand file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 {
        return Err(NetworkError::Demand(format!("expected 3 header columns, got {:?}", header)));
    }
    let mut entries = Vec::new();
    for (lineno, raw) in lines {
        let line = lineno + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(NetworkError::Parse { line, msg: format!("expected 3 fields in {row:?}") });
        }
        let o = fields[0].parse::<NodeId>().map_err(|_| NetworkError::Parse {
            line,
            msg: format!("bad origin {:?}", fields[0]),
        })?;
        let d = fields[1].parse::<NodeId>().map_err(|_| NetworkError::Parse {
            line,
            msg: format!("bad destination {:?}", fields[1]),
        })?;
        let v = fields[2].parse::<f64>().map_err(|_| NetworkError::Parse {
            line,
            msg: format!("bad demand {:?}", fields[2]),
        })?;
        entries.push(((o, d), v));
    }
    DemandTable::new(entries, scale_multiplier)
}

/// First-stage fortification data: per-node cost `c_i` and budget `N_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FortificationParams {
    pub cost: BTreeMap<NodeId, f64>,
    pub budget: u32,
}

impl FortificationParams {
    /// Uniform cost for every node of `network`.
    pub fn uniform(network: &Network, cost: f64, budget: u32) -> Self {
        FortificationParams { cost: network.nodes().map(|n| (n, cost)).collect(), budget }
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        serde_json::from_str(text).map_err(|e| NetworkError::Parse { line: 0, msg: e.to_string() })
    }

    pub fn validate(&self, network: &Network) -> Result<(), NetworkError> {
        for n in network.nodes() {
            match self.cost.get(&n) {
                None => {
                    return Err(NetworkError::Validation(format!("no fortification cost for node {n}")))
                }
                Some(c) if *c < 0.0 => {
                    return Err(NetworkError::Validation(format!("negative cost {c} at node {n}")))
                }
                _ => {}
            }
        }
        if self.budget as usize > network.node_count() {
            return Err(NetworkError::Validation(format!(
                "budget {} exceeds node count {}",
                self.budget,
                network.node_count()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

/// Cross-check a network against a demand table. Empty result means all
/// invariants hold and every OD pair is connected by a directed path.
pub fn validate(network: &Network, demand: &DemandTable) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut err = |msg: String| {
        findings.push(Finding { severity: Severity::Error, message: msg });
    };
    let mut reach_cache: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for (o, d) in demand.pairs().collect::<Vec<_>>() {
        if !network.contains_node(o) {
            err(format!("unknown origin {o}"));
            continue;
        }
        if !network.contains_node(d) {
            err(format!("unknown destination {d}"));
            continue;
        }
        let reach = reach_cache.entry(o).or_insert_with(|| network.reachable_from(o));
        if !reach.contains(&d) {
            err(format!("OD pair ({o},{d}) disconnected"));
        }
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn parses_sioux_falls() {
        let net = fixtures::sioux_falls_network();
        assert_eq!(net.node_count(), 24);
        assert_eq!(net.links().len(), 76);
    }

    #[test]
    fn parses_empty_network() {
        let net = parse_tntp("<NUMBER OF NODES> 0\n<END OF METADATA>\n").unwrap();
        assert_eq!(net.node_count(), 0);
        assert_eq!(net.links().len(), 0);
    }

    #[test]
    fn parses_single_row() {
        let net = parse_tntp("<NUMBER OF NODES> 2\n1 2 100 1 5 0.15 4 0 0 1 ;\n").unwrap();
        assert_eq!(net.links().len(), 1);
        let l = net.link(0);
        assert_eq!((l.tail, l.head), (1, 2));
        assert_eq!(l.capacity, 100.0);
        assert_eq!(l.free_flow_time, 5.0);
    }

    #[test]
    fn malformed_row_reports_line() {
        let e = parse_tntp("<NUMBER OF NODES> 2\n1 x 100 1 5 ;\n").unwrap_err();
        assert!(matches!(e, NetworkError::Parse { line: 2, .. }), "{e}");
    }

    #[test]
    fn node_count_mismatch_rejected() {
        let e = parse_tntp("<NUMBER OF NODES> 1\n1 2 100 1 5 0.15 4 0 0 1 ;\n").unwrap_err();
        assert!(matches!(e, NetworkError::Validation(_)), "{e}");
    }

    #[test]
    fn tntp_round_trip() {
        let net = fixtures::sioux_falls_network();
        let reparsed = parse_tntp(&net.to_tntp()).unwrap();
        assert_eq!(net, reparsed);
    }

    #[test]
    fn incident_links_match_brute_force() {
        let net = fixtures::sioux_falls_network();
        for n in net.nodes() {
            let mut brute: Vec<usize> = net
                .links()
                .iter()
                .enumerate()
                .filter(|(_, l)| l.tail == n || l.head == n)
                .map(|(i, _)| i)
                .collect();
            brute.sort_unstable();
            let mut got = net.incident_links(n).to_vec();
            got.sort_unstable();
            assert_eq!(got, brute, "node {n}");
        }
    }

    #[test]
    fn demand_scaling() {
        let t = load_demand("origin,destination,demand\n1,6,100\n", 100.0).unwrap();
        assert_eq!(t.effective_demand(1, 6), Some(10000.0));
        let t = load_demand("origin,destination,demand\n13,20,250\n", 1.0).unwrap();
        assert_eq!(t.effective_demand(13, 20), Some(250.0));
    }

    #[test]
    fn demand_table_5_shape() {
        let t = fixtures::sioux_falls_demand(100.0);
        assert_eq!(t.len(), 16);
        assert_eq!(t.origins().into_iter().collect::<Vec<_>>(), vec![1, 2, 3, 13]);
        assert_eq!(t.destinations().into_iter().collect::<Vec<_>>(), vec![6, 7, 18, 20]);
    }

    #[test]
    fn demand_rejects_duplicates_and_negatives() {
        assert!(load_demand("o,d,v\n1,6,100\n1,6,50\n", 1.0).is_err());
        assert!(load_demand("o,d,v\n1,6,-1\n", 1.0).is_err());
    }

    #[test]
    fn effective_demand_linear_in_multiplier() {
        let base = load_demand("o,d,v\n1,6,7\n", 1.0).unwrap();
        let scaled = load_demand("o,d,v\n1,6,7\n", 3.5).unwrap();
        assert_eq!(
            scaled.effective_demand(1, 6).unwrap(),
            3.5 * base.effective_demand(1, 6).unwrap()
        );
    }

    #[test]
    fn validate_clean_fixture() {
        let net = fixtures::sioux_falls_network();
        let dem = fixtures::sioux_falls_demand(100.0);
        assert!(validate(&net, &dem).is_empty());
    }

    #[test]
    fn validate_reports_unknown_destination() {
        let net = fixtures::sioux_falls_network();
        let dem = DemandTable::new([((1, 99), 5.0)], 1.0).unwrap();
        let findings = validate(&net, &dem);
        assert!(findings.iter().any(|f| f.message.contains("unknown destination")));
    }

    #[test]
    fn validate_reports_disconnected_pair() {
        // 1->2 and an isolated node 3.
        let net = Network::new(
            1..=3,
            vec![Link { id: 0, tail: 1, head: 2, free_flow_time: 1.0, capacity: 1.0 }],
        )
        .unwrap();
        let dem = DemandTable::new([((3, 2), 5.0)], 1.0).unwrap();
        let findings = validate(&net, &dem);
        assert!(findings.iter().any(|f| f.message.contains("disconnected")));
    }
}
