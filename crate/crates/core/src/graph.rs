//! Aggregated weighted directed transaction graph and multi-hop queries.
//!
//! One directed edge per ordered wallet pair with at least one transfer; the
//! edge weight is the exact total volume in base units. Node ids are
//! positions in canonical address order, and every adjacency list is sorted
//! by node id, so the layout is a pure function of the event log.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Address, EventLog, LabelRegistry};
use crate::rng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("address {0} is not a node of the graph")]
    NodeNotFound(Address),
    #[error("density is undefined for fewer than 2 nodes")]
    Undefined,
    #[error("hop distance must be 2 or 3, got {0}")]
    InvalidHop(usize),
    #[error("fanout cap must be at least 1")]
    InvalidFanout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopQueryConfig {
    pub fanout_cap: usize,
    pub exclude_services: bool,
    pub direction: Direction,
}

impl Default for HopQueryConfig {
    fn default() -> Self {
        HopQueryConfig {
            fanout_cap: 200,
            exclude_services: true,
            direction: Direction::Both,
        }
    }
}

impl HopQueryConfig {
    /// Default configuration with truncation disabled.
    pub fn uncapped() -> Self {
        HopQueryConfig {
            fanout_cap: usize::MAX,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.fanout_cap == 0 {
            return Err(GraphError::InvalidFanout);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// Total transferred volume in base units.
    pub volume: u128,
    pub count: usize,
    /// Positions into the event log, in canonical order.
    pub event_refs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionGraph {
    nodes: Vec<Address>,
    ids: HashMap<Address, usize>,
    edges: Vec<Edge>,
    /// Per node: (neighbor, edge position), sorted by neighbor.
    out_adj: Vec<Vec<(usize, usize)>>,
    in_adj: Vec<Vec<(usize, usize)>>,
    /// Per node: distinct neighbors in either direction (self excluded) with
    /// the combined volume of both edge directions.
    undirected: Vec<Vec<(usize, u128)>>,
}

/// Per-node service flags, aligned with graph node ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceMask(Vec<bool>);

impl ServiceMask {
    pub fn none(graph: &TransactionGraph) -> Self {
        ServiceMask(vec![false; graph.node_count()])
    }

    pub fn from_registry(graph: &TransactionGraph, registry: &LabelRegistry) -> Self {
        ServiceMask(graph.nodes.iter().map(|a| registry.is_service(a)).collect())
    }

    pub fn is_service(&self, node: usize) -> bool {
        self.0[node]
    }
}

pub fn build_graph(log: &EventLog) -> TransactionGraph {
    TransactionGraph::build(log)
}

impl TransactionGraph {
    pub fn build(log: &EventLog) -> Self {
        let nodes: Vec<Address> = log.wallets().copied().collect();
        let ids: HashMap<Address, usize> = nodes.iter().enumerate().map(|(i, a)| (*a, i)).collect();

        let mut by_pair: std::collections::BTreeMap<(usize, usize), Edge> = std::collections::BTreeMap::new();
        for (pos, e) in log.events().iter().enumerate() {
            let (f, t) = (ids[&e.from], ids[&e.to]);
            let edge = by_pair.entry((f, t)).or_insert_with(|| Edge {
                from: f,
                to: t,
                volume: 0,
                count: 0,
                event_refs: Vec::new(),
            });
            edge.volume += e.amount;
            edge.count += 1;
            edge.event_refs.push(pos);
        }
        let edges: Vec<Edge> = by_pair.into_values().collect();
        Self::from_parts(nodes, ids, edges)
    }

    fn from_parts(nodes: Vec<Address>, ids: HashMap<Address, usize>, edges: Vec<Edge>) -> Self {
        let n = nodes.len();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        // edges are sorted by (from, to), so out lists come out sorted
        for (pos, e) in edges.iter().enumerate() {
            out_adj[e.from].push((e.to, pos));
            in_adj[e.to].push((e.from, pos));
        }
        for list in &mut in_adj {
            list.sort_unstable();
        }
        let mut undirected = vec![Vec::new(); n];
        for v in 0..n {
            let mut merged: Vec<(usize, u128)> = Vec::with_capacity(out_adj[v].len() + in_adj[v].len());
            let (mut i, mut j) = (0, 0);
            let (outs, ins) = (&out_adj[v], &in_adj[v]);
            while i < outs.len() || j < ins.len() {
                let next = match (outs.get(i), ins.get(j)) {
                    (Some(&(a, ea)), Some(&(b, eb))) if a == b => {
                        i += 1;
                        j += 1;
                        (a, edges[ea].volume + edges[eb].volume)
                    }
                    (Some(&(a, ea)), Some(&(b, _))) if a < b => {
                        i += 1;
                        (a, edges[ea].volume)
                    }
                    (Some(_), Some(&(b, eb))) => {
                        j += 1;
                        (b, edges[eb].volume)
                    }
                    (Some(&(a, ea)), None) => {
                        i += 1;
                        (a, edges[ea].volume)
                    }
                    (None, Some(&(b, eb))) => {
                        j += 1;
                        (b, edges[eb].volume)
                    }
                    (None, None) => unreachable!(),
                };
                if next.0 != v {
                    merged.push(next);
                }
            }
            undirected[v] = merged;
        }
        TransactionGraph {
            nodes,
            ids,
            edges,
            out_adj,
            in_adj,
            undirected,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Address] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn id(&self, address: &Address) -> Option<usize> {
        self.ids.get(address).copied()
    }

    pub fn address(&self, node: usize) -> Address {
        self.nodes[node]
    }

    fn require(&self, address: &Address) -> Result<usize, GraphError> {
        self.id(address).ok_or(GraphError::NodeNotFound(*address))
    }

    pub fn edge(&self, from: &Address, to: &Address) -> Option<&Edge> {
        let (f, t) = (self.id(from)?, self.id(to)?);
        self.out_adj[f]
            .binary_search_by_key(&t, |&(n, _)| n)
            .ok()
            .map(|i| &self.edges[self.out_adj[f][i].1])
    }

    /// Distinct neighbors (self excluded) with the volume relevant to `direction`.
    pub fn neighbors(&self, node: usize, direction: Direction) -> Vec<(usize, u128)> {
        match direction {
            Direction::Both => self.undirected[node].clone(),
            Direction::Out => self.out_adj[node]
                .iter()
                .filter(|(n, _)| *n != node)
                .map(|&(n, e)| (n, self.edges[e].volume))
                .collect(),
            Direction::In => self.in_adj[node]
                .iter()
                .filter(|(n, _)| *n != node)
                .map(|&(n, e)| (n, self.edges[e].volume))
                .collect(),
        }
    }

    /// Undirected neighbors (self excluded) as stored; sorted by node id.
    pub fn undirected_neighbors(&self, node: usize) -> &[(usize, u128)] {
        &self.undirected[node]
    }

    pub fn total_volume(&self) -> u128 {
        self.edges.iter().map(|e| e.volume).sum()
    }

    /// Direct counterparties of `node` by node id, in ascending id order.
    pub fn counterparty_ids(&self, node: usize, services: &ServiceMask, cfg: &HopQueryConfig) -> Vec<usize> {
        let mut cands = self.neighbors(node, cfg.direction);
        if cfg.exclude_services {
            cands.retain(|(n, _)| !services.is_service(*n));
        }
        cap_by_volume(cands, cfg.fanout_cap)
    }

    /// Node ids at exact undirected distance `k` from `node`; services are
    /// reachable endpoints but not traversed when `exclude_services` is set.
    pub fn k_hop_ids(
        &self,
        node: usize,
        k: usize,
        services: &ServiceMask,
        cfg: &HopQueryConfig,
    ) -> Result<Vec<usize>, GraphError> {
        if !(2..=3).contains(&k) {
            return Err(GraphError::InvalidHop(k));
        }
        Ok(self.hop_levels(node, k, services, cfg).pop().unwrap_or_default())
    }

    /// BFS levels 1..=k (index 0 holds distance 1).
    pub(crate) fn hop_levels(
        &self,
        node: usize,
        k: usize,
        services: &ServiceMask,
        cfg: &HopQueryConfig,
    ) -> Vec<Vec<usize>> {
        let mut visited = std::collections::HashSet::new();
        visited.insert(node);
        let mut frontier = vec![node];
        let mut levels = Vec::with_capacity(k);
        for _ in 0..k {
            let mut next = Vec::new();
            for &u in &frontier {
                if u != node && cfg.exclude_services && services.is_service(u) {
                    continue;
                }
                for v in cap_by_volume(self.undirected[u].clone(), cfg.fanout_cap) {
                    if visited.insert(v) {
                        next.push(v);
                    }
                }
            }
            next.sort_unstable();
            levels.push(next.clone());
            frontier = next;
        }
        levels
    }

    /// Copy of the graph keeping only the edges for which `keep` returns true.
    pub fn filter_edges(&self, mut keep: impl FnMut(&Edge) -> bool) -> TransactionGraph {
        let edges = self.edges.iter().filter(|e| keep(e)).cloned().collect();
        Self::from_parts(self.nodes.clone(), self.ids.clone(), edges)
    }

    /// Removes `fraction` of the edges, chosen uniformly with a seeded shuffle.
    pub fn ablate_edges(&self, fraction: f64, seed: u64) -> TransactionGraph {
        let n = self.edges.len();
        let remove = ((n as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, 0xab1a7e, 0));
        let mut dropped = vec![false; n];
        for &i in &order[..remove] {
            dropped[i] = true;
        }
        let mut pos = 0;
        self.filter_edges(|_| {
            let keep = !dropped[pos];
            pos += 1;
            keep
        })
    }

    /// Writes `edges.csv`: `from,to,volume_base_units,count`.
    pub fn write_edges<W: Write>(&self, sink: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(sink);
        writeln!(w, "from,to,volume_base_units,count")?;
        for e in &self.edges {
            writeln!(w, "{},{},{},{}", self.nodes[e.from], self.nodes[e.to], e.volume, e.count)?;
        }
        w.flush()
    }
}

fn cap_by_volume(mut cands: Vec<(usize, u128)>, cap: usize) -> Vec<usize> {
    if cands.len() > cap {
        cands.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        cands.truncate(cap);
    }
    let mut ids: Vec<usize> = cands.into_iter().map(|(n, _)| n).collect();
    ids.sort_unstable();
    ids
}

/// Distinct direct neighbors of `w` per `cfg`, in canonical address order.
pub fn counterparties(
    g: &TransactionGraph,
    w: &Address,
    services: &ServiceMask,
    cfg: &HopQueryConfig,
) -> Result<Vec<Address>, GraphError> {
    cfg.validate()?;
    let id = g.require(w)?;
    Ok(g.counterparty_ids(id, services, cfg).into_iter().map(|n| g.address(n)).collect())
}

/// Wallets at exact shortest undirected distance `k` ∈ {2, 3} from `w`.
pub fn k_hop_set(
    g: &TransactionGraph,
    w: &Address,
    k: usize,
    services: &ServiceMask,
    cfg: &HopQueryConfig,
) -> Result<Vec<Address>, GraphError> {
    cfg.validate()?;
    let id = g.require(w)?;
    Ok(g.k_hop_ids(id, k, services, cfg)?.into_iter().map(|n| g.address(n)).collect())
}

/// Fraction of possible directed edges present, self-loops excluded.
pub fn density(g: &TransactionGraph) -> Result<f64, GraphError> {
    let n = g.node_count();
    if n < 2 {
        return Err(GraphError::Undefined);
    }
    let m = g.edges.iter().filter(|e| e.from != e.to).count();
    Ok(m as f64 / (n as f64 * (n as f64 - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ServiceCategory, Token, TransferEvent, TxHash};

    fn addr(t: u64) -> Address {
        Address::from_tag(0, t)
    }

    fn log_of(edges: &[(u64, u64, u128)]) -> EventLog {
        let events = edges
            .iter()
            .enumerate()
            .map(|(i, &(f, t, amt))| TransferEvent {
                tx_hash: TxHash::from_tag(i as u64 + 1),
                log_index: 0,
                token: Token::Usdt,
                from: addr(f),
                to: addr(t),
                amount: amt,
                timestamp: i as i64,
            })
            .collect();
        EventLog::from_events(events)
    }

    #[test]
    fn parallel_transfers_aggregate() {
        let g = build_graph(&log_of(&[(1, 2, 100), (1, 2, 50)]));
        let e = g.edge(&addr(1), &addr(2)).unwrap();
        assert_eq!((e.volume, e.count), (150, 2));
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn direction_is_kept() {
        let g = build_graph(&log_of(&[(1, 2, 100), (2, 1, 100)]));
        assert_eq!(g.edge_count(), 2);
        assert!(g.edge(&addr(2), &addr(1)).is_some());
    }

    #[test]
    fn mixer_chain_volumes() {
        let g = build_graph(&log_of(&[(1, 2, 90_000_000), (2, 3, 82_416_000)]));
        assert_eq!(g.edge(&addr(1), &addr(2)).unwrap().volume, 90_000_000);
        assert_eq!(g.edge(&addr(2), &addr(3)).unwrap().volume, 82_416_000);
        assert_eq!(g.total_volume(), 172_416_000);
    }

    #[test]
    fn star_cap_keeps_heaviest() {
        let g = build_graph(&log_of(&[(0, 1, 10), (0, 2, 50), (0, 3, 30), (0, 4, 40), (0, 5, 20)]));
        let cfg = HopQueryConfig {
            fanout_cap: 3,
            ..HopQueryConfig::default()
        };
        let cps = counterparties(&g, &addr(0), &ServiceMask::none(&g), &cfg).unwrap();
        assert_eq!(cps, vec![addr(2), addr(3), addr(4)]);
    }

    #[test]
    fn services_are_excluded() {
        let g = build_graph(&log_of(&[(1, 9, 10)]));
        let mut reg = LabelRegistry::new();
        reg.insert(addr(9), ServiceCategory::Cex);
        let mask = ServiceMask::from_registry(&g, &reg);
        let cps = counterparties(&g, &addr(1), &mask, &HopQueryConfig::default()).unwrap();
        assert!(cps.is_empty());
        assert!(matches!(
            counterparties(&g, &addr(77), &mask, &HopQueryConfig::default()),
            Err(GraphError::NodeNotFound(_))
        ));
    }

    #[test]
    fn hop_sets_follow_shortest_distance() {
        let path = build_graph(&log_of(&[(1, 2, 1), (2, 3, 1)]));
        let none = ServiceMask::none(&path);
        let cfg = HopQueryConfig::default();
        assert_eq!(k_hop_set(&path, &addr(1), 2, &none, &cfg).unwrap(), vec![addr(3)]);

        let tri = build_graph(&log_of(&[(1, 2, 1), (2, 3, 1), (3, 1, 1)]));
        let none = ServiceMask::none(&tri);
        assert!(k_hop_set(&tri, &addr(1), 2, &none, &cfg).unwrap().is_empty());
        assert_eq!(k_hop_set(&tri, &addr(1), 4, &none, &cfg), Err(GraphError::InvalidHop(4)));
    }

    #[test]
    fn mixer_chain_hops_through_wallets_only() {
        // mixer(1) -> i1(2) -> i2(3) -> exchange(4)
        let g = build_graph(&log_of(&[(1, 2, 90), (2, 3, 82), (3, 4, 80)]));
        let mut reg = LabelRegistry::new();
        reg.insert(addr(1), ServiceCategory::Mixer);
        reg.insert(addr(4), ServiceCategory::Cex);
        let mask = ServiceMask::from_registry(&g, &reg);
        let cfg = HopQueryConfig::default();
        assert_eq!(k_hop_set(&g, &addr(1), 2, &mask, &cfg).unwrap(), vec![addr(3)]);
        assert_eq!(k_hop_set(&g, &addr(1), 3, &mask, &cfg).unwrap(), vec![addr(4)]);
        let raw = counterparties(&g, &addr(3), &ServiceMask::none(&g), &cfg).unwrap();
        assert_eq!(raw, vec![addr(2), addr(4)]);
    }

    #[test]
    fn density_formula() {
        let g = build_graph(&log_of(&[(1, 2, 1), (2, 3, 1)]));
        assert!((density(&g).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let mut all = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    all.push((a, b, 1));
                }
            }
        }
        all.push((0, 0, 5));
        assert_eq!(density(&build_graph(&log_of(&all))).unwrap(), 1.0);
        assert_eq!(density(&build_graph(&log_of(&[(1, 1, 3)]))), Err(GraphError::Undefined));
    }

    #[test]
    fn ablation_is_seeded() {
        let edges: Vec<_> = (0..50).map(|i| (i, i + 1, 1)).collect();
        let g = build_graph(&log_of(&edges));
        let a = g.ablate_edges(0.9, 3);
        let b = g.ablate_edges(0.9, 3);
        assert_eq!(a, b);
        assert_eq!(a.edge_count(), 5);
        assert_eq!(a.node_count(), g.node_count());
    }
}
