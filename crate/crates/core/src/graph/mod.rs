//! Relationship graph over features.
//!
//! A DAG whose nodes are the dataset features. In linear mode every edge
//! carries a weight and each child is modelled as an intercept plus the
//! weighted sum of its parents. In CPD mode each node additionally carries a
//! binning of its (normalized) value range and a conditional probability
//! table indexed by the joint bin configuration of its parents.

mod io;
mod sample;

pub use io::GraphJson;
pub use sample::{sample_from_graph, EmpiricalMarginals};

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph contains a cycle through nodes {nodes:?}{}", edges_suffix(.edges))]
    Cycle { nodes: Vec<usize>, edges: Vec<String> },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("expected {expected} values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("graphs are over different node sets")]
    NodeSetMismatch,
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("graph json: {0}")]
    Json(String),
}

fn edges_suffix(edges: &[String]) -> String {
    if edges.is_empty() {
        String::new()
    } else {
        format!(" (edges: {})", edges.join(", "))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    #[default]
    Linear,
    Cpd,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Expert,
    #[default]
    Learned,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Expert => "expert",
            Provenance::Learned => "learned",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
    pub provenance: Provenance,
}

impl Edge {
    pub fn learned(src: usize, dst: usize, weight: f64) -> Self {
        Self { src, dst, weight, provenance: Provenance::Learned }
    }

    pub fn expert(src: usize, dst: usize, weight: f64) -> Self {
        Self { src, dst, weight, provenance: Provenance::Expert }
    }
}

/// Partition of one feature's value range into `k = cuts.len() + 1` bins.
///
/// Bin `j` covers `[cuts[j-1], cuts[j])`; values below the first cut land in
/// bin 0 and values at or above the last cut in bin `k-1`. `lo`/`hi` bound
/// the outer bins for sampling. Categorical features keep their codes so a
/// sampled bin maps back to a legal value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub cuts: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codes: Option<Vec<f64>>,
}

impl Binning {
    pub fn k(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn bin(&self, v: f64) -> usize {
        self.cuts.partition_point(|&c| c <= v)
    }

    /// `[lower, upper]` of bin `b`.
    pub fn bounds(&self, b: usize) -> (f64, f64) {
        let lower = if b == 0 { self.lo } else { self.cuts[b - 1] };
        let upper = if b + 1 == self.k() { self.hi } else { self.cuts[b] };
        (lower, upper)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.cuts.windows(2).any(|w| w[0] >= w[1]) || self.cuts.iter().any(|c| !c.is_finite()) {
            return Err(GraphError::Invalid("bin edges must be finite and strictly increasing".into()));
        }
        if self.lo > self.hi {
            return Err(GraphError::Invalid("bin range lower bound exceeds upper bound".into()));
        }
        if let Some(codes) = &self.codes {
            if codes.len() != self.k() {
                return Err(GraphError::Invalid("categorical codes must match the bin count".into()));
            }
        }
        Ok(())
    }
}

/// Conditional table of one node given its parents.
///
/// Row index is the mixed-radix number formed by the parents' bins, first
/// parent most significant. Each row is a distribution over the node's bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cpd {
    pub node: usize,
    pub parents: Vec<usize>,
    pub table: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationshipGraph {
    pub nodes: Vec<String>,
    pub mode: GraphMode,
    pub edges: Vec<Edge>,
    /// Expert vetoes: pairs `(src, dst)` that must never become edges.
    pub forbidden: Vec<(usize, usize)>,
    /// Per-node offset of the linear model; all zero unless learned from data.
    pub intercepts: Vec<f64>,
    /// CPD mode only: one binning per node.
    pub binnings: Vec<Binning>,
    /// CPD mode only: one table per node, in node order.
    pub cpds: Vec<Cpd>,
}

impl RelationshipGraph {
    pub fn new(nodes: Vec<String>) -> Self {
        let m = nodes.len();
        Self {
            nodes,
            intercepts: vec![0.0; m],
            ..Default::default()
        }
    }

    pub fn with_edges(nodes: Vec<String>, edges: Vec<Edge>) -> Self {
        let mut g = Self::new(nodes);
        g.edges = edges;
        g.canonicalize();
        g
    }

    pub fn m(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, name: &str) -> Result<usize, GraphError> {
        self.nodes
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    pub fn edge(&self, src: usize, dst: usize) -> Option<&Edge> {
        self.edges.iter().find(|e| e.src == src && e.dst == dst)
    }

    /// Parents of `node`, ascending.
    pub fn parents(&self, node: usize) -> Vec<usize> {
        let mut p: Vec<usize> = self.edges.iter().filter(|e| e.dst == node).map(|e| e.src).collect();
        p.sort_unstable();
        p
    }

    /// Dense `M × M` weight matrix, `w[dst][src]` (the LiNGAM `B` layout).
    pub fn weights(&self) -> Vec<Vec<f64>> {
        let mut w = vec![vec![0.0; self.m()]; self.m()];
        for e in &self.edges {
            w[e.dst][e.src] = e.weight;
        }
        w
    }

    pub fn intercept(&self, node: usize) -> f64 {
        self.intercepts.get(node).copied().unwrap_or(0.0)
    }

    /// Sorts edges by `(src, dst)` and forbidden pairs likewise.
    pub fn canonicalize(&mut self) {
        self.edges.sort_by_key(|e| (e.src, e.dst));
        self.forbidden.sort_unstable();
        self.forbidden.dedup();
        if self.intercepts.len() != self.m() {
            self.intercepts.resize(self.m(), 0.0);
        }
    }

    /// Structural and numeric invariants, including acyclicity.
    pub fn validate(&self) -> Result<Vec<usize>, GraphError> {
        let m = self.m();
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.src >= m || e.dst >= m {
                return Err(GraphError::Invalid(format!("edge {}→{} references a missing node", e.src, e.dst)));
            }
            if e.src == e.dst {
                return Err(GraphError::Invalid(format!("self-loop on node {}", e.src)));
            }
            if !e.weight.is_finite() {
                return Err(GraphError::Invalid(format!("edge {}→{} has a non-finite weight", e.src, e.dst)));
            }
            if !seen.insert((e.src, e.dst)) {
                return Err(GraphError::Invalid(format!("duplicate edge {}→{}", e.src, e.dst)));
            }
        }
        let order = validate_dag(self)?;
        if self.mode == GraphMode::Cpd {
            self.validate_cpds()?;
        }
        Ok(order)
    }

    fn validate_cpds(&self) -> Result<(), GraphError> {
        if self.binnings.len() != self.m() || self.cpds.len() != self.m() {
            return Err(GraphError::Invalid("cpd mode needs one binning and one table per node".into()));
        }
        for b in &self.binnings {
            b.validate()?;
        }
        for (i, cpd) in self.cpds.iter().enumerate() {
            if cpd.node != i || cpd.parents != self.parents(i) {
                return Err(GraphError::Invalid(format!("table for node {i} does not match the edge set")));
            }
            let rows: usize = cpd.parents.iter().map(|&p| self.binnings[p].k()).product();
            let k = self.binnings[i].k();
            if cpd.table.len() != rows || cpd.table.iter().any(|r| r.len() != k) {
                return Err(GraphError::Invalid(format!("table for node {i} has the wrong shape")));
            }
            for row in &cpd.table {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(GraphError::Invalid(format!("table row for node {i} is not a distribution")));
                }
            }
        }
        Ok(())
    }

    /// Mode-dispatching plausibility of a normalized instance.
    pub fn plausibility(&self, cf: &[f64]) -> Result<f64, GraphError> {
        match self.mode {
            GraphMode::Linear => plausibility_loss(self, cf),
            GraphMode::Cpd => plausibility_loss_cpd(self, cf),
        }
    }

    pub(crate) fn parent_config(&self, parents: &[usize], bins: impl Fn(usize) -> usize) -> usize {
        parents
            .iter()
            .fold(0, |acc, &p| acc * self.binnings[p].k() + bins(p))
    }

    pub(crate) fn describe_edge(&self, src: usize, dst: usize, prov: Provenance) -> String {
        format!("{}→{} ({prov})", self.nodes[src], self.nodes[dst])
    }
}

/// Topological order with ties broken by lowest node index.
pub fn validate_dag(g: &RelationshipGraph) -> Result<Vec<usize>, GraphError> {
    let m = g.m();
    let mut indegree = vec![0usize; m];
    let mut children = vec![Vec::new(); m];
    for e in &g.edges {
        indegree[e.dst] += 1;
        children[e.src].push(e.dst);
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..m).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(m);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    if order.len() == m {
        return Ok(order);
    }
    let nodes = find_cycle(m, &children, &indegree);
    let edges = nodes
        .iter()
        .zip(nodes.iter().cycle().skip(1))
        .map(|(&a, &b)| {
            let prov = g.edge(a, b).map(|e| e.provenance).unwrap_or_default();
            g.describe_edge(a, b, prov)
        })
        .collect();
    Err(GraphError::Cycle { nodes, edges })
}

/// Depth-first search over the nodes Kahn's pass could not remove; the first
/// back edge closes a cycle, which is rotated to start at its smallest index.
fn find_cycle(m: usize, children: &[Vec<usize>], indegree: &[usize]) -> Vec<usize> {
    fn dfs(v: usize, children: &[Vec<usize>], state: &mut [u8], path: &mut Vec<usize>) -> Option<Vec<usize>> {
        state[v] = 1;
        path.push(v);
        let mut next = children[v].clone();
        next.sort_unstable();
        for c in next {
            match state[c] {
                1 => {
                    let at = path.iter().position(|&p| p == c).expect("on path");
                    return Some(path[at..].to_vec());
                }
                0 => {
                    if let Some(cycle) = dfs(c, children, state, path) {
                        return Some(cycle);
                    }
                }
                _ => {}
            }
        }
        state[v] = 2;
        path.pop();
        None
    }
    // Nodes already emitted by Kahn's pass cannot be on a cycle.
    let mut state: Vec<u8> = indegree.iter().map(|&d| if d > 0 { 0 } else { 2 }).collect();
    for s in 0..m {
        if state[s] == 0 {
            if let Some(mut cycle) = dfs(s, children, &mut state, &mut Vec::new()) {
                let min_at = (0..cycle.len()).min_by_key(|&i| cycle[i]).unwrap();
                cycle.rotate_left(min_at);
                return cycle;
            }
        }
    }
    unreachable!("Kahn's pass stalled without a cycle")
}

/// Mean squared deviation of each child from its linear prediction; roots are
/// excluded and an edgeless graph scores 0.
pub fn plausibility_loss(g: &RelationshipGraph, cf: &[f64]) -> Result<f64, GraphError> {
    check_len(g, cf)?;
    let mut pred: BTreeMap<usize, f64> = BTreeMap::new();
    for e in &g.edges {
        *pred.entry(e.dst).or_insert_with(|| g.intercept(e.dst)) += e.weight * cf[e.src];
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred.iter().map(|(&i, p)| (cf[i] - p).powi(2)).sum();
    Ok(sum / pred.len() as f64)
}

/// Mean over children of `1 − P(bin_i | parent bins) / max(row)`.
pub fn plausibility_loss_cpd(g: &RelationshipGraph, cf: &[f64]) -> Result<f64, GraphError> {
    check_len(g, cf)?;
    if g.binnings.len() != g.m() || g.cpds.len() != g.m() {
        return Err(GraphError::Invalid("graph has no conditional tables".into()));
    }
    let bins: Vec<usize> = g
        .binnings
        .iter()
        .zip(cf)
        .enumerate()
        .map(|(i, (b, &v))| {
            if v < b.lo || v > b.hi {
                log::warn!("value {v} of `{}` lies outside the binned range; using the boundary bin", g.nodes[i]);
            }
            b.bin(v)
        })
        .collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for cpd in g.cpds.iter().filter(|c| !c.parents.is_empty()) {
        let row = &cpd.table[g.parent_config(&cpd.parents, |p| bins[p])];
        let max = row.iter().copied().fold(0.0, f64::max);
        total += if max > 0.0 { 1.0 - row[bins[cpd.node]] / max } else { 1.0 };
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

fn check_len(g: &RelationshipGraph, cf: &[f64]) -> Result<(), GraphError> {
    if cf.len() != g.m() {
        return Err(GraphError::DimensionMismatch { expected: g.m(), actual: cf.len() });
    }
    Ok(())
}

/// Combines an expert graph with a learned one.
///
/// Expert edges and vetoes win: a learned edge is dropped when the expert
/// declares the same pair, its reverse, or forbids it. The result keeps the
/// learned graph's mode and intercepts, carries the expert vetoes forward,
/// and must still be acyclic.
pub fn merge(expert: &RelationshipGraph, learned: &RelationshipGraph) -> Result<RelationshipGraph, GraphError> {
    if expert.nodes != learned.nodes {
        return Err(GraphError::NodeSetMismatch);
    }
    let expert_pairs: BTreeSet<(usize, usize)> = expert.edges.iter().map(|e| (e.src, e.dst)).collect();
    let forbidden: BTreeSet<(usize, usize)> = expert.forbidden.iter().chain(&learned.forbidden).copied().collect();
    let mut edges: Vec<Edge> = expert
        .edges
        .iter()
        .map(|e| Edge { provenance: Provenance::Expert, ..e.clone() })
        .collect();
    for e in &learned.edges {
        let pair = (e.src, e.dst);
        if expert_pairs.contains(&pair) || expert_pairs.contains(&(e.dst, e.src)) || forbidden.contains(&pair) {
            continue;
        }
        edges.push(e.clone());
    }
    let mut merged = RelationshipGraph {
        nodes: learned.nodes.clone(),
        mode: learned.mode,
        edges,
        forbidden: forbidden.into_iter().collect(),
        intercepts: learned.intercepts.clone(),
        binnings: learned.binnings.clone(),
        cpds: Vec::new(),
    };
    merged.canonicalize();
    validate_dag(&merged)?;
    if learned.mode == GraphMode::Cpd {
        let same_structure = (0..merged.m()).all(|i| merged.parents(i) == learned.parents(i));
        if !same_structure {
            return Err(GraphError::Invalid(
                "merging changed the parent sets of a cpd-mode graph; re-estimate its tables from data".into(),
            ));
        }
        merged.cpds = learned.cpds.clone();
    }
    Ok(merged)
}
