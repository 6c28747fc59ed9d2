//! The architecture graph: the union of every chain the population has
//! traversed, with per-edge fitness and sparsity weights.
//!
//! Node identity is (normalized label, phase). Within a chain a node takes
//! the phase of the edge that ends at it (the first node takes the first
//! edge's phase), so a label serving as the exit boundary of two phases
//! yields two distinct nodes and merged graphs cannot grow phase-skipping
//! shortcuts. Parallel edges between the same nodes with different kinds
//! are distinct.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::collections::VecDeque;
use std::ops::Bound;

use crate::chain::{
    normalize_label, validate_chain, AoeChain, BoundaryLabels, EdgeKind, Phase,
};
use crate::digest::digest_hex;
use crate::error::{Error, Result};
use crate::merge::{extract_candidates, propose_groups, canonicalize, StateJudge};

/// Initial fitness weight of a freshly inserted edge.
pub const INITIAL_FITNESS_WEIGHT: f64 = 0.5;

/// Deterministic node id for a state label in a phase.
pub fn node_id(label: &str, phase: Phase) -> String {
    format!("p{}:{}", phase.ordinal(), normalize_label(label))
}

/// A reasoning state in the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateNode {
    pub id: String,
    /// Canonical (normalized) state label.
    pub label: String,
    pub phase: Phase,
    /// Consecutive weak iterations, for pruning.
    pub weak_streak: u32,
}

/// Identity of a transition: source node, destination node, edge kind.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeKey {
    pub src: String,
    pub dst: String,
    pub kind: EdgeKind,
}

impl EdgeKey {
    /// Printable edge id used in reports, exports and removal lists.
    pub fn id(&self) -> String {
        format!("{} -> {} #{}", self.src, self.dst, self.kind.surface())
    }
}

/// A transition and its accumulated statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub kind: EdgeKind,
    /// Exponentially averaged fitness of traversing individuals, in [0,1].
    pub w_fit: f64,
    /// Sparsity weight, strictly decreasing in `count`.
    pub w_sparse: f64,
    /// Number of inserted chains that traversed this edge.
    pub count: u64,
    /// Consecutive weak iterations, for pruning.
    pub weak_streak: u32,
    /// (action, key digest) payload references seen on this edge.
    pub actions: BTreeSet<(String, String)>,
}

#[derive(Serialize, Deserialize)]
struct GraphSnapshot {
    boundaries: BoundaryLabels,
    epsilon: f64,
    iteration: u64,
    nodes: Vec<StateNode>,
    edges: Vec<(EdgeKey, Transition)>,
    payloads: Vec<(String, String)>,
}

/// The evolving architecture graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GraphSnapshot", from = "GraphSnapshot")]
pub struct ArchGraph {
    boundaries: BoundaryLabels,
    epsilon: f64,
    iteration: u64,
    nodes: BTreeMap<String, StateNode>,
    edges: BTreeMap<EdgeKey, Transition>,
    /// key digest -> full key payload, so sampled paths can be
    /// materialized back into executable chains.
    payloads: BTreeMap<String, String>,
}

impl From<ArchGraph> for GraphSnapshot {
    fn from(g: ArchGraph) -> Self {
        GraphSnapshot {
            boundaries: g.boundaries,
            epsilon: g.epsilon,
            iteration: g.iteration,
            nodes: g.nodes.into_values().collect(),
            edges: g.edges.into_iter().collect(),
            payloads: g.payloads.into_iter().collect(),
        }
    }
}

impl From<GraphSnapshot> for ArchGraph {
    fn from(s: GraphSnapshot) -> Self {
        ArchGraph {
            boundaries: s.boundaries,
            epsilon: s.epsilon,
            iteration: s.iteration,
            nodes: s.nodes.into_iter().map(|n| (n.id.clone(), n)).collect(),
            edges: s.edges.into_iter().collect(),
            payloads: s.payloads.into_iter().collect(),
        }
    }
}

/// Per-chain node sequence with the phase each node carries.
pub(crate) fn chain_nodes(chain: &AoeChain) -> Vec<(String, Phase)> {
    let mut nodes = Vec::with_capacity(chain.edges.len() + 1);
    if let Some(first) = chain.edges.first() {
        nodes.push((normalize_label(&first.start_state), first.phase));
    }
    for edge in &chain.edges {
        nodes.push((normalize_label(&edge.end_state), edge.phase));
    }
    nodes
}

impl ArchGraph {
    pub fn new(boundaries: BoundaryLabels, epsilon: f64) -> ArchGraph {
        ArchGraph {
            boundaries,
            epsilon,
            iteration: 0,
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
            payloads: BTreeMap::new(),
        }
    }

    pub fn boundaries(&self) -> &BoundaryLabels {
        &self.boundaries
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn set_iteration(&mut self, iteration: u64) {
        self.iteration = iteration;
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &StateNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&EdgeKey, &Transition)> {
        self.edges.iter()
    }

    pub fn node(&self, id: &str) -> Option<&StateNode> {
        self.nodes.get(id)
    }

    pub fn edge(&self, key: &EdgeKey) -> Option<&Transition> {
        self.edges.get(key)
    }

    pub fn payload(&self, key_digest: &str) -> Option<&str> {
        self.payloads.get(key_digest).map(String::as_str)
    }

    pub fn source_id(&self) -> String {
        node_id(&self.boundaries.source, Phase::ProblemAnalysis)
    }

    pub fn sink_id(&self) -> String {
        node_id(&self.boundaries.sink, Phase::CodeGeneration)
    }

    /// The four mandatory boundary node ids, in path order.
    pub fn boundary_ids(&self) -> [String; 4] {
        [
            self.source_id(),
            node_id(&self.boundaries.phase1_exit, Phase::ProblemAnalysis),
            node_id(&self.boundaries.phase2_exit, Phase::MathematicalModeling),
            self.sink_id(),
        ]
    }

    pub fn is_boundary(&self, id: &str) -> bool {
        self.boundary_ids().iter().any(|b| b == id)
    }

    /// Outgoing edges of `src`, in key order.
    pub fn edges_from<'a>(&'a self, src: &str) -> impl Iterator<Item = (&'a EdgeKey, &'a Transition)> {
        let lo = EdgeKey { src: src.to_owned(), dst: String::new(), kind: EdgeKind::Work };
        let hi = EdgeKey { src: format!("{src}\u{0}"), dst: String::new(), kind: EdgeKind::Work };
        self.edges.range((Bound::Included(lo), Bound::Excluded(hi)))
    }

    fn incident_weights(&self, id: &str) -> Vec<f64> {
        self.edges
            .iter()
            .filter(|(k, _)| k.src == id || k.dst == id)
            .map(|(_, t)| t.w_fit)
            .collect()
    }

    /// Exploration bonus for an edge traversed `count` times; strictly
    /// decreasing in the count.
    pub fn sparsity_weight(count: u64, epsilon: f64) -> f64 {
        1.0 / ((2.0 + count as f64).ln() + epsilon)
    }

    fn ensure_node(&mut self, label: &str, phase: Phase, new_ids: &mut Vec<String>) -> String {
        let id = node_id(label, phase);
        if !self.nodes.contains_key(&id) {
            self.nodes.insert(
                id.clone(),
                StateNode {
                    id: id.clone(),
                    label: normalize_label(label),
                    phase,
                    weak_streak: 0,
                },
            );
            new_ids.push(id.clone());
        }
        id
    }

    /// Inserts a validated chain. Existing edges have their traversal
    /// count incremented once per inserting chain; new nodes and edges are
    /// created with initial weights. Returns the ids created by this call.
    pub fn insert_chain(&mut self, chain: &AoeChain) -> Result<Vec<String>> {
        let report = validate_chain(chain, &self.boundaries);
        if !report.is_ok() {
            return Err(Error::ChainInvalid { report });
        }
        let mut new_ids = Vec::new();
        let nodes = chain_nodes(chain);
        let mut ids = Vec::with_capacity(nodes.len());
        for (label, phase) in &nodes {
            ids.push(self.ensure_node(label, *phase, &mut new_ids));
        }
        let mut touched: BTreeSet<EdgeKey> = BTreeSet::new();
        for (i, edge) in chain.edges.iter().enumerate() {
            let key = EdgeKey { src: ids[i].clone(), dst: ids[i + 1].clone(), kind: edge.kind };
            let key_digest = digest_hex(&edge.key);
            self.payloads.entry(key_digest.clone()).or_insert_with(|| edge.key.clone());
            let entry = self.edges.entry(key.clone()).or_insert_with(|| {
                new_ids.push(key.id());
                Transition {
                    kind: edge.kind,
                    w_fit: INITIAL_FITNESS_WEIGHT,
                    w_sparse: Self::sparsity_weight(0, self.epsilon),
                    count: 0,
                    weak_streak: 0,
                    actions: BTreeSet::new(),
                }
            });
            entry.actions.insert((normalize_label(&edge.action), key_digest));
            if touched.insert(key.clone()) {
                entry.count += 1;
                entry.w_sparse = Self::sparsity_weight(entry.count, self.epsilon);
            }
        }
        Ok(new_ids)
    }

    /// Moves each fitness weight toward the mean fitness of the
    /// individuals that traversed the edge this iteration. Edges without
    /// traversals keep their weight.
    pub fn update_fitness_weights(
        &mut self,
        traversals: &BTreeMap<EdgeKey, Vec<f64>>,
        alpha: f64,
    ) -> Result<()> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        for (key, fitnesses) in traversals {
            let edge = self
                .edges
                .get_mut(key)
                .ok_or_else(|| Error::UnknownElement(key.id()))?;
            if fitnesses.is_empty() {
                continue;
            }
            let mean = fitnesses.iter().sum::<f64>() / fitnesses.len() as f64;
            edge.w_fit += alpha * (mean - edge.w_fit);
        }
        Ok(())
    }

    /// Recomputes every sparsity weight from the current traversal counts.
    pub fn update_sparsity_weights(&mut self, epsilon: f64) -> Result<()> {
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon {epsilon} must be positive")));
        }
        self.epsilon = epsilon;
        for edge in self.edges.values_mut() {
            edge.w_sparse = Self::sparsity_weight(edge.count, epsilon);
        }
        Ok(())
    }

    /// Mean fitness weight over all edges incident to the node (incoming
    /// and outgoing). Errors on isolated or unknown nodes.
    pub fn node_weight(&self, id: &str) -> Result<f64> {
        if !self.nodes.contains_key(id) {
            return Err(Error::UnknownElement(id.to_owned()));
        }
        let weights = self.incident_weights(id);
        if weights.is_empty() {
            return Err(Error::IsolatedNode(id.to_owned()));
        }
        Ok(weights.iter().sum::<f64>() / weights.len() as f64)
    }

    /// True when a source-to-sink route through both intermediate
    /// boundary nodes exists.
    pub fn feasible(&self) -> bool {
        self.feasible_filtered(&|_| true, &|_| true)
    }

    fn feasible_filtered(
        &self,
        keep_node: &dyn Fn(&str) -> bool,
        keep_edge: &dyn Fn(&EdgeKey) -> bool,
    ) -> bool {
        let [source, b1, b2, sink] = self.boundary_ids();
        for id in [&source, &b1, &b2, &sink] {
            if !self.nodes.contains_key(id.as_str()) || !keep_node(id) {
                return false;
            }
        }
        self.reaches(&source, &b1, keep_node, keep_edge)
            && self.reaches(&b1, &b2, keep_node, keep_edge)
            && self.reaches(&b2, &sink, keep_node, keep_edge)
    }

    fn reaches(
        &self,
        from: &str,
        to: &str,
        keep_node: &dyn Fn(&str) -> bool,
        keep_edge: &dyn Fn(&EdgeKey) -> bool,
    ) -> bool {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut queue: VecDeque<&str> = VecDeque::new();
        seen.insert(from);
        queue.push_back(from);
        while let Some(node) = queue.pop_front() {
            if node == to {
                return true;
            }
            for (key, _) in self.edges_from(node) {
                if !keep_edge(key) || !keep_node(&key.dst) {
                    continue;
                }
                if seen.insert(self.nodes[&key.dst].id.as_str()) {
                    queue.push_back(self.nodes[&key.dst].id.as_str());
                }
            }
        }
        false
    }

    /// Shortest edge-count distance from every node to the sink.
    /// Unreachable nodes are absent.
    pub fn distances_to_sink(&self) -> BTreeMap<String, usize> {
        let mut reverse: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for key in self.edges.keys() {
            reverse.entry(&key.dst).or_default().push(&key.src);
        }
        let sink = self.sink_id();
        let mut dist: BTreeMap<String, usize> = BTreeMap::new();
        if !self.nodes.contains_key(&sink) {
            return dist;
        }
        let mut queue: VecDeque<(String, usize)> = VecDeque::new();
        dist.insert(sink.clone(), 0);
        queue.push_back((sink, 0));
        while let Some((node, d)) = queue.pop_front() {
            if let Some(preds) = reverse.get(node.as_str()) {
                for pred in preds {
                    if !dist.contains_key(*pred) {
                        dist.insert((*pred).to_owned(), d + 1);
                        queue.push_back(((*pred).to_owned(), d + 1));
                    }
                }
            }
        }
        dist
    }

    fn remove_node_with_edges(&mut self, id: &str) -> (StateNode, Vec<(EdgeKey, Transition)>) {
        let node = self.nodes.remove(id).expect("node exists");
        let incident: Vec<EdgeKey> = self
            .edges
            .keys()
            .filter(|k| k.src == id || k.dst == id)
            .cloned()
            .collect();
        let mut removed = Vec::with_capacity(incident.len());
        for key in incident {
            let t = self.edges.remove(&key).expect("edge exists");
            removed.push((key, t));
        }
        (node, removed)
    }

    /// One pruning sweep: weak streaks are advanced for every node and
    /// edge scoring below `tau`, reset otherwise, and elements whose
    /// streak has reached `sigma` are removed unless removal would orphan
    /// a boundary node or destroy the last feasible source-to-sink route.
    /// Removing a node removes its incident edges. Returns removed ids.
    pub fn prune(&mut self, tau: f64, sigma: u32) -> Result<Vec<String>> {
        if sigma == 0 {
            return Err(Error::Config("sigma must be at least 1".into()));
        }
        let mut removed_ids = Vec::new();

        let node_ids: Vec<String> = self.nodes.keys().cloned().collect();
        for id in &node_ids {
            let weak = match self.node_weight(id) {
                Ok(score) => score < tau,
                Err(Error::IsolatedNode(_)) => true,
                Err(e) => return Err(e),
            };
            let node = self.nodes.get_mut(id).expect("node exists");
            node.weak_streak = if weak { node.weak_streak + 1 } else { 0 };
        }
        for (_, edge) in self.edges.iter_mut() {
            edge.weak_streak = if edge.w_fit < tau { edge.weak_streak + 1 } else { 0 };
        }

        let marked_nodes: Vec<String> = self
            .nodes
            .values()
            .filter(|n| n.weak_streak >= sigma)
            .map(|n| n.id.clone())
            .collect();
        for id in marked_nodes {
            if self.is_boundary(&id) {
                continue;
            }
            let still_feasible =
                self.feasible_filtered(&|n| n != id, &|k| k.src != id && k.dst != id);
            if still_feasible {
                let (node, edges) = self.remove_node_with_edges(&id);
                removed_ids.push(node.id);
                removed_ids.extend(edges.iter().map(|(k, _)| k.id()));
            }
        }

        let marked_edges: Vec<EdgeKey> = self
            .edges
            .iter()
            .filter(|(_, t)| t.weak_streak >= sigma)
            .map(|(k, _)| k.clone())
            .collect();
        for key in marked_edges {
            if !self.edges.contains_key(&key) {
                continue;
            }
            let still_feasible = self.feasible_filtered(&|_| true, &|k| *k != key);
            if still_feasible {
                self.edges.remove(&key);
                removed_ids.push(key.id());
            }
        }

        Ok(removed_ids)
    }
}

/// Merges a batch of chains into a fresh graph: states are grouped by the
/// judge (phase-local, type-isolated), chains are rewritten to canonical
/// labels and inserted. Errors on an empty batch.
pub fn build_initial_graph(
    chains: &[AoeChain],
    judge: &dyn StateJudge,
    boundaries: &BoundaryLabels,
    epsilon: f64,
) -> Result<ArchGraph> {
    if chains.is_empty() {
        return Err(Error::EmptyChainSet);
    }
    let candidates = extract_candidates(chains);
    let grouping = propose_groups(&candidates, judge)?;
    let canonical = canonicalize(chains, &grouping, boundaries)?;
    let mut graph = ArchGraph::new(boundaries.clone(), epsilon);
    for chain in &canonical {
        graph.insert_chain(chain)?;
    }
    Ok(graph)
}

/// Set-union of two graphs over the same boundary labels. Shared edges
/// sum their counts and keep `a`'s fitness weight and weak streak; shared
/// nodes keep `a`'s streak. Sparsity weights are recomputed under `a`'s
/// epsilon.
pub fn graph_union(a: &ArchGraph, b: &ArchGraph) -> Result<ArchGraph> {
    if a.boundaries != b.boundaries {
        return Err(Error::Config(
            "graph union requires identical boundary labels".into(),
        ));
    }
    let mut out = a.clone();
    for (id, node) in &b.nodes {
        out.nodes.entry(id.clone()).or_insert_with(|| node.clone());
    }
    for (key, transition) in &b.edges {
        match out.edges.get_mut(key) {
            Some(existing) => {
                existing.count += transition.count;
                existing.actions.extend(transition.actions.iter().cloned());
            }
            None => {
                out.edges.insert(key.clone(), transition.clone());
            }
        }
    }
    for (digest, payload) in &b.payloads {
        out.payloads.entry(digest.clone()).or_insert_with(|| payload.clone());
    }
    let epsilon = out.epsilon;
    out.update_sparsity_weights(epsilon)?;
    Ok(out)
}
