//! Persistence: checkpoints, generation logs, and graph exports.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{EngineState, GenerationReport};
use crate::error::{Error, Result};
use crate::graph::ArchGraph;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// A resumable snapshot of one run after some generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Digest of the config the run was started under.
    pub config_digest: String,
    /// Root seed; every random stream is re-derived from it, so resuming
    /// needs no serialized generator state.
    pub rng_cursor: u64,
    pub generation: u64,
    pub next_id: u64,
    pub population: Vec<crate::variation::Individual>,
    pub fitness: crate::eval::FitnessMap,
    pub graph: ArchGraph,
    pub reports: Vec<GenerationReport>,
}

impl Checkpoint {
    pub fn capture(state: &EngineState, config_digest: &str, root_seed: u64) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config_digest: config_digest.to_owned(),
            rng_cursor: root_seed,
            generation: state.generation,
            next_id: state.next_id,
            population: state.population.clone(),
            fitness: state.fitness.clone(),
            graph: state.graph.clone(),
            reports: state.reports.clone(),
        }
    }

    pub fn into_state(self) -> EngineState {
        EngineState {
            generation: self.generation,
            next_id: self.next_id,
            population: self.population,
            fitness: self.fitness,
            graph: self.graph,
            reports: self.reports,
        }
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let text = serde_json::to_string_pretty(checkpoint)?;
    fs::write(path, text)?;
    Ok(())
}

/// Loads a checkpoint, verifying the format version and, when given, the
/// config digest it must have been produced under.
pub fn load_checkpoint(path: &Path, expected_digest: Option<&str>) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)?;
    if checkpoint.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {} is not supported (expected {})",
            checkpoint.format_version, CHECKPOINT_FORMAT_VERSION
        )));
    }
    if let Some(expected) = expected_digest {
        if checkpoint.config_digest != expected {
            return Err(Error::Checkpoint(
                "checkpoint was produced under a different configuration".to_owned(),
            ));
        }
    }
    Ok(checkpoint)
}

/// One generation report as one JSON line.
pub fn report_line(report: &GenerationReport) -> String {
    serde_json::to_string(report).expect("report serializes")
}

/// Appends generation reports to a log file, recreating the already-known
/// prefix first so a resumed run produces a byte-identical log.
pub struct RunLog {
    file: fs::File,
}

impl RunLog {
    /// Starts a fresh log at `path` containing `prefix` (the reports a
    /// resumed state already carries; empty for a new run).
    pub fn create(path: &Path, prefix: &[GenerationReport]) -> Result<RunLog> {
        let mut file = fs::File::create(path)?;
        for report in prefix {
            writeln!(file, "{}", report_line(report))?;
        }
        file.flush()?;
        Ok(RunLog { file })
    }

    pub fn append(&mut self, report: &GenerationReport) -> Result<()> {
        writeln!(self.file, "{}", report_line(report))?;
        self.file.flush()?;
        Ok(())
    }
}

/// Reads a run log back into reports.
pub fn read_runlog(path: &Path) -> Result<Vec<GenerationReport>> {
    let text = fs::read_to_string(path)?;
    let mut reports = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        reports.push(serde_json::from_str(line)?);
    }
    Ok(reports)
}

/// Topological index of every node: Kahn's algorithm with the smallest id
/// first, nodes on cycles appended afterwards in id order.
fn topo_index(graph: &ArchGraph) -> BTreeMap<String, usize> {
    let mut in_degree: BTreeMap<&str, usize> =
        graph.nodes().map(|n| (n.id.as_str(), 0)).collect();
    for (key, _) in graph.edges() {
        if let Some(d) = in_degree.get_mut(key.dst.as_str()) {
            *d += 1;
        }
    }
    let mut frontier: VecDeque<&str> = in_degree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| *id)
        .collect();
    let mut order = BTreeMap::new();
    let mut next = 0usize;
    let mut pending: BTreeSet<&str> = in_degree.keys().copied().collect();
    while let Some(id) = frontier.pop_front() {
        order.insert(id.to_owned(), next);
        next += 1;
        pending.remove(id);
        for (key, _) in graph.edges() {
            if key.src != id {
                continue;
            }
            if let Some(d) = in_degree.get_mut(key.dst.as_str()) {
                *d = d.saturating_sub(1);
                if *d == 0 && pending.contains(key.dst.as_str()) {
                    frontier.push_back(key.dst.as_str());
                }
            }
        }
        // Keep the frontier sorted so the order is deterministic.
        let mut sorted: Vec<&str> = frontier.drain(..).collect();
        sorted.sort_unstable();
        sorted.dedup();
        frontier.extend(sorted);
    }
    for id in pending {
        order.insert(id.to_owned(), next);
        next += 1;
    }
    order
}

fn dot_escape(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders the graph in DOT, one cluster per phase, nodes in id order
/// within their cluster and edges in topological walk order.
pub fn export_dot(graph: &ArchGraph) -> String {
    let order = topo_index(graph);
    let mut out = String::from("digraph architecture {\n  rankdir=LR;\n");
    for phase in crate::chain::Phase::ALL {
        out.push_str(&format!(
            "  subgraph cluster_phase{} {{\n    label=\"{}\";\n",
            phase.ordinal(),
            dot_escape(phase.name())
        ));
        for node in graph.nodes().filter(|n| n.phase == phase) {
            out.push_str(&format!(
                "    \"{}\" [label=\"{}\"];\n",
                dot_escape(&node.id),
                dot_escape(&node.label)
            ));
        }
        out.push_str("  }\n");
    }
    let mut edges: Vec<_> = graph.edges().collect();
    edges.sort_by(|(a, _), (b, _)| {
        order[&a.src]
            .cmp(&order[&b.src])
            .then_with(|| order[&a.dst].cmp(&order[&b.dst]))
            .then_with(|| a.kind.cmp(&b.kind))
    });
    for (key, transition) in edges {
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"{} w_fit={:.4} count={}\"];\n",
            dot_escape(&key.src),
            dot_escape(&key.dst),
            key.kind.surface(),
            transition.w_fit,
            transition.count
        ));
    }
    out.push_str("}\n");
    out
}

#[derive(Serialize)]
struct JsonNode<'a> {
    id: &'a str,
    label: &'a str,
    phase: crate::chain::Phase,
}

#[derive(Serialize)]
struct JsonEdge<'a> {
    src: &'a str,
    dst: &'a str,
    kind: crate::chain::EdgeKind,
    w_fit: f64,
    w_sparse: f64,
    count: u64,
    weak_streak: u32,
}

/// Renders the graph as a JSON document with sorted node and edge lists.
pub fn export_json(graph: &ArchGraph) -> String {
    let nodes: Vec<JsonNode> = graph
        .nodes()
        .map(|n| JsonNode { id: &n.id, label: &n.label, phase: n.phase })
        .collect();
    let edges: Vec<JsonEdge> = graph
        .edges()
        .map(|(key, t)| JsonEdge {
            src: &key.src,
            dst: &key.dst,
            kind: key.kind,
            w_fit: t.w_fit,
            w_sparse: t.w_sparse,
            count: t.count,
            weak_streak: t.weak_streak,
        })
        .collect();
    let value = serde_json::json!({ "nodes": nodes, "edges": edges });
    serde_json::to_string_pretty(&value).expect("graph serializes")
}
