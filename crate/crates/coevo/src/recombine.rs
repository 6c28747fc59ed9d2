//! Fitness- and sparsity-guided path sampling over the architecture
//! graph, and recombination of sampled paths into new individuals.

use std::collections::BTreeSet;

use rand::Rng;

use crate::backend::GenerationBackend;
use crate::chain::{AoeChain, EdgeRecord, PathSignature};
use crate::error::{Error, Result};
use crate::graph::{ArchGraph, EdgeKey};
use crate::variation::{IdGen, Individual, Provenance};

/// Additive floor on sampling scores so no feasible edge has probability
/// zero.
pub const PHI_FLOOR: f64 = 1e-3;

/// Per-edge sampling scores under one mixing coefficient.
#[derive(Debug, Clone)]
pub struct EdgeScoreMap {
    pub scores: std::collections::BTreeMap<EdgeKey, f64>,
    pub gamma: f64,
}

fn minmax_term(value: f64, min: f64, max: f64) -> f64 {
    if max > min {
        (value - min) / (max - min)
    } else {
        0.5
    }
}

/// Scores every edge as a convex mix of min-max normalized fitness and
/// sparsity weights: `gamma` of the fitness term, the rest sparsity.
/// Normalization is global over the whole graph; a term whose inputs are
/// all equal contributes 0.5.
pub fn edge_scores(graph: &ArchGraph, gamma: f64) -> Result<EdgeScoreMap> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("exploration parameter {gamma} is outside [0, 1]")));
    }
    if graph.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut fit_min = f64::INFINITY;
    let mut fit_max = f64::NEG_INFINITY;
    let mut sparse_min = f64::INFINITY;
    let mut sparse_max = f64::NEG_INFINITY;
    for (_, transition) in graph.edges() {
        fit_min = fit_min.min(transition.w_fit);
        fit_max = fit_max.max(transition.w_fit);
        sparse_min = sparse_min.min(transition.w_sparse);
        sparse_max = sparse_max.max(transition.w_sparse);
    }
    let scores = graph
        .edges()
        .map(|(key, transition)| {
            let fit = minmax_term(transition.w_fit, fit_min, fit_max);
            let sparse = minmax_term(transition.w_sparse, sparse_min, sparse_max);
            (key.clone(), gamma * fit + (1.0 - gamma) * sparse)
        })
        .collect();
    Ok(EdgeScoreMap { scores, gamma })
}

/// A source-to-sink walk through the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledPath {
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeKey>,
    pub signature: PathSignature,
}

/// Samples one source-to-sink path. At every node the next edge is drawn
/// with probability proportional to its score plus [`PHI_FLOOR`], over
/// the candidates that can still finish within `max_len` edges. A walk
/// that strands (no candidate left) restarts from the source, up to
/// `restart_budget` times.
pub fn sample_path<R: Rng>(
    graph: &ArchGraph,
    scores: &EdgeScoreMap,
    rng: &mut R,
    max_len: usize,
    restart_budget: usize,
) -> Result<SampledPath> {
    if scores.scores.len() != graph.edge_count() {
        return Err(Error::UnknownElement(
            "edge score map does not match the graph".to_owned(),
        ));
    }
    let dist = graph.distances_to_sink();
    let source = graph.source_id();
    let sink = graph.sink_id();
    let budget = restart_budget.max(1);

    for _ in 0..budget {
        let mut nodes = vec![source.clone()];
        let mut edges: Vec<EdgeKey> = Vec::new();
        let mut current = source.clone();
        'walk: while current != sink {
            let steps = edges.len();
            let mut candidates: Vec<(&EdgeKey, f64)> = Vec::new();
            for (key, _) in graph.edges_from(&current) {
                let Some(remaining) = dist.get(&key.dst) else { continue };
                if steps + 1 + remaining > max_len {
                    continue;
                }
                let score = *scores
                    .scores
                    .get(key)
                    .ok_or_else(|| Error::UnknownElement(key.id()))?;
                candidates.push((key, score + PHI_FLOOR));
            }
            if candidates.is_empty() {
                break 'walk;
            }
            let total: f64 = candidates.iter().map(|(_, s)| s).sum();
            let mut draw = rng.gen::<f64>() * total;
            let mut chosen = candidates.len() - 1;
            for (idx, (_, score)) in candidates.iter().enumerate() {
                if draw < *score {
                    chosen = idx;
                    break;
                }
                draw -= score;
            }
            let key = candidates[chosen].0.clone();
            current = key.dst.clone();
            nodes.push(current.clone());
            edges.push(key);
        }
        if current == sink && !edges.is_empty() {
            let signature = edges
                .iter()
                .map(|key| {
                    let src = graph.node(&key.src).expect("walked node exists");
                    let dst = graph.node(&key.dst).expect("walked node exists");
                    (src.label.clone(), dst.label.clone(), key.kind)
                })
                .collect();
            return Ok(SampledPath { nodes, edges, signature });
        }
    }
    Err(Error::SamplingExhausted { restarts: budget })
}

/// Turns a sampled path back into a concrete chain. Each edge takes its
/// destination node's phase, and its payload is the lexicographically
/// first recorded (action, key) pair on that transition.
pub fn materialize_chain(graph: &ArchGraph, path: &SampledPath) -> Result<AoeChain> {
    let mut records = Vec::with_capacity(path.edges.len());
    for key in &path.edges {
        let src = graph.node(&key.src).ok_or_else(|| Error::UnknownElement(key.src.clone()))?;
        let dst = graph.node(&key.dst).ok_or_else(|| Error::UnknownElement(key.dst.clone()))?;
        let transition = graph.edge(key).ok_or_else(|| Error::UnknownElement(key.id()))?;
        let (action, key_digest) = transition
            .actions
            .iter()
            .next()
            .ok_or_else(|| Error::UnknownElement(format!("{} has no recorded action", key.id())))?;
        let payload = graph
            .payload(key_digest)
            .ok_or_else(|| Error::UnknownElement(format!("payload {key_digest}")))?;
        records.push(EdgeRecord {
            phase: dst.phase,
            kind: key.kind,
            action: action.clone(),
            start_state: src.label.clone(),
            end_state: dst.label.clone(),
            key: payload.to_owned(),
        });
    }
    AoeChain::from_records(records, graph.boundaries())
}

fn individual_from_path(
    graph: &ArchGraph,
    path: SampledPath,
    backend: &dyn GenerationBackend,
    id_gen: &mut IdGen,
) -> Result<Individual> {
    let mut chain = materialize_chain(graph, &path)?;
    let artifact = backend
        .synthesize_artifact(&chain)
        .or_else(|_| backend.synthesize_artifact(&chain))?;
    let id = id_gen.next_id();
    chain.source_individual = id.clone();
    Ok(Individual {
        id,
        artifact,
        chain,
        path: path.signature,
        provenance: Provenance::Recombined,
        parent_id: None,
    })
}

/// Samples paths until one differs from every parent's route, then
/// materializes it into a new individual. Gives up with
/// [`Error::NoveltyExhausted`] after `resample_budget` draws.
#[allow(clippy::too_many_arguments)]
pub fn recombine<R: Rng>(
    graph: &ArchGraph,
    scores: &EdgeScoreMap,
    parents: &[Individual],
    rng: &mut R,
    backend: &dyn GenerationBackend,
    resample_budget: usize,
    max_len: usize,
    restart_budget: usize,
    id_gen: &mut IdGen,
) -> Result<Individual> {
    let parent_routes: BTreeSet<&PathSignature> = parents.iter().map(|p| &p.path).collect();
    let budget = resample_budget.max(1);
    for _ in 0..budget {
        let path = sample_path(graph, scores, rng, max_len, restart_budget)?;
        if !parent_routes.contains(&path.signature) {
            return individual_from_path(graph, path, backend, id_gen);
        }
    }
    Err(Error::NoveltyExhausted { attempts: budget })
}

/// Samples one path and materializes it without any novelty requirement.
/// Used as the fallback when novelty is exhausted but the population
/// still needs a member.
pub fn recombine_any<R: Rng>(
    graph: &ArchGraph,
    scores: &EdgeScoreMap,
    rng: &mut R,
    backend: &dyn GenerationBackend,
    max_len: usize,
    restart_budget: usize,
    id_gen: &mut IdGen,
) -> Result<Individual> {
    let path = sample_path(graph, scores, rng, max_len, restart_budget)?;
    individual_from_path(graph, path, backend, id_gen)
}
