//! The co-evolutionary loop: multi-source selection over a population of
//! executable individuals, interleaved with updates to the shared
//! architecture graph they are sampled from.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendJudge, ExecLimits, GenerationBackend};
use crate::chain::{AoeChain, BoundaryLabels};
use crate::error::{Error, Result};
use crate::eval::{evaluate_population, Dataset, EvalParams, FitnessMap, SplitSpec};
use crate::graph::{build_initial_graph, graph_union, ArchGraph, EdgeKey};
use crate::merge::{canonicalize, extract_candidates, propose_groups};
use crate::recombine::{edge_scores, recombine, recombine_any};
use crate::rng::{role, stream};
use crate::variation::{hybrid_initialize, mutate, IdGen, Individual, KnowledgeExcerpt, Provenance};

/// All numeric knobs of one evolutionary run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    /// Population size N.
    pub population_size: usize,
    /// Number of selection/update iterations after initialization.
    pub iteration_depth: usize,
    /// Fraction of the initial population generated with retrieval.
    pub init_ratio: f64,
    /// Fraction of each generation refilled by mutation.
    pub mutation_ratio: f64,
    /// Probability that a mutation is knowledge-steered.
    pub guidance_rate: f64,
    /// Probability that a mutation is phase-scoped rather than whole.
    pub scope_rate: f64,
    /// Fitness-weight learning rate of the graph update, in (0, 1].
    pub architecture_rate: f64,
    /// Mix between fitness and sparsity terms when scoring edges.
    pub exploration_parameter: f64,
    /// Weight threshold below which an element counts as weak.
    pub pruning_threshold: f64,
    /// Fraction of each generation carried over as elites.
    pub elite_rate: f64,
    /// Consecutive weak iterations before removal.
    pub sigma: u32,
    /// Sparsity smoothing constant.
    pub epsilon: f64,
    /// Denominator floor of relative-error correctness.
    pub epsilon_y: f64,
    /// Relative-error tolerance of correctness.
    pub delta: f64,
    /// Root seed of every random stream in the run.
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> EvolutionConfig {
        EvolutionConfig {
            population_size: 10,
            iteration_depth: 8,
            init_ratio: 0.5,
            mutation_ratio: 0.5,
            guidance_rate: 0.5,
            scope_rate: 0.5,
            architecture_rate: 0.5,
            exploration_parameter: 0.5,
            pruning_threshold: 0.1,
            elite_rate: 0.2,
            sigma: 2,
            epsilon: 1e-6,
            epsilon_y: 1e-9,
            delta: 1e-3,
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::Config("population size must be at least 1".into()));
        }
        for (name, value) in [
            ("init ratio", self.init_ratio),
            ("mutation ratio", self.mutation_ratio),
            ("guidance rate", self.guidance_rate),
            ("scope rate", self.scope_rate),
            ("exploration parameter", self.exploration_parameter),
            ("elite rate", self.elite_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config(format!("{name} {value} is outside [0, 1]")));
            }
        }
        if !(self.architecture_rate > 0.0 && self.architecture_rate <= 1.0) {
            return Err(Error::AlphaOutOfRange(self.architecture_rate));
        }
        if !(self.pruning_threshold >= 0.0 && self.pruning_threshold.is_finite()) {
            return Err(Error::Config(format!(
                "pruning threshold {} must be finite and non-negative",
                self.pruning_threshold
            )));
        }
        if self.sigma == 0 {
            return Err(Error::Config("sigma must be at least 1".into()));
        }
        for (name, value) in [("epsilon", self.epsilon), ("epsilon_y", self.epsilon_y)] {
            if !(value > 0.0) {
                return Err(Error::Config(format!("{name} {value} must be positive")));
            }
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Config(format!("delta {} must be non-negative", self.delta)));
        }
        compute_counts(self.population_size, self.elite_rate, self.mutation_ratio)?;
        Ok(())
    }
}

/// Non-numeric run context.
#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub task_context: String,
    pub kb_top_k: usize,
    /// Novelty attempts per recombination before falling back.
    pub resample_budget: usize,
    /// Stranded-walk restarts per path sample.
    pub restart_budget: usize,
    /// Sampled paths may be at most this multiple of the longest current
    /// route, in edges.
    pub max_len_factor: usize,
    pub limits: ExecLimits,
    pub parallelism: usize,
    /// Re-evaluate carried-over elites instead of reusing their cached
    /// fitness.
    pub force_reevaluate: bool,
    pub boundaries: BoundaryLabels,
}

impl Default for EngineOptions {
    fn default() -> EngineOptions {
        EngineOptions {
            task_context: String::new(),
            kb_top_k: 3,
            resample_budget: 50,
            restart_budget: 20,
            max_len_factor: 4,
            limits: ExecLimits::default(),
            parallelism: 1,
            force_reevaluate: false,
            boundaries: BoundaryLabels::default(),
        }
    }
}

/// Sizes of the three selection sources for a population of `n`:
/// `(elites, recombined, mutated)`. Elite and mutation counts floor;
/// recombination absorbs the remainder.
pub fn compute_counts(n: usize, elite_rate: f64, mutation_ratio: f64) -> Result<(usize, usize, usize)> {
    let n_elite = (n as f64 * elite_rate).floor() as usize;
    let n_mut = (n as f64 * mutation_ratio).floor() as usize;
    if n_elite + n_mut > n {
        return Err(Error::Config(format!(
            "elite rate and mutation ratio over-fill the population: {n_elite} + {n_mut} > {n}"
        )));
    }
    Ok((n_elite, n - n_elite - n_mut, n_mut))
}

/// The top `k` individuals by fitness (ties broken by ascending id),
/// cloned and relabeled as elites. Ids, artifacts and routes are kept.
pub fn get_best(population: &[Individual], fitness: &FitnessMap, k: usize) -> Result<Vec<Individual>> {
    let mut ranked: Vec<(&Individual, f64)> = population
        .iter()
        .map(|individual| {
            fitness
                .get(&individual.id)
                .copied()
                .map(|f| (individual, f))
                .ok_or_else(|| Error::UnknownElement(individual.id.clone()))
        })
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.id.cmp(&b.0.id)));
    Ok(ranked
        .into_iter()
        .take(k)
        .map(|(individual, _)| {
            let mut elite = individual.clone();
            elite.provenance = Provenance::Elite;
            elite
        })
        .collect())
}

/// Builds the next generation from its three sources: elites carried
/// over, recombinations sampled from the graph, and mutations of
/// uniformly drawn parents. Failed mutations refill from recombination so
/// the population size never shrinks.
#[allow(clippy::too_many_arguments)]
pub fn multi_source_selection(
    parents: &[Individual],
    fitness: &FitnessMap,
    graph: &ArchGraph,
    kb: &[KnowledgeExcerpt],
    cfg: &EvolutionConfig,
    opts: &EngineOptions,
    backend: &dyn GenerationBackend,
    generation: u64,
    id_gen: &mut IdGen,
) -> Result<Vec<Individual>> {
    let (n_elite, n_rec, n_mut) =
        compute_counts(cfg.population_size, cfg.elite_rate, cfg.mutation_ratio)?;
    let scores = edge_scores(graph, cfg.exploration_parameter)?;
    let longest = parents.iter().map(|p| p.chain.len()).max().unwrap_or(1).max(1);
    let max_len = opts.max_len_factor.max(1) * longest;

    let mut children = get_best(parents, fitness, n_elite)?;

    for j in 0..n_rec {
        let mut rng = stream(cfg.seed, &[role::RECOMBINE, generation, j as u64]);
        let child = match recombine(
            graph,
            &scores,
            parents,
            &mut rng,
            backend,
            opts.resample_budget,
            max_len,
            opts.restart_budget,
            id_gen,
        ) {
            Ok(child) => child,
            Err(Error::NoveltyExhausted { .. }) => recombine_any(
                graph,
                &scores,
                &mut rng,
                backend,
                max_len,
                opts.restart_budget,
                id_gen,
            )?,
            Err(e) => return Err(e),
        };
        children.push(child);
    }

    for j in 0..n_mut {
        let mut rng = stream(cfg.seed, &[role::MUTATE, generation, j as u64]);
        let target = &parents[rand::Rng::gen_range(&mut rng, 0..parents.len())];
        let child = match mutate(
            target,
            cfg.scope_rate,
            cfg.guidance_rate,
            kb,
            opts.kb_top_k,
            &opts.task_context,
            backend,
            &opts.boundaries,
            &mut rng,
            id_gen,
        ) {
            Ok(child) => child,
            Err(_) => match recombine(
                graph,
                &scores,
                parents,
                &mut rng,
                backend,
                opts.resample_budget,
                max_len,
                opts.restart_budget,
                id_gen,
            ) {
                Ok(child) => child,
                Err(Error::NoveltyExhausted { .. }) => recombine_any(
                    graph,
                    &scores,
                    &mut rng,
                    backend,
                    max_len,
                    opts.restart_budget,
                    id_gen,
                )?,
                Err(e) => return Err(e),
            },
        };
        children.push(child);
    }

    Ok(children)
}

/// One generation's log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: u64,
    pub best_id: String,
    pub best_wa: f64,
    pub mean_wa: f64,
    pub fitness: BTreeMap<String, f64>,
    pub composition: BTreeMap<String, usize>,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub pruned: Vec<String>,
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub generation: u64,
    pub next_id: u64,
    pub population: Vec<Individual>,
    pub fitness: FitnessMap,
    pub graph: ArchGraph,
    pub reports: Vec<GenerationReport>,
}

impl EngineState {
    /// The current best individual: highest fitness, ties broken by
    /// ascending id.
    pub fn best(&self) -> Option<(&Individual, f64)> {
        let mut best: Option<(&Individual, f64)> = None;
        for individual in &self.population {
            let fit = *self.fitness.get(&individual.id)?;
            let better = match best {
                None => true,
                Some((_, current)) => fit > current,
            };
            if better {
                best = Some((individual, fit));
            }
        }
        best
    }
}

/// Callbacks fired after every generation, including generation zero.
pub trait RunObserver {
    fn on_report(&mut self, _report: &GenerationReport) -> Result<()> {
        Ok(())
    }
    fn on_state(&mut self, _state: &EngineState) -> Result<()> {
        Ok(())
    }
}

/// Observer that does nothing.
pub struct NullObserver;

impl RunObserver for NullObserver {}

fn eval_params(cfg: &EvolutionConfig, opts: &EngineOptions) -> EvalParams {
    EvalParams {
        delta: cfg.delta,
        epsilon_y: cfg.epsilon_y,
        limits: opts.limits,
        parallelism: opts.parallelism,
    }
}

fn make_report(
    generation: u64,
    population: &[Individual],
    fitness: &FitnessMap,
    graph: &ArchGraph,
    pruned: Vec<String>,
) -> Result<GenerationReport> {
    let mut best: Option<(&str, f64)> = None;
    let mut sum = 0.0;
    for individual in population {
        let fit = *fitness
            .get(&individual.id)
            .ok_or_else(|| Error::UnknownElement(individual.id.clone()))?;
        sum += fit;
        let better = match best {
            None => true,
            Some((_, current)) => fit > current,
        };
        if better {
            best = Some((&individual.id, fit));
        }
    }
    let (best_id, best_wa) = best.ok_or(Error::EmptyChainSet)?;
    let mut composition = BTreeMap::new();
    for individual in population {
        *composition.entry(individual.provenance.label().to_owned()).or_insert(0) += 1;
    }
    Ok(GenerationReport {
        generation,
        best_id: best_id.to_owned(),
        best_wa,
        mean_wa: sum / population.len() as f64,
        fitness: fitness.clone(),
        composition,
        graph_nodes: graph.node_count(),
        graph_edges: graph.edge_count(),
        pruned,
    })
}

/// Distinct graph edges a chain traverses.
fn chain_edge_keys(chain: &AoeChain) -> Vec<EdgeKey> {
    let nodes = crate::graph::chain_nodes(chain);
    let mut keys: Vec<EdgeKey> = chain
        .edges
        .iter()
        .enumerate()
        .map(|(i, record)| EdgeKey {
            src: crate::graph::node_id(&nodes[i].0, nodes[i].1),
            dst: crate::graph::node_id(&nodes[i + 1].0, nodes[i + 1].1),
            kind: record.kind,
        })
        .collect();
    keys.sort();
    keys.dedup();
    keys
}

/// Initialization: generate the starting population, build the first
/// graph from its routes, and evaluate everyone.
pub fn initialize_state(
    cfg: &EvolutionConfig,
    opts: &EngineOptions,
    dataset: &Dataset,
    split: &SplitSpec,
    kb: &[KnowledgeExcerpt],
    backend: &dyn GenerationBackend,
) -> Result<EngineState> {
    cfg.validate()?;
    let mut id_gen = IdGen::new();
    let population = hybrid_initialize(
        cfg.population_size,
        cfg.init_ratio,
        &opts.task_context,
        kb,
        opts.kb_top_k,
        backend,
        cfg.seed,
        &opts.boundaries,
        &mut id_gen,
    )?;
    let chains: Vec<AoeChain> = population.iter().map(|i| i.chain.clone()).collect();
    let judge = BackendJudge(backend);
    let mut graph = build_initial_graph(&chains, &judge, &opts.boundaries, cfg.epsilon)?;
    graph.set_iteration(0);
    let fitness =
        evaluate_population(&population, split, dataset, backend, &eval_params(cfg, opts))?;
    let report = make_report(0, &population, &fitness, &graph, Vec::new())?;
    Ok(EngineState {
        generation: 0,
        next_id: id_gen.allocated(),
        population,
        fitness,
        graph,
        reports: vec![report],
    })
}

/// One full iteration: select the next generation, evaluate it, fold its
/// routes into the graph, reweight, and prune.
pub fn step(
    state: &mut EngineState,
    cfg: &EvolutionConfig,
    opts: &EngineOptions,
    dataset: &Dataset,
    split: &SplitSpec,
    kb: &[KnowledgeExcerpt],
    backend: &dyn GenerationBackend,
) -> Result<()> {
    let generation = state.generation + 1;
    let mut id_gen = IdGen::starting_at(state.next_id);
    let children = multi_source_selection(
        &state.population,
        &state.fitness,
        &state.graph,
        kb,
        cfg,
        opts,
        backend,
        generation,
        &mut id_gen,
    )?;

    let mut fitness = FitnessMap::new();
    let mut to_evaluate = Vec::new();
    for child in &children {
        let cached = (!opts.force_reevaluate && child.provenance == Provenance::Elite)
            .then(|| state.fitness.get(&child.id).copied())
            .flatten();
        match cached {
            Some(value) => {
                fitness.insert(child.id.clone(), value);
            }
            None => to_evaluate.push(child.clone()),
        }
    }
    if !to_evaluate.is_empty() {
        let fresh =
            evaluate_population(&to_evaluate, split, dataset, backend, &eval_params(cfg, opts))?;
        fitness.extend(fresh);
    }

    let child_chains: Vec<AoeChain> = children.iter().map(|c| c.chain.clone()).collect();
    let judge = BackendJudge(backend);
    let candidates = extract_candidates(&child_chains);
    let grouping = propose_groups(&candidates, &judge)?;
    let canonical = canonicalize(&child_chains, &grouping, &opts.boundaries)?;

    let mut batch = ArchGraph::new(opts.boundaries.clone(), cfg.epsilon);
    for chain in &canonical {
        batch.insert_chain(chain)?;
    }
    let mut merged = graph_union(&state.graph, &batch)?;

    let mut traversals: BTreeMap<EdgeKey, Vec<f64>> = BTreeMap::new();
    for (child, chain) in children.iter().zip(&canonical) {
        let fit = *fitness
            .get(&child.id)
            .ok_or_else(|| Error::UnknownElement(child.id.clone()))?;
        for key in chain_edge_keys(chain) {
            traversals.entry(key).or_default().push(fit);
        }
    }
    merged.update_fitness_weights(&traversals, cfg.architecture_rate)?;
    merged.update_sparsity_weights(cfg.epsilon)?;
    let pruned = merged.prune(cfg.pruning_threshold, cfg.sigma)?;
    merged.set_iteration(generation);

    let report = make_report(generation, &children, &fitness, &merged, pruned)?;
    state.generation = generation;
    state.next_id = id_gen.allocated();
    state.population = children;
    state.fitness = fitness;
    state.graph = merged;
    state.reports.push(report);
    Ok(())
}

/// Runs a full evolution from scratch: initialization plus
/// `iteration_depth` iterations, reporting each generation to the
/// observer.
pub fn coevolve(
    cfg: &EvolutionConfig,
    opts: &EngineOptions,
    dataset: &Dataset,
    split: &SplitSpec,
    kb: &[KnowledgeExcerpt],
    backend: &dyn GenerationBackend,
    observer: &mut dyn RunObserver,
) -> Result<EngineState> {
    let mut state = initialize_state(cfg, opts, dataset, split, kb, backend)?;
    observer.on_report(&state.reports[0])?;
    observer.on_state(&state)?;
    resume(&mut state, cfg, opts, dataset, split, kb, backend, observer)?;
    Ok(state)
}

/// Continues a run until `iteration_depth` generations have completed.
/// A state already at or past the target depth is returned unchanged.
#[allow(clippy::too_many_arguments)]
pub fn resume(
    state: &mut EngineState,
    cfg: &EvolutionConfig,
    opts: &EngineOptions,
    dataset: &Dataset,
    split: &SplitSpec,
    kb: &[KnowledgeExcerpt],
    backend: &dyn GenerationBackend,
    observer: &mut dyn RunObserver,
) -> Result<()> {
    while state.generation < cfg.iteration_depth as u64 {
        step(state, cfg, opts, dataset, split, kb, backend)?;
        observer.on_report(state.reports.last().expect("step pushed a report"))?;
        observer.on_state(state)?;
    }
    Ok(())
}
