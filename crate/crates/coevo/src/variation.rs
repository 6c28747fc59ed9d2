//! Individuals and the variation operators that create them: hybrid
//! initialization and scoped mutation, both optionally steered by
//! retrieved knowledge excerpts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{Artifact, GenerationBackend, MutationScope};
use crate::chain::{
    path_signature, split_by_phase, validate_chain, AoeChain, BoundaryLabels, Phase, PathSignature,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, role};

/// How an individual entered the population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "init-kb")]
    InitKb,
    #[serde(rename = "init-plain")]
    InitPlain,
    #[serde(rename = "elite")]
    Elite,
    #[serde(rename = "recombined")]
    Recombined,
    #[serde(rename = "mutated-phase")]
    MutatedPhase,
    #[serde(rename = "mutated-whole")]
    MutatedWhole,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Provenance::InitKb => "init-kb",
            Provenance::InitPlain => "init-plain",
            Provenance::Elite => "elite",
            Provenance::Recombined => "recombined",
            Provenance::MutatedPhase => "mutated-phase",
            Provenance::MutatedWhole => "mutated-whole",
        }
    }
}

/// One member of the population: an executable artifact together with
/// its extracted workflow route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub artifact: Artifact,
    pub chain: AoeChain,
    /// The route's signature, used for novelty checks.
    pub path: PathSignature,
    pub provenance: Provenance,
    pub parent_id: Option<String>,
}

/// One retrievable piece of design knowledge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeExcerpt {
    pub component_name: String,
    pub theoretical_summary: String,
    pub abstract_template: String,
}

/// Loads a knowledge base stored as a JSON array of excerpts.
pub fn load_knowledge(text: &str) -> Result<Vec<KnowledgeExcerpt>> {
    Ok(serde_json::from_str(text)?)
}

fn tokens(text: &str) -> std::collections::BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Ranks excerpts by token overlap with the query and returns the top
/// `k`. Ties break on component name, then on store order. With fewer
/// than `k` excerpts everything is returned, zero-overlap entries
/// included, so retrieval never starves a small store.
pub fn kb_retrieve<'a>(
    store: &'a [KnowledgeExcerpt],
    query: &str,
    k: usize,
) -> Vec<&'a KnowledgeExcerpt> {
    let query_tokens = tokens(query);
    let mut scored: Vec<(usize, &KnowledgeExcerpt, usize)> = store
        .iter()
        .enumerate()
        .map(|(index, excerpt)| {
            let text = format!(
                "{} {} {}",
                excerpt.component_name, excerpt.theoretical_summary, excerpt.abstract_template
            );
            let overlap = tokens(&text).intersection(&query_tokens).count();
            (overlap, excerpt, index)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then_with(|| a.1.component_name.cmp(&b.1.component_name))
            .then_with(|| a.2.cmp(&b.2))
    });
    scored.into_iter().take(k).map(|(_, excerpt, _)| excerpt).collect()
}

/// Sequential population id allocator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdGen {
    next: u64,
}

impl IdGen {
    pub fn new() -> IdGen {
        IdGen { next: 0 }
    }

    /// Resumes allocation after `next` ids were already handed out.
    pub fn starting_at(next: u64) -> IdGen {
        IdGen { next }
    }

    pub fn next_id(&mut self) -> String {
        let id = format!("ind-{:06}", self.next);
        self.next += 1;
        id
    }

    pub fn allocated(&self) -> u64 {
        self.next
    }
}

impl Default for IdGen {
    fn default() -> IdGen {
        IdGen::new()
    }
}

fn assemble(
    artifact: Artifact,
    backend: &dyn GenerationBackend,
    boundaries: &BoundaryLabels,
    id: String,
    provenance: Provenance,
    parent_id: Option<String>,
) -> Result<Individual> {
    let mut chain = backend.extract_chain(&artifact)?;
    let report = validate_chain(&chain, boundaries);
    if !report.is_ok() {
        return Err(Error::ChainInvalid { report });
    }
    chain.source_individual = id.clone();
    let path = path_signature(&chain);
    Ok(Individual { id, artifact, chain, path, provenance, parent_id })
}

/// Creates the starting population: the first `floor(n * alpha_init)`
/// individuals are generated with retrieved knowledge, the rest without.
/// Each failed backend call is retried once before the error surfaces.
#[allow(clippy::too_many_arguments)]
pub fn hybrid_initialize(
    n: usize,
    alpha_init: f64,
    task_context: &str,
    kb: &[KnowledgeExcerpt],
    top_k: usize,
    backend: &dyn GenerationBackend,
    root_seed: u64,
    boundaries: &BoundaryLabels,
    id_gen: &mut IdGen,
) -> Result<Vec<Individual>> {
    if !(0.0..=1.0).contains(&alpha_init) {
        return Err(Error::Config(format!("init ratio {alpha_init} is outside [0, 1]")));
    }
    let kb_slots = (n as f64 * alpha_init).floor() as usize;
    let mut population = Vec::with_capacity(n);
    for slot in 0..n {
        let guided = slot < kb_slots;
        let excerpts: Vec<KnowledgeExcerpt> = if guided {
            kb_retrieve(kb, task_context, top_k).into_iter().cloned().collect()
        } else {
            Vec::new()
        };
        let seed = derive_seed(root_seed, &[role::INIT, slot as u64]);
        let id = id_gen.next_id();
        let provenance = if guided { Provenance::InitKb } else { Provenance::InitPlain };
        let attempt = |id: String| -> Result<Individual> {
            let artifact = backend.generate_individual(task_context, &excerpts, seed)?;
            assemble(artifact, backend, boundaries, id, provenance, None)
        };
        let individual = attempt(id.clone()).or_else(|_| attempt(id))?;
        population.push(individual);
    }
    Ok(population)
}

/// The dice roll behind one mutation: what scope it touches and whether
/// retrieval steers it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MutationPlan {
    pub scope: MutationScope,
    pub guided: bool,
}

/// Draws the scope and guidance decisions in a fixed order so the
/// consumed random stream is stable: phase-level with probability
/// `scope_rate` (then a uniform phase), knowledge-steered with
/// probability `guidance_rate`.
pub fn draw_mutation_plan<R: Rng>(rng: &mut R, scope_rate: f64, guidance_rate: f64) -> MutationPlan {
    let phase_level = rng.gen::<f64>() < scope_rate;
    let scope = if phase_level {
        MutationScope::Phase(Phase::ALL[rng.gen_range(0..Phase::ALL.len())])
    } else {
        MutationScope::Whole
    };
    let guided = rng.gen::<f64>() < guidance_rate;
    MutationPlan { scope, guided }
}

fn subchain_signature(records: &[crate::chain::EdgeRecord]) -> PathSignature {
    let chain = AoeChain::new_unchecked(records.to_vec(), "");
    path_signature(&chain)
}

/// Mutates one individual under a freshly drawn plan. Phase-scoped
/// mutations must leave every other phase's route identical; violations
/// and backend failures are retried once with a fresh seed, then
/// surfaced.
#[allow(clippy::too_many_arguments)]
pub fn mutate<R: Rng>(
    target: &Individual,
    scope_rate: f64,
    guidance_rate: f64,
    kb: &[KnowledgeExcerpt],
    top_k: usize,
    task_context: &str,
    backend: &dyn GenerationBackend,
    boundaries: &BoundaryLabels,
    rng: &mut R,
    id_gen: &mut IdGen,
) -> Result<Individual> {
    let plan = draw_mutation_plan(rng, scope_rate, guidance_rate);
    let excerpts: Vec<KnowledgeExcerpt> = if plan.guided {
        let scoped_actions: Vec<&str> = target
            .chain
            .edges
            .iter()
            .filter(|e| match plan.scope {
                MutationScope::Whole => true,
                MutationScope::Phase(p) => e.phase == p,
            })
            .map(|e| e.action.as_str())
            .collect();
        let query = format!("{task_context} {}", scoped_actions.join(" "));
        kb_retrieve(kb, &query, top_k).into_iter().cloned().collect()
    } else {
        Vec::new()
    };
    let provenance = match plan.scope {
        MutationScope::Whole => Provenance::MutatedWhole,
        MutationScope::Phase(_) => Provenance::MutatedPhase,
    };
    let id = id_gen.next_id();

    let before = split_by_phase(&target.chain);
    let attempt = |seed: u64, id: String| -> Result<Individual> {
        let artifact = backend.mutate_artifact(&target.artifact, plan.scope, &excerpts, seed)?;
        let individual = assemble(
            artifact,
            backend,
            boundaries,
            id,
            provenance,
            Some(target.id.clone()),
        )?;
        if let MutationScope::Phase(touched) = plan.scope {
            let after = split_by_phase(&individual.chain);
            for phase in Phase::ALL {
                if phase == touched {
                    continue;
                }
                let idx = phase.ordinal() as usize - 1;
                if subchain_signature(&before[idx]) != subchain_signature(&after[idx]) {
                    return Err(Error::Backend {
                        capability: "mutate",
                        detail: format!(
                            "mutation scoped to {touched} altered the {phase} route"
                        ),
                    });
                }
            }
        }
        Ok(individual)
    };

    let first_seed = rng.gen::<u64>();
    match attempt(first_seed, id.clone()) {
        Ok(individual) => Ok(individual),
        Err(_) => {
            let second_seed = rng.gen::<u64>();
            attempt(second_seed, id)
        }
    }
}
