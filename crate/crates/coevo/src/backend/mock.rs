//! A deterministic in-process backend. Every capability is a pure
//! function of its inputs and the seed, so evolutionary runs built on it
//! are exactly reproducible and cheap enough for property tests.

use std::collections::{BTreeMap, BTreeSet};

use crate::chain::{
    normalize_label, parse_chain, serialize_chain, AoeChain, BoundaryLabels, EdgeKind, EdgeRecord,
    Phase,
};
use crate::digest::stable_hash64;
use crate::error::{Error, Result};
use crate::eval::{ExecStatus, TaskInstance};
use crate::rng::derive_seed;
use crate::variation::KnowledgeExcerpt;

use super::{Artifact, ExecLimits, ExecutionTrace, GenerationBackend, MutationScope, StepRecord};

/// The synthetic workflow space: per phase, a small menu of route
/// variants between the phase's entry and exit boundary states.
#[derive(Debug, Clone)]
pub struct MockDomain {
    pub boundaries: BoundaryLabels,
    pub variants_per_phase: [usize; 3],
}

impl Default for MockDomain {
    fn default() -> MockDomain {
        MockDomain { boundaries: BoundaryLabels::default(), variants_per_phase: [2, 3, 2] }
    }
}

const PHASE_TOPIC: [&str; 3] = ["Analysis", "Model", "Codegen"];

impl MockDomain {
    pub fn new(boundaries: BoundaryLabels, variants_per_phase: [usize; 3]) -> MockDomain {
        MockDomain { boundaries, variants_per_phase }
    }

    fn mid_label(phase: Phase, variant: usize) -> String {
        format!("{} Option {}", PHASE_TOPIC[phase.ordinal() as usize - 1], variant)
    }

    /// The two-edge route variant for one phase: entry -> mid -> exit.
    pub fn segment(&self, phase: Phase, variant: usize) -> Vec<EdgeRecord> {
        let mid = Self::mid_label(phase, variant);
        let (entry, exit) = (self.boundaries.entry(phase), self.boundaries.exit(phase));
        let first_kind = if variant == 0 { EdgeKind::Tool } else { EdgeKind::Reason };
        let first_key = match first_kind {
            EdgeKind::Tool => format!("gather_{}_{}", PHASE_TOPIC[phase.ordinal() as usize - 1].to_lowercase(), variant),
            _ => format!("prompt: work out {} route {}", PHASE_TOPIC[phase.ordinal() as usize - 1].to_lowercase(), variant),
        };
        vec![
            EdgeRecord {
                phase,
                kind: first_kind,
                action: format!("open {} via route {}", PHASE_TOPIC[phase.ordinal() as usize - 1].to_lowercase(), variant),
                start_state: entry.to_owned(),
                end_state: mid.clone(),
                key: first_key,
            },
            EdgeRecord {
                phase,
                kind: EdgeKind::Work,
                action: format!("finalize {} route {}", PHASE_TOPIC[phase.ordinal() as usize - 1].to_lowercase(), variant),
                start_state: mid,
                end_state: exit.to_owned(),
                key: format!("result = finish_{}({})", PHASE_TOPIC[phase.ordinal() as usize - 1].to_lowercase(), variant),
            },
        ]
    }

    /// The full chain for one choice of variant per phase.
    pub fn path_chain(&self, variants: &[usize; 3]) -> Result<AoeChain> {
        let mut records = Vec::with_capacity(6);
        for (idx, phase) in Phase::ALL.iter().enumerate() {
            if variants[idx] >= self.variants_per_phase[idx] {
                return Err(Error::Config(format!(
                    "variant {} out of range for phase {}",
                    variants[idx],
                    phase.ordinal()
                )));
            }
            records.extend(self.segment(*phase, variants[idx]));
        }
        AoeChain::from_records(records, &self.boundaries)
    }

    /// Every distinct route through the domain.
    pub fn enumerate_paths(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        for a in 0..self.variants_per_phase[0] {
            for b in 0..self.variants_per_phase[1] {
                for c in 0..self.variants_per_phase[2] {
                    out.push([a, b, c]);
                }
            }
        }
        out
    }
}

/// Per-instance solve threshold.
#[derive(Debug, Clone, PartialEq)]
pub enum DifficultySpec {
    Fixed(f64),
    /// A threshold derived from the instance id's hash, spread uniformly
    /// over [min, max].
    PerInstance { min: f64, max: f64 },
}

impl DifficultySpec {
    pub fn threshold(&self, instance_id: &str) -> f64 {
        match self {
            DifficultySpec::Fixed(t) => *t,
            DifficultySpec::PerInstance { min, max } => {
                let fraction = stable_hash64(instance_id) as f64 / u64::MAX as f64;
                min + (max - min) * fraction
            }
        }
    }
}

/// Scores a workflow route by summing per-transition utilities; a run
/// solves an instance when the route's total utility clears the
/// instance's threshold.
#[derive(Debug, Clone)]
pub struct MockOracle {
    /// Utility per transition, keyed `"start|end|kind"` on normalized
    /// labels. Transitions not listed fall back to `default_utility`.
    pub utilities: BTreeMap<String, f64>,
    pub default_utility: f64,
    pub difficulty: DifficultySpec,
    /// Relative offset applied to the ground truth when reporting an
    /// objective: predicted = truth * (1 + perturbation).
    pub perturbation: f64,
    pub fail_instances: BTreeSet<String>,
    pub no_numeric_instances: BTreeSet<String>,
}

impl Default for MockOracle {
    fn default() -> MockOracle {
        MockOracle {
            utilities: BTreeMap::new(),
            default_utility: 0.2,
            difficulty: DifficultySpec::Fixed(1.0),
            perturbation: 0.0,
            fail_instances: BTreeSet::new(),
            no_numeric_instances: BTreeSet::new(),
        }
    }
}

pub fn utility_key(start: &str, end: &str, kind: EdgeKind) -> String {
    format!("{}|{}|{}", normalize_label(start), normalize_label(end), kind.surface())
}

impl MockOracle {
    /// An oracle whose utility landscape over `domain` has one strict
    /// optimum, for search-quality tests: per phase the variants are
    /// strictly ordered, and only routes near the top clear the harder
    /// instance thresholds.
    pub fn hill(domain: &MockDomain) -> MockOracle {
        let per_phase: [&[f64]; 3] = [&[0.2, 0.6], &[0.2, 0.5, 1.0], &[0.2, 0.8]];
        let mut utilities = BTreeMap::new();
        for (idx, phase) in Phase::ALL.iter().enumerate() {
            for variant in 0..domain.variants_per_phase[idx] {
                let total = per_phase[idx]
                    .get(variant)
                    .copied()
                    .unwrap_or(per_phase[idx][per_phase[idx].len() - 1]);
                for edge in domain.segment(*phase, variant) {
                    utilities.insert(
                        utility_key(&edge.start_state, &edge.end_state, edge.kind),
                        total / 2.0,
                    );
                }
            }
        }
        MockOracle {
            utilities,
            default_utility: 0.05,
            difficulty: DifficultySpec::PerInstance { min: 0.5, max: 2.35 },
            perturbation: 0.0,
            fail_instances: BTreeSet::new(),
            no_numeric_instances: BTreeSet::new(),
        }
    }

    pub fn chain_utility(&self, chain: &AoeChain) -> f64 {
        chain
            .edges
            .iter()
            .map(|e| {
                self.utilities
                    .get(&utility_key(&e.start_state, &e.end_state, e.kind))
                    .copied()
                    .unwrap_or(self.default_utility)
            })
            .sum()
    }
}

/// The deterministic backend: a domain of synthetic routes plus an
/// oracle that scores them.
#[derive(Debug, Clone)]
pub struct MockBackend {
    pub domain: MockDomain,
    pub oracle: MockOracle,
}

impl MockBackend {
    pub fn new(domain: MockDomain, oracle: MockOracle) -> MockBackend {
        MockBackend { domain, oracle }
    }

    /// Default domain, default oracle.
    pub fn standard() -> MockBackend {
        MockBackend::new(MockDomain::default(), MockOracle::default())
    }

    /// Default domain with the single-optimum utility landscape.
    pub fn hill() -> MockBackend {
        let domain = MockDomain::default();
        let oracle = MockOracle::hill(&domain);
        MockBackend::new(domain, oracle)
    }

    fn parse_artifact(&self, artifact: &Artifact) -> Result<AoeChain> {
        parse_chain(&artifact.text, &self.domain.boundaries)
    }

    fn fresh_label(&self, taken: &BTreeSet<String>, tag: u64) -> String {
        let mut n = tag;
        loop {
            let label = format!("Var {:04x}", n & 0xffff);
            if !taken.contains(&normalize_label(&label)) {
                return label;
            }
            n = n.wrapping_add(1);
        }
    }

    fn scope_indices(chain: &AoeChain, scope: MutationScope) -> Vec<usize> {
        chain
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| match scope {
                MutationScope::Whole => true,
                MutationScope::Phase(p) => e.phase == p,
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn rewrite_keys(
        records: &mut [EdgeRecord],
        indices: &[usize],
        tag: u64,
        guided: bool,
    ) {
        let targets: Vec<usize> = {
            let reasons: Vec<usize> = indices
                .iter()
                .copied()
                .filter(|&i| records[i].kind == EdgeKind::Reason)
                .collect();
            if reasons.is_empty() { indices.to_vec() } else { reasons }
        };
        for i in targets {
            let base = match records[i].key.rfind(" #v") {
                Some(pos) => records[i].key[..pos].to_owned(),
                None => records[i].key.clone(),
            };
            let marker = if guided { "+kb" } else { "" };
            records[i].key = format!("{base} #v{:04x}{marker}", tag & 0xffff);
        }
    }
}

impl GenerationBackend for MockBackend {
    fn generate_individual(
        &self,
        _task_context: &str,
        excerpts: &[KnowledgeExcerpt],
        seed: u64,
    ) -> Result<Artifact> {
        let mut variants = [0usize; 3];
        for (idx, slot) in variants.iter_mut().enumerate() {
            *slot = (derive_seed(seed, &[idx as u64 + 1]) % self.domain.variants_per_phase[idx] as u64)
                as usize;
        }
        let mut chain = self.domain.path_chain(&variants)?;
        if !excerpts.is_empty() {
            // Knowledge-steered generation front-loads an extra
            // reasoning step into the modeling phase.
            let entry = self.domain.boundaries.entry(Phase::MathematicalModeling).to_owned();
            let insert_at = chain
                .edges
                .iter()
                .position(|e| e.phase == Phase::MathematicalModeling)
                .expect("every generated chain visits the modeling phase");
            let primed = "Knowledge Primed".to_owned();
            let excerpt_names: Vec<&str> =
                excerpts.iter().map(|e| e.component_name.as_str()).collect();
            let mut records = chain.edges;
            records[insert_at].start_state = primed.clone();
            records.insert(
                insert_at,
                EdgeRecord {
                    phase: Phase::MathematicalModeling,
                    kind: EdgeKind::Reason,
                    action: "prime the model with retrieved design knowledge".to_owned(),
                    start_state: entry,
                    end_state: primed,
                    key: format!("prompt: apply {}", excerpt_names.join(", ")),
                },
            );
            chain = AoeChain::from_records(records, &self.domain.boundaries)?;
        }
        self.synthesize_artifact(&chain)
    }

    fn extract_chain(&self, artifact: &Artifact) -> Result<AoeChain> {
        self.parse_artifact(artifact)
    }

    fn synthesize_artifact(&self, chain: &AoeChain) -> Result<Artifact> {
        Ok(Artifact::new(serialize_chain(chain)))
    }

    fn mutate_artifact(
        &self,
        artifact: &Artifact,
        scope: MutationScope,
        excerpts: &[KnowledgeExcerpt],
        seed: u64,
    ) -> Result<Artifact> {
        let chain = self.parse_artifact(artifact)?;
        let indices = Self::scope_indices(&chain, scope);
        if indices.is_empty() {
            return Err(Error::Backend {
                capability: "mutate",
                detail: "no edges inside the mutation scope".to_owned(),
            });
        }
        let mut records = chain.edges.clone();
        let mode = derive_seed(seed, &[0]) % 3;
        let tag = derive_seed(seed, &[7]);
        let guided = !excerpts.is_empty();
        match mode {
            0 => Self::rewrite_keys(&mut records, &indices, tag, guided),
            1 => {
                let at = indices[(derive_seed(seed, &[11]) % indices.len() as u64) as usize];
                let taken: BTreeSet<String> = records
                    .iter()
                    .flat_map(|e| [normalize_label(&e.start_state), normalize_label(&e.end_state)])
                    .collect();
                let label = self.fresh_label(&taken, tag);
                let start = records[at].start_state.clone();
                records[at].start_state = label.clone();
                records.insert(
                    at,
                    EdgeRecord {
                        phase: records[at].phase,
                        kind: EdgeKind::Reason,
                        action: "insert an intermediate reasoning step".to_owned(),
                        start_state: start,
                        end_state: label,
                        key: format!(
                            "prompt: reconsider before continuing #{:04x}{}",
                            tag & 0xffff,
                            if guided { "+kb" } else { "" }
                        ),
                    },
                );
            }
            _ => {
                let removable: Vec<usize> = indices
                    .iter()
                    .copied()
                    .filter(|&i| {
                        records[i].kind == EdgeKind::Reason
                            && i + 1 < records.len()
                            && records[i + 1].phase == records[i].phase
                            && !self
                                .domain
                                .boundaries
                                .all()
                                .contains(&records[i].end_state.as_str())
                    })
                    .collect();
                if removable.is_empty() {
                    Self::rewrite_keys(&mut records, &indices, tag, guided);
                } else {
                    let at = removable[(derive_seed(seed, &[13]) % removable.len() as u64) as usize];
                    let start = records[at].start_state.clone();
                    records.remove(at);
                    records[at].start_state = start;
                }
            }
        }
        let mutated = AoeChain::from_records(records, &self.domain.boundaries).map_err(|e| {
            Error::Backend { capability: "mutate", detail: format!("mutated route is invalid: {e}") }
        })?;
        self.synthesize_artifact(&mutated)
    }

    fn judge_equivalence(&self, _phase: Phase, a: &str, b: &str) -> Result<bool> {
        Ok(normalize_label(a).to_lowercase() == normalize_label(b).to_lowercase())
    }

    fn execute(
        &self,
        artifact: &Artifact,
        instance: &TaskInstance,
        _limits: &ExecLimits,
    ) -> Result<ExecutionTrace> {
        let chain = self.parse_artifact(artifact)?;
        let transcript = chain
            .edges
            .iter()
            .enumerate()
            .map(|(index, e)| StepRecord {
                index,
                note: format!("{} :: {} -> {}", e.kind.surface(), e.start_state, e.end_state),
            })
            .collect();
        if self.oracle.fail_instances.contains(&instance.id) {
            return Ok(ExecutionTrace { status: ExecStatus::RunFailed, objective: None, chain, transcript });
        }
        if self.oracle.no_numeric_instances.contains(&instance.id) {
            return Ok(ExecutionTrace { status: ExecStatus::NoNumeric, objective: None, chain, transcript });
        }
        let utility = self.oracle.chain_utility(&chain);
        if utility >= self.oracle.difficulty.threshold(&instance.id) {
            let objective = instance.ground_truth * (1.0 + self.oracle.perturbation);
            Ok(ExecutionTrace { status: ExecStatus::Solved, objective: Some(objective), chain, transcript })
        } else {
            Ok(ExecutionTrace { status: ExecStatus::NoNumeric, objective: None, chain, transcript })
        }
    }
}

/// A structurally valid chain generated from a seed, with varied interior
/// state counts, step kinds, and non-ASCII labels; for property tests.
pub fn random_valid_chain(seed: u64, boundaries: &BoundaryLabels) -> AoeChain {
    let mut records = Vec::new();
    for phase in Phase::ALL {
        let p = phase.ordinal() as u64;
        let interior = (derive_seed(seed, &[p, 1]) % 4) as usize;
        let mut states = vec![boundaries.entry(phase).to_owned()];
        for i in 0..interior {
            let tok = derive_seed(seed, &[p, 2, i as u64]) & 0xffff;
            states.push(format!("État {} µ{:04x}", i, tok));
        }
        states.push(boundaries.exit(phase).to_owned());
        for (i, pair) in states.windows(2).enumerate() {
            let kind = match derive_seed(seed, &[p, 3, i as u64]) % 3 {
                0 => EdgeKind::Work,
                1 => EdgeKind::Reason,
                _ => EdgeKind::Tool,
            };
            let key = match kind {
                EdgeKind::Work => format!("value = step_{}_{}()", p, i),
                EdgeKind::Reason => format!("prompt: advance stage {} step {}", p, i),
                EdgeKind::Tool => format!("tool_{}_{}", p, i),
            };
            records.push(EdgeRecord {
                phase,
                kind,
                action: format!("stage {} step {}", p, i),
                start_state: pair[0].clone(),
                end_state: pair[1].clone(),
                key,
            });
        }
    }
    AoeChain::from_records(records, boundaries).expect("construction follows the route rules")
}
