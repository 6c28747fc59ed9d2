//! Semantic state merging: grouping equivalently named reasoning states
//! before chains are unioned into the architecture graph.
//!
//! Grouping is phase-local and type-isolated: programmatic states (all
//! incident edges code-kind, tool-only states included) never merge with
//! prompt-driven states (any incident reason edge). Equivalence of
//! distinct labels is delegated to a judge and closed transitively.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::chain::{normalize_label, validate_chain, AoeChain, BoundaryLabels, EdgeKind, Phase};
use crate::error::{Error, Result};
use crate::graph::node_id;

/// Decides whether two state labels in the same phase denote the same
/// reasoning state.
pub trait StateJudge {
    fn equivalent(&self, phase: Phase, a: &str, b: &str) -> Result<bool>;
}

/// Judge that only merges labels equal after whitespace normalization.
pub struct ExactJudge;

impl StateJudge for ExactJudge {
    fn equivalent(&self, _phase: Phase, a: &str, b: &str) -> Result<bool> {
        Ok(normalize_label(a) == normalize_label(b))
    }
}

/// One state proposed for merging.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCandidate {
    pub node_id: String,
    /// Normalized state label.
    pub state_text: String,
    pub phase: Phase,
    pub incident_kinds: BTreeSet<EdgeKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TypeClass {
    Programmatic,
    PromptDriven,
}

fn classify(kinds: &BTreeSet<EdgeKind>) -> TypeClass {
    if kinds.contains(&EdgeKind::Reason) {
        TypeClass::PromptDriven
    } else {
        TypeClass::Programmatic
    }
}

/// Member reference inside a merge group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberRef {
    pub node_id: String,
}

/// One group of equivalent states with its canonical representative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeGroup {
    pub canonical_state: String,
    pub members: Vec<MemberRef>,
}

/// A full partition of the candidate set. The serialized form is
/// `{"groups": [{"canonical_state": ..., "members": [{"node_id": ...}]}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MergeGrouping {
    pub groups: Vec<MergeGroup>,
}

/// Collects one candidate per (normalized label, phase) across all
/// chains, with the union of incident edge kinds. Sorted by node id.
pub fn extract_candidates(chains: &[AoeChain]) -> Vec<StateCandidate> {
    let mut by_id: BTreeMap<String, StateCandidate> = BTreeMap::new();
    for chain in chains {
        let nodes = crate::graph::chain_nodes(chain);
        for (i, (label, phase)) in nodes.iter().enumerate() {
            let id = node_id(label, *phase);
            let candidate = by_id.entry(id.clone()).or_insert_with(|| StateCandidate {
                node_id: id,
                state_text: label.clone(),
                phase: *phase,
                incident_kinds: BTreeSet::new(),
            });
            if i > 0 {
                candidate.incident_kinds.insert(chain.edges[i - 1].kind);
            }
            if i < chain.edges.len() {
                candidate.incident_kinds.insert(chain.edges[i].kind);
            }
        }
    }
    by_id.into_values().collect()
}

/// Groups candidates by judged equivalence, transitively closed, within
/// each (phase, type class) bucket. Judge calls are memoized by unordered
/// label pair. Singleton groups are kept so the result is a partition.
pub fn propose_groups(
    candidates: &[StateCandidate],
    judge: &dyn StateJudge,
) -> Result<MergeGrouping> {
    let mut seen = BTreeSet::new();
    for c in candidates {
        if !seen.insert(&c.node_id) {
            return Err(Error::InvalidGrouping(format!(
                "duplicate candidate node_id {:?}",
                c.node_id
            )));
        }
    }

    let mut parent: Vec<usize> = (0..candidates.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }

    let mut buckets: BTreeMap<(u8, bool), Vec<usize>> = BTreeMap::new();
    for (i, c) in candidates.iter().enumerate() {
        let class_key = classify(&c.incident_kinds) == TypeClass::PromptDriven;
        buckets.entry((c.phase.ordinal(), class_key)).or_default().push(i);
    }

    let mut memo: BTreeMap<(String, String), bool> = BTreeMap::new();
    for ((_, _), bucket) in &buckets {
        for (pos, &i) in bucket.iter().enumerate() {
            for &j in &bucket[pos + 1..] {
                let (a, b) = (&candidates[i].state_text, &candidates[j].state_text);
                let pair = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
                let equivalent = match memo.get(&pair) {
                    Some(&v) => v,
                    None => {
                        let v = judge.equivalent(candidates[i].phase, a, b)?;
                        memo.insert(pair, v);
                        v
                    }
                };
                if equivalent {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
    }

    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..candidates.len() {
        let root = find(&mut parent, i);
        components.entry(root).or_default().push(i);
    }
    let mut groups: Vec<MergeGroup> = components
        .into_values()
        .map(|member_idx| {
            let canonical_state = member_idx
                .iter()
                .map(|&i| candidates[i].state_text.clone())
                .min()
                .expect("components are non-empty");
            let mut members: Vec<MemberRef> = member_idx
                .iter()
                .map(|&i| MemberRef { node_id: candidates[i].node_id.clone() })
                .collect();
            members.sort_by(|a, b| a.node_id.cmp(&b.node_id));
            MergeGroup { canonical_state, members }
        })
        .collect();
    groups.sort_by(|a, b| {
        (&a.members[0].node_id, &a.canonical_state).cmp(&(&b.members[0].node_id, &b.canonical_state))
    });
    Ok(MergeGrouping { groups })
}

/// Checks a grouping against the candidate set. Returns human-readable
/// violation descriptions; empty means the grouping is acceptable.
pub fn validate_grouping(grouping: &MergeGrouping, candidates: &[StateCandidate]) -> Vec<String> {
    let mut violations = Vec::new();
    let by_id: BTreeMap<&str, &StateCandidate> =
        candidates.iter().map(|c| (c.node_id.as_str(), c)).collect();

    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for group in &grouping.groups {
        if group.members.is_empty() {
            violations.push(format!(
                "partition violation: group {:?} has no members",
                group.canonical_state
            ));
            continue;
        }
        let mut phases = BTreeSet::new();
        let mut classes = BTreeSet::new();
        let mut labels = Vec::new();
        for member in &group.members {
            match by_id.get(member.node_id.as_str()) {
                None => violations.push(format!(
                    "partition violation: unknown member {:?}",
                    member.node_id
                )),
                Some(c) => {
                    if !seen.insert(c.node_id.as_str()) {
                        violations.push(format!(
                            "partition violation: member {:?} appears in more than one group",
                            c.node_id
                        ));
                    }
                    phases.insert(c.phase.ordinal());
                    classes.insert(classify(&c.incident_kinds) == TypeClass::PromptDriven);
                    labels.push(c.state_text.clone());
                }
            }
        }
        if phases.len() > 1 {
            violations.push(format!(
                "phase violation: group {:?} mixes phases",
                group.canonical_state
            ));
        }
        if classes.len() > 1 {
            violations.push(format!(
                "type-isolation violation: group {:?} mixes programmatic and prompt-driven states",
                group.canonical_state
            ));
        }
        if let Some(smallest) = labels.iter().min() {
            if smallest != &group.canonical_state {
                violations.push(format!(
                    "canonical violation: group {:?} should be represented by {:?}",
                    group.canonical_state, smallest
                ));
            }
        }
    }
    for c in candidates {
        if !seen.contains(c.node_id.as_str()) {
            violations.push(format!(
                "partition violation: candidate {:?} missing from the grouping",
                c.node_id
            ));
        }
    }
    violations
}

/// Rewrites every chain so each state label becomes its group's canonical
/// representative. The grouping must be a valid partition of exactly the
/// states occurring in `chains`, and must not relabel a boundary state.
pub fn canonicalize(
    chains: &[AoeChain],
    grouping: &MergeGrouping,
    boundaries: &BoundaryLabels,
) -> Result<Vec<AoeChain>> {
    let candidates = extract_candidates(chains);
    let violations = validate_grouping(grouping, &candidates);
    if !violations.is_empty() {
        return Err(Error::InvalidGrouping(violations.join("; ")));
    }

    let mut canonical_of: BTreeMap<&str, &str> = BTreeMap::new();
    for group in &grouping.groups {
        for member in &group.members {
            canonical_of.insert(&member.node_id, &group.canonical_state);
        }
    }

    let boundary_ids = [
        node_id(&boundaries.source, Phase::ProblemAnalysis),
        node_id(&boundaries.phase1_exit, Phase::ProblemAnalysis),
        node_id(&boundaries.phase2_exit, Phase::MathematicalModeling),
        node_id(&boundaries.sink, Phase::CodeGeneration),
    ];
    for (label, id) in boundaries.all().iter().zip(&boundary_ids) {
        if let Some(canonical) = canonical_of.get(id.as_str()) {
            if *canonical != normalize_label(label) {
                return Err(Error::InvalidGrouping(format!(
                    "group would rewrite boundary label {label:?} to {canonical:?}"
                )));
            }
        }
    }

    let mut out = Vec::with_capacity(chains.len());
    for chain in chains {
        let nodes = crate::graph::chain_nodes(chain);
        let relabeled: Vec<String> = nodes
            .iter()
            .map(|(label, phase)| {
                let id = node_id(label, *phase);
                canonical_of
                    .get(id.as_str())
                    .map(|c| (*c).to_owned())
                    .unwrap_or_else(|| label.clone())
            })
            .collect();
        let mut edges = chain.edges.clone();
        for (i, edge) in edges.iter_mut().enumerate() {
            edge.start_state = relabeled[i].clone();
            edge.end_state = relabeled[i + 1].clone();
        }
        let rewritten = AoeChain { edges, source_individual: chain.source_individual.clone() };
        let report = validate_chain(&rewritten, boundaries);
        if !report.is_ok() {
            return Err(Error::InvalidGrouping(format!(
                "rewriting breaks chain validity: {report}"
            )));
        }
        out.push(rewritten);
    }
    Ok(out)
}
