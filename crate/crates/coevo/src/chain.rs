//! Activity-on-edge chains: the serialized form of one agent workflow.
//!
//! A chain is an ordered list of edge records. Each record is one action
//! (a code step, a prompt step, or a tool call) moving the agent from one
//! named reasoning state to the next inside one of three ordered phases.
//! The wire format is a JSON array of objects with exactly six fields in
//! fixed order: `phase`, `type`, `action`, `start_state`, `end_state`,
//! `key`.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

use crate::error::{Error, Result};

/// The three ordered workflow phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    ProblemAnalysis,
    MathematicalModeling,
    CodeGeneration,
}

impl Phase {
    pub const ALL: [Phase; 3] = [
        Phase::ProblemAnalysis,
        Phase::MathematicalModeling,
        Phase::CodeGeneration,
    ];

    /// 1-based position in the phase order.
    pub fn ordinal(self) -> u8 {
        match self {
            Phase::ProblemAnalysis => 1,
            Phase::MathematicalModeling => 2,
            Phase::CodeGeneration => 3,
        }
    }

    pub fn from_ordinal(ord: u8) -> Option<Phase> {
        match ord {
            1 => Some(Phase::ProblemAnalysis),
            2 => Some(Phase::MathematicalModeling),
            3 => Some(Phase::CodeGeneration),
            _ => None,
        }
    }

    /// Canonical display name used in serialized documents.
    pub fn name(self) -> &'static str {
        match self {
            Phase::ProblemAnalysis => "Problem Analysis",
            Phase::MathematicalModeling => "Mathematical Modeling",
            Phase::CodeGeneration => "Code Generation",
        }
    }

    fn parse(text: &str) -> Option<Phase> {
        let folded: String = text
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(|c| c.to_lowercase())
            .collect();
        match folded.as_str() {
            "problemanalysis" | "1" => Some(Phase::ProblemAnalysis),
            "mathematicalmodeling" | "2" => Some(Phase::MathematicalModeling),
            "codegeneration" | "3" => Some(Phase::CodeGeneration),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Phase::parse(&raw).ok_or_else(|| D::Error::custom(format!("unknown phase {raw:?}")))
    }
}

/// Edge kind. The wire format spells these `code`, `prompt` and `tool`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    /// Programmatic workflow step (`code`).
    Work,
    /// Prompt-driven semantic step (`prompt`).
    Reason,
    /// External tool invocation (`tool`).
    Tool,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 3] = [EdgeKind::Work, EdgeKind::Reason, EdgeKind::Tool];

    /// Surface spelling used in serialized documents.
    pub fn surface(self) -> &'static str {
        match self {
            EdgeKind::Work => "code",
            EdgeKind::Reason => "prompt",
            EdgeKind::Tool => "tool",
        }
    }

    pub fn from_surface(text: &str) -> Option<EdgeKind> {
        match text.trim().to_lowercase().as_str() {
            "code" => Some(EdgeKind::Work),
            "prompt" => Some(EdgeKind::Reason),
            "tool" => Some(EdgeKind::Tool),
            _ => None,
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.surface())
    }
}

impl Serialize for EdgeKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.surface())
    }
}

impl<'de> Deserialize<'de> for EdgeKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        EdgeKind::from_surface(&raw)
            .ok_or_else(|| D::Error::custom(format!("unknown edge type {raw:?}")))
    }
}

/// One action edge. Field order here is the canonical serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub phase: Phase,
    #[serde(rename = "type")]
    pub kind: EdgeKind,
    /// Human-readable description of the step.
    pub action: String,
    pub start_state: String,
    pub end_state: String,
    /// Opaque payload: prompt text, code snippet or tool invocation.
    pub key: String,
}

/// An ordered, validated sequence of edge records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AoeChain {
    pub edges: Vec<EdgeRecord>,
    /// Identifier of the individual this chain was extracted from, or
    /// empty when unattributed. Not part of the wire document.
    #[serde(default)]
    pub source_individual: String,
}

/// Mandatory entry and exit state labels of the three phases.
///
/// These are configuration constants: a deployment may relabel its
/// boundaries, so every validation entry point takes them explicitly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryLabels {
    pub source: String,
    pub phase1_exit: String,
    pub phase2_exit: String,
    pub sink: String,
}

impl Default for BoundaryLabels {
    fn default() -> Self {
        BoundaryLabels {
            source: "Agent Initialization".into(),
            phase1_exit: "Problem Analysis Complete".into(),
            phase2_exit: "Mathematical Modeling Complete".into(),
            sink: "Code Generation Complete".into(),
        }
    }
}

impl BoundaryLabels {
    /// Expected label of the state entering `phase`.
    pub fn entry(&self, phase: Phase) -> &str {
        match phase {
            Phase::ProblemAnalysis => &self.source,
            Phase::MathematicalModeling => &self.phase1_exit,
            Phase::CodeGeneration => &self.phase2_exit,
        }
    }

    /// Expected label of the state leaving `phase`.
    pub fn exit(&self, phase: Phase) -> &str {
        match phase {
            Phase::ProblemAnalysis => &self.phase1_exit,
            Phase::MathematicalModeling => &self.phase2_exit,
            Phase::CodeGeneration => &self.sink,
        }
    }

    pub fn all(&self) -> [&str; 4] {
        [&self.source, &self.phase1_exit, &self.phase2_exit, &self.sink]
    }
}

/// Trims the label and collapses internal whitespace runs to single
/// spaces. Comparison of state labels is case-sensitive over this form.
pub fn normalize_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Ordered (start_state, end_state, kind) triples over normalized labels.
/// Two individuals with equal signatures traverse the same graph path.
pub type PathSignature = Vec<(String, String, EdgeKind)>;

/// One structural violation found by [`validate_chain`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// The chain has no edges.
    Empty,
    /// `edges[index].start_state` does not match the previous end state.
    ContinuityBreak { index: usize },
    /// `edges[index]` steps back to an earlier phase.
    PhaseOrderBreak { index: usize },
    /// The chain never visits this phase.
    PhaseMissing { phase: Phase },
    /// The first start state is not the configured source label.
    SourceLabelMismatch { found: String },
    /// The final end state is not the configured sink label.
    SinkLabelMismatch { found: String },
    /// The transition into `edges[index]`'s phase does not pass through
    /// the configured boundary label.
    BoundaryLabelMismatch { index: usize, expected: String, found: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "chain has no edges"),
            Violation::ContinuityBreak { index } => {
                write!(f, "continuity break at record {index}")
            }
            Violation::PhaseOrderBreak { index } => {
                write!(f, "phase order break at record {index}")
            }
            Violation::PhaseMissing { phase } => write!(f, "phase {phase} never visited"),
            Violation::SourceLabelMismatch { found } => {
                write!(f, "first start_state {found:?} is not the source label")
            }
            Violation::SinkLabelMismatch { found } => {
                write!(f, "final end_state {found:?} is not the sink label")
            }
            Violation::BoundaryLabelMismatch { index, expected, found } => write!(
                f,
                "phase transition at record {index} passes through {found:?}, expected {expected:?}"
            ),
        }
    }
}

/// Outcome of structural validation: empty means the chain is valid.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let lines: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", lines.join("; "))
    }
}

impl AoeChain {
    /// Builds a chain without validating it. Intended for tests and for
    /// the validation CLI, which needs to hold invalid chains.
    pub fn new_unchecked(edges: Vec<EdgeRecord>, source_individual: impl Into<String>) -> Self {
        AoeChain { edges, source_individual: source_individual.into() }
    }

    /// Builds a chain and rejects it if validation finds violations.
    pub fn from_records(edges: Vec<EdgeRecord>, boundaries: &BoundaryLabels) -> Result<Self> {
        let chain = AoeChain { edges, source_individual: String::new() };
        let report = validate_chain(&chain, boundaries);
        if report.is_ok() {
            Ok(chain)
        } else {
            Err(Error::ChainInvalid { report })
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Parses the JSON array syntactically, reporting record-level problems
/// with their index. Does not check chain-level structure.
pub fn parse_records(text: &str) -> Result<Vec<EdgeRecord>> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::ChainParse {
        index: None,
        reason: format!("malformed document: {e}"),
    })?;
    let items = value.as_array().ok_or_else(|| Error::ChainParse {
        index: None,
        reason: "document is not a JSON array".into(),
    })?;
    if items.is_empty() {
        return Err(Error::ChainParse {
            index: None,
            reason: "the array cannot be empty".into(),
        });
    }
    let mut records = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let record: EdgeRecord =
            serde_json::from_value(item.clone()).map_err(|e| Error::ChainParse {
                index: Some(index),
                reason: e.to_string(),
            })?;
        for (field, value) in [
            ("action", &record.action),
            ("start_state", &record.start_state),
            ("end_state", &record.end_state),
            ("key", &record.key),
        ] {
            if normalize_label(value).is_empty() {
                return Err(Error::ChainParse {
                    index: Some(index),
                    reason: format!("field {field:?} is empty"),
                });
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Parses and validates a chain document.
pub fn parse_chain(text: &str, boundaries: &BoundaryLabels) -> Result<AoeChain> {
    AoeChain::from_records(parse_records(text)?, boundaries)
}

/// Checks continuity, phase order, phase coverage and boundary labels.
/// Returns every violation found rather than stopping at the first.
pub fn validate_chain(chain: &AoeChain, boundaries: &BoundaryLabels) -> ValidationReport {
    let mut violations = Vec::new();
    if chain.edges.is_empty() {
        return ValidationReport { violations: vec![Violation::Empty] };
    }

    for (i, pair) in chain.edges.windows(2).enumerate() {
        let index = i + 1;
        if normalize_label(&pair[0].end_state) != normalize_label(&pair[1].start_state) {
            violations.push(Violation::ContinuityBreak { index });
        }
        let prev = pair[0].phase.ordinal();
        let next = pair[1].phase.ordinal();
        if next < prev {
            violations.push(Violation::PhaseOrderBreak { index });
        } else if next == prev + 1 {
            let expected = normalize_label(boundaries.exit(pair[0].phase));
            let found = normalize_label(&pair[0].end_state);
            if found != expected {
                violations.push(Violation::BoundaryLabelMismatch { index, expected, found });
            }
        }
    }

    for phase in Phase::ALL {
        if !chain.edges.iter().any(|e| e.phase == phase) {
            violations.push(Violation::PhaseMissing { phase });
        }
    }

    let first = normalize_label(&chain.edges[0].start_state);
    if first != normalize_label(&boundaries.source) {
        violations.push(Violation::SourceLabelMismatch { found: first });
    }
    let last = normalize_label(&chain.edges[chain.edges.len() - 1].end_state);
    if last != normalize_label(&boundaries.sink) {
        violations.push(Violation::SinkLabelMismatch { found: last });
    }

    ValidationReport { violations }
}

/// Canonical serialization: UTF-8, records in chain order, keys in fixed
/// order, two-space indentation, no trailing whitespace. Byte-stable for
/// equal chains.
pub fn serialize_chain(chain: &AoeChain) -> String {
    serde_json::to_string_pretty(&chain.edges).expect("edge records always serialize")
}

/// The chain's graph-path identity over normalized labels.
pub fn path_signature(chain: &AoeChain) -> PathSignature {
    chain
        .edges
        .iter()
        .map(|e| (normalize_label(&e.start_state), normalize_label(&e.end_state), e.kind))
        .collect()
}

/// Splits into per-phase subchains; concatenating them in phase order
/// reproduces the chain when phases are monotone.
pub fn split_by_phase(chain: &AoeChain) -> [Vec<EdgeRecord>; 3] {
    let mut parts: [Vec<EdgeRecord>; 3] = Default::default();
    for edge in &chain.edges {
        parts[(edge.phase.ordinal() - 1) as usize].push(edge.clone());
    }
    parts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_records(b: &BoundaryLabels) -> Vec<EdgeRecord> {
        let mk = |phase, kind, start: &str, end: &str| EdgeRecord {
            phase,
            kind,
            action: format!("step into {end}"),
            start_state: start.into(),
            end_state: end.into(),
            key: "do()".into(),
        };
        vec![
            mk(Phase::ProblemAnalysis, EdgeKind::Reason, &b.source, &b.phase1_exit),
            mk(Phase::MathematicalModeling, EdgeKind::Work, &b.phase1_exit, &b.phase2_exit),
            mk(Phase::CodeGeneration, EdgeKind::Tool, &b.phase2_exit, &b.sink),
        ]
    }

    #[test]
    fn minimal_chain_round_trips_byte_stably() {
        let b = BoundaryLabels::default();
        let chain = AoeChain::from_records(minimal_records(&b), &b).unwrap();
        let doc = serialize_chain(&chain);
        let reparsed = parse_chain(&doc, &b).unwrap();
        assert_eq!(reparsed, chain);
        assert_eq!(serialize_chain(&reparsed), doc);
        assert!(!doc.ends_with(char::is_whitespace));
    }

    #[test]
    fn canonical_form_fixes_key_order_and_indentation() {
        let b = BoundaryLabels::default();
        let mut records = minimal_records(&b);
        records.truncate(1);
        let chain = AoeChain::new_unchecked(records, "");
        let expected = concat!(
            "[\n",
            "  {\n",
            "    \"phase\": \"Problem Analysis\",\n",
            "    \"type\": \"prompt\",\n",
            "    \"action\": \"step into Problem Analysis Complete\",\n",
            "    \"start_state\": \"Agent Initialization\",\n",
            "    \"end_state\": \"Problem Analysis Complete\",\n",
            "    \"key\": \"do()\"\n",
            "  }\n",
            "]"
        );
        assert_eq!(serialize_chain(&chain), expected);
    }

    #[test]
    fn parse_accepts_any_input_formatting() {
        let b = BoundaryLabels::default();
        let compact = serde_json::to_string(
            &AoeChain::from_records(minimal_records(&b), &b).unwrap().edges,
        )
        .unwrap();
        let chain = parse_chain(&compact, &b).unwrap();
        assert_eq!(chain.len(), 3);
    }

    #[test]
    fn empty_array_is_rejected() {
        let err = parse_records("[]").unwrap_err();
        assert!(err.to_string().contains("cannot be empty"), "{err}");
    }

    #[test]
    fn unknown_type_is_reported_with_record_index() {
        let b = BoundaryLabels::default();
        let mut records = minimal_records(&b);
        let mut doc = serde_json::to_value(&records).unwrap();
        doc[1]["type"] = "shell".into();
        let err = parse_records(&doc.to_string()).unwrap_err();
        match err {
            Error::ChainParse { index: Some(1), ref reason } => {
                assert!(reason.contains("shell"), "{reason}")
            }
            other => panic!("unexpected error {other:?}"),
        }
        records[1].kind = EdgeKind::Work;
    }

    #[test]
    fn missing_field_is_reported_with_record_index() {
        let b = BoundaryLabels::default();
        let records = minimal_records(&b);
        let mut doc = serde_json::to_value(&records).unwrap();
        doc[2].as_object_mut().unwrap().remove("key");
        let err = parse_records(&doc.to_string()).unwrap_err();
        match err {
            Error::ChainParse { index: Some(2), ref reason } => {
                assert!(reason.contains("key"), "{reason}")
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn single_record_spanning_boundaries_fails_phase_coverage() {
        let b = BoundaryLabels::default();
        let doc = serde_json::json!([{
            "phase": "Problem Analysis",
            "type": "prompt",
            "action": "jump to the end",
            "start_state": b.source,
            "end_state": b.sink,
            "key": "p"
        }]);
        let err = parse_chain(&doc.to_string(), &b).unwrap_err();
        match err {
            Error::ChainInvalid { report } => {
                assert!(report
                    .violations
                    .iter()
                    .any(|v| matches!(v, Violation::PhaseMissing { .. })));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn continuity_break_is_attributed_to_the_later_record() {
        let b = BoundaryLabels::default();
        let mk = |phase, start: &str, end: &str| EdgeRecord {
            phase,
            kind: EdgeKind::Work,
            action: "a".into(),
            start_state: start.into(),
            end_state: end.into(),
            key: "k".into(),
        };
        let chain = AoeChain::new_unchecked(
            vec![
                mk(Phase::ProblemAnalysis, &b.source, "s1"),
                mk(Phase::ProblemAnalysis, "s1", "s2"),
                mk(Phase::ProblemAnalysis, "s2", "s3"),
                mk(Phase::ProblemAnalysis, "s3", &b.phase1_exit),
                mk(Phase::MathematicalModeling, "elsewhere", &b.phase2_exit),
                mk(Phase::CodeGeneration, &b.phase2_exit, &b.sink),
            ],
            "",
        );
        let report = validate_chain(&chain, &b);
        let breaks: Vec<_> = report
            .violations
            .iter()
            .filter(|v| matches!(v, Violation::ContinuityBreak { .. }))
            .collect();
        assert_eq!(breaks.len(), 1);
        assert_eq!(breaks[0], &Violation::ContinuityBreak { index: 4 });
    }

    #[test]
    fn phase_regression_is_a_phase_order_break() {
        let b = BoundaryLabels::default();
        let mk = |phase, start: &str, end: &str| EdgeRecord {
            phase,
            kind: EdgeKind::Reason,
            action: "a".into(),
            start_state: start.into(),
            end_state: end.into(),
            key: "k".into(),
        };
        let chain = AoeChain::new_unchecked(
            vec![
                mk(Phase::ProblemAnalysis, &b.source, &b.phase1_exit),
                mk(Phase::CodeGeneration, &b.phase1_exit, "late"),
                mk(Phase::MathematicalModeling, "late", &b.sink),
            ],
            "",
        );
        let report = validate_chain(&chain, &b);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::PhaseOrderBreak { index: 2 })));
    }

    #[test]
    fn label_comparison_collapses_whitespace_but_keeps_case() {
        let b = BoundaryLabels::default();
        let mut records = minimal_records(&b);
        records[1].start_state = "  Problem   Analysis Complete ".into();
        assert!(AoeChain::from_records(records.clone(), &b).is_ok());
        records[1].start_state = "problem analysis complete".into();
        assert!(AoeChain::from_records(records, &b).is_err());
    }

    #[test]
    fn boundary_transition_label_is_checked() {
        let b = BoundaryLabels::default();
        let mk = |phase, start: &str, end: &str| EdgeRecord {
            phase,
            kind: EdgeKind::Work,
            action: "a".into(),
            start_state: start.into(),
            end_state: end.into(),
            key: "k".into(),
        };
        let chain = AoeChain::new_unchecked(
            vec![
                mk(Phase::ProblemAnalysis, &b.source, "halfway"),
                mk(Phase::MathematicalModeling, "halfway", &b.phase2_exit),
                mk(Phase::CodeGeneration, &b.phase2_exit, &b.sink),
            ],
            "",
        );
        let report = validate_chain(&chain, &b);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::BoundaryLabelMismatch { index: 1, .. })));
    }

    #[test]
    fn split_by_phase_concatenates_back() {
        let b = BoundaryLabels::default();
        let chain = AoeChain::from_records(minimal_records(&b), &b).unwrap();
        let [p1, p2, p3] = split_by_phase(&chain);
        let rebuilt: Vec<EdgeRecord> =
            p1.into_iter().chain(p2).chain(p3).collect();
        assert_eq!(rebuilt, chain.edges);
    }

    #[test]
    fn signature_uses_normalized_labels() {
        let b = BoundaryLabels::default();
        let mut records = minimal_records(&b);
        records[0].end_state = "Problem   Analysis  Complete".into();
        records[1].start_state = "Problem Analysis Complete".into();
        let chain = AoeChain::from_records(records, &b).unwrap();
        let sig = path_signature(&chain);
        assert_eq!(sig[0].1, "Problem Analysis Complete");
        assert_eq!(sig[0].1, sig[1].0);
    }

    #[test]
    fn extra_fields_are_rejected() {
        let doc = serde_json::json!([{
            "phase": "Problem Analysis",
            "type": "code",
            "action": "a",
            "start_state": "s",
            "end_state": "e",
            "key": "k",
            "note": "stowaway"
        }]);
        let err = parse_records(&doc.to_string()).unwrap_err();
        assert!(matches!(err, Error::ChainParse { index: Some(0), .. }));
    }
}
