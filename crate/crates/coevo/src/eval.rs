//! Fitness evaluation: per-instance correctness, subset-weighted
//! accuracy, and the train/test split protocol.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::backend::{ExecLimits, GenerationBackend};
use crate::error::{Error, Result};
use crate::rng::{role, stream};
use crate::variation::Individual;

/// One benchmark problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub subset: String,
    pub question: String,
    pub ground_truth: f64,
}

/// Terminal status of one execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecStatus {
    #[serde(rename = "solved")]
    Solved,
    #[serde(rename = "run-failed")]
    RunFailed,
    #[serde(rename = "no-numeric")]
    NoNumeric,
}

/// Result of executing one individual on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub instance_id: String,
    pub status: ExecStatus,
    /// Predicted objective; present exactly when the run solved.
    pub predicted: Option<f64>,
}

impl EvalOutcome {
    pub fn solved(instance_id: impl Into<String>, predicted: f64) -> EvalOutcome {
        EvalOutcome { instance_id: instance_id.into(), status: ExecStatus::Solved, predicted: Some(predicted) }
    }

    pub fn failed(instance_id: impl Into<String>, status: ExecStatus) -> EvalOutcome {
        debug_assert!(status != ExecStatus::Solved);
        EvalOutcome { instance_id: instance_id.into(), status, predicted: None }
    }
}

/// An in-memory dataset with unique instance ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub instances: Vec<TaskInstance>,
}

impl Dataset {
    pub fn new(instances: Vec<TaskInstance>) -> Result<Dataset> {
        let mut seen = BTreeSet::new();
        for instance in &instances {
            if !seen.insert(&instance.id) {
                return Err(Error::Config(format!("duplicate instance id {:?}", instance.id)));
            }
        }
        Ok(Dataset { instances })
    }

    /// Parses one JSON record per line; blank lines are ignored.
    pub fn from_jsonl(text: &str) -> Result<Dataset> {
        let mut instances = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let instance: TaskInstance = serde_json::from_str(line).map_err(|e| {
                Error::Config(format!("dataset line {}: {e}", lineno + 1))
            })?;
            instances.push(instance);
        }
        Dataset::new(instances)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for instance in &self.instances {
            out.push_str(&serde_json::to_string(instance).expect("instances serialize"));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&TaskInstance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Number of instances per subset over the whole dataset.
    pub fn subset_sizes(&self) -> BTreeMap<String, usize> {
        let mut sizes = BTreeMap::new();
        for instance in &self.instances {
            *sizes.entry(instance.subset.clone()).or_insert(0) += 1;
        }
        sizes
    }
}

/// A frozen train/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub subset_weights: BTreeMap<String, f64>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
}

impl SplitSpec {
    /// Fraction of the dataset's total instance weight that landed in the
    /// train partition.
    pub fn train_weight_mass(&self, dataset: &Dataset) -> Result<f64> {
        let weights = instance_weights(dataset, &self.subset_weights)?;
        let total: f64 = weights.values().sum();
        if total <= 0.0 {
            return Err(Error::ZeroWeightMass);
        }
        let mut train = 0.0;
        for id in &self.train_ids {
            train += weights.get(id).ok_or_else(|| Error::UnknownInstance(id.clone()))?;
        }
        Ok(train / total)
    }
}

/// Relative-error correctness: |predicted - truth| / max(|truth|, eps) is
/// within `delta`. NaN or infinite predictions are simply incorrect.
pub fn relative_correct(predicted: f64, truth: f64, delta: f64, epsilon_y: f64) -> bool {
    let denom = truth.abs().max(epsilon_y);
    let rel = (predicted - truth).abs() / denom;
    rel <= delta
}

/// Weight of one instance: subset weight divided by the subset's size in
/// the full dataset.
pub fn instance_weight(
    instance: &TaskInstance,
    subset_weights: &BTreeMap<String, f64>,
    dataset: &Dataset,
) -> Result<f64> {
    let weight = subset_weights.get(&instance.subset).ok_or_else(|| {
        Error::UnknownSubset(instance.id.clone(), instance.subset.clone())
    })?;
    if !(*weight > 0.0) {
        return Err(Error::Config(format!(
            "subset {:?} has non-positive weight {weight}",
            instance.subset
        )));
    }
    let size = dataset
        .instances
        .iter()
        .filter(|i| i.subset == instance.subset)
        .count();
    if size == 0 {
        return Err(Error::UnknownSubset(instance.id.clone(), instance.subset.clone()));
    }
    Ok(weight / size as f64)
}

/// Weight of every instance in the dataset, keyed by id.
pub fn instance_weights(
    dataset: &Dataset,
    subset_weights: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>> {
    let sizes = dataset.subset_sizes();
    let mut out = BTreeMap::new();
    for instance in &dataset.instances {
        let weight = subset_weights.get(&instance.subset).ok_or_else(|| {
            Error::UnknownSubset(instance.id.clone(), instance.subset.clone())
        })?;
        if !(*weight > 0.0) {
            return Err(Error::Config(format!(
                "subset {:?} has non-positive weight {weight}",
                instance.subset
            )));
        }
        out.insert(instance.id.clone(), weight / sizes[&instance.subset] as f64);
    }
    Ok(out)
}

/// Plain fraction of correct outcomes. Failed and non-numeric runs count
/// as incorrect.
pub fn accuracy(
    outcomes: &[EvalOutcome],
    dataset: &Dataset,
    delta: f64,
    epsilon_y: f64,
) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    let mut correct = 0usize;
    for outcome in outcomes {
        let instance = dataset
            .get(&outcome.instance_id)
            .ok_or_else(|| Error::UnknownInstance(outcome.instance_id.clone()))?;
        if outcome_correct(outcome, instance, delta, epsilon_y) {
            correct += 1;
        }
    }
    Ok(correct as f64 / outcomes.len() as f64)
}

fn outcome_correct(
    outcome: &EvalOutcome,
    instance: &TaskInstance,
    delta: f64,
    epsilon_y: f64,
) -> bool {
    match (outcome.status, outcome.predicted) {
        (ExecStatus::Solved, Some(predicted)) => {
            relative_correct(predicted, instance.ground_truth, delta, epsilon_y)
        }
        _ => false,
    }
}

/// Weight-normalized accuracy over the given outcomes. `weights` must
/// cover every outcome's instance id.
pub fn weighted_accuracy(
    outcomes: &[EvalOutcome],
    dataset: &Dataset,
    weights: &BTreeMap<String, f64>,
    delta: f64,
    epsilon_y: f64,
) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    let mut mass = 0.0;
    let mut gained = 0.0;
    for outcome in outcomes {
        let instance = dataset
            .get(&outcome.instance_id)
            .ok_or_else(|| Error::UnknownInstance(outcome.instance_id.clone()))?;
        let weight = *weights
            .get(&outcome.instance_id)
            .ok_or_else(|| Error::UnweightedOutcome(outcome.instance_id.clone()))?;
        mass += weight;
        if outcome_correct(outcome, instance, delta, epsilon_y) {
            gained += weight;
        }
    }
    if mass <= 0.0 {
        return Err(Error::ZeroWeightMass);
    }
    Ok(gained / mass)
}

/// Draws `target` train instances by sequential weighted sampling without
/// replacement (draw probability proportional to remaining instance
/// weight), deterministically for a given seed. The rest is the test
/// partition, in id order.
pub fn make_split(
    dataset: &Dataset,
    subset_weights: &BTreeMap<String, f64>,
    target: usize,
    seed: u64,
) -> Result<SplitSpec> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if target > dataset.len() {
        return Err(Error::TargetTooLarge { target, available: dataset.len() });
    }
    let weights = instance_weights(dataset, subset_weights)?;

    let mut remaining: Vec<(&str, f64)> = dataset
        .instances
        .iter()
        .map(|i| (i.id.as_str(), weights[&i.id]))
        .collect();
    remaining.sort_by(|a, b| a.0.cmp(b.0));

    let mut rng = stream(seed, &[role::SPLIT]);
    let mut train_ids = Vec::with_capacity(target);
    for _ in 0..target {
        let total: f64 = remaining.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Err(Error::ZeroWeightMass);
        }
        let mut draw = rng.gen::<f64>() * total;
        let mut picked = remaining.len() - 1;
        for (idx, (_, w)) in remaining.iter().enumerate() {
            if draw < *w {
                picked = idx;
                break;
            }
            draw -= w;
        }
        let (id, _) = remaining.remove(picked);
        train_ids.push(id.to_owned());
    }
    let test_ids: Vec<String> = remaining.iter().map(|(id, _)| (*id).to_owned()).collect();

    Ok(SplitSpec { subset_weights: subset_weights.clone(), train_ids, test_ids, seed })
}

/// Evaluation knobs shared across the population sweep.
#[derive(Debug, Clone)]
pub struct EvalParams {
    pub delta: f64,
    pub epsilon_y: f64,
    pub limits: ExecLimits,
    /// Worker pool width; 1 evaluates sequentially.
    pub parallelism: usize,
}

pub type FitnessMap = BTreeMap<String, f64>;

/// Runs every individual against every train instance and scores each
/// with subset-weighted accuracy. Backend execution errors degrade to
/// run-failed outcomes rather than aborting the sweep.
pub fn evaluate_population(
    population: &[Individual],
    split: &SplitSpec,
    dataset: &Dataset,
    backend: &dyn GenerationBackend,
    params: &EvalParams,
) -> Result<FitnessMap> {
    let weights = instance_weights(dataset, &split.subset_weights)?;
    let train: Vec<&TaskInstance> = split
        .train_ids
        .iter()
        .map(|id| dataset.get(id).ok_or_else(|| Error::UnknownInstance(id.clone())))
        .collect::<Result<_>>()?;

    let score_one = |individual: &Individual| -> Result<(String, f64)> {
        let outcomes: Vec<EvalOutcome> = train
            .iter()
            .map(|instance| match backend.execute(&individual.artifact, instance, &params.limits) {
                Ok(trace) => match trace.status {
                    ExecStatus::Solved => {
                        EvalOutcome::solved(&instance.id, trace.objective.unwrap_or(f64::NAN))
                    }
                    status => EvalOutcome::failed(&instance.id, status),
                },
                Err(_) => EvalOutcome::failed(&instance.id, ExecStatus::RunFailed),
            })
            .collect();
        let wa = weighted_accuracy(&outcomes, dataset, &weights, params.delta, params.epsilon_y)?;
        Ok((individual.id.clone(), wa))
    };

    let scored: Vec<(String, f64)> = if params.parallelism > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(params.parallelism)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| population.par_iter().map(score_one).collect::<Result<_>>())?
    } else {
        population.iter().map(score_one).collect::<Result<_>>()?
    };

    Ok(scored.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance(id: &str, subset: &str, truth: f64) -> TaskInstance {
        TaskInstance { id: id.into(), subset: subset.into(), question: format!("q-{id}"), ground_truth: truth }
    }

    fn weights(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect()
    }

    #[test]
    fn relative_correctness_examples() {
        let (delta, eps) = (1e-3, 1e-9);
        assert!(!relative_correct(1.002, 1.0, delta, eps));
        assert!(relative_correct(100.05, 100.0, delta, eps));
        assert!(relative_correct(0.0, 0.0, delta, eps));
        assert!(!relative_correct(-5.0, 5.0, delta, eps));
        assert!(!relative_correct(f64::NAN, 5.0, delta, eps));
        assert!(!relative_correct(f64::INFINITY, 5.0, delta, eps));
        // Boundary is inclusive.
        assert!(relative_correct(1.001, 1.0, delta, eps));
    }

    #[test]
    fn zero_truth_uses_the_epsilon_floor() {
        let (delta, eps) = (1e-3, 1e-9);
        assert!(!relative_correct(1e-6, 0.0, delta, eps));
        assert!(relative_correct(1e-12 * 0.5, 0.0, delta, eps));
    }

    #[test]
    fn instance_weight_uses_full_subset_sizes() {
        let mut instances = Vec::new();
        for i in 0..82 {
            instances.push(instance(&format!("b{i}"), "BWOR", 1.0));
        }
        for i in 0..289 {
            instances.push(instance(&format!("n{i}"), "NL4OPT", 1.0));
        }
        let dataset = Dataset::new(instances).unwrap();
        let sw = weights(&[("BWOR", 3.0), ("NL4OPT", 2.0)]);
        let b = instance_weight(dataset.get("b0").unwrap(), &sw, &dataset).unwrap();
        let n = instance_weight(dataset.get("n0").unwrap(), &sw, &dataset).unwrap();
        assert!((b - 3.0 / 82.0).abs() < 1e-12);
        assert!((n - 2.0 / 289.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_subset_weight_is_an_error() {
        let dataset = Dataset::new(vec![instance("a", "stray", 1.0)]).unwrap();
        let sw = weights(&[("other", 1.0)]);
        assert!(matches!(
            instance_weight(&dataset.instances[0], &sw, &dataset),
            Err(Error::UnknownSubset(_, _))
        ));
    }

    #[test]
    fn accuracy_counts_failures_as_incorrect() {
        let dataset = Dataset::new(vec![instance("a", "s", 2.0), instance("b", "s", 3.0)]).unwrap();
        let outcomes = vec![
            EvalOutcome::solved("a", 2.0),
            EvalOutcome::failed("b", ExecStatus::RunFailed),
        ];
        let acc = accuracy(&outcomes, &dataset, 1e-3, 1e-9).unwrap();
        assert!((acc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn accuracy_over_nothing_is_an_error() {
        let dataset = Dataset::new(vec![]).unwrap();
        assert!(matches!(accuracy(&[], &dataset, 1e-3, 1e-9), Err(Error::EmptyOutcomes)));
    }

    #[test]
    fn weighted_accuracy_weights_by_instance_mass() {
        let dataset = Dataset::new(vec![
            instance("a", "heavy", 1.0),
            instance("b", "light", 1.0),
        ])
        .unwrap();
        let sw = weights(&[("heavy", 3.0), ("light", 1.0)]);
        let w = instance_weights(&dataset, &sw).unwrap();
        let outcomes = vec![
            EvalOutcome::solved("a", 1.0),
            EvalOutcome::failed("b", ExecStatus::NoNumeric),
        ];
        let wa = weighted_accuracy(&outcomes, &dataset, &w, 1e-3, 1e-9).unwrap();
        assert!((wa - 0.75).abs() < 1e-12);
    }

    #[test]
    fn equal_weights_degenerate_to_plain_accuracy() {
        let dataset = Dataset::new(vec![
            instance("a", "s", 1.0),
            instance("b", "s", 2.0),
            instance("c", "s", 3.0),
        ])
        .unwrap();
        let sw = weights(&[("s", 1.0)]);
        let w = instance_weights(&dataset, &sw).unwrap();
        let outcomes = vec![
            EvalOutcome::solved("a", 1.0),
            EvalOutcome::solved("b", 9.0),
            EvalOutcome::solved("c", 3.0),
        ];
        let wa = weighted_accuracy(&outcomes, &dataset, &w, 1e-3, 1e-9).unwrap();
        let acc = accuracy(&outcomes, &dataset, 1e-3, 1e-9).unwrap();
        assert!((wa - acc).abs() < 1e-12);
    }

    #[test]
    fn missing_weight_for_an_outcome_is_an_error() {
        let dataset = Dataset::new(vec![instance("a", "s", 1.0)]).unwrap();
        let outcomes = vec![EvalOutcome::solved("a", 1.0)];
        let err = weighted_accuracy(&outcomes, &dataset, &BTreeMap::new(), 1e-3, 1e-9).unwrap_err();
        assert!(matches!(err, Error::UnweightedOutcome(_)));
    }

    fn replica_dataset() -> (Dataset, BTreeMap<String, f64>) {
        let sizes = [("NL4OPT", 289, 2.0), ("EasyLP", 652, 1.0), ("ComplexLP", 211, 1.0), ("IndustryOR", 100, 3.0), ("BWOR", 82, 3.0)];
        let mut instances = Vec::new();
        let mut sw = BTreeMap::new();
        for (subset, count, weight) in sizes {
            sw.insert(subset.to_owned(), weight);
            for i in 0..count {
                instances.push(instance(&format!("{subset}-{i:04}"), subset, 1.0));
            }
        }
        (Dataset::new(instances).unwrap(), sw)
    }

    #[test]
    fn split_is_deterministic_and_partitions_the_dataset() {
        let (dataset, sw) = replica_dataset();
        assert_eq!(dataset.len(), 1334);
        let s1 = make_split(&dataset, &sw, 120, 7).unwrap();
        let s2 = make_split(&dataset, &sw, 120, 7).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.train_ids.len(), 120);
        assert_eq!(s1.train_ids.len() + s1.test_ids.len(), 1334);
        let mut all: Vec<&String> = s1.train_ids.iter().chain(&s1.test_ids).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 1334);
        let s3 = make_split(&dataset, &sw, 120, 8).unwrap();
        assert_ne!(s1.train_ids, s3.train_ids);
    }

    #[test]
    fn split_reports_its_weighted_mass() {
        let (dataset, sw) = replica_dataset();
        let split = make_split(&dataset, &sw, 120, 7).unwrap();
        let mass = split.train_weight_mass(&dataset).unwrap();
        assert!(mass > 0.0 && mass < 1.0);
        // 120 of 1334 instances, biased toward heavy subsets, so the
        // weighted mass exceeds the unweighted fraction.
        assert!(mass > 120.0 / 1334.0);
    }

    #[test]
    fn oversized_target_is_rejected() {
        let (dataset, sw) = replica_dataset();
        assert!(matches!(
            make_split(&dataset, &sw, 1335, 7),
            Err(Error::TargetTooLarge { .. })
        ));
    }

    #[test]
    fn split_of_everything_leaves_an_empty_test_side() {
        let dataset = Dataset::new(vec![instance("a", "s", 1.0), instance("b", "s", 1.0)]).unwrap();
        let sw = weights(&[("s", 1.0)]);
        let split = make_split(&dataset, &sw, 2, 1).unwrap();
        assert!(split.test_ids.is_empty());
        assert_eq!(split.train_ids.len(), 2);
    }

    #[test]
    fn dataset_rejects_duplicate_ids() {
        let result = Dataset::new(vec![instance("a", "s", 1.0), instance("a", "s", 2.0)]);
        assert!(result.is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let dataset = Dataset::new(vec![instance("a", "s", 1.5), instance("b", "t", -2.0)]).unwrap();
        let text = dataset.to_jsonl();
        let back = Dataset::from_jsonl(&text).unwrap();
        assert_eq!(back, dataset);
    }
}
