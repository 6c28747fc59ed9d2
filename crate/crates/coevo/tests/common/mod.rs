#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use coevo::chain::BoundaryLabels;
use coevo::engine::{EngineOptions, EvolutionConfig};
use coevo::eval::{Dataset, TaskInstance};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).expect("fixture exists")
}

/// Boundary labels used by the evolved_trajectory fixture, whose two
/// inner phase boundaries share one label.
pub fn case_boundaries() -> BoundaryLabels {
    BoundaryLabels {
        source: "Agent Start".to_owned(),
        phase1_exit: "Txt Ready".to_owned(),
        phase2_exit: "Txt Ready".to_owned(),
        sink: "Bench. Done".to_owned(),
    }
}

/// A dataset shaped like the five-subset benchmark family: 289 + 652 +
/// 211 + 100 + 82 = 1,334 instances, with per-subset weights 2/1/1/3/3.
pub fn replica_dataset() -> (Dataset, BTreeMap<String, f64>) {
    let spec: [(&str, usize, f64); 5] = [
        ("NL4OPT", 289, 2.0),
        ("EasyLP", 652, 1.0),
        ("ComplexLP", 211, 1.0),
        ("IndustryOR", 100, 3.0),
        ("BWOR", 82, 3.0),
    ];
    let mut instances = Vec::new();
    let mut weights = BTreeMap::new();
    for (subset, count, weight) in spec {
        weights.insert(subset.to_owned(), weight);
        for i in 0..count {
            instances.push(TaskInstance {
                id: format!("{subset}-{i:04}"),
                subset: subset.to_owned(),
                question: format!("instance {i} of {subset}"),
                ground_truth: 10.0 + i as f64,
            });
        }
    }
    (Dataset::new(instances).expect("ids are unique"), weights)
}

/// A single-subset dataset whose instance ids spread the hash-derived
/// difficulty thresholds.
pub fn flat_dataset(subset: &str, count: usize) -> Dataset {
    let instances = (0..count)
        .map(|i| TaskInstance {
            id: format!("{subset}-{i:03}"),
            subset: subset.to_owned(),
            question: format!("solve task {i}"),
            ground_truth: match i % 4 {
                0 => i as f64 + 1.5,
                1 => -(i as f64) - 2.0,
                2 => 0.0,
                _ => (i as f64 + 1.0) * 1e3,
            },
        })
        .collect();
    Dataset::new(instances).expect("ids are unique")
}

/// Table-default evolution settings with the given seed.
pub fn default_config(seed: u64) -> EvolutionConfig {
    EvolutionConfig { seed, ..EvolutionConfig::default() }
}

pub fn default_options() -> EngineOptions {
    EngineOptions { task_context: "solve the routed benchmark".to_owned(), ..EngineOptions::default() }
}
