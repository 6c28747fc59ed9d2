//! End-to-end engine behavior through the library API: full runs,
//! checkpoint resume, log stability, parallel evaluation, and graph
//! exports taken from evolved state.

mod common;

use std::collections::BTreeMap;

use coevo::backend::mock::MockBackend;
use coevo::engine::{
    coevolve, initialize_state, resume, EngineState, GenerationReport, NullObserver, RunObserver,
};
use coevo::error::Result;
use coevo::eval::{evaluate_population, make_split, EvalParams, SplitSpec};
use coevo::persist::{
    export_dot, export_json, load_checkpoint, read_runlog, save_checkpoint, Checkpoint, RunLog,
};
use common::{default_config, default_options, flat_dataset};

fn hill_split(dataset: &coevo::eval::Dataset, seed: u64) -> SplitSpec {
    let weights: BTreeMap<String, f64> = [("hill".to_owned(), 1.0)].into();
    make_split(dataset, &weights, 10, seed).unwrap()
}

struct Collector {
    reports: Vec<GenerationReport>,
    states: Vec<EngineState>,
}

impl RunObserver for Collector {
    fn on_report(&mut self, report: &GenerationReport) -> Result<()> {
        self.reports.push(report.clone());
        Ok(())
    }
    fn on_state(&mut self, state: &EngineState) -> Result<()> {
        self.states.push(state.clone());
        Ok(())
    }
}

#[test]
fn full_run_reports_every_generation_and_stays_feasible() {
    let backend = MockBackend::hill();
    let dataset = flat_dataset("hill", 24);
    let split = hill_split(&dataset, 5);
    let mut cfg = default_config(5);
    cfg.iteration_depth = 4;
    let opts = default_options();
    let mut collector = Collector { reports: Vec::new(), states: Vec::new() };

    let state =
        coevolve(&cfg, &opts, &dataset, &split, &[], &backend, &mut collector).unwrap();

    assert_eq!(state.generation, 4);
    assert_eq!(collector.reports.len(), 5, "one report per generation including zero");
    for (i, report) in collector.reports.iter().enumerate() {
        assert_eq!(report.generation, i as u64);
        assert_eq!(report.fitness.len(), 10);
    }
    for observed in &collector.states {
        assert!(observed.graph.feasible(), "graph must stay feasible");
        assert_eq!(observed.graph.iteration(), observed.generation);
        assert_eq!(observed.population.len(), 10);
    }
}

#[test]
fn checkpoint_resume_reproduces_the_uninterrupted_run() {
    let backend = MockBackend::hill();
    let dataset = flat_dataset("hill", 24);
    let split = hill_split(&dataset, 9);
    let opts = default_options();

    let mut straight_cfg = default_config(9);
    straight_cfg.iteration_depth = 4;
    let straight =
        coevolve(&straight_cfg, &opts, &dataset, &split, &[], &backend, &mut NullObserver)
            .unwrap();

    // Stop after two generations, checkpoint to disk, reload, continue.
    let mut half_cfg = straight_cfg.clone();
    half_cfg.iteration_depth = 2;
    let halfway =
        coevolve(&half_cfg, &opts, &dataset, &split, &[], &backend, &mut NullObserver).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    save_checkpoint(&path, &Checkpoint::capture(&halfway, "cfg", straight_cfg.seed)).unwrap();

    let mut resumed = load_checkpoint(&path, Some("cfg")).unwrap().into_state();
    resume(&mut resumed, &straight_cfg, &opts, &dataset, &split, &[], &backend, &mut NullObserver)
        .unwrap();

    assert_eq!(resumed, straight);
}

#[test]
fn run_log_bytes_match_between_straight_and_resumed_runs() {
    let backend = MockBackend::hill();
    let dataset = flat_dataset("hill", 24);
    let split = hill_split(&dataset, 31);
    let opts = default_options();
    let dir = tempfile::tempdir().unwrap();

    struct Logger(RunLog);
    impl RunObserver for Logger {
        fn on_report(&mut self, report: &GenerationReport) -> Result<()> {
            self.0.append(report)
        }
    }

    let mut cfg = default_config(31);
    cfg.iteration_depth = 3;
    let straight_path = dir.path().join("straight.jsonl");
    let mut logger = Logger(RunLog::create(&straight_path, &[]).unwrap());
    coevolve(&cfg, &opts, &dataset, &split, &[], &backend, &mut logger).unwrap();

    let mut half_cfg = cfg.clone();
    half_cfg.iteration_depth = 1;
    let halfway =
        coevolve(&half_cfg, &opts, &dataset, &split, &[], &backend, &mut NullObserver).unwrap();
    let resumed_path = dir.path().join("resumed.jsonl");
    let mut state = halfway;
    let mut logger = Logger(RunLog::create(&resumed_path, &state.reports).unwrap());
    resume(&mut state, &cfg, &opts, &dataset, &split, &[], &backend, &mut logger).unwrap();

    let straight_bytes = std::fs::read(&straight_path).unwrap();
    let resumed_bytes = std::fs::read(&resumed_path).unwrap();
    assert!(!straight_bytes.is_empty());
    assert_eq!(straight_bytes, resumed_bytes);

    let reports = read_runlog(&straight_path).unwrap();
    assert_eq!(reports.len(), 4);
}

#[test]
fn elites_carry_their_fitness_forward() {
    let backend = MockBackend::hill();
    let dataset = flat_dataset("hill", 24);
    let split = hill_split(&dataset, 12);
    let mut cfg = default_config(12);
    cfg.iteration_depth = 3;
    let opts = default_options();
    let mut collector = Collector { reports: Vec::new(), states: Vec::new() };

    coevolve(&cfg, &opts, &dataset, &split, &[], &backend, &mut collector).unwrap();

    for window in collector.states.windows(2) {
        let (prev, next) = (&window[0], &window[1]);
        let elites: Vec<_> = next
            .population
            .iter()
            .filter(|i| i.provenance == coevo::variation::Provenance::Elite)
            .collect();
        assert_eq!(elites.len(), 2);
        for elite in elites {
            assert!(
                prev.fitness.contains_key(&elite.id),
                "elite {} must come from the previous generation",
                elite.id
            );
            assert_eq!(prev.fitness[&elite.id], next.fitness[&elite.id]);
        }
    }
}

#[test]
fn parallel_evaluation_matches_sequential() {
    let backend = MockBackend::hill();
    let dataset = flat_dataset("hill", 24);
    let split = hill_split(&dataset, 3);
    let cfg = default_config(3);
    let opts = default_options();
    let state = initialize_state(&cfg, &opts, &dataset, &split, &[], &backend).unwrap();

    let base = EvalParams { delta: cfg.delta, epsilon_y: cfg.epsilon_y, limits: opts.limits, parallelism: 1 };
    let wide = EvalParams { parallelism: 4, ..base };
    let sequential =
        evaluate_population(&state.population, &split, &dataset, &backend, &base).unwrap();
    let parallel =
        evaluate_population(&state.population, &split, &dataset, &backend, &wide).unwrap();
    assert_eq!(sequential, parallel);
}

#[test]
fn exports_cover_the_evolved_graph() {
    let backend = MockBackend::hill();
    let dataset = flat_dataset("hill", 24);
    let split = hill_split(&dataset, 7);
    let mut cfg = default_config(7);
    cfg.iteration_depth = 2;
    let opts = default_options();
    let state =
        coevolve(&cfg, &opts, &dataset, &split, &[], &backend, &mut NullObserver).unwrap();

    let dot = export_dot(&state.graph);
    for cluster in ["cluster_phase1", "cluster_phase2", "cluster_phase3"] {
        assert!(dot.contains(cluster), "missing {cluster}");
    }
    for node in state.graph.nodes() {
        assert!(dot.contains(&format!("\"{}\"", node.id)), "node {} missing", node.id);
    }
    assert_eq!(
        dot.matches(" -> ").count(),
        state.graph.edge_count(),
        "every edge appears exactly once"
    );

    let value: serde_json::Value = serde_json::from_str(&export_json(&state.graph)).unwrap();
    assert_eq!(value["nodes"].as_array().unwrap().len(), state.graph.node_count());
    assert_eq!(value["edges"].as_array().unwrap().len(), state.graph.edge_count());
}
