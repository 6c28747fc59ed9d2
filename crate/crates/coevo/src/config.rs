//! Run configuration: one flat TOML document covering the engine knobs,
//! dataset and knowledge-base locations, boundary labels, and the
//! backend-specific sections.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::backend::mock::{DifficultySpec, MockBackend, MockDomain, MockOracle};
use crate::backend::remote::{RemoteBackend, RemoteSettings};
use crate::backend::{ExecLimits, GenerationBackend};
use crate::chain::BoundaryLabels;
use crate::digest::digest_hex;
use crate::engine::{EngineOptions, EvolutionConfig};
use crate::error::{Error, Result};
use crate::eval::Dataset;

/// Settings of the deterministic backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSection {
    /// "standard" or "hill" (single-optimum utility landscape).
    pub profile: String,
    pub variants_per_phase: Vec<usize>,
    pub default_utility: Option<f64>,
    pub fixed_difficulty: Option<f64>,
    pub difficulty_min: Option<f64>,
    pub difficulty_max: Option<f64>,
    pub perturbation: Option<f64>,
    /// Per-transition utility overrides, keyed `"start|end|kind"`.
    pub utilities: BTreeMap<String, f64>,
    pub fail_instances: Vec<String>,
    pub no_numeric_instances: Vec<String>,
}

impl Default for MockSection {
    fn default() -> MockSection {
        MockSection {
            profile: "standard".to_owned(),
            variants_per_phase: vec![2, 3, 2],
            default_utility: None,
            fixed_difficulty: None,
            difficulty_min: None,
            difficulty_max: None,
            perturbation: None,
            utilities: BTreeMap::new(),
            fail_instances: Vec::new(),
            no_numeric_instances: Vec::new(),
        }
    }
}

impl MockSection {
    pub fn build(&self, boundaries: BoundaryLabels) -> Result<MockBackend> {
        if self.variants_per_phase.len() != 3 {
            return Err(Error::Config(format!(
                "variants_per_phase needs exactly 3 entries, got {}",
                self.variants_per_phase.len()
            )));
        }
        if self.variants_per_phase.iter().any(|v| *v == 0) {
            return Err(Error::Config("every phase needs at least one variant".into()));
        }
        let variants = [
            self.variants_per_phase[0],
            self.variants_per_phase[1],
            self.variants_per_phase[2],
        ];
        let domain = MockDomain::new(boundaries, variants);
        let mut oracle = match self.profile.as_str() {
            "standard" => MockOracle::default(),
            "hill" => MockOracle::hill(&domain),
            other => {
                return Err(Error::Config(format!(
                    "unknown mock profile {other:?} (expected \"standard\" or \"hill\")"
                )))
            }
        };
        if let Some(utility) = self.default_utility {
            oracle.default_utility = utility;
        }
        match (self.fixed_difficulty, self.difficulty_min, self.difficulty_max) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(Error::Config(
                    "fixed_difficulty conflicts with difficulty_min/difficulty_max".into(),
                ))
            }
            (Some(t), None, None) => oracle.difficulty = DifficultySpec::Fixed(t),
            (None, Some(min), Some(max)) => {
                oracle.difficulty = DifficultySpec::PerInstance { min, max }
            }
            (None, None, None) => {}
            _ => {
                return Err(Error::Config(
                    "difficulty_min and difficulty_max must be set together".into(),
                ))
            }
        }
        if let Some(perturbation) = self.perturbation {
            oracle.perturbation = perturbation;
        }
        oracle.utilities.extend(self.utilities.clone());
        oracle.fail_instances.extend(self.fail_instances.iter().cloned());
        oracle.no_numeric_instances.extend(self.no_numeric_instances.iter().cloned());
        Ok(MockBackend::new(domain, oracle))
    }
}

/// Settings of the live and replay backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSection {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
    /// Record live exchanges here (JSONL), for later replay.
    pub record_path: Option<PathBuf>,
    /// Recorded exchange file the replay backend reads.
    pub replay_path: Option<PathBuf>,
    pub executor_cmd: Vec<String>,
    pub tool_doc: String,
}

impl Default for RemoteSection {
    fn default() -> RemoteSection {
        let d = RemoteSettings::default();
        RemoteSection {
            endpoint: d.endpoint,
            model: d.model,
            api_key_env: d.api_key_env,
            temperature: d.temperature,
            max_tokens: d.max_tokens,
            max_retries: d.max_retries,
            backoff_ms: d.backoff_ms,
            timeout_ms: d.timeout_ms,
            record_path: None,
            replay_path: None,
            executor_cmd: Vec::new(),
            tool_doc: String::new(),
        }
    }
}

impl RemoteSection {
    fn settings(&self) -> RemoteSettings {
        RemoteSettings {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            max_retries: self.max_retries,
            backoff_ms: self.backoff_ms,
            timeout_ms: self.timeout_ms,
            record_path: self.record_path.clone(),
            executor_cmd: self.executor_cmd.clone(),
            tool_doc: self.tool_doc.clone(),
        }
    }
}

/// The full run configuration. Every field has a default, so an empty
/// document is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub population_size: usize,
    pub iteration_depth: usize,
    pub init_ratio: f64,
    pub mutation_ratio: f64,
    pub guidance_rate: f64,
    pub scope_rate: f64,
    pub architecture_rate: f64,
    pub exploration_parameter: f64,
    pub pruning_threshold: f64,
    pub elite_rate: f64,
    pub sigma: u32,
    pub epsilon: f64,
    pub epsilon_y: f64,
    pub delta: f64,
    pub seed: u64,

    /// "mock", "remote" or "replay".
    pub backend: String,
    pub dataset_path: Option<PathBuf>,
    pub kb_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub train_target: usize,
    pub parallelism: usize,
    pub force_reevaluate: bool,
    pub task_context: String,
    pub kb_top_k: usize,
    pub resample_budget: usize,
    pub restart_budget: usize,
    pub max_len_factor: usize,
    pub limit_wall_clock_ms: u64,
    pub limit_output_bytes: usize,

    pub source_label: String,
    pub phase1_exit_label: String,
    pub phase2_exit_label: String,
    pub sink_label: String,

    /// Subset name -> weight. Empty means every subset weighs 1.
    pub subset_weights: BTreeMap<String, f64>,

    pub mock: MockSection,
    pub remote: RemoteSection,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        let engine = EvolutionConfig::default();
        let boundaries = BoundaryLabels::default();
        let limits = ExecLimits::default();
        RunConfig {
            population_size: engine.population_size,
            iteration_depth: engine.iteration_depth,
            init_ratio: engine.init_ratio,
            mutation_ratio: engine.mutation_ratio,
            guidance_rate: engine.guidance_rate,
            scope_rate: engine.scope_rate,
            architecture_rate: engine.architecture_rate,
            exploration_parameter: engine.exploration_parameter,
            pruning_threshold: engine.pruning_threshold,
            elite_rate: engine.elite_rate,
            sigma: engine.sigma,
            epsilon: engine.epsilon,
            epsilon_y: engine.epsilon_y,
            delta: engine.delta,
            seed: engine.seed,
            backend: "mock".to_owned(),
            dataset_path: None,
            kb_path: None,
            output_dir: PathBuf::from("coevo-out"),
            train_target: 120,
            parallelism: 1,
            force_reevaluate: false,
            task_context: String::new(),
            kb_top_k: 3,
            resample_budget: 50,
            restart_budget: 20,
            max_len_factor: 4,
            limit_wall_clock_ms: limits.wall_clock_ms,
            limit_output_bytes: limits.max_output_bytes,
            source_label: boundaries.source,
            phase1_exit_label: boundaries.phase1_exit,
            phase2_exit_label: boundaries.phase2_exit,
            sink_label: boundaries.sink,
            subset_weights: BTreeMap::new(),
            mock: MockSection::default(),
            remote: RemoteSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn boundaries(&self) -> BoundaryLabels {
        BoundaryLabels {
            source: self.source_label.clone(),
            phase1_exit: self.phase1_exit_label.clone(),
            phase2_exit: self.phase2_exit_label.clone(),
            sink: self.sink_label.clone(),
        }
    }

    pub fn evolution_config(&self) -> EvolutionConfig {
        EvolutionConfig {
            population_size: self.population_size,
            iteration_depth: self.iteration_depth,
            init_ratio: self.init_ratio,
            mutation_ratio: self.mutation_ratio,
            guidance_rate: self.guidance_rate,
            scope_rate: self.scope_rate,
            architecture_rate: self.architecture_rate,
            exploration_parameter: self.exploration_parameter,
            pruning_threshold: self.pruning_threshold,
            elite_rate: self.elite_rate,
            sigma: self.sigma,
            epsilon: self.epsilon,
            epsilon_y: self.epsilon_y,
            delta: self.delta,
            seed: self.seed,
        }
    }

    pub fn engine_options(&self) -> EngineOptions {
        EngineOptions {
            task_context: self.task_context.clone(),
            kb_top_k: self.kb_top_k,
            resample_budget: self.resample_budget,
            restart_budget: self.restart_budget,
            max_len_factor: self.max_len_factor,
            limits: ExecLimits {
                wall_clock_ms: self.limit_wall_clock_ms,
                max_output_bytes: self.limit_output_bytes,
            },
            parallelism: self.parallelism.max(1),
            force_reevaluate: self.force_reevaluate,
            boundaries: self.boundaries(),
        }
    }

    /// Subset weights to evaluate under: the configured table, or weight
    /// 1 for every subset in the dataset when the table is empty.
    pub fn effective_subset_weights(&self, dataset: &Dataset) -> BTreeMap<String, f64> {
        if self.subset_weights.is_empty() {
            dataset.subset_sizes().into_keys().map(|subset| (subset, 1.0)).collect()
        } else {
            self.subset_weights.clone()
        }
    }

    /// Digest of the effective configuration, stamped into checkpoints so
    /// resuming under a different config fails loudly. The output
    /// directory does not shape run behavior, so it is excluded: a run
    /// may be resumed into a different directory.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        digest_hex(&serde_json::to_string(&canonical).expect("config serializes"))
    }

    pub fn build_backend(&self) -> Result<Box<dyn GenerationBackend>> {
        match self.backend.as_str() {
            "mock" => Ok(Box::new(self.mock.build(self.boundaries())?)),
            "remote" => {
                Ok(Box::new(RemoteBackend::over_http(self.remote.settings(), self.boundaries())?))
            }
            "replay" => {
                let path = self.remote.replay_path.as_ref().ok_or_else(|| {
                    Error::Config("replay backend needs remote.replay_path".into())
                })?;
                Ok(Box::new(RemoteBackend::over_replay(
                    path,
                    self.remote.settings(),
                    self.boundaries(),
                )?))
            }
            other => Err(Error::Config(format!(
                "unknown backend {other:?} (expected \"mock\", \"remote\" or \"replay\")"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::TaskInstance;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = RunConfig::default();
        let text = config.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn an_empty_document_is_the_default_config() {
        let config = RunConfig::from_toml("").unwrap();
        assert_eq!(config, RunConfig::default());
        assert_eq!(config.population_size, 10);
        assert_eq!(config.iteration_depth, 8);
        assert_eq!(config.elite_rate, 0.2);
        assert_eq!(config.train_target, 120);
    }

    #[test]
    fn partial_documents_keep_defaults_elsewhere() {
        let config = RunConfig::from_toml(
            "population_size = 4\nseed = 9\n\n[mock]\nprofile = \"hill\"\n",
        )
        .unwrap();
        assert_eq!(config.population_size, 4);
        assert_eq!(config.seed, 9);
        assert_eq!(config.mock.profile, "hill");
        assert_eq!(config.mutation_ratio, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("polulation_size = 4").is_err());
        assert!(RunConfig::from_toml("[mock]\nprofle = \"hill\"").is_err());
    }

    #[test]
    fn boundary_labels_flow_into_the_engine_options() {
        let config = RunConfig::from_toml(
            "source_label = \"Agent Start\"\nsink_label = \"Bench. Done\"\n",
        )
        .unwrap();
        let opts = config.engine_options();
        assert_eq!(opts.boundaries.source, "Agent Start");
        assert_eq!(opts.boundaries.sink, "Bench. Done");
        assert_eq!(opts.boundaries.phase1_exit, "Problem Analysis Complete");
    }

    #[test]
    fn empty_weight_table_means_uniform() {
        let dataset = Dataset::new(vec![
            TaskInstance { id: "a".into(), subset: "x".into(), question: "q".into(), ground_truth: 1.0 },
            TaskInstance { id: "b".into(), subset: "y".into(), question: "q".into(), ground_truth: 1.0 },
        ])
        .unwrap();
        let config = RunConfig::default();
        let weights = config.effective_subset_weights(&dataset);
        assert_eq!(weights.len(), 2);
        assert_eq!(weights["x"], 1.0);
        assert_eq!(weights["y"], 1.0);

        let explicit = RunConfig::from_toml("[subset_weights]\nx = 3.0\n").unwrap();
        let weights = explicit.effective_subset_weights(&dataset);
        assert_eq!(weights.len(), 1);
        assert_eq!(weights["x"], 3.0);
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn mock_section_builds_both_profiles() {
        let config = RunConfig::default();
        let standard = config.mock.build(config.boundaries()).unwrap();
        assert!(standard.oracle.utilities.is_empty());

        let hill = RunConfig::from_toml("[mock]\nprofile = \"hill\"\n").unwrap();
        let backend = hill.mock.build(hill.boundaries()).unwrap();
        assert!(!backend.oracle.utilities.is_empty());

        let bad = RunConfig::from_toml("[mock]\nprofile = \"mountain\"\n").unwrap();
        assert!(bad.mock.build(bad.boundaries()).is_err());
        let short = RunConfig::from_toml("[mock]\nvariants_per_phase = [1, 2]\n").unwrap();
        assert!(short.mock.build(short.boundaries()).is_err());
    }

    #[test]
    fn mock_overrides_apply() {
        let config = RunConfig::from_toml(
            "[mock]\nprofile = \"standard\"\ndefault_utility = 0.4\nfixed_difficulty = 2.0\n\
             perturbation = 0.01\nfail_instances = [\"x\"]\n",
        )
        .unwrap();
        let backend = config.mock.build(config.boundaries()).unwrap();
        assert_eq!(backend.oracle.default_utility, 0.4);
        assert_eq!(backend.oracle.difficulty, DifficultySpec::Fixed(2.0));
        assert_eq!(backend.oracle.perturbation, 0.01);
        assert!(backend.oracle.fail_instances.contains("x"));

        let conflicted = RunConfig::from_toml(
            "[mock]\nfixed_difficulty = 2.0\ndifficulty_min = 0.5\n",
        )
        .unwrap();
        assert!(conflicted.mock.build(conflicted.boundaries()).is_err());
    }

    #[test]
    fn backend_selector_understands_the_three_modes() {
        let mock = RunConfig::default();
        assert!(mock.build_backend().is_ok());

        let replay_missing = RunConfig::from_toml("backend = \"replay\"\n").unwrap();
        assert!(replay_missing.build_backend().is_err());

        let unknown = RunConfig::from_toml("backend = \"quantum\"\n").unwrap();
        assert!(unknown.build_backend().is_err());
    }
}
