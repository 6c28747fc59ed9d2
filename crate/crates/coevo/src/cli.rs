//! Command-line interface: argument definitions and command handlers.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::backend::{ExecLimits, GenerationBackend};
use crate::chain::{parse_records, validate_chain, AoeChain, BoundaryLabels};
use crate::config::RunConfig;
use crate::engine::{self, EngineState, GenerationReport, RunObserver};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy, instance_weights, make_split, weighted_accuracy, Dataset, EvalOutcome, ExecStatus,
    SplitSpec,
};
use crate::persist::{
    export_dot, export_json, load_checkpoint, save_checkpoint, Checkpoint, RunLog,
};
use crate::variation::{load_knowledge, Individual, KnowledgeExcerpt};

#[derive(Debug, Parser)]
#[command(name = "coevo", version, about = "Evolves agent workflows over a shared state graph")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an evolution described by a TOML config file.
    Evolve {
        /// Path to the run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured backend ("mock", "remote", "replay").
        #[arg(long)]
        backend: Option<String>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a saved individual on the held-out side of a split.
    Eval {
        /// Path to the run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Individual JSON, e.g. final_individual.json from evolve.
        #[arg(long)]
        individual: PathBuf,
        /// Dataset JSONL; defaults to the configured dataset_path.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Split JSON, e.g. split.json from evolve.
        #[arg(long)]
        split: PathBuf,
    },
    /// Render the graph stored in a checkpoint.
    ExportGraph {
        /// Checkpoint JSON to read the graph from.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        format: GraphFormat,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a chain file; exits 0 when valid, 1 when violations exist.
    ValidateChain {
        /// JSON file holding the edge array.
        file: PathBuf,
        /// Expected first start state.
        #[arg(long)]
        source: Option<String>,
        /// Expected end state of the first phase.
        #[arg(long)]
        phase1_exit: Option<String>,
        /// Expected end state of the second phase.
        #[arg(long)]
        phase2_exit: Option<String>,
        /// Expected final end state.
        #[arg(long)]
        sink: Option<String>,
    },
    /// Write a config file populated with the defaults.
    InitConfig {
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GraphFormat {
    Dot,
    Json,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Evolve { config, seed, backend, out, resume } => {
            cmd_evolve(&config, seed, backend, out, resume)
        }
        Command::Eval { config, individual, dataset, split } => {
            cmd_eval(&config, &individual, dataset, &split)
        }
        Command::ExportGraph { checkpoint, format, out } => {
            cmd_export_graph(&checkpoint, format, out)
        }
        Command::ValidateChain { file, source, phase1_exit, phase2_exit, sink } => {
            cmd_validate_chain(&file, source, phase1_exit, phase2_exit, sink)
        }
        Command::InitConfig { out } => cmd_init_config(out),
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::from_toml(&fs::read_to_string(path)?)
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_jsonl(&fs::read_to_string(path)?)
}

fn load_kb(config: &RunConfig) -> Result<Vec<KnowledgeExcerpt>> {
    match &config.kb_path {
        Some(path) => load_knowledge(&fs::read_to_string(path)?),
        None => Ok(Vec::new()),
    }
}

/// Writes the generation log and one checkpoint per generation.
struct DiskObserver {
    out_dir: PathBuf,
    log: RunLog,
    config_digest: String,
    root_seed: u64,
}

impl RunObserver for DiskObserver {
    fn on_report(&mut self, report: &GenerationReport) -> Result<()> {
        self.log.append(report)
    }

    fn on_state(&mut self, state: &EngineState) -> Result<()> {
        let checkpoint = Checkpoint::capture(state, &self.config_digest, self.root_seed);
        let path = self.out_dir.join(format!("checkpoint_gen{:04}.json", state.generation));
        save_checkpoint(&path, &checkpoint)
    }
}

fn cmd_evolve(
    config_path: &Path,
    seed: Option<u64>,
    backend_name: Option<String>,
    out: Option<PathBuf>,
    resume_from: Option<PathBuf>,
) -> Result<()> {
    let mut config = load_config(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(name) = backend_name {
        config.backend = name;
    }
    if let Some(dir) = out {
        config.output_dir = dir;
    }

    let backend = config.build_backend()?;
    let dataset_path = config
        .dataset_path
        .clone()
        .ok_or_else(|| Error::Config("evolve needs dataset_path in the config".into()))?;
    let dataset = load_dataset(&dataset_path)?;
    let subset_weights = config.effective_subset_weights(&dataset);
    let split = make_split(&dataset, &subset_weights, config.train_target, config.seed)?;
    let kb = load_kb(&config)?;

    let cfg = config.evolution_config();
    let opts = config.engine_options();
    let digest = config.digest();
    let out_dir = config.output_dir.clone();
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("split.json"), serde_json::to_string_pretty(&split)?)?;
    let mass = split.train_weight_mass(&dataset)?;
    println!(
        "split: {} train / {} test instances, train weight mass {:.6}",
        split.train_ids.len(),
        split.test_ids.len(),
        mass
    );

    let log_path = out_dir.join("runlog.jsonl");
    let state = match resume_from {
        Some(checkpoint_path) => {
            let checkpoint = load_checkpoint(&checkpoint_path, Some(&digest))?;
            let mut state = checkpoint.into_state();
            let mut observer = DiskObserver {
                out_dir: out_dir.clone(),
                log: RunLog::create(&log_path, &state.reports)?,
                config_digest: digest,
                root_seed: cfg.seed,
            };
            engine::resume(
                &mut state,
                &cfg,
                &opts,
                &dataset,
                &split,
                &kb,
                backend.as_ref(),
                &mut observer,
            )?;
            state
        }
        None => {
            let mut observer = DiskObserver {
                out_dir: out_dir.clone(),
                log: RunLog::create(&log_path, &[])?,
                config_digest: digest,
                root_seed: cfg.seed,
            };
            engine::coevolve(&cfg, &opts, &dataset, &split, &kb, backend.as_ref(), &mut observer)?
        }
    };

    let (best, best_fit) = state.best().ok_or(Error::EmptyChainSet)?;
    fs::write(out_dir.join("final_individual.json"), serde_json::to_string_pretty(best)?)?;
    fs::write(out_dir.join("final_graph.json"), export_json(&state.graph))?;
    println!(
        "finished generation {}: best {} train weighted accuracy {:.6}",
        state.generation, best.id, best_fit
    );
    println!(
        "graph: {} states, {} transitions",
        state.graph.node_count(),
        state.graph.edge_count()
    );
    Ok(())
}

fn run_outcomes(
    backend: &dyn GenerationBackend,
    individual: &Individual,
    ids: &[String],
    dataset: &Dataset,
    limits: &ExecLimits,
) -> Result<Vec<EvalOutcome>> {
    let mut outcomes = Vec::with_capacity(ids.len());
    for id in ids {
        let instance =
            dataset.get(id).ok_or_else(|| Error::UnknownInstance(id.clone()))?;
        let outcome = match backend.execute(&individual.artifact, instance, limits) {
            Ok(trace) => match trace.status {
                ExecStatus::Solved => {
                    EvalOutcome::solved(id.clone(), trace.objective.unwrap_or(f64::NAN))
                }
                status => EvalOutcome::failed(id.clone(), status),
            },
            Err(_) => EvalOutcome::failed(id.clone(), ExecStatus::RunFailed),
        };
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

fn cmd_eval(
    config_path: &Path,
    individual_path: &Path,
    dataset_override: Option<PathBuf>,
    split_path: &Path,
) -> Result<()> {
    let config = load_config(config_path)?;
    let backend = config.build_backend()?;
    let dataset_path = dataset_override
        .or_else(|| config.dataset_path.clone())
        .ok_or_else(|| Error::Config("eval needs --dataset or dataset_path".into()))?;
    let dataset = load_dataset(&dataset_path)?;
    let individual: Individual = serde_json::from_str(&fs::read_to_string(individual_path)?)?;
    let split: SplitSpec = serde_json::from_str(&fs::read_to_string(split_path)?)?;
    let limits = ExecLimits {
        wall_clock_ms: config.limit_wall_clock_ms,
        max_output_bytes: config.limit_output_bytes,
    };

    let outcomes =
        run_outcomes(backend.as_ref(), &individual, &split.test_ids, &dataset, &limits)?;

    let mut by_subset: BTreeMap<&str, Vec<EvalOutcome>> = BTreeMap::new();
    for outcome in &outcomes {
        let instance = dataset
            .get(&outcome.instance_id)
            .ok_or_else(|| Error::UnknownInstance(outcome.instance_id.clone()))?;
        by_subset.entry(&instance.subset).or_default().push(outcome.clone());
    }
    for (subset, group) in &by_subset {
        let acc = accuracy(group, &dataset, config.delta, config.epsilon_y)?;
        println!("{subset}: accuracy {:.6} over {} instances", acc, group.len());
    }
    let weights = instance_weights(&dataset, &split.subset_weights)?;
    let wa = weighted_accuracy(&outcomes, &dataset, &weights, config.delta, config.epsilon_y)?;
    println!("test weighted accuracy: {wa:.6}");
    Ok(())
}

fn cmd_export_graph(
    checkpoint_path: &Path,
    format: GraphFormat,
    out: Option<PathBuf>,
) -> Result<()> {
    let checkpoint = load_checkpoint(checkpoint_path, None)?;
    let text = match format {
        GraphFormat::Dot => export_dot(&checkpoint.graph),
        GraphFormat::Json => export_json(&checkpoint.graph),
    };
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_validate_chain(
    file: &Path,
    source: Option<String>,
    phase1_exit: Option<String>,
    phase2_exit: Option<String>,
    sink: Option<String>,
) -> Result<()> {
    let records = parse_records(&fs::read_to_string(file)?)?;
    let mut boundaries = BoundaryLabels::default();
    if let Some(label) = source {
        boundaries.source = label;
    }
    if let Some(label) = phase1_exit {
        boundaries.phase1_exit = label;
    }
    if let Some(label) = phase2_exit {
        boundaries.phase2_exit = label;
    }
    if let Some(label) = sink {
        boundaries.sink = label;
    }
    let chain = AoeChain::new_unchecked(records, "");
    let report = validate_chain(&chain, &boundaries);
    if report.is_ok() {
        println!("valid: {} edges", chain.len());
        Ok(())
    } else {
        for violation in &report.violations {
            println!("violation: {violation}");
        }
        Err(Error::ChainInvalid { report })
    }
}

fn cmd_init_config(out: Option<PathBuf>) -> Result<()> {
    let text = RunConfig::default().to_toml();
    match out {
        Some(path) => {
            fs::write(&path, text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_declaration_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn subcommands_parse() {
        let cli = Cli::try_parse_from([
            "coevo", "evolve", "--config", "run.toml", "--seed", "7", "--out", "out",
        ])
        .unwrap();
        match cli.command {
            Command::Evolve { seed, resume, .. } => {
                assert_eq!(seed, Some(7));
                assert!(resume.is_none());
            }
            other => panic!("parsed {other:?}"),
        }

        let cli = Cli::try_parse_from([
            "coevo", "export-graph", "--checkpoint", "c.json", "--format", "dot",
        ])
        .unwrap();
        assert!(matches!(
            cli.command,
            Command::ExportGraph { format: GraphFormat::Dot, .. }
        ));

        let cli =
            Cli::try_parse_from(["coevo", "validate-chain", "chain.json", "--sink", "End"])
                .unwrap();
        match cli.command {
            Command::ValidateChain { sink, .. } => assert_eq!(sink.as_deref(), Some("End")),
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn unknown_arguments_are_rejected() {
        assert!(Cli::try_parse_from(["coevo", "evolve", "--config"]).is_err());
        assert!(Cli::try_parse_from(["coevo", "unknown-command"]).is_err());
        assert!(Cli::try_parse_from(["coevo"]).is_err());
    }
}
