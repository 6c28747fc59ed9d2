//! A backend that delegates generation work to a chat-completion service
//! and artifact execution to an external runner command. The transport is
//! a trait so tests can script responses, and every exchange can be
//! recorded to a replay file and played back without network access.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::chain::{parse_chain, serialize_chain, AoeChain, BoundaryLabels, Phase};
use crate::digest::digest_hex;
use crate::error::{Error, Result};
use crate::eval::{ExecStatus, TaskInstance};
use crate::variation::KnowledgeExcerpt;

use super::templates::render;
use super::{Artifact, ExecLimits, ExecutionTrace, GenerationBackend, MutationScope, StepRecord};

/// One round trip to a chat-completion service.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, body: &serde_json::Value) -> Result<String>;
}

/// Connection settings for the live service and the execution runner.
#[derive(Debug, Clone)]
pub struct RemoteSettings {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u64,
    /// Total attempts per call, capped at 5.
    pub max_retries: u32,
    /// Base backoff; attempt k sleeps base * 2^k. Zero disables sleeping.
    pub backoff_ms: u64,
    pub timeout_ms: u64,
    /// When set, every live exchange is appended here as JSONL.
    pub record_path: Option<PathBuf>,
    /// Command that runs an artifact: argv prefix, invoked with the
    /// artifact file path and the instance file path appended.
    pub executor_cmd: Vec<String>,
    /// Documentation of the tool functions artifacts may call, spliced
    /// into prompts.
    pub tool_doc: String,
}

impl Default for RemoteSettings {
    fn default() -> RemoteSettings {
        RemoteSettings {
            endpoint: "http://localhost:8000/v1/chat/completions".to_owned(),
            model: "default-model".to_owned(),
            api_key_env: "COEVO_API_KEY".to_owned(),
            temperature: 1.0,
            max_tokens: 4096,
            max_retries: 5,
            backoff_ms: 500,
            timeout_ms: 120_000,
            record_path: None,
            executor_cmd: Vec::new(),
            tool_doc: String::new(),
        }
    }
}

/// Live HTTP transport for chat-completion endpoints.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
}

impl HttpTransport {
    pub fn from_settings(settings: &RemoteSettings) -> Result<HttpTransport> {
        let api_key = std::env::var(&settings.api_key_env).map_err(|_| {
            Error::Config(format!(
                "environment variable {} is not set (it should hold the API key)",
                settings.api_key_env
            ))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(settings.timeout_ms))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpTransport { client, endpoint: settings.endpoint.clone(), api_key })
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, body: &serde_json::Value) -> Result<String> {
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| Error::Backend { capability: "transport", detail: e.to_string() })?;
        let status = response.status();
        if !status.is_success() {
            return Err(Error::Backend {
                capability: "transport",
                detail: format!("service replied with status {status}"),
            });
        }
        let value: serde_json::Value = response
            .json()
            .map_err(|e| Error::Backend { capability: "transport", detail: e.to_string() })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| Error::Backend {
                capability: "transport",
                detail: "response carries no message content".to_owned(),
            })
    }
}

/// One recorded exchange in a replay file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReplayRecord {
    prompt_digest: String,
    response: String,
}

/// Replays recorded responses keyed by prompt digest, in recorded order
/// per prompt.
pub struct ReplayTransport {
    responses: Mutex<BTreeMap<String, VecDeque<String>>>,
}

impl ReplayTransport {
    pub fn from_file(path: &Path) -> Result<ReplayTransport> {
        let text = fs::read_to_string(path)?;
        let mut responses: BTreeMap<String, VecDeque<String>> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ReplayRecord = serde_json::from_str(line).map_err(|e| {
                Error::Config(format!("replay file line {}: {e}", lineno + 1))
            })?;
            responses.entry(record.prompt_digest).or_default().push_back(record.response);
        }
        Ok(ReplayTransport { responses: Mutex::new(responses) })
    }
}

fn body_prompt_digest(body: &serde_json::Value) -> String {
    let prompt = body["messages"][0]["content"].as_str().unwrap_or_default();
    digest_hex(prompt)
}

impl ChatTransport for ReplayTransport {
    fn complete(&self, body: &serde_json::Value) -> Result<String> {
        let digest = body_prompt_digest(body);
        let mut responses = self.responses.lock().expect("replay map lock");
        responses
            .get_mut(&digest)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| Error::Backend {
                capability: "transport",
                detail: format!("no recorded response for prompt digest {digest}"),
            })
    }
}

/// One prompt/response exchange, kept for inspection and recording.
#[derive(Debug, Clone, Serialize)]
pub struct TranscriptEntry {
    pub capability: &'static str,
    pub template_id: &'static str,
    pub prompt_digest: String,
    pub prompt: String,
    pub response: String,
}

/// Executor stdout contract: one JSON object describing the run.
#[derive(Debug, Deserialize)]
struct ExecutorReport {
    status: ExecStatus,
    #[serde(default)]
    objective: Option<f64>,
    #[serde(default)]
    chain: Option<serde_json::Value>,
}

static SCRATCH_COUNTER: AtomicU64 = AtomicU64::new(0);

fn scratch_path(stem: &str) -> PathBuf {
    std::env::temp_dir().join(format!(
        "coevo-{}-{}-{}",
        std::process::id(),
        SCRATCH_COUNTER.fetch_add(1, Ordering::Relaxed),
        stem
    ))
}

/// Strips a fenced code block from a reply, returning the block body if
/// one is present and the trimmed reply otherwise.
pub fn strip_code_fence(text: &str) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let open = lines.iter().position(|l| l.trim_start().starts_with("```"));
    match open {
        Some(start) => {
            let body: Vec<&str> = lines[start + 1..]
                .iter()
                .take_while(|l| !l.trim_start().starts_with("```"))
                .copied()
                .collect();
            body.join("\n").trim().to_owned()
        }
        None => text.trim().to_owned(),
    }
}

pub struct RemoteBackend {
    transport: Box<dyn ChatTransport>,
    settings: RemoteSettings,
    boundaries: BoundaryLabels,
    transcript: Mutex<Vec<TranscriptEntry>>,
}

impl RemoteBackend {
    pub fn new(
        transport: Box<dyn ChatTransport>,
        settings: RemoteSettings,
        boundaries: BoundaryLabels,
    ) -> RemoteBackend {
        RemoteBackend { transport, settings, boundaries, transcript: Mutex::new(Vec::new()) }
    }

    /// Backend over the live HTTP transport described by `settings`.
    pub fn over_http(settings: RemoteSettings, boundaries: BoundaryLabels) -> Result<RemoteBackend> {
        let transport = HttpTransport::from_settings(&settings)?;
        Ok(RemoteBackend::new(Box::new(transport), settings, boundaries))
    }

    /// Backend that replays a recorded session instead of calling out.
    pub fn over_replay(
        replay_path: &Path,
        settings: RemoteSettings,
        boundaries: BoundaryLabels,
    ) -> Result<RemoteBackend> {
        let transport = ReplayTransport::from_file(replay_path)?;
        let mut settings = settings;
        settings.record_path = None;
        Ok(RemoteBackend::new(Box::new(transport), settings, boundaries))
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.transcript.lock().expect("transcript lock").clone()
    }

    fn call(
        &self,
        capability: &'static str,
        template_id: &'static str,
        prompt: String,
    ) -> Result<String> {
        let body = json!({
            "model": self.settings.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.settings.temperature,
            "max_tokens": self.settings.max_tokens,
        });
        let attempts = self.settings.max_retries.clamp(1, 5);
        let mut last_error = None;
        for attempt in 0..attempts {
            if attempt > 0 && self.settings.backoff_ms > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.settings.backoff_ms << (attempt - 1),
                ));
            }
            match self.transport.complete(&body) {
                Ok(response) => {
                    let entry = TranscriptEntry {
                        capability,
                        template_id,
                        prompt_digest: digest_hex(&prompt),
                        prompt: prompt.clone(),
                        response: response.clone(),
                    };
                    if let Some(path) = &self.settings.record_path {
                        let record = ReplayRecord {
                            prompt_digest: entry.prompt_digest.clone(),
                            response: response.clone(),
                        };
                        let line = serde_json::to_string(&record).expect("record serializes");
                        let mut file =
                            fs::OpenOptions::new().create(true).append(true).open(path)?;
                        writeln!(file, "{line}")?;
                    }
                    self.transcript.lock().expect("transcript lock").push(entry);
                    return Ok(response);
                }
                Err(e) => last_error = Some(e),
            }
        }
        Err(Error::Backend {
            capability,
            detail: format!(
                "{} attempts failed; last error: {}",
                attempts,
                last_error.expect("at least one attempt ran")
            ),
        })
    }

    fn boundary_values(&self) -> [(&'static str, &str); 4] {
        [
            ("source_label", &self.boundaries.source),
            ("phase1_exit_label", &self.boundaries.phase1_exit),
            ("phase2_exit_label", &self.boundaries.phase2_exit),
            ("sink_label", &self.boundaries.sink),
        ]
    }

    fn knowledge_block(excerpts: &[KnowledgeExcerpt]) -> String {
        excerpts
            .iter()
            .map(|e| {
                format!(
                    "- {}: {}\n  Template: {}",
                    e.component_name, e.theoretical_summary, e.abstract_template
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn scope_description(scope: MutationScope) -> String {
        match scope {
            MutationScope::Whole => "The entire program may be revised.".to_owned(),
            MutationScope::Phase(p) => format!(
                "Only the steps of stage {} ({}) may change; every step outside that stage \
                 must be preserved byte for byte.",
                p.ordinal(),
                p.name()
            ),
        }
    }
}

impl GenerationBackend for RemoteBackend {
    fn generate_individual(
        &self,
        task_context: &str,
        excerpts: &[KnowledgeExcerpt],
        _seed: u64,
    ) -> Result<Artifact> {
        let bounds = self.boundary_values();
        let knowledge = Self::knowledge_block(excerpts);
        let mut values: Vec<(&str, &str)> = vec![
            ("task_context", task_context),
            ("tool_doc", &self.settings.tool_doc),
        ];
        values.extend(bounds.iter().map(|(k, v)| (*k, *v)));
        let (template_id, prompt) = if excerpts.is_empty() {
            ("init_zero_shot", render("init_zero_shot", &values)?)
        } else {
            values.push(("retrieved_knowledge", &knowledge));
            ("init_kb", render("init_kb", &values)?)
        };
        let response = self.call("generate", template_id, prompt)?;
        Ok(Artifact::new(strip_code_fence(&response)))
    }

    fn extract_chain(&self, artifact: &Artifact) -> Result<AoeChain> {
        let prompt = render(
            "extract_chain",
            &[("source_code", artifact.text.as_str()), ("tool_doc", &self.settings.tool_doc)],
        )?;
        let response = self.call("extract", "extract_chain", prompt.clone())?;
        match parse_chain(&strip_code_fence(&response), &self.boundaries) {
            Ok(chain) => Ok(chain),
            Err(first_error) => {
                let repair = format!(
                    "{prompt}\n\nYour previous reply could not be used: {first_error}\n\
                     Reply again with only the corrected JSON array."
                );
                let response = self.call("extract", "extract_chain", repair)?;
                parse_chain(&strip_code_fence(&response), &self.boundaries)
            }
        }
    }

    fn synthesize_artifact(&self, chain: &AoeChain) -> Result<Artifact> {
        let chain_json = serialize_chain(chain);
        let prompt = render(
            "synthesize",
            &[("aoe_chain_json", chain_json.as_str()), ("tool_doc", &self.settings.tool_doc)],
        )?;
        let response = self.call("synthesize", "synthesize", prompt)?;
        Ok(Artifact::new(strip_code_fence(&response)))
    }

    fn mutate_artifact(
        &self,
        artifact: &Artifact,
        scope: MutationScope,
        excerpts: &[KnowledgeExcerpt],
        _seed: u64,
    ) -> Result<Artifact> {
        let scope_text = Self::scope_description(scope);
        let knowledge = Self::knowledge_block(excerpts);
        let mut values: Vec<(&str, &str)> = vec![
            ("source_code", artifact.text.as_str()),
            ("scope_description", &scope_text),
            ("tool_doc", &self.settings.tool_doc),
        ];
        let (template_id, prompt) = if excerpts.is_empty() {
            ("mutate_direct", render("mutate_direct", &values)?)
        } else {
            values.push(("retrieved_knowledge", &knowledge));
            ("mutate_kb", render("mutate_kb", &values)?)
        };
        let response = self.call("mutate", template_id, prompt)?;
        Ok(Artifact::new(strip_code_fence(&response)))
    }

    fn judge_equivalence(&self, phase: Phase, a: &str, b: &str) -> Result<bool> {
        let prompt = render(
            "judge_pair",
            &[("phase_name", phase.name()), ("state_a", a), ("state_b", b)],
        )?;
        let response = self.call("judge", "judge_pair", prompt)?;
        let verdict = response.trim().to_uppercase();
        if verdict.starts_with("YES") {
            Ok(true)
        } else if verdict.starts_with("NO") {
            Ok(false)
        } else {
            Err(Error::Backend {
                capability: "judge",
                detail: format!("verdict {response:?} is neither YES nor NO"),
            })
        }
    }

    fn execute(
        &self,
        artifact: &Artifact,
        instance: &TaskInstance,
        limits: &ExecLimits,
    ) -> Result<ExecutionTrace> {
        if self.settings.executor_cmd.is_empty() {
            return Err(Error::Config(
                "no executor command configured for artifact execution".to_owned(),
            ));
        }
        let artifact_path = scratch_path("artifact.py");
        let instance_path = scratch_path("instance.json");
        let stdout_path = scratch_path("stdout.json");
        fs::write(&artifact_path, &artifact.text)?;
        fs::write(&instance_path, serde_json::to_string(instance)?)?;
        let stdout_file = fs::File::create(&stdout_path)?;

        let mut command = Command::new(&self.settings.executor_cmd[0]);
        command
            .args(&self.settings.executor_cmd[1..])
            .arg(&artifact_path)
            .arg(&instance_path)
            .stdin(Stdio::null())
            .stdout(Stdio::from(stdout_file))
            .stderr(Stdio::null());
        let mut child = command.spawn().map_err(|e| Error::Backend {
            capability: "execute",
            detail: format!("failed to start executor: {e}"),
        })?;

        let deadline = Instant::now() + Duration::from_millis(limits.wall_clock_ms);
        let mut timed_out = false;
        loop {
            match child.try_wait() {
                Ok(Some(_)) => break,
                Ok(None) => {
                    if Instant::now() >= deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        timed_out = true;
                        break;
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(e) => {
                    return Err(Error::Backend {
                        capability: "execute",
                        detail: format!("waiting on executor: {e}"),
                    })
                }
            }
        }

        let raw = fs::read(&stdout_path).unwrap_or_default();
        for path in [&artifact_path, &instance_path, &stdout_path] {
            let _ = fs::remove_file(path);
        }

        let note = |text: &str| vec![StepRecord { index: 0, note: text.to_owned() }];
        if timed_out {
            return Ok(ExecutionTrace {
                status: ExecStatus::RunFailed,
                objective: None,
                chain: AoeChain::new_unchecked(Vec::new(), ""),
                transcript: note("executor exceeded the wall-clock limit"),
            });
        }
        if raw.len() > limits.max_output_bytes {
            return Ok(ExecutionTrace {
                status: ExecStatus::NoNumeric,
                objective: None,
                chain: AoeChain::new_unchecked(Vec::new(), ""),
                transcript: note("executor output exceeded the size limit"),
            });
        }
        let report: ExecutorReport = match serde_json::from_slice(&raw) {
            Ok(report) => report,
            Err(_) => {
                return Ok(ExecutionTrace {
                    status: ExecStatus::NoNumeric,
                    objective: None,
                    chain: AoeChain::new_unchecked(Vec::new(), ""),
                    transcript: note("executor output was not a valid report"),
                })
            }
        };
        let chain = match &report.chain {
            Some(value) => {
                let text = serde_json::to_string(value)?;
                crate::chain::parse_records(&text)
                    .map(|records| AoeChain::new_unchecked(records, ""))
                    .unwrap_or_else(|_| AoeChain::new_unchecked(Vec::new(), ""))
            }
            None => AoeChain::new_unchecked(Vec::new(), ""),
        };
        let status = match (report.status, report.objective) {
            (ExecStatus::Solved, Some(_)) => ExecStatus::Solved,
            (ExecStatus::Solved, None) => ExecStatus::NoNumeric,
            (other, _) => other,
        };
        let objective = if status == ExecStatus::Solved { report.objective } else { None };
        Ok(ExecutionTrace { status, objective, chain, transcript: Vec::new() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    struct ScriptedTransport {
        responses: Mutex<VecDeque<Result<String>>>,
        calls: AtomicUsize,
    }

    impl ScriptedTransport {
        fn new(responses: Vec<Result<String>>) -> ScriptedTransport {
            ScriptedTransport {
                responses: Mutex::new(responses.into_iter().collect()),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl ChatTransport for ScriptedTransport {
        fn complete(&self, _body: &serde_json::Value) -> Result<String> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            self.responses
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or_else(|| Err(Error::Backend { capability: "transport", detail: "script exhausted".into() }))
        }
    }

    fn fast_settings() -> RemoteSettings {
        RemoteSettings { backoff_ms: 0, ..RemoteSettings::default() }
    }

    fn backend_with(responses: Vec<Result<String>>) -> RemoteBackend {
        RemoteBackend::new(
            Box::new(ScriptedTransport::new(responses)),
            fast_settings(),
            BoundaryLabels::default(),
        )
    }

    fn transport_error() -> Result<String> {
        Err(Error::Backend { capability: "transport", detail: "connection reset".into() })
    }

    #[test]
    fn retries_until_a_response_arrives() {
        let backend = backend_with(vec![
            transport_error(),
            transport_error(),
            Ok("YES".to_owned()),
        ]);
        assert!(backend.judge_equivalence(Phase::ProblemAnalysis, "a", "b").unwrap());
        assert_eq!(backend.transcript().len(), 1);
    }

    #[test]
    fn gives_up_after_the_retry_budget() {
        let backend = backend_with(vec![
            transport_error(),
            transport_error(),
            transport_error(),
            transport_error(),
            transport_error(),
            Ok("YES".to_owned()),
        ]);
        let err = backend.judge_equivalence(Phase::ProblemAnalysis, "a", "b").unwrap_err();
        assert!(matches!(err, Error::Backend { capability: "judge", .. }), "{err}");
    }

    #[test]
    fn judge_parses_verdicts_loosely_but_not_garbage() {
        let backend = backend_with(vec![Ok("  yes.\n".to_owned()), Ok("No".to_owned()), Ok("maybe".to_owned())]);
        let p = Phase::CodeGeneration;
        assert!(backend.judge_equivalence(p, "a", "b").unwrap());
        assert!(!backend.judge_equivalence(p, "a", "b").unwrap());
        assert!(backend.judge_equivalence(p, "a", "b").is_err());
    }

    #[test]
    fn fence_stripping_handles_prose_and_bare_replies() {
        assert_eq!(strip_code_fence("```python\nx = 1\n```"), "x = 1");
        assert_eq!(strip_code_fence("Here you go:\n```json\n[1]\n```\nEnjoy!"), "[1]");
        assert_eq!(strip_code_fence("  plain text  "), "plain text");
        assert_eq!(strip_code_fence("```\na\nb\n```"), "a\nb");
    }

    #[test]
    fn extraction_repairs_a_malformed_reply_once() {
        let chain = crate::backend::mock::random_valid_chain(3, &BoundaryLabels::default());
        let good = serialize_chain(&chain);
        let backend = backend_with(vec![Ok("not json".to_owned()), Ok(good)]);
        let extracted = backend.extract_chain(&Artifact::new("program")).unwrap();
        assert_eq!(extracted.edges, chain.edges);
        assert_eq!(backend.transcript().len(), 2);
        let second = &backend.transcript()[1];
        assert!(second.prompt.contains("could not be used"));
    }

    #[test]
    fn generation_strips_the_code_fence_and_logs_the_exchange() {
        let backend = backend_with(vec![Ok("```python\nprint('hi')\n```".to_owned())]);
        let artifact = backend.generate_individual("solve it", &[], 1).unwrap();
        assert_eq!(artifact.text, "print('hi')");
        let transcript = backend.transcript();
        assert_eq!(transcript[0].capability, "generate");
        assert_eq!(transcript[0].template_id, "init_zero_shot");
        assert!(transcript[0].prompt.contains("solve it"));
    }

    #[test]
    fn knowledge_excerpts_switch_the_template() {
        let excerpt = KnowledgeExcerpt {
            component_name: "decomposition".to_owned(),
            theoretical_summary: "break the problem down".to_owned(),
            abstract_template: "first split, then solve".to_owned(),
        };
        let backend = backend_with(vec![Ok("```python\npass\n```".to_owned())]);
        backend.generate_individual("ctx", &[excerpt], 1).unwrap();
        let transcript = backend.transcript();
        assert_eq!(transcript[0].template_id, "init_kb");
        assert!(transcript[0].prompt.contains("decomposition"));
    }

    #[test]
    fn recorded_sessions_replay_without_a_live_transport() {
        let dir = tempfile::tempdir().unwrap();
        let record = dir.path().join("replay.jsonl");
        let mut settings = fast_settings();
        settings.record_path = Some(record.clone());
        let live = RemoteBackend::new(
            Box::new(ScriptedTransport::new(vec![Ok("YES".to_owned()), Ok("NO".to_owned())])),
            settings,
            BoundaryLabels::default(),
        );
        assert!(live.judge_equivalence(Phase::ProblemAnalysis, "a", "b").unwrap());
        assert!(!live.judge_equivalence(Phase::ProblemAnalysis, "c", "d").unwrap());

        let replayed =
            RemoteBackend::over_replay(&record, fast_settings(), BoundaryLabels::default()).unwrap();
        assert!(replayed.judge_equivalence(Phase::ProblemAnalysis, "a", "b").unwrap());
        assert!(!replayed.judge_equivalence(Phase::ProblemAnalysis, "c", "d").unwrap());
        let err = replayed.judge_equivalence(Phase::ProblemAnalysis, "a", "b").unwrap_err();
        assert!(matches!(err, Error::Backend { .. }));
    }

    fn exec_instance() -> TaskInstance {
        TaskInstance { id: "i1".into(), subset: "s".into(), question: "q".into(), ground_truth: 4.5 }
    }

    fn exec_backend(script: &str) -> RemoteBackend {
        let mut settings = fast_settings();
        settings.executor_cmd =
            vec!["sh".to_owned(), "-c".to_owned(), script.to_owned(), "runner".to_owned()];
        RemoteBackend::new(
            Box::new(ScriptedTransport::new(vec![])),
            settings,
            BoundaryLabels::default(),
        )
    }

    #[test]
    fn executor_reports_flow_back_as_traces() {
        let backend = exec_backend(r#"echo '{"status": "solved", "objective": 4.5}'"#);
        let trace = backend
            .execute(&Artifact::new("pass"), &exec_instance(), &ExecLimits::default())
            .unwrap();
        assert_eq!(trace.status, ExecStatus::Solved);
        assert_eq!(trace.objective, Some(4.5));
    }

    #[test]
    fn solved_without_an_objective_degrades_to_no_numeric() {
        let backend = exec_backend(r#"echo '{"status": "solved"}'"#);
        let trace = backend
            .execute(&Artifact::new("pass"), &exec_instance(), &ExecLimits::default())
            .unwrap();
        assert_eq!(trace.status, ExecStatus::NoNumeric);
        assert_eq!(trace.objective, None);
    }

    #[test]
    fn garbage_output_is_a_no_numeric_run() {
        let backend = exec_backend("echo such output");
        let trace = backend
            .execute(&Artifact::new("pass"), &exec_instance(), &ExecLimits::default())
            .unwrap();
        assert_eq!(trace.status, ExecStatus::NoNumeric);
    }

    #[test]
    fn slow_executors_are_killed_and_reported_as_failed_runs() {
        let backend = exec_backend("sleep 30");
        let limits = ExecLimits { wall_clock_ms: 150, max_output_bytes: 1_000_000 };
        let started = Instant::now();
        let trace = backend.execute(&Artifact::new("pass"), &exec_instance(), &limits).unwrap();
        assert_eq!(trace.status, ExecStatus::RunFailed);
        assert!(started.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn executor_receives_the_artifact_and_instance_files() {
        let backend = exec_backend(
            r#"grep -q "the artifact body" "$1" && grep -q "i1" "$2" && echo '{"status": "run-failed"}'"#,
        );
        let trace = backend
            .execute(&Artifact::new("the artifact body"), &exec_instance(), &ExecLimits::default())
            .unwrap();
        assert_eq!(trace.status, ExecStatus::RunFailed);
    }
}
