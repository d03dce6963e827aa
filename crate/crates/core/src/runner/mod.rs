//! Executes the three regimes over a dataset and persists trace records.
//!
//! Items run concurrently up to a parallelism bound; the three stages
//! within an item are strictly sequential. Completed records are flushed
//! to the trace file in dataset order regardless of which worker finished
//! first, so identical inputs produce byte-identical trace files at any
//! parallelism. Runs over deterministic backends additionally zero their
//! wall-clock timestamps.

mod manifest;
mod tracefile;

pub use manifest::{ManifestError, RunManifest, MANIFEST_SCHEMA_VERSION};
pub use tracefile::{append_trace, read_traces, TraceFileError};

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::backends::{Agent, AgentRequest, BackendError, SimContext};
use crate::blame::assign_blame;
use crate::domain::{
    Dataset, ModelId, ParsedAnswer, PipelineConfig, PriceSheet, Regime, StageRole, StageTrace,
    TaskItem, TraceRecord, TRACE_SCHEMA_VERSION,
};
use crate::handoff::{
    validate_artifact, HandoffError, PromptTemplates, StageArtifact, FORMAT_REMINDER,
};
use crate::metrics::stage_cost;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("dataset is empty; nothing to run")]
    EmptyDataset,
    #[error("trace file {0} already exists; resume it or choose a fresh output directory")]
    WouldClobber(PathBuf),
    #[error("cannot resume: {0} has no manifest")]
    ResumeMissingManifest(PathBuf),
    #[error(
        "resume mismatch on {field}: manifest has {manifest:?}, this invocation has {requested:?}"
    )]
    ResumeMismatch {
        field: &'static str,
        manifest: String,
        requested: String,
    },
    #[error("traced task id {0:?} is not in the dataset")]
    TraceNotInDataset(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    TraceFile(#[from] TraceFileError),
    #[error(transparent)]
    Handoff(#[from] HandoffError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("trace persistence failed: {0}")]
    Persist(std::io::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Knobs shared by every run.
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Worker count; 0 means the number of logical processors.
    pub parallelism: usize,
    pub resume: bool,
    /// Master seed for stochastic backends; recorded in the manifest.
    pub seed: u64,
    pub timeout_s: f64,
    pub sampling: BTreeMap<String, serde_json::Value>,
    pub templates: PromptTemplates,
    pub prices: PriceSheet,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            out_dir: out_dir.into(),
            parallelism: 0,
            resume: false,
            seed: 0,
            timeout_s: 60.0,
            sampling: BTreeMap::new(),
            templates: PromptTemplates::default(),
            prices: PriceSheet::builtin_default(),
        }
    }

    fn effective_parallelism(&self) -> usize {
        if self.parallelism > 0 {
            self.parallelism
        } else {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    /// All records, in dataset order (resumed ones included).
    pub traces: Vec<TraceRecord>,
    /// Records produced by this invocation (0 when resuming a complete run).
    pub new_records: usize,
}

/// The three pipeline backends in role order.
pub struct PipelineAgents {
    pub planner: Arc<dyn Agent>,
    pub executor: Arc<dyn Agent>,
    pub critic: Arc<dyn Agent>,
}

enum RunKind<'a> {
    Baseline {
        model: &'a ModelId,
        agent: Arc<dyn Agent>,
    },
    Pipeline {
        config: &'a PipelineConfig,
        agents: PipelineAgents,
    },
}

impl RunKind<'_> {
    fn regime(&self) -> Regime {
        match self {
            RunKind::Baseline { .. } => Regime::Baseline,
            RunKind::Pipeline { config, .. } => config.regime,
        }
    }

    fn label(&self) -> String {
        match self {
            RunKind::Baseline { model, .. } => model.key.clone(),
            RunKind::Pipeline { config, .. } => config.label.clone(),
        }
    }

    fn deterministic(&self) -> bool {
        match self {
            RunKind::Baseline { agent, .. } => agent.deterministic(),
            RunKind::Pipeline { agents, .. } => {
                agents.planner.deterministic()
                    && agents.executor.deterministic()
                    && agents.critic.deterministic()
            }
        }
    }
}

/// One invocation of a single model per item, with the plain question
/// prompt; only the planner slot of each record is populated.
pub fn run_baseline(
    model: &ModelId,
    agent: Arc<dyn Agent>,
    dataset: &Dataset,
    dataset_sha256: &str,
    opts: &RunOptions,
) -> Result<RunOutcome, RunError> {
    execute(
        RunKind::Baseline { model, agent },
        dataset,
        dataset_sha256,
        opts,
    )
}

/// Planner, executor, critic in sequence per item, with the handoff style
/// dictated by the config's regime.
pub fn run_pipeline(
    config: &PipelineConfig,
    agents: PipelineAgents,
    dataset: &Dataset,
    dataset_sha256: &str,
    opts: &RunOptions,
) -> Result<RunOutcome, RunError> {
    execute(
        RunKind::Pipeline { config, agents },
        dataset,
        dataset_sha256,
        opts,
    )
}

#[derive(Clone, Copy)]
enum RunClock {
    Wall,
    Fixed,
}

impl RunClock {
    fn now_ms(self) -> u64 {
        match self {
            RunClock::Fixed => 0,
            RunClock::Wall => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        }
    }
}

fn execute(
    kind: RunKind<'_>,
    dataset: &Dataset,
    dataset_sha256: &str,
    opts: &RunOptions,
) -> Result<RunOutcome, RunError> {
    if dataset.items.is_empty() {
        return Err(RunError::EmptyDataset);
    }
    let regime = kind.regime();
    let label = kind.label();
    let clock = if kind.deterministic() {
        RunClock::Fixed
    } else {
        RunClock::Wall
    };

    let manifest_path = opts.out_dir.join("manifest.json");
    let traces_path = opts.out_dir.join("traces.jsonl");
    let dataset_ids: BTreeSet<&str> = dataset.items.iter().map(|i| i.id.as_str()).collect();

    let (mut manifest, done) = if opts.resume {
        if !manifest_path.exists() {
            return Err(RunError::ResumeMissingManifest(opts.out_dir.clone()));
        }
        let manifest = RunManifest::load(&manifest_path)?;
        check_resume(&manifest, regime, &label, dataset_sha256, opts.seed)?;
        let mut done: BTreeMap<String, TraceRecord> = BTreeMap::new();
        if traces_path.exists() {
            for record in read_traces(&traces_path)? {
                if !dataset_ids.contains(record.task_id.as_str()) {
                    return Err(RunError::TraceNotInDataset(record.task_id));
                }
                done.insert(record.task_id.clone(), record);
            }
        }
        (manifest, done)
    } else {
        if traces_path.exists() {
            return Err(RunError::WouldClobber(traces_path));
        }
        std::fs::create_dir_all(&opts.out_dir)?;
        let (planner, executor, critic) = match &kind {
            RunKind::Baseline { model, .. } => ((*model).clone(), None, None),
            RunKind::Pipeline { config, .. } => (
                config.planner.clone(),
                Some(config.executor.clone()),
                Some(config.critic.clone()),
            ),
        };
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            run_id: format!(
                "{}-{}-{}-s{}",
                regime,
                label,
                &dataset_sha256[..dataset_sha256.len().min(12)],
                opts.seed
            ),
            regime,
            label: label.clone(),
            planner,
            executor,
            critic,
            dataset_name: dataset.name.clone(),
            dataset_sha256: dataset_sha256.to_string(),
            item_count: dataset.len(),
            price_sheet_sha256: opts.prices.sha256(),
            seed: opts.seed,
            trace_file: "traces.jsonl".to_string(),
            started_unix_ms: clock.now_ms(),
            finished_unix_ms: None,
            item_error_count: 0,
            complete: false,
        };
        (manifest, BTreeMap::new())
    };
    manifest.save(&manifest_path)?;

    let pending: Vec<&TaskItem> = dataset
        .items
        .iter()
        .filter(|item| !done.contains_key(&item.id))
        .collect();
    let new_records = pending.len();

    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&traces_path)?;

    let produced: Vec<TraceRecord> = if pending.is_empty() {
        Vec::new()
    } else {
        let workers = opts.effective_parallelism().min(pending.len()).max(1);
        let claim = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<(usize, TraceRecord)>();

        std::thread::scope(|scope| -> Result<Vec<TraceRecord>, RunError> {
            let kind = &kind;
            let claim = &claim;
            let pending = &pending;
            for _ in 0..workers {
                let tx = tx.clone();
                scope.spawn(move || loop {
                    let idx = claim.fetch_add(1, Ordering::Relaxed);
                    if idx >= pending.len() {
                        break;
                    }
                    let record = run_item(kind, pending[idx], opts, clock);
                    if tx.send((idx, record)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);

            // In-order flush: buffer out-of-order completions, append the
            // contiguous prefix as it grows.
            let mut buffer: BTreeMap<usize, TraceRecord> = BTreeMap::new();
            let mut next = 0usize;
            let mut out: Vec<TraceRecord> = Vec::with_capacity(pending.len());
            for (idx, record) in rx {
                buffer.insert(idx, record);
                while let Some(record) = buffer.remove(&next) {
                    append_trace(&mut file, &record).map_err(RunError::Persist)?;
                    out.push(record);
                    next += 1;
                }
            }
            Ok(out)
        })?
    };

    // All records in dataset order: previously-done ones interleaved with
    // the fresh batch.
    let mut produced_iter = produced.into_iter();
    let mut traces = Vec::with_capacity(dataset.len());
    for item in &dataset.items {
        match done.get(&item.id) {
            Some(record) => traces.push(record.clone()),
            None => traces.push(produced_iter.next().expect("one record per pending item")),
        }
    }

    manifest.item_error_count = traces
        .iter()
        .filter(|t| t.stages().any(|s| s.error.is_some()))
        .count();
    manifest.complete = traces.len() == dataset.len();
    manifest.finished_unix_ms = Some(clock.now_ms());
    manifest.save(&manifest_path)?;

    Ok(RunOutcome {
        manifest,
        traces,
        new_records,
    })
}

fn check_resume(
    manifest: &RunManifest,
    regime: Regime,
    label: &str,
    dataset_sha256: &str,
    seed: u64,
) -> Result<(), RunError> {
    let mismatch = |field: &'static str, m: String, r: String| RunError::ResumeMismatch {
        field,
        manifest: m,
        requested: r,
    };
    if manifest.regime != regime {
        return Err(mismatch(
            "regime",
            manifest.regime.to_string(),
            regime.to_string(),
        ));
    }
    if manifest.label != label {
        return Err(mismatch("label", manifest.label.clone(), label.to_string()));
    }
    if manifest.dataset_sha256 != dataset_sha256 {
        return Err(mismatch(
            "dataset_sha256",
            manifest.dataset_sha256.clone(),
            dataset_sha256.to_string(),
        ));
    }
    if manifest.seed != seed {
        return Err(mismatch(
            "seed",
            manifest.seed.to_string(),
            seed.to_string(),
        ));
    }
    Ok(())
}

fn run_item(
    kind: &RunKind<'_>,
    item: &TaskItem,
    opts: &RunOptions,
    clock: RunClock,
) -> TraceRecord {
    match kind {
        RunKind::Baseline { model, agent } => {
            run_baseline_item(model, agent.as_ref(), item, opts, clock)
        }
        RunKind::Pipeline { config, agents } => {
            run_pipeline_item(config, agents, item, opts, clock)
        }
    }
}

fn run_baseline_item(
    model: &ModelId,
    agent: &dyn Agent,
    item: &TaskItem,
    opts: &RunOptions,
    clock: RunClock,
) -> TraceRecord {
    let started = clock.now_ms();
    let prompt = opts.templates.simple_handoff(item, None);
    let planner = call_stage(
        agent,
        model,
        StageRole::Planner,
        prompt,
        item,
        None,
        false,
        opts,
    );
    let answer = planner.answer;
    // single-stage record: all three comparison slots collapse onto the
    // one answer, so repair/harm flags are false by construction
    let outcome = assign_blame(answer, answer, answer, item.gold);
    TraceRecord {
        schema_version: TRACE_SCHEMA_VERSION,
        task_id: item.id.clone(),
        label: model.key.clone(),
        regime: Regime::Baseline,
        gold: item.gold,
        planner,
        executor: None,
        critic: None,
        final_answer: outcome.final_answer,
        flags: outcome.flags,
        origin: outcome.origin,
        started_unix_ms: started,
        finished_unix_ms: clock.now_ms(),
    }
}

fn run_pipeline_item(
    config: &PipelineConfig,
    agents: &PipelineAgents,
    item: &TaskItem,
    opts: &RunOptions,
    clock: RunClock,
) -> TraceRecord {
    let started = clock.now_ms();
    let accountable = config.regime == Regime::Accountable;
    let templates = &opts.templates;

    let planner_prompt = match config.regime {
        Regime::Accountable => templates
            .accountable_handoff(item, StageRole::Planner, &[])
            .expect("planner takes no upstream"),
        _ => templates.simple_handoff(item, None),
    };
    let planner_trace = call_stage(
        agents.planner.as_ref(),
        &config.planner,
        StageRole::Planner,
        planner_prompt,
        item,
        None,
        accountable,
        opts,
    );
    let planner_artifact = validate_artifact(
        &planner_trace.raw_text,
        &item.id,
        StageRole::Planner,
        &config.planner,
        &[],
    )
    .expect("planner artifact has no upstream");

    let executor_prompt = match config.regime {
        Regime::Accountable => templates
            .accountable_handoff(
                item,
                StageRole::Executor,
                std::slice::from_ref(&planner_artifact),
            )
            .expect("executor upstream length is one"),
        _ => templates.simple_handoff(item, Some(&planner_artifact)),
    };
    let executor_trace = call_stage(
        agents.executor.as_ref(),
        &config.executor,
        StageRole::Executor,
        executor_prompt,
        item,
        planner_artifact.answer,
        accountable,
        opts,
    );
    let executor_artifact = validate_artifact(
        &executor_trace.raw_text,
        &item.id,
        StageRole::Executor,
        &config.executor,
        std::slice::from_ref(&planner_artifact),
    )
    .expect("executor artifact takes exactly the planner upstream");

    let upstream: [StageArtifact; 2] = [planner_artifact, executor_artifact];
    let critic_prompt = match config.regime {
        Regime::Accountable => templates
            .accountable_handoff(item, StageRole::Critic, &upstream)
            .expect("critic upstream length is two"),
        _ => templates.simple_handoff(item, Some(&upstream[1])),
    };
    let critic_trace = call_stage(
        agents.critic.as_ref(),
        &config.critic,
        StageRole::Critic,
        critic_prompt,
        item,
        upstream[1].answer,
        accountable,
        opts,
    );

    let outcome = assign_blame(
        upstream[0].answer,
        upstream[1].answer,
        critic_trace.answer,
        item.gold,
    );
    TraceRecord {
        schema_version: TRACE_SCHEMA_VERSION,
        task_id: item.id.clone(),
        label: config.label.clone(),
        regime: config.regime,
        gold: item.gold,
        planner: planner_trace,
        executor: Some(executor_trace),
        critic: Some(critic_trace),
        final_answer: outcome.final_answer,
        flags: outcome.flags,
        origin: outcome.origin,
        started_unix_ms: started,
        finished_unix_ms: clock.now_ms(),
    }
}

/// Invoke one stage. Backend failure is recorded in the stage trace (the
/// answer stays UNDEFINED) and the run continues. In the accountable
/// regime a malformed reply earns exactly one re-ask with a format
/// reminder appended; usage and latency aggregate both attempts.
#[allow(clippy::too_many_arguments)]
fn call_stage(
    agent: &dyn Agent,
    model: &ModelId,
    role: StageRole,
    prompt: String,
    item: &TaskItem,
    upstream_answer: ParsedAnswer,
    retry_on_undefined: bool,
    opts: &RunOptions,
) -> StageTrace {
    let sim = SimContext {
        task_id: item.id.clone(),
        gold: item.gold,
        choices: item.choice_letters(),
        upstream_answer,
    };
    let request = match AgentRequest::new(prompt, role, model.clone(), opts.timeout_s) {
        Ok(request) => request.with_sampling(opts.sampling.clone()).with_sim(sim),
        Err(err) => return failed_stage(model, err.to_string(), 1),
    };

    let first = match agent.invoke(&request) {
        Ok(response) => response,
        Err(err) => return failed_stage(model, err.to_string(), 1),
    };
    let mut raw_text = first.raw_text;
    let mut usage = first.usage;
    let mut latency_s = first.latency_s;
    let mut attempts = 1;
    let mut answer = crate::domain::parse_answer_letter(&raw_text);
    let mut error = None;

    if answer.is_none() && retry_on_undefined {
        attempts = 2;
        let retry_prompt = format!("{}\n\n{}", request.prompt, FORMAT_REMINDER);
        let mut retry_request = request.clone();
        retry_request.prompt = retry_prompt;
        match agent.invoke(&retry_request) {
            Ok(second) => {
                usage = match (usage, second.usage) {
                    (Some(a), Some(b)) => Some(a.add(&b)),
                    _ => None,
                };
                latency_s += second.latency_s;
                answer = crate::domain::parse_answer_letter(&second.raw_text);
                raw_text = second.raw_text;
            }
            Err(err) => {
                // keep the first reply; the retry failure is recorded
                error = Some(err.to_string());
            }
        }
    }

    let cost_usd = usage
        .as_ref()
        .and_then(|u| opts.prices.rate(&model.key).map(|rate| stage_cost(u, rate)));
    StageTrace {
        model_key: model.key.clone(),
        raw_text,
        answer,
        usage,
        latency_s,
        cost_usd,
        attempts,
        error,
    }
}

fn failed_stage(model: &ModelId, error: String, attempts: u32) -> StageTrace {
    StageTrace {
        model_key: model.key.clone(),
        raw_text: String::new(),
        answer: None,
        usage: None,
        latency_s: 0.0,
        cost_usd: None,
        attempts,
        error: Some(error),
    }
}
