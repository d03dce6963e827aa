//! Aggregate statistics over trace records: accuracy, planner error
//! rates, repair/harm rates, cost, and token/latency medians.
//!
//! All aggregation is pure and order-independent; money stays in fixed
//! point end to end, and percentages are rounded half-up to two decimals
//! at the reporting boundary.

pub mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::domain::{PriceRate, Regime, StageRole, TokenUsage, TraceRecord, Usd};
use crate::runner::{read_traces, RunManifest, TraceFileError};

/// A percentage carried as integer hundredths (two decimals, exact).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percent(i64);

impl Percent {
    pub const ZERO: Percent = Percent(0);

    /// `100 * count / total`, rounded half-up to two decimals.
    pub fn from_ratio(count: u64, total: u64) -> Percent {
        assert!(total > 0, "ratio denominator must be positive");
        // round-half-up(100 * count / total * 100) in integer arithmetic
        let numer = count as u128 * 10_000 * 2 + total as u128;
        Percent((numer / (2 * total as u128)) as i64)
    }

    pub fn from_hundredths(hundredths: i64) -> Percent {
        Percent(hundredths)
    }

    pub fn hundredths(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Signed difference `self - baseline` at exact two-decimal precision.
    pub fn delta_from(self, baseline: Percent) -> Percent {
        Percent(self.0 - baseline.0)
    }

    /// "+19.78" / "-2.28" / "0.00" as printed in delta columns.
    pub fn fmt_signed(self) -> String {
        match self.0.signum() {
            1 => format!("+{self}"),
            _ => format!("{self}"),
        }
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("cannot compute metrics over an empty trace set")]
    EmptyTraceSet,
    #[error("run directory {0} has no manifest.json")]
    MissingManifest(String),
    #[error("malformed manifest: {0}")]
    BadManifest(String),
    #[error(transparent)]
    TraceFile(#[from] TraceFileError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// One run's manifest plus its traces: the unit the report layer consumes.
#[derive(Debug, Clone)]
pub struct RunBundle {
    pub manifest: RunManifest,
    pub traces: Vec<TraceRecord>,
}

impl RunBundle {
    /// Load `manifest.json` + the trace file from a run output directory.
    pub fn load(dir: &Path) -> Result<Self, MetricsError> {
        let manifest_path = dir.join("manifest.json");
        if !manifest_path.exists() {
            return Err(MetricsError::MissingManifest(dir.display().to_string()));
        }
        let manifest = RunManifest::load(&manifest_path)
            .map_err(|e| MetricsError::BadManifest(e.to_string()))?;
        let traces = read_traces(&dir.join(&manifest.trace_file))?;
        Ok(RunBundle { manifest, traces })
    }
}

/// Recompute every stage cost from recorded usage under a different price
/// sheet (used by `report --prices`). Stages without usage or without a
/// rate row become cost-unavailable.
pub fn reprice(bundle: &mut RunBundle, prices: &crate::domain::PriceSheet) {
    for trace in &mut bundle.traces {
        for stage in trace.stages_mut() {
            stage.cost_usd = stage.usage.and_then(|usage| {
                prices
                    .rate(&stage.model_key)
                    .map(|rate| stage_cost(&usage, rate))
            });
        }
    }
    bundle.manifest.price_sheet_sha256 = prices.sha256();
}

/// Itemwise cost of one stage: `prompt/1000 * R_in + completion/1000 * R_out`,
/// computed exactly in fixed point.
pub fn stage_cost(usage: &TokenUsage, rate: &PriceRate) -> Usd {
    let nanos = usage.prompt_tokens as i128 * rate.input_per_token_nanos() as i128
        + usage.completion_tokens as i128 * rate.output_per_token_nanos() as i128;
    Usd::from_nanos(i64::try_from(nanos).expect("stage cost fits i64 nanos"))
}

/// Sum of the costs incurred by each stage of one item. `None` when any
/// present stage is missing usage or pricing (excluded from medians,
/// counted in coverage).
pub fn pipeline_cost(trace: &TraceRecord) -> Option<Usd> {
    let mut total = Usd::ZERO;
    for stage in trace.stages() {
        total += stage.cost_usd?;
    }
    Some(total)
}

/// Percentage of traces whose final answer equals gold.
pub fn accuracy<'a, I>(traces: I) -> Result<Percent, MetricsError>
where
    I: IntoIterator<Item = &'a TraceRecord>,
{
    let mut total = 0u64;
    let mut correct = 0u64;
    for trace in traces {
        total += 1;
        if trace.is_correct() {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(MetricsError::EmptyTraceSet);
    }
    Ok(Percent::from_ratio(correct, total))
}

/// Planner reliability aggregated over pipeline runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannerErrorRow {
    pub model_key: String,
    pub dataset: String,
    /// Dataset size summed over every pipeline config where the model
    /// held the planner role.
    pub total_cases: u64,
    pub errors: u64,
    pub rate: Percent,
}

/// Group pipeline bundles by (planner model, dataset) and count
/// planner_error flags. Baseline bundles are ignored.
pub fn planner_error_rates(bundles: &[RunBundle]) -> Vec<PlannerErrorRow> {
    let mut groups: BTreeMap<(String, String), (u64, u64)> = BTreeMap::new();
    for bundle in bundles {
        if !bundle.manifest.regime.is_pipeline() {
            continue;
        }
        let key = (
            bundle.manifest.planner.key.clone(),
            bundle.manifest.dataset_name.clone(),
        );
        let entry = groups.entry(key).or_default();
        entry.0 += bundle.manifest.item_count as u64;
        entry.1 += bundle
            .traces
            .iter()
            .filter(|t| t.flags.planner_error)
            .count() as u64;
    }
    groups
        .into_iter()
        .map(
            |((model_key, dataset), (total_cases, errors))| PlannerErrorRow {
                model_key,
                dataset,
                total_cases,
                errors,
                rate: if total_cases == 0 {
                    Percent::ZERO
                } else {
                    Percent::from_ratio(errors, total_cases)
                },
            },
        )
        .collect()
}

/// Repair/harm behavior for one (model, mid-stream role) pair.
///
/// Raw rates divide by every case where the model occupied the role (the
/// headline figure); conditional rates divide by the eligible cases only
/// (upstream wrong for repair, upstream right for harm) and are
/// undefined rather than zero when no case was eligible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleBehaviorRow {
    pub model_key: String,
    pub role: StageRole,
    pub total_cases: u64,
    pub repair_count: u64,
    pub harm_count: u64,
    pub eligible_repair_cases: u64,
    pub eligible_harm_cases: u64,
    pub repair_rate_raw: Percent,
    pub harm_rate_raw: Percent,
    pub repair_rate_conditional: Option<Percent>,
    pub harm_rate_conditional: Option<Percent>,
}

#[derive(Default)]
struct RoleTally {
    total: u64,
    repairs: u64,
    harms: u64,
    eligible_repair: u64,
    eligible_harm: u64,
}

/// Aggregate repair/harm rates per (model, role) over pipeline traces.
pub fn repair_harm_rates(bundles: &[RunBundle]) -> Vec<RoleBehaviorRow> {
    let mut groups: BTreeMap<(String, StageRole), RoleTally> = BTreeMap::new();
    for bundle in bundles {
        if !bundle.manifest.regime.is_pipeline() {
            continue;
        }
        for trace in &bundle.traces {
            let (executor, critic) = match (&trace.executor, &trace.critic) {
                (Some(e), Some(c)) => (e, c),
                _ => continue,
            };
            let gold = Some(trace.gold);

            let tally = groups
                .entry((executor.model_key.clone(), StageRole::Executor))
                .or_default();
            tally.total += 1;
            tally.repairs += trace.flags.executor_repair as u64;
            tally.harms += trace.flags.executor_harm as u64;
            if trace.planner.answer == gold {
                tally.eligible_harm += 1;
            } else {
                tally.eligible_repair += 1;
            }

            let tally = groups
                .entry((critic.model_key.clone(), StageRole::Critic))
                .or_default();
            tally.total += 1;
            tally.repairs += trace.flags.critic_repair as u64;
            tally.harms += trace.flags.critic_harm as u64;
            if executor.answer == gold {
                tally.eligible_harm += 1;
            } else {
                tally.eligible_repair += 1;
            }
        }
    }
    groups
        .into_iter()
        .map(|((model_key, role), tally)| {
            let conditional = |count: u64, eligible: u64| {
                (eligible > 0).then(|| Percent::from_ratio(count, eligible))
            };
            RoleBehaviorRow {
                model_key,
                role,
                total_cases: tally.total,
                repair_count: tally.repairs,
                harm_count: tally.harms,
                eligible_repair_cases: tally.eligible_repair,
                eligible_harm_cases: tally.eligible_harm,
                repair_rate_raw: Percent::from_ratio(tally.repairs, tally.total),
                harm_rate_raw: Percent::from_ratio(tally.harms, tally.total),
                repair_rate_conditional: conditional(tally.repairs, tally.eligible_repair),
                harm_rate_conditional: conditional(tally.harms, tally.eligible_harm),
            }
        })
        .collect()
}

/// Lower median: for even counts, the smaller of the two central values.
pub fn lower_median<T: Copy, F: FnMut(&T, &T) -> std::cmp::Ordering>(
    values: &[T],
    mut cmp: F,
) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(&mut cmp);
    Some(sorted[(sorted.len() - 1) / 2])
}

pub fn lower_median_u64(values: &[u64]) -> Option<u64> {
    lower_median(values, u64::cmp)
}

pub fn lower_median_usd(values: &[Usd]) -> Option<Usd> {
    lower_median(values, Usd::cmp)
}

pub fn lower_median_f64(values: &[f64]) -> Option<f64> {
    lower_median(values, |a, b| a.total_cmp(b))
}

/// Token/cost/latency aggregates for one model within one run.
#[derive(Debug, Clone)]
pub struct ModelCostRow {
    pub run_id: String,
    pub label: String,
    pub regime: Regime,
    pub dataset: String,
    pub model_key: String,
    /// Stage occupations by this model (attempts aggregate inside a stage).
    pub invocations: u64,
    /// Stage occupations that reported usage (and had a price row).
    pub usage_covered: u64,
    pub total_prompt_tokens: u64,
    pub total_completion_tokens: u64,
    pub total_cost: Usd,
    pub median_cost: Option<Usd>,
    pub median_latency_s: f64,
    pub median_prompt_tokens: Option<u64>,
    pub median_completion_tokens: Option<u64>,
}

/// Whole-item aggregates for one run.
#[derive(Debug, Clone)]
pub struct RunCostRow {
    pub run_id: String,
    pub label: String,
    pub regime: Regime,
    pub dataset: String,
    pub items: u64,
    /// Items for which every stage had a computable cost.
    pub items_with_cost: u64,
    pub total_cost: Usd,
    pub median_item_cost: Option<Usd>,
    pub median_item_latency_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CostReport {
    pub per_model: Vec<ModelCostRow>,
    pub per_run: Vec<RunCostRow>,
}

pub fn cost_report(bundles: &[RunBundle]) -> CostReport {
    let mut per_model = Vec::new();
    let mut per_run = Vec::new();

    for bundle in bundles {
        let manifest = &bundle.manifest;
        let mut stages_by_model: BTreeMap<String, Vec<&crate::domain::StageTrace>> =
            BTreeMap::new();
        for trace in &bundle.traces {
            for stage in trace.stages() {
                stages_by_model
                    .entry(stage.model_key.clone())
                    .or_default()
                    .push(stage);
            }
        }
        for (model_key, stages) in stages_by_model {
            let mut costs = Vec::new();
            let mut latencies = Vec::new();
            let mut prompts = Vec::new();
            let mut completions = Vec::new();
            let mut total_prompt = 0u64;
            let mut total_completion = 0u64;
            let mut total_cost = Usd::ZERO;
            let mut covered = 0u64;
            for stage in &stages {
                latencies.push(stage.latency_s);
                if let Some(usage) = &stage.usage {
                    total_prompt += usage.prompt_tokens;
                    total_completion += usage.completion_tokens;
                    prompts.push(usage.prompt_tokens);
                    completions.push(usage.completion_tokens);
                }
                if let Some(cost) = stage.cost_usd {
                    covered += 1;
                    total_cost += cost;
                    costs.push(cost);
                }
            }
            per_model.push(ModelCostRow {
                run_id: manifest.run_id.clone(),
                label: manifest.label.clone(),
                regime: manifest.regime,
                dataset: manifest.dataset_name.clone(),
                model_key,
                invocations: stages.len() as u64,
                usage_covered: covered,
                total_prompt_tokens: total_prompt,
                total_completion_tokens: total_completion,
                total_cost,
                median_cost: lower_median_usd(&costs),
                median_latency_s: lower_median_f64(&latencies).unwrap_or(0.0),
                median_prompt_tokens: lower_median_u64(&prompts),
                median_completion_tokens: lower_median_u64(&completions),
            });
        }

        let mut item_costs = Vec::new();
        let mut item_latencies = Vec::new();
        let mut total_cost = Usd::ZERO;
        for trace in &bundle.traces {
            item_latencies.push(trace.total_latency_s());
            if let Some(cost) = pipeline_cost(trace) {
                total_cost += cost;
                item_costs.push(cost);
            }
        }
        per_run.push(RunCostRow {
            run_id: manifest.run_id.clone(),
            label: manifest.label.clone(),
            regime: manifest.regime,
            dataset: manifest.dataset_name.clone(),
            items: bundle.traces.len() as u64,
            items_with_cost: item_costs.len() as u64,
            total_cost,
            median_item_cost: lower_median_usd(&item_costs),
            median_item_latency_s: lower_median_f64(&item_latencies).unwrap_or(0.0),
        });
    }

    CostReport { per_model, per_run }
}
