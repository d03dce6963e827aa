//! Report tables over run bundles, emitted as CSV files plus one combined
//! Markdown document: baseline performance, simple-vs-accountable deltas,
//! planner error rates, repair/harm rates, cost aggregates, and the
//! config-point CSV the Pareto tooling consumes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::domain::{Regime, Usd};

use super::{
    accuracy, cost_report, planner_error_rates, repair_harm_rates, MetricsError, Percent, RunBundle,
};

/// Baseline table row: one model over one dataset.
#[derive(Debug, Clone)]
pub struct BaselineRow {
    pub dataset: String,
    pub model_key: String,
    pub display_name: String,
    pub accuracy: Percent,
    pub median_latency_s: f64,
    pub median_cost: Option<Usd>,
}

pub fn baseline_rows(bundles: &[RunBundle]) -> Result<Vec<BaselineRow>, MetricsError> {
    let mut rows = Vec::new();
    for bundle in bundles {
        if bundle.manifest.regime != Regime::Baseline {
            continue;
        }
        let costs: Vec<Usd> = bundle
            .traces
            .iter()
            .filter_map(super::pipeline_cost)
            .collect();
        let latencies: Vec<f64> = bundle.traces.iter().map(|t| t.total_latency_s()).collect();
        rows.push(BaselineRow {
            dataset: bundle.manifest.dataset_name.clone(),
            model_key: bundle.manifest.planner.key.clone(),
            display_name: bundle.manifest.planner.display_name.clone(),
            accuracy: accuracy(&bundle.traces)?,
            median_latency_s: super::lower_median_f64(&latencies).unwrap_or(0.0),
            median_cost: super::lower_median_usd(&costs),
        });
    }
    rows.sort_by(|a, b| (&a.dataset, &a.model_key).cmp(&(&b.dataset, &b.model_key)));
    Ok(rows)
}

/// Simple-vs-accountable comparison row for one (dataset, label).
#[derive(Debug, Clone)]
pub struct DeltaRow {
    pub dataset: String,
    pub label: String,
    pub simple: Option<Percent>,
    pub accountable: Option<Percent>,
    /// accountable - simple, defined when both sides ran.
    pub delta: Option<Percent>,
}

pub fn delta_rows(bundles: &[RunBundle]) -> Result<Vec<DeltaRow>, MetricsError> {
    let mut groups: BTreeMap<(String, String), (Option<Percent>, Option<Percent>)> =
        BTreeMap::new();
    for bundle in bundles {
        let slot = match bundle.manifest.regime {
            Regime::Simple => 0,
            Regime::Accountable => 1,
            Regime::Baseline => continue,
        };
        let key = (
            bundle.manifest.dataset_name.clone(),
            bundle.manifest.label.clone(),
        );
        let acc = accuracy(&bundle.traces)?;
        let entry = groups.entry(key).or_default();
        if slot == 0 {
            entry.0 = Some(acc);
        } else {
            entry.1 = Some(acc);
        }
    }
    Ok(groups
        .into_iter()
        .map(|((dataset, label), (simple, accountable))| DeltaRow {
            dataset,
            label,
            simple,
            accountable,
            delta: match (simple, accountable) {
                (Some(s), Some(a)) => Some(a.delta_from(s)),
                _ => None,
            },
        })
        .collect())
}

/// Pareto input row: one pipeline run's aggregate coordinates.
#[derive(Debug, Clone)]
pub struct ConfigPointRow {
    pub dataset: String,
    pub regime: Regime,
    pub label: String,
    pub accuracy: Percent,
    pub median_cost: Option<Usd>,
    pub median_latency_s: f64,
}

pub fn config_point_rows(bundles: &[RunBundle]) -> Result<Vec<ConfigPointRow>, MetricsError> {
    let mut rows = Vec::new();
    for bundle in bundles {
        if !bundle.manifest.regime.is_pipeline() {
            continue;
        }
        let costs: Vec<Usd> = bundle
            .traces
            .iter()
            .filter_map(super::pipeline_cost)
            .collect();
        let latencies: Vec<f64> = bundle.traces.iter().map(|t| t.total_latency_s()).collect();
        rows.push(ConfigPointRow {
            dataset: bundle.manifest.dataset_name.clone(),
            regime: bundle.manifest.regime,
            label: bundle.manifest.label.clone(),
            accuracy: accuracy(&bundle.traces)?,
            median_cost: super::lower_median_usd(&costs),
            median_latency_s: super::lower_median_f64(&latencies).unwrap_or(0.0),
        });
    }
    rows.sort_by(|a, b| {
        (&a.dataset, a.regime.name(), &a.label).cmp(&(&b.dataset, b.regime.name(), &b.label))
    });
    Ok(rows)
}

fn opt_usd(value: &Option<Usd>) -> String {
    value.map(|v| v.to_decimal_string()).unwrap_or_default()
}

fn opt_pct(value: &Option<Percent>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Paths of everything `write_all` produced.
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub markdown: PathBuf,
    pub csv_files: Vec<PathBuf>,
}

/// Emit every table as CSV plus a combined Markdown report into `out_dir`.
pub fn write_all(bundles: &[RunBundle], out_dir: &Path) -> Result<ReportPaths, MetricsError> {
    std::fs::create_dir_all(out_dir)?;
    let mut csv_files = Vec::new();
    let mut md = String::new();
    md.push_str("# Run report\n");

    let baselines = baseline_rows(bundles)?;
    if !baselines.is_empty() {
        let path = out_dir.join("baseline.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "dataset",
            "model_key",
            "display_name",
            "accuracy",
            "median_latency_s",
            "median_cost_usd",
        ])?;
        for row in &baselines {
            w.write_record([
                row.dataset.as_str(),
                row.model_key.as_str(),
                row.display_name.as_str(),
                &row.accuracy.to_string(),
                &format!("{:.3}", row.median_latency_s),
                &opt_usd(&row.median_cost),
            ])?;
        }
        w.flush()?;
        csv_files.push(path);

        md.push_str("\n## Baseline performance of single models\n\n");
        md.push_str(
            "| Dataset | Model | Accuracy (%) | Median latency (s) | Median cost/prompt (USD) |\n",
        );
        md.push_str("|---|---|---|---|---|\n");
        for row in &baselines {
            let _ = writeln!(
                md,
                "| {} | {} ({}) | {} | {:.3} | {} |",
                row.dataset,
                row.display_name,
                row.model_key,
                row.accuracy,
                row.median_latency_s,
                opt_usd(&row.median_cost),
            );
        }
    }

    let deltas = delta_rows(bundles)?;
    if !deltas.is_empty() {
        let path = out_dir.join("pipeline_delta.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "dataset",
            "config",
            "simple_accuracy",
            "accountable_accuracy",
            "accuracy_delta",
        ])?;
        for row in &deltas {
            w.write_record([
                row.dataset.as_str(),
                row.label.as_str(),
                &opt_pct(&row.simple),
                &opt_pct(&row.accountable),
                &row.delta.map(|d| d.fmt_signed()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        csv_files.push(path);

        md.push_str("\n## Simple vs. accountable pipeline accuracy\n\n");
        md.push_str("| Dataset | Config | Simple | Accountable | Delta |\n");
        md.push_str("|---|---|---|---|---|\n");
        for row in &deltas {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                row.dataset,
                row.label,
                opt_pct(&row.simple),
                opt_pct(&row.accountable),
                row.delta.map(|d| d.fmt_signed()).unwrap_or_default(),
            );
        }
    }

    let planner_rows = planner_error_rates(bundles);
    if !planner_rows.is_empty() {
        let path = out_dir.join("planner_error_rate.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "planner_model",
            "dataset",
            "total_cases",
            "errors_introduced",
            "error_rate",
        ])?;
        for row in &planner_rows {
            w.write_record([
                row.model_key.as_str(),
                row.dataset.as_str(),
                &row.total_cases.to_string(),
                &row.errors.to_string(),
                &row.rate.to_string(),
            ])?;
        }
        w.flush()?;
        csv_files.push(path);

        md.push_str("\n## Planner error rate by model and dataset\n\n");
        md.push_str(
            "| Planner model | Dataset | Total cases | Errors introduced | Error rate (%) |\n",
        );
        md.push_str("|---|---|---|---|---|\n");
        for row in &planner_rows {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                row.model_key, row.dataset, row.total_cases, row.errors, row.rate,
            );
        }
    }

    let behavior_rows = repair_harm_rates(bundles);
    if !behavior_rows.is_empty() {
        let path = out_dir.join("repair_harm_rates.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "model_key",
            "role",
            "total_cases",
            "repair_count",
            "harm_count",
            "repair_rate_raw",
            "harm_rate_raw",
            "eligible_repair_cases",
            "eligible_harm_cases",
            "repair_rate_conditional",
            "harm_rate_conditional",
        ])?;
        for row in &behavior_rows {
            w.write_record([
                row.model_key.as_str(),
                row.role.name(),
                &row.total_cases.to_string(),
                &row.repair_count.to_string(),
                &row.harm_count.to_string(),
                &row.repair_rate_raw.to_string(),
                &row.harm_rate_raw.to_string(),
                &row.eligible_repair_cases.to_string(),
                &row.eligible_harm_cases.to_string(),
                &opt_pct(&row.repair_rate_conditional),
                &opt_pct(&row.harm_rate_conditional),
            ])?;
        }
        w.flush()?;
        csv_files.push(path);

        md.push_str(
            "\n## Role-specific repair and harm rates (raw; conditional in parentheses)\n\n",
        );
        md.push_str("| Model | Role | Repair rate (%) | Harm rate (%) |\n");
        md.push_str("|---|---|---|---|\n");
        for row in &behavior_rows {
            let _ = writeln!(
                md,
                "| {} | {} | {} ({}) | {} ({}) |",
                row.model_key,
                row.role,
                row.repair_rate_raw,
                row.repair_rate_conditional
                    .map(|p| p.to_string())
                    .unwrap_or_else(|| "undefined".to_string()),
                row.harm_rate_raw,
                row.harm_rate_conditional
                    .map(|p| p.to_string())
                    .unwrap_or_else(|| "undefined".to_string()),
            );
        }
    }

    let costs = cost_report(bundles);
    if !costs.per_run.is_empty() {
        let path = out_dir.join("cost_runs.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "run_id",
            "dataset",
            "regime",
            "config",
            "items",
            "items_with_cost",
            "total_cost_usd",
            "median_item_cost_usd",
            "median_item_latency_s",
        ])?;
        for row in &costs.per_run {
            w.write_record([
                row.run_id.as_str(),
                row.dataset.as_str(),
                row.regime.name(),
                row.label.as_str(),
                &row.items.to_string(),
                &row.items_with_cost.to_string(),
                &row.total_cost.to_decimal_string(),
                &opt_usd(&row.median_item_cost),
                &format!("{:.3}", row.median_item_latency_s),
            ])?;
        }
        w.flush()?;
        csv_files.push(path);
    }
    if !costs.per_model.is_empty() {
        let path = out_dir.join("cost_models.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "run_id",
            "dataset",
            "regime",
            "config",
            "model_key",
            "invocations",
            "usage_covered",
            "total_prompt_tokens",
            "total_completion_tokens",
            "total_cost_usd",
            "median_cost_usd",
            "median_latency_s",
            "median_prompt_tokens",
            "median_completion_tokens",
        ])?;
        for row in &costs.per_model {
            w.write_record([
                row.run_id.as_str(),
                row.dataset.as_str(),
                row.regime.name(),
                row.label.as_str(),
                row.model_key.as_str(),
                &row.invocations.to_string(),
                &row.usage_covered.to_string(),
                &row.total_prompt_tokens.to_string(),
                &row.total_completion_tokens.to_string(),
                &row.total_cost.to_decimal_string(),
                &opt_usd(&row.median_cost),
                &format!("{:.3}", row.median_latency_s),
                &row.median_prompt_tokens
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
                &row.median_completion_tokens
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        csv_files.push(path);
    }

    let points = config_point_rows(bundles)?;
    if !points.is_empty() {
        let path = out_dir.join("config_points.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "dataset",
            "regime",
            "label",
            "accuracy",
            "median_cost_usd",
            "median_latency_s",
        ])?;
        for row in &points {
            w.write_record([
                row.dataset.as_str(),
                row.regime.name(),
                row.label.as_str(),
                &row.accuracy.to_string(),
                &opt_usd(&row.median_cost),
                &format!("{:.3}", row.median_latency_s),
            ])?;
        }
        w.flush()?;
        csv_files.push(path);
    }

    let markdown = out_dir.join("report.md");
    std::fs::write(&markdown, md)?;
    Ok(ReportPaths {
        markdown,
        csv_files,
    })
}
