//! `triad` - run, trace, and analyze three-stage agent pipelines.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use triad_core::config::ExperimentConfig;
use triad_core::domain::{load_dataset, PriceSheet, Regime};
use triad_core::handoff::PromptTemplates;
use triad_core::metrics::{self, accuracy, RunBundle};
use triad_core::pareto;
use triad_core::runner::{run_baseline, run_pipeline, RunOptions, RunOutcome};
use triad_core::sim::{calibrate, SimOptions};

/// Exit code when item-level failures were recorded but the run finished.
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(
    name = "triad",
    version,
    about = "Sequential agent pipelines with blame attribution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSONL dataset file and report line-addressed problems.
    ValidateDataset {
        /// Dataset file (JSONL, one task per line).
        file: PathBuf,
    },
    /// Execute a regime over a dataset and persist manifest + traces.
    Run(RunArgs),
    /// Aggregate trace directories into CSV and Markdown tables.
    Report(ReportArgs),
    /// Compute the accuracy-vs-cost frontier from a config-point CSV.
    Pareto(ParetoArgs),
    /// Run the stochastic simulator and check it against closed form.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML: models, backends, pipeline, prices).
    #[arg(long)]
    config: PathBuf,
    /// Dataset file (JSONL).
    #[arg(long)]
    dataset: PathBuf,
    /// baseline, simple, or accountable.
    #[arg(long)]
    regime: Regime,
    /// Output directory for manifest.json and traces.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Worker count; defaults to the number of logical processors.
    #[arg(long, default_value_t = 0)]
    parallelism: usize,
    /// Continue a partially-written run in --out.
    #[arg(long)]
    resume: bool,
    /// Master seed for stochastic backends.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Price sheet TOML overriding the config's prices.
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// One or more run output directories.
    #[arg(long, num_args = 1.., required = true)]
    traces: Vec<PathBuf>,
    /// Recompute costs from recorded usage under this price sheet.
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Where to write the tables.
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(Args)]
struct ParetoArgs {
    /// Config-point CSV (label, accuracy, median_cost_usd, median_latency_s).
    #[arg(long)]
    report: PathBuf,
    /// Keep only rows whose dataset column matches (when present).
    #[arg(long)]
    dataset: Option<String>,
    /// Keep only rows whose regime column matches (when present).
    #[arg(long)]
    regime: Option<Regime>,
    /// Where to write frontier.csv and plot_data.csv.
    #[arg(long, default_value = "pareto")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Stochastic profiles in the experiment-config format.
    #[arg(long)]
    profiles: PathBuf,
    /// Synthetic dataset size.
    #[arg(long)]
    n: usize,
    /// Master seed; the whole simulation is a pure function of it.
    #[arg(long)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "sim-out")]
    out: PathBuf,
    /// Worker count; defaults to the number of logical processors.
    #[arg(long, default_value_t = 0)]
    parallelism: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::ValidateDataset { file } => {
            let (dataset, sha256) =
                load_dataset(&file).with_context(|| format!("validating {}", file.display()))?;
            println!(
                "ok: {} items in {:?} (sha256 {})",
                dataset.len(),
                dataset.name,
                &sha256[..12]
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(args) => run_command(args),
        Command::Report(args) => report_command(args),
        Command::Pareto(args) => pareto_command(args),
        Command::Simulate(args) => simulate_command(args),
    }
}

fn run_command(args: RunArgs) -> Result<ExitCode> {
    let config = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading config {}", args.config.display()))?;
    let (dataset, dataset_sha) = load_dataset(&args.dataset)
        .with_context(|| format!("loading dataset {}", args.dataset.display()))?;

    let mut opts = RunOptions::new(&args.out);
    opts.parallelism = args.parallelism;
    opts.resume = args.resume;
    opts.seed = args.seed;
    opts.prices = match &args.prices {
        Some(path) => PriceSheet::load(path)
            .with_context(|| format!("loading price sheet {}", path.display()))?,
        None => config.price_sheet(),
    };
    if let Some(dir) = &args.templates {
        opts.templates = PromptTemplates::load_overrides(dir)
            .with_context(|| format!("loading templates from {}", dir.display()))?;
    }

    let outcome = match args.regime {
        Regime::Baseline => {
            let model = config.baseline_model()?;
            let agent = config.build_agent(&model, args.seed)?;
            run_baseline(&model, agent, &dataset, &dataset_sha, &opts)?
        }
        regime => {
            let pipeline = config.pipeline_config(regime)?;
            let agents = config.pipeline_agents(&pipeline, args.seed)?;
            run_pipeline(&pipeline, agents, &dataset, &dataset_sha, &opts)?
        }
    };

    print_run_summary(&outcome)?;
    if outcome.manifest.item_error_count > 0 {
        eprintln!(
            "warning: {} item(s) recorded backend errors; see stage `error` fields in the traces",
            outcome.manifest.item_error_count
        );
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}

fn print_run_summary(outcome: &RunOutcome) -> Result<()> {
    let acc = accuracy(&outcome.traces)?;
    println!(
        "run {}: {} items ({} new), accuracy {}%, {} item error(s)",
        outcome.manifest.run_id,
        outcome.traces.len(),
        outcome.new_records,
        acc,
        outcome.manifest.item_error_count
    );
    Ok(())
}

fn report_command(args: ReportArgs) -> Result<ExitCode> {
    let prices = args
        .prices
        .as_ref()
        .map(|path| {
            PriceSheet::load(path)
                .with_context(|| format!("loading price sheet {}", path.display()))
        })
        .transpose()?;

    let mut bundles = Vec::new();
    for dir in &args.traces {
        let mut bundle =
            RunBundle::load(dir).with_context(|| format!("loading run from {}", dir.display()))?;
        if let Some(sheet) = &prices {
            metrics::reprice(&mut bundle, sheet);
        }
        bundles.push(bundle);
    }
    if bundles.is_empty() {
        bail!("no run directories supplied");
    }

    let paths = metrics::report::write_all(&bundles, &args.out)?;
    println!("wrote {}", paths.markdown.display());
    for path in &paths.csv_files {
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn pareto_command(args: ParetoArgs) -> Result<ExitCode> {
    // accept either the bare point schema or report's config_points.csv
    // with dataset/regime columns for filtering
    let rows = read_filtered_points(&args)?;
    if rows.is_empty() {
        bail!("no config points after filtering");
    }
    let frontier = pareto::frontier(&rows)?;
    std::fs::create_dir_all(&args.out)?;
    let frontier_path = args.out.join("frontier.csv");
    let plot_path = args.out.join("plot_data.csv");
    pareto::write_frontier_csv(&frontier, std::fs::File::create(&frontier_path)?)?;
    pareto::write_plot_csv(&rows, &frontier, std::fs::File::create(&plot_path)?)?;
    println!(
        "frontier: {} of {} configurations; wrote {} and {}",
        frontier.len(),
        rows.len(),
        frontier_path.display(),
        plot_path.display()
    );
    for point in &frontier {
        println!(
            "  {} accuracy {:.2}% cost {} latency {:.3}s",
            point.label, point.accuracy_pct, point.median_cost, point.median_latency_s
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn read_filtered_points(args: &ParetoArgs) -> Result<Vec<pareto::ConfigPoint>> {
    let text = std::fs::read_to_string(&args.report)
        .with_context(|| format!("reading {}", args.report.display()))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (label_i, acc_i, cost_i, lat_i) = match (
        col("label"),
        col("accuracy"),
        col("median_cost_usd"),
        col("median_latency_s"),
    ) {
        (Some(l), Some(a), Some(c), Some(t)) => (l, a, c, t),
        _ => bail!(
            "{} must have columns label, accuracy, median_cost_usd, median_latency_s",
            args.report.display()
        ),
    };
    let dataset_i = col("dataset");
    let regime_i = col("regime");

    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        let get = |i: usize| record.get(i).unwrap_or("");
        if let (Some(filter), Some(i)) = (&args.dataset, dataset_i) {
            if get(i) != filter {
                continue;
            }
        }
        if let (Some(filter), Some(i)) = (&args.regime, regime_i) {
            if get(i) != filter.name() {
                continue;
            }
        }
        let cost_text = get(cost_i);
        if cost_text.is_empty() {
            continue; // cost unavailable for this config; not plottable
        }
        let accuracy: f64 = get(acc_i)
            .parse()
            .with_context(|| format!("bad accuracy {:?}", get(acc_i)))?;
        let cost = triad_core::domain::Usd::parse(cost_text)
            .map_err(|e| anyhow::anyhow!("bad cost {cost_text:?}: {e}"))?;
        let latency: f64 = get(lat_i).parse().unwrap_or(0.0);
        points.push(pareto::ConfigPoint::new(
            get(label_i),
            accuracy,
            cost,
            latency,
        )?);
    }
    Ok(points)
}

fn simulate_command(args: SimulateArgs) -> Result<ExitCode> {
    let config = ExperimentConfig::load(&args.profiles)
        .with_context(|| format!("loading profiles {}", args.profiles.display()))?;
    let opts = SimOptions {
        out_dir: args.out.clone(),
        parallelism: args.parallelism,
    };
    let (report, outcome) = calibrate(&config, args.n, args.seed, &opts)?;

    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    std::fs::write(args.out.join("calibration.json"), json)?;
    let summary = report.summary();
    std::fs::write(args.out.join("calibration.txt"), &summary)?;
    print!("{summary}");

    if outcome.manifest.item_error_count > 0 {
        eprintln!(
            "warning: {} item error(s) during simulation",
            outcome.manifest.item_error_count
        );
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}
