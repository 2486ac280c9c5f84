use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use opaque_topk::bandit::{LatencyModel, QueryParams};
use opaque_topk::harness::experiment::CsvSink;
use opaque_topk::harness::metrics::score_table;
use opaque_topk::harness::verify::{run_verification, VerifyConfig};
use opaque_topk::harness::{
    gen_synthetic, run_experiment, Algorithm, Dataset, DatasetScorer, ExperimentConfig,
    GroundTruth, GroundTruthCache, HarnessError, PreparedIndex, ScorerKind, SyntheticSpec,
};
use opaque_topk::index::{build_index, Index};

#[derive(Parser)]
#[command(
    name = "topk",
    version,
    about = "Anytime approximate top-k over opaque scoring functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate datasets.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Build and inspect cluster indexes.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Run queries and experiments.
    #[command(subcommand)]
    Query(QueryCommand),
    /// Run the property and estimator checks and print a JSON report.
    Verify(VerifyArgs),
}

#[derive(Subcommand)]
enum GenCommand {
    /// Clustered normal data, one JSONL record per element.
    Synthetic(SyntheticArgs),
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 20)]
    clusters: usize,
    #[arg(long, default_value_t = 2500)]
    per_cluster: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw every cluster from N(MU, SIGMA) instead, as "MU,SIGMA".
    #[arg(long, value_name = "MU,SIGMA")]
    shared: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum IndexCommand {
    /// k-means over the dataset vectors plus an average-linkage tree.
    Build(IndexBuildArgs),
}

#[derive(Args)]
struct IndexBuildArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 20)]
    leaves: usize,
    /// Cluster a random subsample of this size, then assign every element.
    #[arg(long)]
    subsample: Option<usize>,
    /// Group by the dataset's `label` field instead of running k-means.
    #[arg(long)]
    by_label: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum QueryCommand {
    /// Repeated runs of one algorithm; writes a metrics CSV and a summary JSON.
    Run(QueryRunArgs),
}

#[derive(Args)]
struct QueryRunArgs {
    #[arg(long)]
    data: PathBuf,
    /// Prebuilt index; when absent one is built with --leaves.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    leaves: usize,
    #[arg(long, default_value = "OURS")]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 8)]
    bucket_count: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1.1)]
    beta: f64,
    #[arg(long, default_value_t = 0.01)]
    fallback_freq: f64,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    max_seconds: Option<f64>,
    /// relu, noop, constant[:V], or a shell command speaking the JSON line protocol.
    #[arg(long, default_value = "relu")]
    scorer: ScorerKind,
    /// `measured`, or `fixed:SCORER_SECONDS,OVERHEAD_SECONDS` for reproducible fallback decisions.
    #[arg(long, default_value = "measured", value_parser = parse_latency)]
    latency: LatencyModel,
    /// Directory caching full score tables for ground truth.
    #[arg(long)]
    truth_cache: Option<PathBuf>,
    /// Metrics CSV; the summary goes next to it as `<stem>.summary.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Smaller instances.
    #[arg(long)]
    quick: bool,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_latency(s: &str) -> Result<LatencyModel, String> {
    if s.eq_ignore_ascii_case("measured") {
        return Ok(LatencyModel::Measured);
    }
    let body = s
        .strip_prefix("fixed:")
        .ok_or_else(|| format!("expected `measured` or `fixed:S,O`, got {s}"))?;
    let (a, b) = body
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated seconds in {s}"))?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x}: {e}"));
    Ok(LatencyModel::Fixed {
        scorer_seconds: num(a)?,
        overhead_seconds: num(b)?,
    })
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("results");
    out.with_file_name(format!("{stem}.summary.json"))
}

fn gen(args: SyntheticArgs) -> Result<(), HarnessError> {
    let mut spec = SyntheticSpec::new(args.clusters, args.per_cluster, args.seed);
    if let Some(shared) = args.shared {
        let (mu, sigma) = shared
            .split_once(',')
            .and_then(|(m, s)| Some((m.trim().parse().ok()?, s.trim().parse().ok()?)))
            .ok_or_else(|| {
                HarnessError::Config(format!("--shared expects MU,SIGMA, got {shared}"))
            })?;
        spec.shared = Some((mu, sigma));
    }
    let data = gen_synthetic(&spec)?;
    data.save(&args.out)?;
    eprintln!("wrote {} records to {}", data.len(), args.out.display());
    Ok(())
}

fn build(args: IndexBuildArgs) -> Result<(), HarnessError> {
    let data = Dataset::load(&args.data)?;
    let started = Instant::now();
    let index = if args.by_label {
        data.label_index()?
    } else {
        build_index(&data.points(), args.leaves, args.subsample, args.seed)?
    };
    let seconds = started.elapsed().as_secs_f64();
    index.save(&args.out)?;
    println!(
        "{}",
        serde_json::json!({
            "index": args.out,
            "leaf_count": index.leaf_count,
            "dataset_size": index.dataset_size,
            "depth": index.depth(),
            "build_seconds": seconds,
        })
    );
    Ok(())
}

fn query(args: QueryRunArgs) -> Result<(), HarnessError> {
    let data = Dataset::load(&args.data)?;
    let index = match &args.index {
        Some(path) => PreparedIndex::prebuilt(Index::load(path)?),
        None => PreparedIndex::build(&data, args.leaves, None, args.seed)?,
    };
    let params = QueryParams {
        k: args.k,
        bucket_count: args.bucket_count,
        alpha: args.alpha,
        beta: args.beta,
        fallback_frequency: args.fallback_freq,
        batch_size: args.batch_size,
        seed: args.seed,
        latency: args.latency,
        ..QueryParams::default()
    };
    params.validate()?;
    let mut plugin = DatasetScorer::new(&data.records, args.scorer.clone())?;
    let table = match &args.truth_cache {
        Some(dir) => GroundTruthCache::new(dir).load_or_score(&data, &args.scorer, &mut plugin)?,
        None => score_table(&data, &mut plugin, 256)?,
    };
    let truth = GroundTruth::from_table(table, args.k);
    let config = ExperimentConfig {
        max_iterations: args.max_iters,
        max_seconds: args.max_seconds,
        ..ExperimentConfig::new(args.algorithm, params, args.reps)
    };
    let mut sink = CsvSink::create(&args.out)?;
    let summary = run_experiment(&config, &index, &truth, &mut plugin, &mut |row| {
        sink.write(row)
    })?;
    sink.finish()?;
    let summary_file = summary_path(&args.out);
    summary.save(&summary_file)?;
    let finals: Vec<f64> = summary.runs.iter().map(|r| r.final_stk).collect();
    let (mean, _) = opaque_topk::harness::experiment::mean_std(&finals);
    eprintln!(
        "{}: {} runs, mean final stk {:.4} (optimal {:.4}); rows in {}, summary in {}",
        summary.algorithm,
        summary.repetitions,
        mean,
        summary.optimal_stk,
        args.out.display(),
        summary_file.display()
    );
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<bool, HarnessError> {
    let report = run_verification(&VerifyConfig {
        seed: args.seed,
        quick: args.quick,
    })?;
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &args.out {
        std::fs::write(path, format!("{text}\n"))?;
    }
    println!("{text}");
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(GenCommand::Synthetic(a)) => gen(a).map(|_| true),
        Command::Index(IndexCommand::Build(a)) => build(a).map(|_| true),
        Command::Query(QueryCommand::Run(a)) => query(a).map(|_| true),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
