//! A full experiment written the way the CLI does it: metric rows as CSV and
//! a JSON summary with checkpoint means.
//!
//!     cargo run --release --example experiment_csv -- /tmp/topk-out

use std::path::PathBuf;

use opaque_topk::bandit::LatencyModel;
use opaque_topk::harness::experiment::{read_rows, CsvSink};
use opaque_topk::harness::{
    gen_synthetic, run_experiment, Algorithm, DatasetScorer, ExperimentConfig, GroundTruth,
    GroundTruthCache, PreparedIndex, ScorerKind, SyntheticSpec,
};
use opaque_topk::QueryParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("topk-example"), PathBuf::from);
    std::fs::create_dir_all(&out)?;

    let data = gen_synthetic(&SyntheticSpec::new(10, 1000, 1))?;
    data.save(out.join("data.jsonl"))?;
    let index = PreparedIndex::build(&data, 10, None, 1)?;
    index.index.save(out.join("index.json"))?;

    let scorer = ScorerKind::Relu;
    let mut plugin = DatasetScorer::new(&data.records, scorer.clone())?;
    // the full score table is cached by dataset and scorer
    let table =
        GroundTruthCache::new(out.join("truth")).load_or_score(&data, &scorer, &mut plugin)?;
    let truth = GroundTruth::from_table(table, 20);

    let params = QueryParams {
        k: 20,
        seed: 100,
        latency: LatencyModel::Fixed {
            scorer_seconds: 2e-3,
            overhead_seconds: 2e-5,
        },
        ..QueryParams::default()
    };
    let config = ExperimentConfig {
        max_iterations: Some(3000),
        ..ExperimentConfig::new(Algorithm::Ours, params, 5)
    };
    let csv_path = out.join("ours.csv");
    let mut sink = CsvSink::create(&csv_path)?;
    let summary = run_experiment(&config, &index, &truth, &mut plugin, &mut |row| {
        sink.write(row)
    })?;
    sink.finish()?;
    summary.save(out.join("ours.summary.json"))?;

    let rows = read_rows(std::fs::File::open(&csv_path)?)?;
    println!("{} rows in {}", rows.len(), csv_path.display());
    for c in summary.checkpoints.iter().step_by(5) {
        println!(
            "t={:>5}  stk {:8.2} +- {:6.2}  precision {:.2}",
            c.t, c.stk_mean, c.stk_std, c.precision_mean
        );
    }
    Ok(())
}
