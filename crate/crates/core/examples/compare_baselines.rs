//! Every algorithm on one synthetic dataset, averaged over a few seeds.
//!
//!     cargo run --release --example compare_baselines

use opaque_topk::bandit::LatencyModel;
use opaque_topk::harness::metrics::score_table;
use opaque_topk::harness::{
    gen_synthetic, run_experiment, Algorithm, DatasetScorer, ExperimentConfig, GroundTruth,
    PreparedIndex, ScorerKind, SyntheticSpec,
};
use opaque_topk::QueryParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = gen_synthetic(&SyntheticSpec::new(20, 1000, 11))?;
    let index = PreparedIndex::build(&data, 20, None, 11)?;
    let k = 50;
    let mut plugin = DatasetScorer::new(&data.records, ScorerKind::Relu)?;
    let truth = GroundTruth::from_table(score_table(&data, &mut plugin, 512)?, k);
    let params = QueryParams {
        k,
        // pretend each score costs 2 ms so fallback decisions match a slow model
        latency: LatencyModel::Fixed {
            scorer_seconds: 2e-3,
            overhead_seconds: 2e-5,
        },
        ..QueryParams::default()
    };
    let marks = [500, 2000, 5000, 10000];
    print!("{:<22}", "algorithm");
    for t in marks {
        print!("{:>12}", format!("t={t}"));
    }
    println!("   (optimum {:.1})", truth.optimal_stk);
    for alg in Algorithm::all() {
        let config = ExperimentConfig::new(alg, params.clone(), 5);
        let summary = run_experiment(&config, &index, &truth, &mut plugin, &mut |_| Ok(()))?;
        print!("{:<22}", alg.name());
        for t in marks {
            let at = summary.checkpoints.iter().rfind(|c| c.t <= t);
            print!(
                "{:>12}",
                at.map_or("-".into(), |c| format!("{:.1}", c.stk_mean))
            );
        }
        println!();
    }
    Ok(())
}
