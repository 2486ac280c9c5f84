use std::collections::HashMap;

use opaque_topk::bandit::{LatencyModel, QueryParams};
use opaque_topk::baselines::BaselineKind;
use opaque_topk::harness::experiment::{read_rows, write_rows, MetricRow};
use opaque_topk::harness::metrics::score_table;
use opaque_topk::harness::{
    gen_synthetic, run_experiment, Algorithm, Dataset, DatasetScorer, ExperimentConfig,
    ExperimentSummary, GroundTruth, PreparedIndex, ScorerKind, SyntheticSpec,
};

fn setup(seed: u64) -> (Dataset, PreparedIndex) {
    let data = gen_synthetic(&SyntheticSpec::new(6, 150, seed)).unwrap();
    let index = PreparedIndex::build(&data, 6, None, seed).unwrap();
    (data, index)
}

fn params(k: usize) -> QueryParams {
    QueryParams {
        k,
        latency: LatencyModel::Fixed {
            scorer_seconds: 2e-3,
            overhead_seconds: 2e-5,
        },
        ..QueryParams::default()
    }
}

fn collect(
    data: &Dataset,
    index: &PreparedIndex,
    config: &ExperimentConfig,
) -> (ExperimentSummary, Vec<MetricRow>, GroundTruth) {
    let mut plugin = DatasetScorer::new(&data.records, ScorerKind::Relu).unwrap();
    let truth = GroundTruth::from_table(
        score_table(data, &mut plugin, 100).unwrap(),
        config.params.k,
    );
    let mut rows = Vec::new();
    let summary = run_experiment(config, index, &truth, &mut plugin, &mut |r| {
        rows.push(r.clone());
        Ok(())
    })
    .unwrap();
    (summary, rows, truth)
}

#[test]
fn ours_runs_are_monotone_and_exhaust_to_optimum() {
    let (data, index) = setup(1);
    let config = ExperimentConfig::new(Algorithm::Ours, params(25), 5);
    let (summary, rows, truth) = collect(&data, &index, &config);
    for run in 0..5 {
        let mine: Vec<&MetricRow> = rows.iter().filter(|r| r.run_id == run).collect();
        assert!(mine
            .windows(2)
            .all(|w| w[0].stk <= w[1].stk && w[0].t < w[1].t));
        let last = mine.last().unwrap();
        assert_eq!(last.t, data.len());
        assert!((last.stk - truth.optimal_stk).abs() < 1e-9);
        assert_eq!(last.precision_at_k, 1.0);
    }
    assert!(summary.runs.iter().all(|r| r.complete));
    let seeds: Vec<u64> = summary.runs.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, vec![0, 1, 2, 3, 4]);
}

#[test]
fn summary_means_follow_from_the_csv() {
    let (data, index) = setup(2);
    let mut config = ExperimentConfig::new(Algorithm::Ours, params(10), 4);
    config.max_iterations = Some(300);
    let (summary, rows, _) = collect(&data, &index, &config);
    let bytes = write_rows(Vec::new(), &rows).unwrap();
    let parsed = read_rows(&bytes[..]).unwrap();
    assert_eq!(parsed, rows);

    let mut by_run: HashMap<usize, Vec<&MetricRow>> = HashMap::new();
    for r in &parsed {
        by_run.entry(r.run_id).or_default().push(r);
    }
    for c in &summary.checkpoints {
        // value after the last batch with t <= checkpoint; runs that stopped
        // early (max_iterations) do not contribute past their last row
        let vals: Vec<f64> = by_run
            .values()
            .filter(|rs| rs.last().unwrap().t >= c.t)
            .map(|rs| rs.iter().rfind(|r| r.t <= c.t).map_or(0.0, |r| r.stk))
            .collect();
        assert_eq!(vals.len(), c.runs, "checkpoint {}", c.t);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!(
            (mean - c.stk_mean).abs() < 1e-9 * mean.max(1.0),
            "checkpoint {}",
            c.t
        );
    }
    assert!(summary.checkpoints.iter().all(|c| c.t <= 300));
}

#[test]
fn exact_baselines_report_at_k() {
    let (data, index) = setup(3);
    let (summary, rows, truth) = collect(
        &data,
        &index,
        &ExperimentConfig::new(Algorithm::Baseline(BaselineKind::SortedScan), params(15), 3),
    );
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r.t, 15);
        assert_eq!(r.precision_at_k, 1.0);
        assert!((r.stk - truth.optimal_stk).abs() < 1e-9);
    }
    // exact methods fill every later checkpoint
    assert_eq!(summary.checkpoints.last().unwrap().runs, 3);

    let (_, rows, _) = collect(
        &data,
        &index,
        &ExperimentConfig::new(Algorithm::Baseline(BaselineKind::ScanBest), params(15), 2),
    );
    let at_k: Vec<&MetricRow> = rows.iter().filter(|r| r.t == 15).collect();
    assert_eq!(at_k.len(), 2);
    assert!(at_k.iter().all(|r| r.precision_at_k == 1.0));
}

#[test]
fn external_scorer_matches_builtin() {
    let (data, index) = setup(4);
    let script = r#"python3 -c '
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"scores": [max(p["value"], 0.0) for p in req["payloads"]]}), flush=True)
'"#;
    let config = ExperimentConfig {
        max_iterations: Some(200),
        ..ExperimentConfig::new(Algorithm::Ours, params(10), 2)
    };
    let (_, builtin, truth) = collect(&data, &index, &config);
    let mut plugin = DatasetScorer::new(&data.records, script.parse().unwrap()).unwrap();
    let mut external = Vec::new();
    run_experiment(&config, &index, &truth, &mut plugin, &mut |r| {
        external.push(r.clone());
        Ok(())
    })
    .unwrap();
    let key = |rows: &[MetricRow]| -> Vec<(usize, usize, String, String)> {
        rows.iter()
            .map(|r| (r.run_id, r.t, format!("{:.9}", r.stk), r.mode.to_string()))
            .collect()
    };
    assert_eq!(key(&builtin), key(&external));
}

#[test]
fn failing_external_scorer_aborts_the_experiment() {
    let (data, index) = setup(5);
    let config = ExperimentConfig::new(Algorithm::Ours, params(10), 1);
    let mut plugin = DatasetScorer::new(&data.records, ScorerKind::Relu).unwrap();
    let truth = GroundTruth::from_table(score_table(&data, &mut plugin, 100).unwrap(), 10);
    let mut bad = DatasetScorer::new(
        &data.records,
        "python3 -c 'print(\"{\\\"scores\\\": [-1]}\")'"
            .parse()
            .unwrap(),
    )
    .unwrap();
    let err = run_experiment(&config, &index, &truth, &mut bad, &mut |_| Ok(())).unwrap_err();
    assert!(
        err.to_string().contains("invalid score") || err.to_string().contains("exited"),
        "{err}"
    );
}
