//! Find the 50 largest values in a clustered synthetic dataset, scoring as
//! few elements as possible.
//!
//!     cargo run --release --example quickstart

use std::collections::HashMap;

use opaque_topk::bandit::{BatchReport, StopCondition};
use opaque_topk::harness::{gen_synthetic, SyntheticSpec};
use opaque_topk::{build_index, run, QueryParams, TableScorer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = gen_synthetic(&SyntheticSpec::new(20, 2500, 42))?;
    let index = build_index(&data.points(), 20, None, 42)?;

    // The scorer only sees the element; here it is a plain lookup.
    let table: HashMap<_, _> = data
        .records
        .iter()
        .map(|r| (r.id.clone(), r.value.unwrap()))
        .collect();
    let mut exact: Vec<f64> = table.values().copied().collect();
    exact.sort_by(|a, b| b.total_cmp(a));
    let optimum: f64 = exact.iter().take(50).sum();
    let mut scorer = TableScorer::new(table, |v: &f64| v.max(0.0));

    let params = QueryParams {
        k: 50,
        seed: 7,
        ..QueryParams::default()
    };
    let mut next_report = 100;
    let mut progress = |b: &BatchReport<'_>| {
        if b.t >= next_report {
            println!(
                "t={:>6}  stk={:>9.2}  ({:5.1}% of optimum)  mode={}",
                b.t,
                b.stk,
                100.0 * b.stk / optimum,
                b.mode
            );
            next_report *= 2;
        }
    };
    let summary = run(
        &index,
        params,
        &mut scorer,
        &StopCondition::iterations(5000),
        &mut progress,
    )?;

    println!("\nscored {} of {} elements", summary.t, data.len());
    for e in summary.solution.sorted_desc().iter().take(5) {
        println!("  {}  {:.3}", e.id, e.score.value());
    }
    Ok(())
}
