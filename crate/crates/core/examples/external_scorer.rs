//! Scoring through a separate process. The example re-launches itself with
//! `--serve`, which answers one JSON line per batch on stdin/stdout:
//!
//!     -> {"ids": ["e1", "e2"], "payloads": [{...}, {...}]}
//!     <- {"scores": [0.5, 3.1]}
//!
//! Any program that speaks this protocol can be passed to
//! `topk query run --scorer '<command>'`.

use std::io;

use opaque_topk::bandit::{NoopObserver, StopCondition};
use opaque_topk::harness::scorers::serve;
use opaque_topk::harness::{gen_synthetic, DatasetScorer, ScorerKind, SyntheticSpec};
use opaque_topk::{build_index, QueryParams, QueryState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    if std::env::args().any(|a| a == "--serve") {
        // payload is the dataset record; score = value squared
        serve(io::stdin().lock(), io::stdout().lock(), |_ids, payloads| {
            payloads
                .iter()
                .map(|p| p["value"].as_f64().unwrap_or(0.0).max(0.0).powi(2))
                .collect()
        })?;
        return Ok(());
    }

    let data = gen_synthetic(&SyntheticSpec::new(8, 500, 2))?;
    let index = build_index(&data.points(), 8, None, 2)?;
    let me = std::env::current_exe()?;
    let command = format!("'{}' --serve", me.display());
    let mut plugin = DatasetScorer::new(&data.records, ScorerKind::External(command))?;

    let params = QueryParams {
        k: 5,
        batch_size: 32,
        ..QueryParams::default()
    };
    let mut state = QueryState::new(&index, params)?;
    let summary = state.run(
        &mut plugin,
        &StopCondition::iterations(1000),
        &mut NoopObserver,
    )?;
    println!("scored {} elements over the pipe", summary.t);
    for e in summary.solution.sorted_desc() {
        println!("  {}  {:.2}", e.id, e.score.value());
    }
    Ok(())
}
