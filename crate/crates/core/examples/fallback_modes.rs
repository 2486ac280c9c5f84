//! When the index carries no signal, the executor notices and switches to
//! shuffled scanning. Compare with a dataset whose clusters differ.

use opaque_topk::bandit::{LatencyModel, NoopObserver, StopCondition};
use opaque_topk::harness::{gen_synthetic, DatasetScorer, ScorerKind, SyntheticSpec};
use opaque_topk::{QueryParams, QueryState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let latency = LatencyModel::Fixed {
        scorer_seconds: 2e-3,
        overhead_seconds: 5e-4,
    };
    for (label, spec) in [
        ("distinct clusters", SyntheticSpec::new(20, 1000, 5)),
        (
            "no signal",
            SyntheticSpec::no_signal(20, 1000, 10.0, 3.0, 5),
        ),
    ] {
        let data = gen_synthetic(&spec)?;
        let index = data.label_index()?;
        let mut plugin = DatasetScorer::new(&data.records, ScorerKind::Relu)?;
        println!("{label}:");
        for seed in 0..3 {
            let params = QueryParams {
                k: 50,
                seed,
                latency,
                ..QueryParams::default()
            };
            let mut state = QueryState::new(&index, params)?;
            state.run(&mut plugin, &StopCondition::exhaustion(), &mut NoopObserver)?;
            let moves: Vec<String> = state
                .transitions()
                .iter()
                .map(|t| format!("{}->{} at t={} ({:?})", t.from, t.to, t.t, t.reason))
                .collect();
            println!(
                "  seed {seed}: final mode {}, {}",
                state.mode(),
                if moves.is_empty() {
                    "no transitions".into()
                } else {
                    moves.join(", ")
                }
            );
        }
    }
    Ok(())
}
