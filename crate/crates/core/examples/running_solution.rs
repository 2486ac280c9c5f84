//! The bounded running solution on its own: offering scores one at a time,
//! reading the marginal gain and evictions.

use opaque_topk::{stk, ElementId, Score, ScoredElement, TopKSolution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scores = [4.0, 1.0, 7.0, 7.0, 2.5, 9.0, 0.0, 5.0];
    let mut top = TopKSolution::new(3)?;
    for (i, s) in scores.iter().enumerate() {
        let out = top.insert(ScoredElement::new(
            ElementId::new(format!("x{i}"))?,
            Score::new(*s)?,
        ));
        let evicted = out
            .evicted
            .map(|e| format!(", evicts {}", e.id))
            .unwrap_or_default();
        println!(
            "x{i} = {s:<4} gain {:<4} kth {:<4} stk {:<5}{evicted}",
            out.gain,
            top.kth_score(),
            top.stk()
        );
    }
    assert_eq!(top.stk(), stk(&scores, 3));
    let held: Vec<String> = top.sorted_desc().iter().map(|e| e.id.to_string()).collect();
    println!("held: {}", held.join(" "));
    Ok(())
}
