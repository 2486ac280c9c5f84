//! The per-arm score sketch: recording, expected gain over a threshold,
//! range extension, low-bin collapse and subtraction.

use opaque_topk::HistogramSketch;

fn show(label: &str, h: &HistogramSketch) {
    let edges: Vec<String> = h.edges().iter().map(|e| format!("{e:.2}")).collect();
    let mass: Vec<String> = h.mass().iter().map(|m| format!("{m:.2}")).collect();
    println!(
        "{label}\n  edges [{}]\n  mass  [{}]  total {:.3}",
        edges.join(", "),
        mass.join(", "),
        h.total_mass()
    );
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut h = HistogramSketch::new(4, 8.0)?;
    for s in [0.5, 1.0, 2.5, 3.0, 3.5, 6.0, 7.9] {
        h.record(s)?;
    }
    show("after 7 scores", &h);

    for theta in [0.0, 3.0, 6.0, 8.0] {
        println!("  E[max(X - {theta}, 0)] = {:.4}", h.expected_gain(theta));
    }

    // A score above the range: stretch to beta * score, keep the mass.
    h.extend_range(12.0, 1.1)?;
    h.record(12.0)?;
    show("\nextended to 13.2", &h);

    // The k-th best score moved to 7; bins below it cannot contribute anymore.
    h.collapse_low(7.0);
    show("\ncollapsed below 7", &h);

    let mut child = HistogramSketch::new(2, 13.2)?;
    child.record(12.0)?;
    let mut parent = h.clone();
    parent.subtract(&child);
    show("\nafter removing an exhausted child", &parent);

    let mut zero = h.clone();
    zero.subtract(&h);
    assert_eq!(zero.total_mass(), 0.0);
    Ok(())
}
