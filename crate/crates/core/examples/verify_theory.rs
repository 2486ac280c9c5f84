//! Numerical checks behind the method: the sum-of-top-k objective is
//! monotone and has diminishing returns, and so does its expectation over
//! per-arm sampling budgets. Also shows the known-distribution greedy that
//! serves as a reference policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use opaque_topk::oracle::{
    bs_estimate, check_bs_properties, check_stk_properties, greedy_known_distributions, DiscreteArm,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let report = check_stk_properties(3, 5, &[1, 2, 3]);
    println!(
        "STK: {} multisets, {} checks, {} violations",
        report.multisets, report.checks, report.violations
    );

    let arms = vec![
        DiscreteArm::new(vec![0, 5], vec![0.8, 0.2])?,
        DiscreteArm::new(vec![2, 3], vec![0.5, 0.5])?,
        DiscreteArm::point(1),
    ];
    for budget in [[1, 0, 0], [0, 1, 0], [2, 1, 0], [3, 1, 0]] {
        let e = bs_estimate(&arms, &budget, 2, 20_000, 1)?;
        println!(
            "BS({budget:?}) with k=2: {:.3} +- {:.3}",
            e.mean, e.std_error
        );
    }
    let bs = check_bs_properties(&arms, 3, 2, 5000, 1, 3.0)?;
    println!(
        "BS: {} budgets, {} monotone + {} DR checks, {} violations",
        bs.budgets, bs.monotone_checks, bs.dr_checks, bs.violations
    );

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let random: Vec<DiscreteArm> = (0..3).map(|_| DiscreteArm::random(&mut rng, 5)).collect();
    let greedy = greedy_known_distributions(&random, 2, 6, 3, 5000)?;
    println!("greedy mean STK by step: {:.3?}", greedy.mean_stk);
    println!("pulls per arm: {:?}", greedy.pulls);
    Ok(())
}
