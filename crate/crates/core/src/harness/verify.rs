//! The checks run by `topk verify`, each reported as pass or fail.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::HarnessError;
use crate::histogram::HistogramSketch;
use crate::oracle::{
    check_bs_properties, check_stk_properties, exact_gain_discrete, histogram_excess_mc,
    DiscreteArm,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Smaller instances for a fast smoke run.
    pub quick: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub seconds: f64,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

pub fn run_verification(config: &VerifyConfig) -> Result<VerifyReport, HarnessError> {
    type Check = fn(&VerifyConfig) -> Result<(bool, Value), HarnessError>;
    let checks: [(&str, Check); 5] = [
        ("stk_monotone_dr_submodular", stk_check),
        ("bs_monotone_dr_submodular", bs_check),
        ("histogram_gain_vs_monte_carlo", gain_check),
        ("discrete_gain_vs_histogram", discrete_check),
        ("histogram_maintenance_invariants", maintenance_check),
    ];
    let mut results = Vec::new();
    for (name, check) in checks {
        let started = Instant::now();
        let (passed, detail) = check(config)?;
        results.push(CheckResult {
            name: name.to_string(),
            passed,
            seconds: started.elapsed().as_secs_f64(),
            detail,
        });
    }
    Ok(VerifyReport {
        passed: results.iter().all(|r| r.passed),
        checks: results,
    })
}

fn stk_check(_: &VerifyConfig) -> Result<(bool, Value), HarnessError> {
    let report = check_stk_properties(3, 5, &[1, 2, 3]);
    Ok((report.passed(), serde_json::to_value(&report)?))
}

fn bs_check(config: &VerifyConfig) -> Result<(bool, Value), HarnessError> {
    let (seeds, trials) = if config.quick {
        (1, 2_000)
    } else {
        (5, 10_000)
    };
    let mut details = Vec::new();
    let mut passed = true;
    for s in 0..seeds {
        let seed = config.seed.wrapping_add(s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arms: Vec<DiscreteArm> = (0..3).map(|_| DiscreteArm::random(&mut rng, 5)).collect();
        for k in 1..=3 {
            let report = check_bs_properties(&arms, 4, k, trials, seed, 3.0)?;
            passed &= report.passed();
            details.push(json!({
                "seed": seed,
                "k": k,
                "arms": arms.iter().map(|a| json!({"outcomes": a.outcomes(), "probabilities": a.probabilities()})).collect::<Vec<_>>(),
                "monotone_checks": report.monotone_checks,
                "dr_checks": report.dr_checks,
                "violations": report.violations,
                "worst_z": report.worst_z,
            }));
        }
    }
    Ok((passed, json!({ "trials": trials, "instances": details })))
}

/// Random sketch with 2..=12 bins of random widths; some bins empty.
pub fn random_sketch(rng: &mut impl Rng) -> HistogramSketch {
    let bins = rng.random_range(2..=12);
    let mut edges = vec![0.0];
    for _ in 0..bins {
        let last = *edges.last().unwrap();
        edges.push(last + rng.random_range(0.1..5.0));
    }
    let mass = (0..bins)
        .map(|_| {
            if rng.random_bool(0.25) {
                0.0
            } else {
                rng.random_range(0.0..10.0)
            }
        })
        .collect::<Vec<f64>>();
    let mut mass = mass;
    if mass.iter().all(|&m| m == 0.0) {
        mass[0] = 1.0;
    }
    HistogramSketch::from_parts(edges, mass).expect("valid random sketch")
}

fn gain_check(config: &VerifyConfig) -> Result<(bool, Value), HarnessError> {
    let (sketches, draws) = if config.quick {
        (10, 100_000)
    } else {
        (50, 1_000_000)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for s in 0..sketches {
        let h = random_sketch(&mut rng);
        let thresholds: Vec<f64> = (0..10)
            .map(|_| rng.random_range(0.0..h.max_edge() * 1.05))
            .collect();
        let mc = histogram_excess_mc(h.edges(), h.mass(), &thresholds, draws, config.seed ^ s);
        for (theta, est) in thresholds.iter().zip(mc) {
            let diff = (h.expected_gain(*theta) - est.mean).abs();
            let z = if est.std_error > 0.0 {
                diff / est.std_error
            } else if diff > 1e-12 {
                f64::INFINITY
            } else {
                0.0
            };
            worst = worst.max(z);
            if z > 3.0 {
                failures += 1;
            }
        }
    }
    Ok((
        failures == 0,
        json!({ "sketches": sketches, "draws": draws, "max_z": worst, "failures": failures }),
    ))
}

fn discrete_check(config: &VerifyConfig) -> Result<(bool, Value), HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut edges = vec![0.0];
    edges.extend((0..8).map(|i| i as f64 + 0.5));
    let thresholds: Vec<f64> = (0..8).map(|i| i as f64 + 0.5).collect();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let counts: Vec<(u64, u64)> = (0..8).map(|x| (x, rng.random_range(0..20))).collect();
        if counts.iter().all(|c| c.1 == 0) {
            continue;
        }
        let mass: Vec<f64> = counts.iter().map(|c| c.1 as f64).collect();
        let h = HistogramSketch::from_parts(edges.clone(), mass)?;
        for &theta in &thresholds {
            let exact = exact_gain_discrete(&counts, theta);
            let approx = h.expected_gain(theta);
            let rel = if exact > 0.0 {
                (approx - exact).abs() / exact
            } else {
                approx.abs()
            };
            worst = worst.max(rel);
        }
    }
    Ok((
        worst <= 0.1,
        json!({ "buckets": 8, "max_relative_error": worst }),
    ))
}

fn maintenance_check(config: &VerifyConfig) -> Result<(bool, Value), HarnessError> {
    let sequences = if config.quick { 500 } else { 10_000 };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut failures = Vec::new();
    for seq in 0..sequences {
        if let Err(msg) = random_maintenance(&mut rng, 20) {
            failures.push(json!({ "sequence": seq, "error": msg }));
            if failures.len() >= 10 {
                break;
            }
        }
    }
    Ok((
        failures.is_empty(),
        json!({ "sequences": sequences, "failures": failures }),
    ))
}

/// Applies `steps` random maintenance operations to a fresh sketch and
/// checks the sketch invariants after each one.
pub fn random_maintenance(rng: &mut impl Rng, steps: usize) -> Result<(), String> {
    let buckets = rng.random_range(2..=10);
    let mut h =
        HistogramSketch::new(buckets, rng.random_range(0.1..5.0)).map_err(|e| e.to_string())?;
    for step in 0..steps {
        let before = h.total_mass();
        let op = rng.random_range(0..4);
        match op {
            0 => {
                let x = rng.random_range(0.0..h.max_edge() * 1.5);
                if x > h.max_edge() {
                    h.extend_range(x, rng.random_range(1.0..2.0))
                        .map_err(|e| e.to_string())?;
                    conserved(before, h.total_mass())
                        .map_err(|e| format!("step {step} extend: {e}"))?;
                }
                h.record(x).map_err(|e| e.to_string())?;
            }
            1 => {
                let x = h.max_edge() * rng.random_range(1.0..3.0) + 1e-6;
                h.extend_range(x, rng.random_range(1.0..2.0))
                    .map_err(|e| e.to_string())?;
                conserved(before, h.total_mass())
                    .map_err(|e| format!("step {step} extend: {e}"))?;
            }
            2 => {
                let kth = rng.random_range(0.0..h.max_edge());
                h.collapse_low(kth);
                conserved(before, h.total_mass())
                    .map_err(|e| format!("step {step} collapse: {e}"))?;
            }
            _ => {
                let mut child = HistogramSketch::new(
                    rng.random_range(2..=10),
                    rng.random_range(0.1..h.max_edge() * 1.5),
                )
                .map_err(|e| e.to_string())?;
                for _ in 0..rng.random_range(0..5) {
                    let x = rng.random_range(0.0..child.max_edge());
                    child.record(x).map_err(|e| e.to_string())?;
                }
                h.subtract(&child);
            }
        }
        check_invariants(&h, buckets).map_err(|e| format!("step {step} op {op}: {e}"))?;
    }
    let mut twin = h.clone();
    twin.subtract(&h);
    if twin.total_mass() != 0.0 || twin.mass().iter().any(|&m| m != 0.0) {
        return Err(format!("subtract(h, h) left {:?}", twin.mass()));
    }
    Ok(())
}

fn conserved(before: f64, after: f64) -> Result<(), String> {
    if (before - after).abs() <= 1e-9 * before.abs().max(1.0) {
        Ok(())
    } else {
        Err(format!("mass {before} became {after}"))
    }
}

pub fn check_invariants(h: &HistogramSketch, buckets: usize) -> Result<(), String> {
    let e = h.edges();
    if h.bucket_count() != buckets || e.len() != buckets + 1 {
        return Err(format!(
            "expected {buckets} bins, found {}",
            h.bucket_count()
        ));
    }
    if e[0] != 0.0 {
        return Err(format!("first edge {}", e[0]));
    }
    if e.windows(2).any(|w| w[0] >= w[1]) {
        return Err(format!("edges not increasing: {e:?}"));
    }
    if h.mass().iter().any(|&m| !(m >= 0.0)) {
        return Err(format!("negative mass: {:?}", h.mass()));
    }
    let sum: f64 = h.mass().iter().sum();
    if (sum - h.total_mass()).abs() > 1e-9 * sum.max(1.0) {
        return Err(format!("total {} vs sum {sum}", h.total_mass()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_verification_passes() {
        let report = run_verification(&VerifyConfig {
            seed: 7,
            quick: true,
        })
        .unwrap();
        for c in &report.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        assert!(report.passed);
    }
}
