//! Equal-width histogram sketch of one arm's score distribution.
//!
//! Scores inside a bin are treated as uniformly distributed. That assumption
//! drives both the gain estimate and every maintenance operation: mass is
//! moved between bins in proportion to interval overlap, so bin masses become
//! fractional after re-binning or subtraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HistogramError {
    #[error("a sketch needs at least 2 buckets, got {0}")]
    TooFewBuckets(usize),
    #[error("initial range must be positive and finite, got {0}")]
    InvalidRange(f64),
    #[error("score {score} lies above the sketch range [0, {max}]")]
    AboveRange { score: f64, max: f64 },
    #[error("score must be finite and non-negative, got {0}")]
    InvalidScore(f64),
    #[error("range scale beta must be >= 1, got {0}")]
    InvalidBeta(f64),
    #[error("observed score {observed} does not exceed the current range {max}")]
    NotAboveRange { observed: f64, max: f64 },
    #[error("malformed sketch: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SketchRepr", into = "SketchRepr")]
pub struct HistogramSketch {
    edges: Vec<f64>,
    mass: Vec<f64>,
    total_mass: f64,
}

#[derive(Serialize, Deserialize)]
struct SketchRepr {
    edges: Vec<f64>,
    mass: Vec<f64>,
}

impl TryFrom<SketchRepr> for HistogramSketch {
    type Error = HistogramError;

    fn try_from(repr: SketchRepr) -> Result<Self, Self::Error> {
        HistogramSketch::from_parts(repr.edges, repr.mass)
    }
}

impl From<HistogramSketch> for SketchRepr {
    fn from(h: HistogramSketch) -> Self {
        SketchRepr {
            edges: h.edges,
            mass: h.mass,
        }
    }
}

impl HistogramSketch {
    /// Empty sketch with `buckets` equal-width bins over `[0, initial_max]`.
    pub fn new(buckets: usize, initial_max: f64) -> Result<Self, HistogramError> {
        if buckets < 2 {
            return Err(HistogramError::TooFewBuckets(buckets));
        }
        if !(initial_max.is_finite() && initial_max > 0.0) {
            return Err(HistogramError::InvalidRange(initial_max));
        }
        Ok(HistogramSketch {
            edges: equal_edges(0.0, initial_max, buckets),
            mass: vec![0.0; buckets],
            total_mass: 0.0,
        })
    }

    /// Builds a sketch from explicit edges and masses, validating every invariant.
    pub fn from_parts(edges: Vec<f64>, mass: Vec<f64>) -> Result<Self, HistogramError> {
        if mass.len() < 2 {
            return Err(HistogramError::TooFewBuckets(mass.len()));
        }
        if edges.len() != mass.len() + 1 {
            return Err(HistogramError::Malformed(format!(
                "{} edges for {} bins",
                edges.len(),
                mass.len()
            )));
        }
        if edges[0] != 0.0 {
            return Err(HistogramError::Malformed("first edge must be 0".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HistogramError::Malformed(
                "edges must be finite and strictly increasing".into(),
            ));
        }
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(HistogramError::Malformed(
                "bin mass must be finite and non-negative".into(),
            ));
        }
        let total_mass = mass.iter().sum();
        Ok(HistogramSketch {
            edges,
            mass,
            total_mass,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn bucket_count(&self) -> usize {
        self.mass.len()
    }

    #[inline]
    pub fn max_edge(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    /// Upper border of the second-lowest bin; crossing it triggers [`collapse_low`](Self::collapse_low).
    #[inline]
    pub fn second_bin_upper(&self) -> f64 {
        self.edges[2]
    }

    pub fn is_empty(&self) -> bool {
        self.total_mass <= 0.0
    }

    /// Index of the bin holding `score`: interior edges belong to the higher
    /// bin and the maximum edge belongs to the top bin.
    pub fn bin_of(&self, score: f64) -> usize {
        let above = self.edges.partition_point(|&e| e <= score);
        above.saturating_sub(1).min(self.mass.len() - 1)
    }

    pub fn record(&mut self, score: f64) -> Result<(), HistogramError> {
        if !(score.is_finite() && score >= 0.0) {
            return Err(HistogramError::InvalidScore(score));
        }
        if score > self.max_edge() {
            return Err(HistogramError::AboveRange {
                score,
                max: self.max_edge(),
            });
        }
        let bin = self.bin_of(score);
        self.mass[bin] += 1.0;
        self.total_mass += 1.0;
        Ok(())
    }

    /// Expected excess `E[max(X - threshold, 0)]` under the piecewise-uniform
    /// density described by the sketch. Zero for an empty sketch.
    pub fn expected_gain(&self, threshold: f64) -> f64 {
        if self.total_mass <= 0.0 {
            return 0.0;
        }
        let theta = threshold.max(0.0);
        let mut acc = 0.0;
        for i in (0..self.mass.len()).rev() {
            let (a, b) = (self.edges[i], self.edges[i + 1]);
            if theta >= b {
                break;
            }
            let m = self.mass[i];
            if m == 0.0 {
                continue;
            }
            if theta <= a {
                acc += m * (0.5 * (a + b) - theta);
            } else {
                let d = b - theta;
                acc += m * d * d / (2.0 * (b - a));
            }
        }
        acc / self.total_mass
    }

    /// Re-spreads the sketch over `[0, beta * observed]` with the same bucket count.
    pub fn extend_range(&mut self, observed: f64, beta: f64) -> Result<(), HistogramError> {
        if !(beta.is_finite() && beta >= 1.0) {
            return Err(HistogramError::InvalidBeta(beta));
        }
        if !(observed.is_finite() && observed > self.max_edge()) {
            return Err(HistogramError::NotAboveRange {
                observed,
                max: self.max_edge(),
            });
        }
        let new_edges = equal_edges(0.0, beta * observed, self.mass.len());
        self.rebin(new_edges);
        Ok(())
    }

    /// Merges every bin below the largest edge `<= kth` into a single bottom
    /// bin and re-splits the rest of the range into `B - 1` equal bins.
    ///
    /// No-op unless `kth` exceeds [`second_bin_upper`](Self::second_bin_upper).
    /// The merge point never passes the lower edge of the top bin, so the
    /// upper region always keeps positive width. Returns whether the sketch changed.
    pub fn collapse_low(&mut self, kth: f64) -> bool {
        if !(kth > self.second_bin_upper()) {
            return false;
        }
        let b = self.mass.len();
        let j = (self.edges.partition_point(|&e| e <= kth) - 1).min(b - 1);
        let cut = self.edges[j];
        let max = self.max_edge();
        let mut new_edges = Vec::with_capacity(b + 1);
        new_edges.push(0.0);
        new_edges.extend(equal_edges(cut, max, b - 1));
        if new_edges.windows(2).any(|w| w[0] >= w[1]) {
            return false;
        }
        self.rebin(new_edges);
        true
    }

    /// Removes `child`'s mass from this sketch bin by bin, clamping at zero.
    pub fn subtract(&mut self, child: &HistogramSketch) {
        if child.total_mass <= 0.0 {
            return;
        }
        let removed = redistribute(&child.edges, &child.mass, &self.edges);
        for (m, r) in self.mass.iter_mut().zip(removed) {
            *m = (*m - r).max(0.0);
        }
        self.total_mass = self.mass.iter().sum();
    }

    fn rebin(&mut self, new_edges: Vec<f64>) {
        self.mass = redistribute(&self.edges, &self.mass, &new_edges);
        self.edges = new_edges;
        self.total_mass = self.mass.iter().sum();
    }
}

/// `bins + 1` equally spaced edges from `lo` to `hi`, with `hi` exact.
fn equal_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);
    edges
}

/// Mass of the source histogram falling in each target bin, assuming
/// uniform density inside source bins. Source mass outside the target range
/// is dropped.
fn redistribute(src_edges: &[f64], src_mass: &[f64], dst_edges: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; dst_edges.len() - 1];
    let (mut i, mut j) = (0, 0);
    while i < src_mass.len() && j < out.len() {
        let (sa, sb) = (src_edges[i], src_edges[i + 1]);
        let (da, db) = (dst_edges[j], dst_edges[j + 1]);
        let overlap = sb.min(db) - sa.max(da);
        if overlap > 0.0 && src_mass[i] != 0.0 {
            let width = sb - sa;
            let share = if overlap >= width {
                1.0
            } else {
                overlap / width
            };
            out[j] += src_mass[i] * share;
        }
        if sb <= db {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn new_sketch_defaults() {
        let h = HistogramSketch::new(8, 0.1).unwrap();
        assert_eq!(h.edges().len(), 9);
        assert_eq!(h.edges()[0], 0.0);
        assert!(close(h.edges()[1], 0.0125));
        assert_eq!(h.max_edge(), 0.1);
        assert!(h.mass().iter().all(|&m| m == 0.0));

        let h = HistogramSketch::new(2, 1.0).unwrap();
        assert_eq!(h.edges(), &[0.0, 0.5, 1.0]);

        assert_eq!(
            HistogramSketch::new(1, 1.0),
            Err(HistogramError::TooFewBuckets(1))
        );
        assert!(HistogramSketch::new(4, 0.0).is_err());
    }

    #[test]
    fn record_boundaries() {
        let mut h = HistogramSketch::new(4, 1.0).unwrap();
        h.record(0.3).unwrap();
        assert_eq!(h.mass(), &[0.0, 1.0, 0.0, 0.0]);
        h.record(1.0).unwrap();
        assert_eq!(h.mass()[3], 1.0);
        h.record(0.0).unwrap();
        assert_eq!(h.mass()[0], 1.0);
        h.record(0.5).unwrap();
        assert_eq!(h.mass()[2], 1.0);
        assert_eq!(h.total_mass(), 4.0);
        assert!(matches!(
            h.record(1.5),
            Err(HistogramError::AboveRange { .. })
        ));
    }

    #[test]
    fn expected_gain_single_bin_uniform() {
        // One bin [0, 10] is represented as two equal-mass halves of a B=2 sketch.
        let h = HistogramSketch::from_parts(vec![0.0, 5.0, 10.0], vec![0.5, 0.5]).unwrap();
        assert!(close(h.expected_gain(5.0), 1.25));
        assert_eq!(h.expected_gain(10.0), 0.0);
        assert_eq!(h.expected_gain(11.0), 0.0);
        assert!(close(h.expected_gain(0.0), 5.0));
        let empty = HistogramSketch::new(8, 0.1).unwrap();
        assert_eq!(empty.expected_gain(0.0), 0.0);
    }

    #[test]
    fn extend_range_examples() {
        let mut h = HistogramSketch::from_parts(vec![0.0, 5.0, 10.0], vec![1.0, 1.0]).unwrap();
        h.extend_range(20.0, 1.1).unwrap();
        assert!(close(h.max_edge(), 22.0));

        let mut h = HistogramSketch::from_parts(vec![0.0, 5.0, 10.0], vec![1.0, 1.0]).unwrap();
        h.extend_range(20.0, 1.0).unwrap();
        assert_eq!(h.max_edge(), 20.0);
        assert_eq!(h.edges(), &[0.0, 10.0, 20.0]);
        assert!(close(h.mass()[0], 2.0));
        assert_eq!(h.mass()[1], 0.0);

        assert!(h.extend_range(5.0, 1.1).is_err());
        assert!(h.extend_range(50.0, 0.9).is_err());
    }

    #[test]
    fn collapse_low_examples() {
        let mut h =
            HistogramSketch::from_parts(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0])
                .unwrap();
        assert!(h.collapse_low(2.5));
        let e = h.edges();
        assert_eq!(e[0], 0.0);
        assert_eq!(e[1], 2.0);
        assert!(close(e[2], 2.0 + 2.0 / 3.0));
        assert!(close(e[3], 2.0 + 4.0 / 3.0));
        assert_eq!(e[4], 4.0);
        // bottom keeps 1 + 2; [2, 8/3) takes 2/3 of bin [2,3); [8/3, 10/3)
        // takes 1/3 of [2,3) and 1/3 of [3,4); top takes 2/3 of [3,4).
        assert!(close(h.mass()[0], 3.0));
        assert!(close(h.mass()[1], 2.0));
        assert!(close(h.mass()[2], 1.0 + 4.0 / 3.0));
        assert!(close(h.mass()[3], 8.0 / 3.0));
        assert!(close(h.total_mass(), 10.0));

        let mut h =
            HistogramSketch::from_parts(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![0.0; 4]).unwrap();
        h.collapse_low(3.0);
        assert_eq!(h.edges()[1], 3.0);

        // Below the trigger nothing happens.
        let mut h = HistogramSketch::new(4, 4.0).unwrap();
        assert!(!h.collapse_low(2.0));
    }

    #[test]
    fn collapse_past_top_keeps_top_bin() {
        let mut h =
            HistogramSketch::from_parts(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![1.0; 4]).unwrap();
        assert!(h.collapse_low(100.0));
        assert_eq!(h.edges()[1], 3.0);
        assert_eq!(h.max_edge(), 4.0);
        assert!(close(h.total_mass(), 4.0));
    }

    #[test]
    fn collapse_with_mass_above_only() {
        let mut h =
            HistogramSketch::from_parts(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![0.0, 0.0, 0.0, 6.0])
                .unwrap();
        h.collapse_low(2.5);
        assert_eq!(h.mass()[0], 0.0);
        assert!(close(h.total_mass(), 6.0));
        assert!(close(h.mass()[3], 6.0 * 2.0 / 3.0));
    }

    #[test]
    fn subtract_examples() {
        let h = HistogramSketch::from_parts(vec![0.0, 1.0, 3.0], vec![2.0, 5.0]).unwrap();
        let mut same = h.clone();
        same.subtract(&h);
        assert!(same.mass().iter().all(|&m| m == 0.0));
        assert_eq!(same.total_mass(), 0.0);

        let mut empty = HistogramSketch::new(4, 4.0).unwrap();
        empty.subtract(&h);
        assert!(empty.mass().iter().all(|&m| m == 0.0));

        let mut parent = HistogramSketch::from_parts(vec![0.0, 2.0, 4.0], vec![2.0, 2.0]).unwrap();
        let child = HistogramSketch::from_parts(vec![0.0, 1.0, 2.0], vec![0.5, 0.5]).unwrap();
        parent.subtract(&child);
        assert_eq!(parent.mass(), &[1.0, 2.0]);
        assert_eq!(parent.total_mass(), 3.0);
    }

    #[test]
    fn serde_round_trip_validates() {
        let h = HistogramSketch::from_parts(vec![0.0, 1.0, 3.0], vec![2.0, 5.0]).unwrap();
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(json, r#"{"edges":[0.0,1.0,3.0],"mass":[2.0,5.0]}"#);
        let back: HistogramSketch = serde_json::from_str(&json).unwrap();
        assert_eq!(back, h);
        assert!(serde_json::from_str::<HistogramSketch>(
            r#"{"edges":[0.0,2.0,1.0],"mass":[1.0,1.0]}"#
        )
        .is_err());
    }

    fn arb_sketch() -> impl Strategy<Value = HistogramSketch> {
        (2usize..10, 0.1f64..50.0)
            .prop_flat_map(|(b, max)| (Just(b), Just(max), prop::collection::vec(0.0f64..10.0, b)))
            .prop_map(|(b, max, mass)| {
                let edges = equal_edges(0.0, max, b);
                HistogramSketch::from_parts(edges, mass).unwrap()
            })
    }

    proptest! {
        #[test]
        fn gain_non_increasing(h in arb_sketch(), t1 in 0.0f64..60.0, dt in 0.0f64..20.0) {
            prop_assert!(h.expected_gain(t1) + 1e-12 >= h.expected_gain(t1 + dt));
            prop_assert!(h.expected_gain(t1) >= 0.0);
        }

        #[test]
        fn gain_at_zero_is_mean(h in arb_sketch()) {
            prop_assume!(h.total_mass() > 0.0);
            let mean: f64 = h.mass().iter().enumerate()
                .map(|(i, m)| m / h.total_mass() * 0.5 * (h.edges()[i] + h.edges()[i + 1]))
                .sum();
            prop_assert!((h.expected_gain(0.0) - mean).abs() <= 1e-9 * (1.0 + mean));
        }

        #[test]
        fn subtract_never_negative(p in arb_sketch(), c in arb_sketch(), theta in 0.0f64..60.0) {
            let mut p = p;
            p.subtract(&c);
            prop_assert!(p.mass().iter().all(|&m| m >= 0.0));
            prop_assert!(p.expected_gain(theta) >= 0.0);
        }
    }
}
