//! Value types and the sum-of-top-k objective.
//!
//! [`TopKSolution`] is the running answer of every query strategy in this
//! crate. It keeps at most `k` scored elements, evicting the current minimum
//! when a strictly larger score arrives, and caches the objective value so
//! that reading it is free.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValueError {
    #[error("element id must be non-empty")]
    EmptyId,
    #[error("score must be finite and non-negative, got {0}")]
    InvalidScore(f64),
    #[error("cardinality k must be positive")]
    ZeroK,
}

/// Opaque, dataset-unique element identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ElementId(String);

impl ElementId {
    pub fn new(id: impl Into<String>) -> Result<Self, ValueError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ValueError::EmptyId);
        }
        Ok(ElementId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ElementId {
    type Error = ValueError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        ElementId::new(value)
    }
}

impl From<ElementId> for String {
    fn from(value: ElementId) -> Self {
        value.0
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A finite, non-negative score.
///
/// Because NaN is excluded at construction, `Score` is totally ordered.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Score(f64);

impl Score {
    pub const ZERO: Score = Score(0.0);

    pub fn new(value: f64) -> Result<Self, ValueError> {
        if value.is_finite() && value >= 0.0 {
            // normalizes -0.0
            Ok(Score(value + 0.0))
        } else {
            Err(ValueError::InvalidScore(value))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl TryFrom<f64> for Score {
    type Error = ValueError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Score::new(value)
    }
}

impl From<Score> for f64 {
    fn from(value: Score) -> Self {
        value.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredElement {
    pub id: ElementId,
    pub score: Score,
}

impl ScoredElement {
    pub fn new(id: ElementId, score: Score) -> Self {
        ScoredElement { id, score }
    }
}

/// Sum of the `min(k, len)` largest values.
pub fn stk(scores: &[f64], k: usize) -> f64 {
    if k == 0 || scores.is_empty() {
        return 0.0;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.iter().take(k).sum()
}

/// Result of offering one element to a [`TopKSolution`].
#[derive(Debug, Clone, PartialEq)]
pub struct InsertOutcome {
    pub gain: f64,
    pub accepted: bool,
    pub evicted: Option<ScoredElement>,
}

// Ordering key: ascending score, then ascending id, so the first entry is the
// eviction candidate. `seq` keeps repeated (score, id) pairs distinct.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Entry {
    score: Score,
    id: ElementId,
    seq: u64,
}

/// Cardinality-bounded running solution.
#[derive(Debug, Clone)]
pub struct TopKSolution {
    k: usize,
    entries: BTreeSet<Entry>,
    stk: f64,
    kth: f64,
    next_seq: u64,
}

impl TopKSolution {
    pub fn new(k: usize) -> Result<Self, ValueError> {
        if k == 0 {
            return Err(ValueError::ZeroK);
        }
        Ok(TopKSolution {
            k,
            entries: BTreeSet::new(),
            stk: 0.0,
            kth: 0.0,
            next_seq: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.k
    }

    /// Cached objective value.
    #[inline]
    pub fn stk(&self) -> f64 {
        self.stk
    }

    /// The k-th largest score, or 0 while fewer than k entries are held.
    #[inline]
    pub fn kth_score(&self) -> f64 {
        self.kth
    }

    pub fn insert(&mut self, element: ScoredElement) -> InsertOutcome {
        let score = element.score.value();
        if self.entries.len() < self.k {
            self.push(element);
            self.stk += score;
            self.refresh_kth();
            return InsertOutcome {
                gain: score,
                accepted: true,
                evicted: None,
            };
        }
        if score <= self.kth {
            return InsertOutcome {
                gain: 0.0,
                accepted: false,
                evicted: None,
            };
        }
        let min = self
            .entries
            .pop_first()
            .expect("full solution has a minimum");
        let gain = score - min.score.value();
        self.push(element);
        self.stk += gain;
        self.refresh_kth();
        InsertOutcome {
            gain,
            accepted: true,
            evicted: Some(ScoredElement::new(min.id, min.score)),
        }
    }

    pub fn contains(&self, id: &ElementId) -> bool {
        self.entries.iter().any(|e| &e.id == id)
    }

    /// Entries sorted by descending score (ties by ascending id).
    pub fn sorted_desc(&self) -> Vec<ScoredElement> {
        let mut out: Vec<ScoredElement> = self
            .entries
            .iter()
            .map(|e| ScoredElement::new(e.id.clone(), e.score))
            .collect();
        out.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        out
    }

    pub fn ids(&self) -> impl Iterator<Item = &ElementId> {
        self.entries.iter().map(|e| &e.id)
    }

    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.score.value())
    }

    fn push(&mut self, element: ScoredElement) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.entries.insert(Entry {
            score: element.score,
            id: element.id,
            seq,
        });
    }

    fn refresh_kth(&mut self) {
        self.kth = if self.entries.len() == self.k {
            self.entries.first().map_or(0.0, |e| e.score.value())
        } else {
            0.0
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn el(id: &str, score: f64) -> ScoredElement {
        ScoredElement::new(ElementId::new(id).unwrap(), Score::new(score).unwrap())
    }

    fn filled(k: usize, scores: &[f64]) -> TopKSolution {
        let mut s = TopKSolution::new(k).unwrap();
        for (i, &v) in scores.iter().enumerate() {
            s.insert(el(&format!("e{i}"), v));
        }
        s
    }

    #[test]
    fn stk_examples() {
        assert_eq!(stk(&[], 5), 0.0);
        assert_eq!(stk(&[4.0, 2.0, 7.0], 2), 11.0);
        assert_eq!(stk(&[3.0, 3.0, 3.0], 5), 9.0);
    }

    #[test]
    fn kth_score_examples() {
        assert_eq!(filled(2, &[5.0, 3.0]).kth_score(), 3.0);
        assert_eq!(filled(2, &[5.0]).kth_score(), 0.0);
        assert_eq!(filled(3, &[5.0, 5.0, 1.0]).kth_score(), 1.0);
    }

    #[test]
    fn insert_examples() {
        let mut s = TopKSolution::new(2).unwrap();
        let out = s.insert(el("a", 5.0));
        assert_eq!(out.gain, 5.0);
        assert!(out.evicted.is_none());

        let mut s = filled(2, &[5.0, 3.0]);
        let out = s.insert(el("x", 4.0));
        assert_eq!(out.gain, 1.0);
        assert_eq!(out.evicted.unwrap().score.value(), 3.0);
        assert_eq!(s.stk(), 9.0);

        let mut s = filled(2, &[5.0, 3.0]);
        let out = s.insert(el("x", 2.0));
        assert_eq!(out.gain, 0.0);
        assert!(!out.accepted);
        assert_eq!(s.stk(), 8.0);
    }

    #[test]
    fn equal_to_kth_is_rejected() {
        let mut s = filled(2, &[5.0, 3.0]);
        let out = s.insert(el("x", 3.0));
        assert!(!out.accepted);
        assert_eq!(out.gain, 0.0);
        assert!(!s.contains(&ElementId::new("x").unwrap()));
    }

    #[test]
    fn tie_eviction_takes_smallest_id() {
        let mut s = TopKSolution::new(3).unwrap();
        s.insert(el("m", 1.0));
        s.insert(el("b", 1.0));
        s.insert(el("z", 9.0));
        let out = s.insert(el("q", 2.0));
        assert_eq!(out.evicted.unwrap().id.as_str(), "b");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Score::new(-1.0).is_err());
        assert!(Score::new(f64::NAN).is_err());
        assert!(Score::new(f64::INFINITY).is_err());
        assert!(ElementId::new("").is_err());
        assert!(TopKSolution::new(0).is_err());
        assert!(serde_json::from_str::<Score>("-2.0").is_err());
    }

    proptest! {
        #[test]
        fn telescoping_and_recompute(k in 1usize..6, values in prop::collection::vec(0u32..20, 0..40)) {
            let mut s = TopKSolution::new(k).unwrap();
            let mut gains = 0.0;
            let mut prev = 0.0;
            for (i, v) in values.iter().enumerate() {
                let out = s.insert(el(&format!("e{i}"), f64::from(*v)));
                gains += out.gain;
                prop_assert!(s.stk() >= prev);
                prev = s.stk();
                prop_assert!(s.len() <= k);
            }
            let all: Vec<f64> = values.iter().map(|v| f64::from(*v)).collect();
            prop_assert_eq!(s.stk(), stk(&all, k));
            prop_assert_eq!(gains, s.stk());
            let held: Vec<f64> = s.scores().collect();
            prop_assert_eq!(held.iter().sum::<f64>(), s.stk());
        }

        #[test]
        fn monotone_and_diminishing(
            k in 1usize..5,
            small in prop::collection::vec(0u32..6, 0..6),
            extra in prop::collection::vec(0u32..6, 0..6),
            x in 0u32..6,
        ) {
            let s1: Vec<f64> = small.iter().map(|v| f64::from(*v)).collect();
            let mut s2 = s1.clone();
            s2.extend(extra.iter().map(|v| f64::from(*v)));
            let with = |s: &[f64]| { let mut t = s.to_vec(); t.push(f64::from(x)); t };
            prop_assert!(stk(&with(&s1), k) >= stk(&s1, k));
            let g1 = stk(&with(&s1), k) - stk(&s1, k);
            let g2 = stk(&with(&s2), k) - stk(&s2, k);
            prop_assert!(g1 >= g2);
        }
    }
}
