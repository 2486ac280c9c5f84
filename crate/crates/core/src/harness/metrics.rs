//! Ground truth and Precision@K.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::scorers::ScorerKind;
use super::synthetic::Dataset;
use super::HarnessError;
use crate::bandit::StepRecord;
use crate::plugin::{score_ids, ScorerPlugin};
use crate::topk::{stk, ElementId, Score, ScoredElement, TopKSolution};

/// Exact answer of a query, from a full score table.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub k: usize,
    pub table: Vec<ScoredElement>,
    /// Top-k ids; ties at the boundary go to the smaller id.
    pub top: HashSet<ElementId>,
    pub optimal_stk: f64,
}

impl GroundTruth {
    pub fn from_table(table: Vec<ScoredElement>, k: usize) -> Self {
        let top = top_k_ids(&table, k).into_iter().collect();
        let scores: Vec<f64> = table.iter().map(|e| e.score.value()).collect();
        GroundTruth {
            k,
            optimal_stk: stk(&scores, k),
            table,
            top,
        }
    }

    pub fn precision(&self, solution: &TopKSolution) -> f64 {
        precision_at_k(solution.ids(), &self.top, self.k)
    }
}

/// Ids of the k best scores, descending, ties by ascending id.
pub fn top_k_ids(table: &[ScoredElement], k: usize) -> Vec<ElementId> {
    let mut sorted: Vec<&ScoredElement> = table.iter().collect();
    sorted.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    sorted.into_iter().take(k).map(|e| e.id.clone()).collect()
}

/// `|solution ∩ truth| / k`.
pub fn precision_at_k<'a>(
    solution: impl IntoIterator<Item = &'a ElementId>,
    truth: &HashSet<ElementId>,
    k: usize,
) -> f64 {
    let hits = solution
        .into_iter()
        .filter(|id| truth.contains(*id))
        .count();
    hits as f64 / k as f64
}

/// Precision@K maintained from per-batch step records.
#[derive(Debug, Clone)]
pub struct PrecisionTracker<'a> {
    truth: &'a HashSet<ElementId>,
    k: usize,
    hits: usize,
}

impl<'a> PrecisionTracker<'a> {
    pub fn new(truth: &'a HashSet<ElementId>, k: usize) -> Self {
        PrecisionTracker { truth, k, hits: 0 }
    }

    pub fn update(&mut self, records: &[StepRecord]) {
        for r in records {
            if r.accepted && self.truth.contains(&r.id) {
                self.hits += 1;
            }
            if let Some(e) = &r.evicted {
                if self.truth.contains(&e.id) {
                    self.hits -= 1;
                }
            }
        }
    }

    pub fn value(&self) -> f64 {
        self.hits as f64 / self.k as f64
    }
}

/// Scores every record through `plugin`, `batch` at a time.
pub fn score_table<P: ScorerPlugin + ?Sized>(
    dataset: &Dataset,
    plugin: &mut P,
    batch: usize,
) -> Result<Vec<ScoredElement>, HarnessError> {
    let ids: Vec<ElementId> = dataset.records.iter().map(|r| r.id.clone()).collect();
    let mut table = Vec::with_capacity(ids.len());
    for chunk in ids.chunks(batch.max(1)) {
        let scores = score_ids(plugin, chunk)?;
        for (id, s) in chunk.iter().zip(scores) {
            table.push(ScoredElement::new(id.clone(), Score::new(s)?));
        }
    }
    Ok(table)
}

/// On-disk cache of full score tables keyed by a hash of the dataset
/// contents and the scorer.
#[derive(Debug, Clone)]
pub struct GroundTruthCache {
    dir: PathBuf,
}

impl GroundTruthCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        GroundTruthCache { dir: dir.into() }
    }

    pub fn key(dataset: &Dataset, scorer: &ScorerKind) -> Result<String, HarnessError> {
        let mut h = Sha256::new();
        h.update(dataset.to_jsonl()?.as_bytes());
        h.update(b"\0");
        h.update(scorer.to_string().as_bytes());
        Ok(hex::encode(h.finalize()))
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("truth-{key}.json"))
    }

    pub fn load(&self, key: &str) -> Result<Option<Vec<ScoredElement>>, HarnessError> {
        let path = self.path_for(key);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
    }

    pub fn store(&self, key: &str, table: &[ScoredElement]) -> Result<(), HarnessError> {
        fs::create_dir_all(&self.dir)?;
        write_atomic(&self.path_for(key), &serde_json::to_string(table)?)
    }

    /// Cached table if present, otherwise scores the dataset and stores it.
    pub fn load_or_score<P: ScorerPlugin + ?Sized>(
        &self,
        dataset: &Dataset,
        scorer: &ScorerKind,
        plugin: &mut P,
    ) -> Result<Vec<ScoredElement>, HarnessError> {
        let key = Self::key(dataset, scorer)?;
        if let Some(table) = self.load(&key)? {
            return Ok(table);
        }
        let table = score_table(dataset, plugin, 256)?;
        self.store(&key, &table)?;
        Ok(table)
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scorers::DatasetScorer;
    use crate::harness::synthetic::{gen_synthetic, SyntheticSpec};

    fn el(id: &str, s: f64) -> ScoredElement {
        ScoredElement::new(ElementId::new(id).unwrap(), Score::new(s).unwrap())
    }

    fn set(ids: &[&str]) -> HashSet<ElementId> {
        ids.iter().map(|s| ElementId::new(*s).unwrap()).collect()
    }

    #[test]
    fn precision_examples() {
        let truth = set(&["a", "b", "c", "d"]);
        let same: Vec<ElementId> = truth.iter().cloned().collect();
        assert_eq!(precision_at_k(&same, &truth, 4), 1.0);
        let other = set(&["w", "x", "y", "z"]);
        assert_eq!(precision_at_k(&other, &truth, 4), 0.0);
        let half = set(&["a", "b", "y", "z"]);
        assert_eq!(precision_at_k(&half, &truth, 4), 0.5);
    }

    #[test]
    fn ties_go_to_smaller_ids() {
        let table = vec![el("b", 1.0), el("a", 1.0), el("c", 5.0), el("d", 0.5)];
        let top = top_k_ids(&table, 2);
        assert_eq!(
            top,
            vec![ElementId::new("c").unwrap(), ElementId::new("a").unwrap()]
        );
        let gt = GroundTruth::from_table(table, 2);
        assert_eq!(gt.optimal_stk, 6.0);
    }

    #[test]
    fn tracker_matches_recount() {
        let table: Vec<ScoredElement> = (0..30)
            .map(|i| el(&format!("x{i:02}"), ((i * 7) % 11) as f64))
            .collect();
        let gt = GroundTruth::from_table(table.clone(), 4);
        let mut solution = TopKSolution::new(4).unwrap();
        let mut tracker = PrecisionTracker::new(&gt.top, 4);
        for e in table {
            let out = solution.insert(e.clone());
            tracker.update(&[StepRecord {
                id: e.id,
                score: e.score.value(),
                gain: out.gain,
                accepted: out.accepted,
                evicted: out.evicted,
            }]);
            assert_eq!(tracker.value(), gt.precision(&solution));
        }
    }

    #[test]
    fn cache_round_trip() {
        let d = gen_synthetic(&SyntheticSpec::new(2, 20, 4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cache = GroundTruthCache::new(dir.path());
        let mut plugin = DatasetScorer::new(&d.records, ScorerKind::Relu).unwrap();
        let first = cache
            .load_or_score(&d, &ScorerKind::Relu, &mut plugin)
            .unwrap();
        let key = GroundTruthCache::key(&d, &ScorerKind::Relu).unwrap();
        assert!(cache.path_for(&key).exists());
        let mut never = DatasetScorer::new(&d.records, ScorerKind::Noop).unwrap();
        let second = cache
            .load_or_score(&d, &ScorerKind::Relu, &mut never)
            .unwrap();
        assert_eq!(first, second);
        assert_ne!(key, GroundTruthCache::key(&d, &ScorerKind::Noop).unwrap());
    }
}
