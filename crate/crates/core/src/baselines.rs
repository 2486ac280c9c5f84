//! Reference strategies sharing the executor's plumbing.
//!
//! `Ucb` and `ExplorationOnly` walk the same index as the bandit with a
//! different leaf-selection rule. `UniformSample` scans a seeded shuffle of
//! the whole dataset. `ScanBest`/`ScanWorst` scan in descending/ascending
//! true-score order and mark the best and worst any scan can do.
//! `SortedScan` reads the answer off a precomputed score column without
//! calling the scorer at all.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{
    BatchReport, Mode, Observer, Policy, QueryError, QueryParams, QueryState, RunSummary,
    StepRecord, StopCondition,
};
use crate::index::Index;
use crate::plugin::ScorerPlugin;
use crate::topk::{ElementId, ScoredElement, TopKSolution};

/// Exploration constant of the UCB baseline.
pub const UCB_EXPLORATION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BaselineKind {
    Ucb,
    ExplorationOnly,
    UniformSample,
    ScanBest,
    ScanWorst,
    SortedScan,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [
        BaselineKind::Ucb,
        BaselineKind::ExplorationOnly,
        BaselineKind::UniformSample,
        BaselineKind::ScanBest,
        BaselineKind::ScanWorst,
        BaselineKind::SortedScan,
    ];

    /// Whether the strategy needs every true score up front.
    pub fn needs_score_table(self) -> bool {
        matches!(
            self,
            BaselineKind::ScanBest | BaselineKind::ScanWorst | BaselineKind::SortedScan
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Ucb => "UCB",
            BaselineKind::ExplorationOnly => "EXPLORATION_ONLY",
            BaselineKind::UniformSample => "UNIFORM_SAMPLE",
            BaselineKind::ScanBest => "SCAN_BEST",
            BaselineKind::ScanWorst => "SCAN_WORST",
            BaselineKind::SortedScan => "SORTED_SCAN",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| format!("unknown baseline {s}"))
    }
}

/// UCB leaf choice: unvisited children first, then the child maximizing
/// mean marginal gain plus `sqrt(2 ln t / visits)`.
pub fn ucb_choose(state: &mut QueryState) -> Result<String, QueryError> {
    guard_choice(state)?;
    let leaf = state.ucb_leaf(UCB_EXPLORATION);
    Ok(state.nodes[leaf].node_id.clone())
}

/// Uniformly random live child at every layer.
pub fn exploration_only_choose(state: &mut QueryState) -> Result<String, QueryError> {
    guard_choice(state)?;
    let leaf = state.explore_leaf();
    Ok(state.nodes[leaf].node_id.clone())
}

fn guard_choice(state: &QueryState) -> Result<(), QueryError> {
    if state.is_exhausted() {
        return Err(QueryError::Exhausted);
    }
    if state.mode() == Mode::Sample {
        return Err(QueryError::WrongMode {
            expected: "TREE or FLAT",
            actual: Mode::Sample,
        });
    }
    Ok(())
}

/// Seeded permutation of `ids`.
pub fn uniform_sample_order(ids: &[ElementId], seed: u64) -> Vec<ElementId> {
    let mut order = ids.to_vec();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Descending and ascending score orders; ties by ascending id in both.
pub fn oracle_orders(table: &[ScoredElement]) -> (Vec<ElementId>, Vec<ElementId>) {
    let mut best: Vec<&ScoredElement> = table.iter().collect();
    best.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    let mut worst: Vec<&ScoredElement> = table.iter().collect();
    worst.sort_by(|a, b| a.score.cmp(&b.score).then_with(|| a.id.cmp(&b.id)));
    (
        best.into_iter().map(|e| e.id.clone()).collect(),
        worst.into_iter().map(|e| e.id.clone()).collect(),
    )
}

/// Exact top-k read from precomputed scores.
pub fn sorted_scan(table: &[ScoredElement], k: usize) -> Result<TopKSolution, QueryError> {
    let (best, _) = oracle_orders(table);
    let mut solution = TopKSolution::new(k)?;
    let by_id: std::collections::HashMap<&ElementId, &ScoredElement> =
        table.iter().map(|e| (&e.id, e)).collect();
    for id in best.iter().take(k) {
        solution.insert(by_id[id].clone());
    }
    Ok(solution)
}

/// All element ids of an index in tree order.
pub fn index_ids(index: &Index) -> Vec<ElementId> {
    index
        .leaves()
        .into_iter()
        .flat_map(|leaf| match leaf {
            crate::index::IndexNode::Leaf { elements, .. } => elements.clone(),
            crate::index::IndexNode::Internal { .. } => Vec::new(),
        })
        .collect()
}

/// Query state for a baseline.
pub fn baseline_state(
    kind: BaselineKind,
    index: &Index,
    params: QueryParams,
    table: Option<&[ScoredElement]>,
) -> Result<QueryState, QueryError> {
    let mut params = params;
    params.fallback = false;
    let need_table = || {
        table.ok_or_else(|| {
            QueryError::InvalidParams(format!("{kind} needs a precomputed score table"))
        })
    };
    match kind {
        BaselineKind::Ucb => QueryState::with_policy(
            index,
            params,
            Policy::Ucb {
                exploration: UCB_EXPLORATION,
            },
        ),
        BaselineKind::ExplorationOnly => {
            QueryState::with_policy(index, params, Policy::ExplorationOnly)
        }
        BaselineKind::UniformSample => {
            let order = uniform_sample_order(&index_ids(index), params.seed);
            QueryState::from_sequence(order, params)
        }
        BaselineKind::ScanBest => QueryState::from_sequence(oracle_orders(need_table()?).0, params),
        BaselineKind::ScanWorst => {
            QueryState::from_sequence(oracle_orders(need_table()?).1, params)
        }
        BaselineKind::SortedScan => Err(QueryError::InvalidParams(
            "SORTED_SCAN does not score elements; use run_baseline".into(),
        )),
    }
}

/// Runs a baseline with the executor's stop and observer contract.
///
/// `SortedScan` never calls the plugin: it reports once, at `t = min(k, n)`.
pub fn run_baseline<P, O>(
    kind: BaselineKind,
    index: &Index,
    params: QueryParams,
    plugin: &mut P,
    table: Option<&[ScoredElement]>,
    stop: &StopCondition,
    observer: &mut O,
) -> Result<RunSummary, QueryError>
where
    P: ScorerPlugin + ?Sized,
    O: Observer + ?Sized,
{
    if kind == BaselineKind::SortedScan {
        let table = table.ok_or_else(|| {
            QueryError::InvalidParams("SORTED_SCAN needs a precomputed score table".into())
        })?;
        let started = Instant::now();
        let solution = sorted_scan(table, params.k)?;
        let elapsed = started.elapsed().as_secs_f64();
        let records: Vec<StepRecord> = solution
            .sorted_desc()
            .into_iter()
            .map(|e| StepRecord {
                score: e.score.value(),
                gain: e.score.value(),
                id: e.id,
                accepted: true,
                evicted: None,
            })
            .collect();
        observer.on_batch(&BatchReport {
            t: records.len(),
            elapsed_seconds: elapsed,
            overhead_seconds: elapsed,
            stk: solution.stk(),
            mode: Mode::Sample,
            records: &records,
            solution: &solution,
        });
        return Ok(RunSummary {
            t: records.len(),
            elapsed_seconds: elapsed,
            overhead_seconds: elapsed,
            exploration_rounds: 0,
            transitions: Vec::new(),
            solution,
        });
    }
    baseline_state(kind, index, params, table)?.run(plugin, stop, observer)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::topk::Score;

    fn table(pairs: &[(&str, f64)]) -> Vec<ScoredElement> {
        pairs
            .iter()
            .map(|(id, s)| {
                ScoredElement::new(ElementId::new(*id).unwrap(), Score::new(*s).unwrap())
            })
            .collect()
    }

    fn names(ids: &[ElementId]) -> Vec<&str> {
        ids.iter().map(|i| i.as_str()).collect()
    }

    #[test]
    fn oracle_order_example() {
        let (best, worst) = oracle_orders(&table(&[("a", 1.0), ("b", 3.0), ("c", 2.0)]));
        assert_eq!(names(&best), vec!["b", "c", "a"]);
        assert_eq!(names(&worst), vec!["a", "c", "b"]);
    }

    #[test]
    fn sorted_scan_cases() {
        let t = table(&[("a", 1.0), ("b", 3.0), ("c", 2.0), ("d", 3.0)]);
        let s = sorted_scan(&t, 2).unwrap();
        assert_eq!(s.stk(), 6.0);
        assert!(sorted_scan(&[], 3).unwrap().is_empty());
        let all = sorted_scan(&t, 10).unwrap();
        let order: Vec<String> = all.sorted_desc().iter().map(|e| e.id.to_string()).collect();
        assert_eq!(order, vec!["b", "d", "c", "a"]);
    }

    #[test]
    fn uniform_order_is_seeded_permutation() {
        let ids: Vec<ElementId> = (0..50)
            .map(|i| ElementId::new(format!("x{i}")).unwrap())
            .collect();
        let a = uniform_sample_order(&ids, 4);
        let b = uniform_sample_order(&ids, 4);
        let c = uniform_sample_order(&ids, 5);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut sorted = a.clone();
        sorted.sort();
        let mut orig = ids.clone();
        orig.sort();
        assert_eq!(sorted, orig);
    }

    #[test]
    fn kind_names_parse() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
        }
        assert_eq!(
            "uniform-sample".parse::<BaselineKind>().unwrap(),
            BaselineKind::UniformSample
        );
        assert!("nope".parse::<BaselineKind>().is_err());
    }

    use crate::bandit::{NoopObserver, QueryParams};
    use crate::plugin::TableScorer;

    fn two_leaf_index(a: usize, b: usize) -> Index {
        let group = |p: &str, n: usize, c: f64| {
            (
                vec![c],
                (0..n)
                    .map(|i| ElementId::new(format!("{p}{i}")).unwrap())
                    .collect(),
            )
        };
        Index::from_clusters(vec![group("a", a, 0.0), group("b", b, 10.0)]).unwrap()
    }

    fn find(state: &QueryState, id: &str) -> usize {
        state.find(id).unwrap()
    }

    #[test]
    fn ucb_picks_unvisited_first() {
        let index = two_leaf_index(5, 5);
        let mut state =
            baseline_state(BaselineKind::Ucb, &index, QueryParams::default(), None).unwrap();
        let a = find(&state, "L0");
        state.nodes[a].visits = 3;
        state.nodes[a].reward = 300.0;
        state.t = 3;
        for _ in 0..10 {
            assert_eq!(ucb_choose(&mut state).unwrap(), "L1");
        }
    }

    #[test]
    fn ucb_bonus_arithmetic() {
        let index = two_leaf_index(5, 5);
        let mut state =
            baseline_state(BaselineKind::Ucb, &index, QueryParams::default(), None).unwrap();
        let (a, b) = (find(&state, "L0"), find(&state, "L1"));
        state.nodes[a].visits = 100;
        state.nodes[a].reward = 100.0;
        state.nodes[b].visits = 1;
        state.nodes[b].reward = 0.5;
        state.t = 101;
        let bonus_b = 0.5 + (2.0 * 101f64.ln()).sqrt();
        let bonus_a = 1.0 + (2.0 * 101f64.ln() / 100.0).sqrt();
        assert!(bonus_b > 3.5 && bonus_a < 1.31);
        assert_eq!(ucb_choose(&mut state).unwrap(), "L1");
    }

    #[test]
    fn ucb_single_child() {
        let index =
            Index::from_clusters(vec![(vec![0.0], vec![ElementId::new("x").unwrap()])]).unwrap();
        let mut state =
            baseline_state(BaselineKind::Ucb, &index, QueryParams::default(), None).unwrap();
        assert_eq!(ucb_choose(&mut state).unwrap(), "L0");
    }

    fn leaf_frequencies(index: &Index, trials: usize) -> HashMap<String, usize> {
        let mut state = baseline_state(
            BaselineKind::ExplorationOnly,
            index,
            QueryParams::default(),
            None,
        )
        .unwrap();
        let mut counts = HashMap::new();
        for _ in 0..trials {
            *counts
                .entry(exploration_only_choose(&mut state).unwrap())
                .or_insert(0) += 1;
        }
        counts
    }

    fn within_3_sigma(count: usize, trials: usize, p: f64) -> bool {
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        (count as f64 - trials as f64 * p).abs() <= 3.0 * sd
    }

    #[test]
    fn exploration_only_balanced_tree() {
        let clusters = [0.0, 1.0, 10.0, 11.0]
            .iter()
            .enumerate()
            .map(|(i, &c)| (vec![c], vec![ElementId::new(format!("x{i}")).unwrap()]))
            .collect();
        let index = Index::from_clusters(clusters).unwrap();
        assert_eq!(index.depth(), 3);
        let counts = leaf_frequencies(&index, 10_000);
        assert_eq!(counts.len(), 4);
        for c in counts.values() {
            assert!(within_3_sigma(*c, 10_000, 0.25), "{counts:?}");
        }
    }

    #[test]
    fn exploration_only_shallow_leaf() {
        // {0,1} merge first, 10 joins at the root
        let clusters = [0.0, 1.0, 10.0]
            .iter()
            .enumerate()
            .map(|(i, &c)| (vec![c], vec![ElementId::new(format!("x{i}")).unwrap()]))
            .collect();
        let index = Index::from_clusters(clusters).unwrap();
        let counts = leaf_frequencies(&index, 10_000);
        assert!(within_3_sigma(counts["L2"], 10_000, 0.5), "{counts:?}");
        assert!(within_3_sigma(counts["L0"], 10_000, 0.25), "{counts:?}");
    }

    fn curve(kind: BaselineKind, scores: &[f64], k: usize) -> (Vec<f64>, f64) {
        let ids: Vec<ElementId> = (0..scores.len())
            .map(|i| ElementId::new(format!("e{i:03}")).unwrap())
            .collect();
        let tab: Vec<ScoredElement> = ids
            .iter()
            .zip(scores)
            .map(|(id, &s)| ScoredElement::new(id.clone(), Score::new(s).unwrap()))
            .collect();
        let index = Index::from_clusters(vec![(vec![0.0], ids.clone())]).unwrap();
        let map: HashMap<ElementId, f64> = ids.into_iter().zip(scores.iter().copied()).collect();
        let mut plugin = TableScorer::new(map, |v: &f64| *v);
        let mut stks = Vec::new();
        let params = QueryParams {
            k,
            ..QueryParams::default()
        };
        run_baseline(
            kind,
            &index,
            params,
            &mut plugin,
            Some(&tab),
            &StopCondition::exhaustion(),
            &mut |r: &BatchReport<'_>| stks.push(r.stk),
        )
        .unwrap();
        (stks, crate::topk::stk(scores, k))
    }

    #[test]
    fn scan_orders_bound_the_curve() {
        let scores: Vec<f64> = (0..40).map(|i| ((i * 37) % 41) as f64).collect();
        let k = 5;
        let (best, opt) = curve(BaselineKind::ScanBest, &scores, k);
        assert_eq!(best[k - 1], opt);
        assert!(best[k - 2] < opt);
        let (worst, opt) = curve(BaselineKind::ScanWorst, &scores, k);
        let first = worst.iter().position(|&s| s == opt).unwrap();
        assert_eq!(first + 1, scores.len());
        let (sorted, opt) = curve(BaselineKind::SortedScan, &scores, k);
        assert_eq!(sorted, vec![opt]);
    }

    #[test]
    fn uniform_between_scans_on_average() {
        let scores: Vec<f64> = (0..60).map(|i| ((i * 17) % 61) as f64).collect();
        let k = 4;
        let (best, _) = curve(BaselineKind::ScanBest, &scores, k);
        let (worst, _) = curve(BaselineKind::ScanWorst, &scores, k);
        let ids: Vec<ElementId> = (0..scores.len())
            .map(|i| ElementId::new(format!("e{i:03}")).unwrap())
            .collect();
        let index = Index::from_clusters(vec![(vec![0.0], ids.clone())]).unwrap();
        let mut mean = vec![0.0; scores.len()];
        let runs = 30;
        for seed in 0..runs {
            let map: HashMap<ElementId, f64> =
                ids.iter().cloned().zip(scores.iter().copied()).collect();
            let mut plugin = TableScorer::new(map, |v: &f64| *v);
            let params = QueryParams {
                k,
                seed,
                ..QueryParams::default()
            };
            let mut i = 0;
            run_baseline(
                BaselineKind::UniformSample,
                &index,
                params,
                &mut plugin,
                None,
                &StopCondition::exhaustion(),
                &mut |r: &BatchReport<'_>| {
                    mean[i] += r.stk / runs as f64;
                    i += 1;
                },
            )
            .unwrap();
        }
        for t in 0..scores.len() {
            assert!(worst[t] <= mean[t] + 1e-9 && mean[t] <= best[t] + 1e-9);
        }
    }

    #[test]
    fn table_required_for_oracle_scans() {
        let index = two_leaf_index(2, 2);
        for kind in [
            BaselineKind::ScanBest,
            BaselineKind::ScanWorst,
            BaselineKind::SortedScan,
        ] {
            assert!(kind.needs_score_table());
            let mut plugin = crate::plugin::ConstantScorer(1.0);
            let res = run_baseline(
                kind,
                &index,
                QueryParams::default(),
                &mut plugin,
                None,
                &StopCondition::exhaustion(),
                &mut NoopObserver,
            );
            assert!(matches!(res, Err(QueryError::InvalidParams(_))));
        }
    }
}
