//! Runtime detectors for a misleading index.
//!
//! Two things can go wrong with the index. The tree can hide the best leaf
//! under a subtree whose other leaves are poor, in which case the greedy
//! descent never reaches it; the query then drops the tree and keeps the
//! leaves as a flat set of arms. Or the clustering itself can carry no
//! signal, in which case the bandit's per-element overhead buys nothing and
//! a shuffled scan of the remaining elements is faster.
//!
//! Checks start once 30% of the data has been scored and repeat every
//! `F * n` elements.

use rand::seq::SliceRandom;

use crate::bandit::{Mode, QueryError, QueryState};

pub const WARMUP_FRACTION: f64 = 0.3;

fn fraction_of(n: usize, fraction: f64) -> usize {
    // guard against 0.3 * 1000 = 300.00000000000006
    ((n as f64 * fraction) - 1e-9).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct FallbackSchedule {
    pub warmup_fraction: f64,
    pub check_fraction: f64,
    pub last_check: Option<usize>,
}

impl FallbackSchedule {
    pub fn new(check_fraction: f64) -> Self {
        FallbackSchedule {
            warmup_fraction: WARMUP_FRACTION,
            check_fraction,
            last_check: None,
        }
    }

    pub fn warmup(&self, n: usize) -> usize {
        fraction_of(n, self.warmup_fraction)
    }

    pub fn interval(&self, n: usize) -> usize {
        fraction_of(n, self.check_fraction).max(1)
    }

    pub fn due(&self, t: usize, n: usize) -> bool {
        t >= self.warmup(n)
            && self
                .last_check
                .is_none_or(|last| t - last >= self.interval(n))
    }

    pub fn mark(&mut self, t: usize) {
        self.last_check = Some(t);
    }
}

/// Smallest live leaf id under each node, used as the deterministic
/// tie-break key during the simulated descent.
fn min_leaf_key(state: &QueryState, node: usize) -> &str {
    let n = &state.nodes[node];
    if n.is_leaf {
        return &n.node_id;
    }
    n.children
        .iter()
        .map(|&c| min_leaf_key(state, c))
        .min()
        .unwrap_or(&n.node_id)
}

/// True when a fully greedy root-to-leaf descent does not end at the leaf
/// with the highest estimated gain. Ties resolve toward the smallest node id
/// in both procedures.
pub fn tree_fallback_triggered(state: &QueryState) -> bool {
    if state.mode != Mode::Tree {
        return false;
    }
    let Some(root) = state.root else { return false };
    let theta = state.solution.kth_score();
    let leaves = state.live_leaf_indices();
    if leaves.len() < 2 {
        return false;
    }
    let gain = |i: usize| state.nodes[i].sketch.expected_gain(theta);
    let greedy = leaves
        .iter()
        .map(|&i| (gain(i), state.nodes[i].node_id.as_str(), i))
        .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(a.1)))
        .map(|(_, _, i)| i)
        .expect("at least two leaves");

    let mut node = root;
    while !state.nodes[node].is_leaf {
        node = state.nodes[node]
            .children
            .iter()
            .map(|&c| (gain(c), min_leaf_key(state, c), c))
            .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(a.1)))
            .map(|(_, _, c)| c)
            .expect("live internal nodes have children");
    }
    node != greedy
}

/// Drops the tree and keeps its live leaves as a flat arm set.
pub fn flatten(state: &mut QueryState) -> Result<(), QueryError> {
    if state.mode != Mode::Tree {
        return Err(QueryError::WrongMode {
            expected: "TREE",
            actual: state.mode,
        });
    }
    state.flat = state.live_leaf_indices();
    for node in state.nodes.iter_mut().filter(|n| !n.is_leaf) {
        node.alive = false;
        node.children.clear();
    }
    for &leaf in &state.flat {
        state.nodes[leaf].parent = None;
    }
    state.root = None;
    state.mode = Mode::Flat;
    Ok(())
}

/// Compares the estimated STK-per-second slope of greedy exploitation with
/// that of uniform sampling over the remaining elements.
pub fn cluster_fallback_triggered(state: &QueryState) -> bool {
    if state.mode == Mode::Sample {
        return false;
    }
    let Some((scorer, overhead)) = state.latencies() else {
        return false;
    };
    let theta = state.solution.kth_score();
    let mut best = 0.0f64;
    let mut weighted = 0.0;
    let mut size = 0usize;
    for leaf in state.live_leaf_indices() {
        let node = &state.nodes[leaf];
        let g = node.sketch.expected_gain(theta);
        best = best.max(g);
        weighted += node.queue.len() as f64 * g;
        size += node.queue.len();
    }
    if size == 0 || weighted <= 0.0 {
        return false;
    }
    let mean_gain = weighted / size as f64;
    let bandit_latency = scorer + overhead;
    if scorer <= 0.0 {
        // sampling is free per element; bandit wins only if it is free too
        return bandit_latency > 0.0 || mean_gain > best;
    }
    mean_gain / scorer > best / bandit_latency
}

/// Merges every remaining id into one shuffled list; sketches are abandoned.
pub fn fallback_to_sample(state: &mut QueryState) -> Result<(), QueryError> {
    if state.mode == Mode::Sample {
        return Err(QueryError::WrongMode {
            expected: "TREE or FLAT",
            actual: state.mode,
        });
    }
    let mut ids = Vec::with_capacity(state.remaining);
    for leaf in state.live_leaf_indices() {
        ids.append(&mut state.nodes[leaf].queue);
    }
    for node in state.nodes.iter_mut() {
        node.alive = false;
        node.children.clear();
    }
    ids.shuffle(&mut state.rng);
    state.sequence = ids;
    state.flat.clear();
    state.root = None;
    state.mode = Mode::Sample;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_grid() {
        let mut s = FallbackSchedule::new(0.01);
        let mut checks = Vec::new();
        for t in 0..=340 {
            if s.due(t, 1000) {
                s.mark(t);
                checks.push(t);
            }
        }
        assert_eq!(checks, vec![300, 310, 320, 330, 340]);
    }

    #[test]
    fn schedule_rounds_up() {
        let s = FallbackSchedule::new(0.01);
        assert_eq!(s.warmup(1001), 301);
        assert_eq!(s.interval(1001), 11);
        assert_eq!(s.interval(10), 1);
        assert_eq!(FallbackSchedule::new(0.0).interval(1000), 1);
    }

    use crate::bandit::{LatencyModel, QueryParams};
    use crate::histogram::HistogramSketch;
    use crate::index::Index;
    use crate::plugin::ConstantScorer;
    use crate::topk::ElementId;

    /// Leaves at the given 1-D centroids, `per_leaf` elements each.
    fn state_with(centroids: &[f64], per_leaf: usize) -> QueryState {
        let clusters = centroids
            .iter()
            .enumerate()
            .map(|(l, &c)| {
                let ids = (0..per_leaf)
                    .map(|i| ElementId::new(format!("l{l}e{i}")).unwrap())
                    .collect();
                (vec![c], ids)
            })
            .collect();
        let index = Index::from_clusters(clusters).unwrap();
        let params = QueryParams {
            k: 1,
            bucket_count: 10,
            alpha: 10.0,
            ..QueryParams::default()
        };
        QueryState::new(&index, params).unwrap()
    }

    fn sketch(mass: &[(usize, f64)]) -> HistogramSketch {
        let edges: Vec<f64> = (0..=10).map(f64::from).collect();
        let mut m = vec![0.0; 10];
        for &(bin, w) in mass {
            m[bin] += w;
        }
        HistogramSketch::from_parts(edges, m).unwrap()
    }

    /// Best leaf L0 sits next to a heavy, worthless L1; the sibling subtree
    /// holds two middling leaves and wins on aggregate.
    fn misleading() -> QueryState {
        let mut state = state_with(&[0.0, 1.0, 10.0, 11.0], 3);
        let best = [(8, 0.5), (9, 0.5)];
        let junk = [(0, 9.0)];
        let mid = [(4, 0.5), (5, 0.5)];
        state.set_sketch("L0", sketch(&best)).unwrap();
        state.set_sketch("L1", sketch(&junk)).unwrap();
        state.set_sketch("L2", sketch(&mid)).unwrap();
        state.set_sketch("L3", sketch(&mid)).unwrap();
        state
            .set_sketch("N0", sketch(&[best[0], best[1], junk[0]]))
            .unwrap();
        state
            .set_sketch("N1", sketch(&[(4, 1.0), (5, 1.0)]))
            .unwrap();
        state
            .set_sketch(
                "N2",
                sketch(&[best[0], best[1], junk[0], (4, 1.0), (5, 1.0)]),
            )
            .unwrap();
        state
    }

    #[test]
    fn misleading_tree_triggers() {
        let state = misleading();
        assert_eq!(state.live_children("N2"), vec!["N0", "N1"]);
        let gain = |id: &str| state.sketch(id).unwrap().expected_gain(0.0);
        // exhaustive check of the construction
        assert!((gain("L0") - 9.0).abs() < 1e-12);
        assert!((gain("L2") - 5.0).abs() < 1e-12);
        assert!((gain("N0") - 1.35).abs() < 1e-12);
        assert!((gain("N1") - 5.0).abs() < 1e-12);
        assert!(tree_fallback_triggered(&state));
    }

    #[test]
    fn single_leaf_never_triggers() {
        let mut state = state_with(&[0.0], 4);
        state.set_sketch("L0", sketch(&[(3, 1.0)])).unwrap();
        assert!(!tree_fallback_triggered(&state));
    }

    #[test]
    fn identical_sketches_never_trigger() {
        let mut state = state_with(&[0.0, 1.0, 10.0, 11.0, 30.0], 2);
        let ids: Vec<String> = (0..5)
            .map(|i| format!("L{i}"))
            .chain((0..4).map(|j| format!("N{j}")))
            .collect();
        for id in ids {
            state
                .set_sketch(&id, sketch(&[(2, 1.0), (7, 1.0)]))
                .unwrap();
        }
        assert!(!tree_fallback_triggered(&state));
    }

    #[test]
    fn flatten_keeps_leaves_and_counts() {
        let mut state = state_with(&[0.0, 1.0, 10.0, 11.0, 30.0], 3);
        assert!(state.nodes.iter().filter(|n| !n.is_leaf).count() == 4);
        let before: Vec<HistogramSketch> = (0..5)
            .map(|i| state.sketch(&format!("L{i}")).unwrap().clone())
            .collect();
        let remaining = state.remaining();
        flatten(&mut state).unwrap();
        assert_eq!(state.mode(), Mode::Flat);
        assert_eq!(state.live_leaves().len(), 5);
        assert_eq!(state.remaining(), remaining);
        let queued: usize = state
            .live_leaves()
            .iter()
            .map(|l| state.leaf_remaining(l).unwrap())
            .sum();
        assert_eq!(queued, remaining);
        for (i, s) in before.iter().enumerate() {
            assert_eq!(state.sketch(&format!("L{i}")).unwrap(), s);
        }
        assert!(matches!(
            flatten(&mut state),
            Err(QueryError::WrongMode { .. })
        ));
        // flat arms still drain cleanly
        let mut plugin = ConstantScorer(1.0);
        while !state.is_exhausted() {
            state.step_batch(&mut plugin).unwrap();
        }
        assert_eq!(state.t(), 15);
        assert!(state.live_leaves().is_empty());
    }

    #[test]
    fn cluster_fallback_examples() {
        let mut state = state_with(&[0.0, 1.0, 10.0], 4);
        for id in ["L0", "L1", "L2"] {
            state.set_sketch(id, sketch(&[(5, 1.0)])).unwrap();
        }
        assert!(
            !cluster_fallback_triggered(&state),
            "no latency estimates yet"
        );
        state.set_latencies(1e-3, 1e-4);
        assert!(cluster_fallback_triggered(&state));

        state
            .set_sketch(
                "L0",
                HistogramSketch::from_parts(vec![0.0, 19.0, 21.0], vec![0.0, 1.0]).unwrap(),
            )
            .unwrap();
        state.set_sketch("L1", sketch(&[])).unwrap();
        state.set_sketch("L2", sketch(&[])).unwrap();
        state.set_latencies(1e-3, 1e-9);
        assert!(!cluster_fallback_triggered(&state));

        state.set_sketch("L0", sketch(&[])).unwrap();
        assert!(!cluster_fallback_triggered(&state));
    }

    #[test]
    fn sample_fallback_merges_remaining() {
        let mut state = state_with(&[0.0, 1.0, 10.0], 2);
        fallback_to_sample(&mut state).unwrap();
        assert_eq!(state.mode(), Mode::Sample);
        let unique: std::collections::HashSet<_> = state.sequence.iter().collect();
        assert_eq!(unique.len(), 6);
        assert_eq!(state.sequence.len(), 6);
        assert!(fallback_to_sample(&mut state).is_err());
    }

    #[test]
    fn sample_fallback_after_progress() {
        let mut state = state_with(&[0.0, 1.0, 10.0, 20.0], 5);
        let mut plugin = ConstantScorer(1.0);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..7 {
            for r in state.step_batch(&mut plugin).unwrap() {
                seen.insert(r.id);
            }
        }
        fallback_to_sample(&mut state).unwrap();
        assert!(state.sequence.iter().all(|id| !seen.contains(id)));
        while !state.is_exhausted() {
            for r in state.step_batch(&mut plugin).unwrap() {
                assert!(seen.insert(r.id));
            }
        }
        assert_eq!(state.t(), state.n());
        assert_eq!(seen.len(), 20);
    }

    #[test]
    fn transitions_are_one_way() {
        let clusters = (0..10)
            .map(|l| {
                let ids = (0..50)
                    .map(|i| ElementId::new(format!("l{l}e{i}")).unwrap())
                    .collect();
                (vec![l as f64], ids)
            })
            .collect();
        let index = Index::from_clusters(clusters).unwrap();
        let params = QueryParams {
            k: 5,
            latency: LatencyModel::Fixed {
                scorer_seconds: 1e-3,
                overhead_seconds: 1e-3,
            },
            ..QueryParams::default()
        };
        let mut state = QueryState::new(&index, params).unwrap();
        let mut plugin = ConstantScorer(3.0);
        let summary = state
            .run(
                &mut plugin,
                &crate::bandit::StopCondition::exhaustion(),
                &mut crate::bandit::NoopObserver,
            )
            .unwrap();
        assert_eq!(summary.t, 500);
        let order = |m: Mode| match m {
            Mode::Tree => 0,
            Mode::Flat => 1,
            Mode::Sample => 2,
        };
        for tr in &summary.transitions {
            assert!(order(tr.to) > order(tr.from));
            assert!(tr.t >= 150);
        }
        assert!(summary.transitions.len() <= 2);
    }
}
