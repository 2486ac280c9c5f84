//! Anytime query executor.
//!
//! Each iteration picks a leaf cluster, draws the next unscored elements from
//! it, scores them through the plugin and folds the scores into the running
//! solution and into the histogram sketches on the root-to-leaf path.
//!
//! Leaf selection is epsilon-greedy with `eps_t = ceil(t / batch)^(-1/3)`. A
//! single coin per iteration decides between a uniformly random descent and a
//! greedy descent that follows the child whose sketch promises the largest
//! expected gain over the current k-th best score. The same state machine
//! also drives the UCB, exploration-only and fixed-order baselines.

use std::fmt;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fallback::{self, FallbackSchedule};
use crate::histogram::{HistogramError, HistogramSketch};
use crate::index::{Index, IndexNode};
use crate::plugin::{score_ids, PluginError, ScorerPlugin};
use crate::topk::{ElementId, Score, ScoredElement, TopKSolution, ValueError};

const LATENCY_DECAY: f64 = 0.1;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("invalid query parameters: {0}")]
    InvalidParams(String),
    #[error("no unscored elements remain")]
    Exhausted,
    #[error("operation requires mode {expected}, query is in {actual}")]
    WrongMode {
        expected: &'static str,
        actual: Mode,
    },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error(transparent)]
    Plugin(#[from] PluginError),
    #[error(transparent)]
    Histogram(#[from] HistogramError),
    #[error(transparent)]
    Value(#[from] ValueError),
}

/// How per-element latencies feeding the clustering fallback are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LatencyModel {
    /// Exponential moving averages of wall-clock measurements.
    Measured,
    /// Fixed per-element costs in seconds. Makes fallback decisions
    /// independent of machine load.
    Fixed {
        scorer_seconds: f64,
        overhead_seconds: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryParams {
    pub k: usize,
    pub bucket_count: usize,
    pub alpha: f64,
    pub beta: f64,
    pub fallback_frequency: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Periodic fallback checks.
    pub fallback: bool,
    /// Merge low bins as the k-th score rises.
    pub rebinning: bool,
    /// Subtract exhausted leaves from their ancestors' sketches.
    pub subtraction: bool,
    pub latency: LatencyModel,
}

impl Default for QueryParams {
    fn default() -> Self {
        QueryParams {
            k: 100,
            bucket_count: 8,
            alpha: 0.1,
            beta: 1.1,
            fallback_frequency: 0.01,
            batch_size: 1,
            seed: 0,
            fallback: true,
            rebinning: true,
            subtraction: true,
            latency: LatencyModel::Measured,
        }
    }
}

impl QueryParams {
    pub fn validate(&self) -> Result<(), QueryError> {
        let bad = |m: String| Err(QueryError::InvalidParams(m));
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if self.bucket_count < 2 {
            return bad(format!(
                "bucket count must be >= 2, got {}",
                self.bucket_count
            ));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta.is_finite() && self.beta >= 1.0) {
            return bad(format!("beta must be >= 1, got {}", self.beta));
        }
        if !(0.0..=1.0).contains(&self.fallback_frequency) {
            return bad(format!(
                "fallback frequency must lie in [0, 1], got {}",
                self.fallback_frequency
            ));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if let LatencyModel::Fixed {
            scorer_seconds,
            overhead_seconds,
        } = self.latency
        {
            if !(scorer_seconds >= 0.0 && overhead_seconds >= 0.0) {
                return bad("fixed latencies must be non-negative".into());
            }
        }
        Ok(())
    }
}

/// `ceil(t / batch)^(-1/3)`; `t` counts iterations starting at 1.
pub fn exploration_probability(t: usize, batch_size: usize) -> f64 {
    let rounds = t.max(1).div_ceil(batch_size.max(1));
    (rounds as f64).powf(-1.0 / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    Tree,
    Flat,
    Sample,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Tree => "TREE",
            Mode::Flat => "FLAT",
            Mode::Sample => "SAMPLE",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TREE" => Ok(Mode::Tree),
            "FLAT" => Ok(Mode::Flat),
            "SAMPLE" => Ok(Mode::Sample),
            other => Err(format!("unknown mode {other}")),
        }
    }
}

/// Leaf-selection rule used while the query is in `TREE` or `FLAT` mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    EpsilonGreedy,
    Ucb { exploration: f64 },
    ExplorationOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionReason {
    TreeMisranksGreedyArm,
    SamplingOutpacesBandit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTransition {
    pub t: usize,
    pub from: Mode,
    pub to: Mode,
    pub reason: TransitionReason,
}

/// One scored element of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub id: ElementId,
    pub score: f64,
    pub gain: f64,
    /// Whether the element entered the solution.
    pub accepted: bool,
    pub evicted: Option<ScoredElement>,
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) node_id: String,
    pub(crate) parent: Option<usize>,
    /// Live children only.
    pub(crate) children: Vec<usize>,
    pub(crate) is_leaf: bool,
    pub(crate) alive: bool,
    pub(crate) sketch: HistogramSketch,
    /// Unscored ids of a leaf; drawn from the back.
    pub(crate) queue: Vec<ElementId>,
    gain_cache: Option<(f64, f64)>,
    pub(crate) visits: u64,
    pub(crate) reward: f64,
}

impl Node {
    fn gain(&mut self, theta: f64) -> f64 {
        match self.gain_cache {
            Some((t, g)) if t == theta => g,
            _ => {
                let g = self.sketch.expected_gain(theta);
                self.gain_cache = Some((theta, g));
                g
            }
        }
    }

    fn touch(&mut self) {
        self.gain_cache = None;
    }
}

/// One in-flight query.
#[derive(Debug, Clone)]
pub struct QueryState {
    pub(crate) params: QueryParams,
    pub(crate) policy: Policy,
    pub(crate) n: usize,
    pub(crate) t: usize,
    pub(crate) solution: TopKSolution,
    pub(crate) nodes: Vec<Node>,
    pub(crate) root: Option<usize>,
    pub(crate) flat: Vec<usize>,
    /// Shuffled ids scanned in `SAMPLE` mode; drawn from the back.
    pub(crate) sequence: Vec<ElementId>,
    pub(crate) mode: Mode,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) remaining: usize,
    pub(crate) scorer_latency: Option<f64>,
    pub(crate) overhead_latency: Option<f64>,
    pub(crate) schedule: FallbackSchedule,
    pub(crate) exploration_rounds: usize,
    pub(crate) transitions: Vec<ModeTransition>,
    plugin_time: Duration,
    path: Vec<usize>,
}

impl QueryState {
    /// Query state for the epsilon-greedy bandit over `index`.
    pub fn new(index: &Index, params: QueryParams) -> Result<Self, QueryError> {
        Self::with_policy(index, params, Policy::EpsilonGreedy)
    }

    pub fn with_policy(
        index: &Index,
        params: QueryParams,
        policy: Policy,
    ) -> Result<Self, QueryError> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let empty = HistogramSketch::new(params.bucket_count, params.alpha)?;
        let mut nodes: Vec<Node> = Vec::new();
        let mut stack: Vec<(&IndexNode, Option<usize>)> = vec![(&index.root, None)];
        while let Some((node, parent)) = stack.pop() {
            let idx = nodes.len();
            let mut queue = match node {
                IndexNode::Leaf { elements, .. } => elements.clone(),
                IndexNode::Internal { .. } => Vec::new(),
            };
            queue.shuffle(&mut rng);
            nodes.push(Node {
                node_id: node.node_id().to_string(),
                parent,
                children: Vec::new(),
                is_leaf: node.is_leaf(),
                alive: true,
                sketch: empty.clone(),
                queue,
                gain_cache: None,
                visits: 0,
                reward: 0.0,
            });
            if let Some(p) = parent {
                nodes[p].children.push(idx);
            }
            for child in node.children().iter().rev() {
                stack.push((child, Some(idx)));
            }
        }
        let remaining = nodes.iter().map(|n| n.queue.len()).sum();
        let fallback_schedule = FallbackSchedule::new(params.fallback_frequency);
        let mut state = QueryState {
            solution: TopKSolution::new(params.k)?,
            params,
            policy,
            n: remaining,
            t: 0,
            nodes,
            root: Some(0),
            flat: Vec::new(),
            sequence: Vec::new(),
            mode: Mode::Tree,
            rng,
            remaining,
            scorer_latency: None,
            overhead_latency: None,
            schedule: fallback_schedule,
            exploration_rounds: 0,
            transitions: Vec::new(),
            plugin_time: Duration::ZERO,
            path: Vec::new(),
        };
        state.apply_fixed_latency();
        Ok(state)
    }

    /// Query state that scans `order` front to back (fixed-order baselines).
    pub fn from_sequence(order: Vec<ElementId>, params: QueryParams) -> Result<Self, QueryError> {
        params.validate()?;
        let n = order.len();
        let mut sequence = order;
        sequence.reverse();
        let mut state = QueryState {
            solution: TopKSolution::new(params.k)?,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            schedule: FallbackSchedule::new(params.fallback_frequency),
            params,
            policy: Policy::ExplorationOnly,
            n,
            t: 0,
            nodes: Vec::new(),
            root: None,
            flat: Vec::new(),
            sequence,
            mode: Mode::Sample,
            remaining: n,
            scorer_latency: None,
            overhead_latency: None,
            exploration_rounds: 0,
            transitions: Vec::new(),
            plugin_time: Duration::ZERO,
            path: Vec::new(),
        };
        state.apply_fixed_latency();
        Ok(state)
    }

    fn apply_fixed_latency(&mut self) {
        if let LatencyModel::Fixed {
            scorer_seconds,
            overhead_seconds,
        } = self.params.latency
        {
            self.scorer_latency = Some(scorer_seconds);
            self.overhead_latency = Some(overhead_seconds);
        }
    }

    pub fn params(&self) -> &QueryParams {
        &self.params
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    /// Elements scored so far.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Dataset size at query start.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining == 0
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn solution(&self) -> &TopKSolution {
        &self.solution
    }

    pub fn into_solution(self) -> TopKSolution {
        self.solution
    }

    /// Iterations whose coin came up "explore".
    pub fn exploration_rounds(&self) -> usize {
        self.exploration_rounds
    }

    pub fn transitions(&self) -> &[ModeTransition] {
        &self.transitions
    }

    /// Per-element (scorer, overhead) latency estimates, once available.
    pub fn latencies(&self) -> Option<(f64, f64)> {
        self.scorer_latency.zip(self.overhead_latency)
    }

    pub fn set_latencies(&mut self, scorer_seconds: f64, overhead_seconds: f64) {
        self.scorer_latency = Some(scorer_seconds);
        self.overhead_latency = Some(overhead_seconds);
    }

    pub(crate) fn find(&self, node_id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.node_id == node_id)
    }

    pub fn sketch(&self, node_id: &str) -> Option<&HistogramSketch> {
        self.find(node_id).map(|i| &self.nodes[i].sketch)
    }

    /// Replaces a node's sketch (diagnostics and tests).
    pub fn set_sketch(&mut self, node_id: &str, sketch: HistogramSketch) -> Result<(), QueryError> {
        let i = self
            .find(node_id)
            .ok_or_else(|| QueryError::UnknownNode(node_id.to_string()))?;
        self.nodes[i].sketch = sketch;
        self.nodes[i].touch();
        Ok(())
    }

    /// Ids of the live leaves, in tree order.
    pub fn live_leaves(&self) -> Vec<String> {
        self.live_leaf_indices()
            .into_iter()
            .map(|i| self.nodes[i].node_id.clone())
            .collect()
    }

    pub fn live_children(&self, node_id: &str) -> Vec<String> {
        self.find(node_id)
            .map(|i| {
                self.nodes[i]
                    .children
                    .iter()
                    .map(|&c| self.nodes[c].node_id.clone())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn root_id(&self) -> Option<&str> {
        self.root.map(|r| self.nodes[r].node_id.as_str())
    }

    /// Unscored ids left in a leaf.
    pub fn leaf_remaining(&self, node_id: &str) -> Option<usize> {
        self.find(node_id).map(|i| self.nodes[i].queue.len())
    }

    pub(crate) fn live_leaf_indices(&self) -> Vec<usize> {
        match self.mode {
            Mode::Sample => Vec::new(),
            Mode::Flat => self.flat.clone(),
            Mode::Tree => {
                let mut out = Vec::new();
                let mut stack: Vec<usize> = self.root.into_iter().collect();
                while let Some(i) = stack.pop() {
                    if self.nodes[i].is_leaf {
                        out.push(i);
                    } else {
                        stack.extend(self.nodes[i].children.iter().rev());
                    }
                }
                out
            }
        }
    }

    pub(crate) fn node_gain(&mut self, idx: usize, theta: f64) -> f64 {
        self.nodes[idx].gain(theta)
    }

    /// Chooses the leaf to sample next and returns its node id.
    pub fn choose_leaf(&mut self) -> Result<String, QueryError> {
        let leaf = self.pick_leaf()?;
        Ok(self.nodes[leaf].node_id.clone())
    }

    fn pick_leaf(&mut self) -> Result<usize, QueryError> {
        if self.is_exhausted() {
            return Err(QueryError::Exhausted);
        }
        match self.mode {
            Mode::Sample => Err(QueryError::WrongMode {
                expected: "TREE or FLAT",
                actual: self.mode,
            }),
            Mode::Flat | Mode::Tree => Ok(match self.policy {
                Policy::EpsilonGreedy => self.epsilon_greedy_leaf(),
                Policy::Ucb { exploration } => self.ucb_leaf(exploration),
                Policy::ExplorationOnly => self.explore_leaf(),
            }),
        }
    }

    fn epsilon_greedy_leaf(&mut self) -> usize {
        let eps = exploration_probability(self.t + 1, self.params.batch_size);
        if self.rng.random::<f64>() < eps {
            self.exploration_rounds += 1;
            self.explore_leaf()
        } else {
            self.exploit_leaf()
        }
    }

    /// Uniformly random live child at every layer.
    pub(crate) fn explore_leaf(&mut self) -> usize {
        self.descend(|state, options| options[state.rng.random_range(0..options.len())])
    }

    /// Child with the largest expected gain at every layer, ties at random.
    pub(crate) fn exploit_leaf(&mut self) -> usize {
        let theta = self.solution.kth_score();
        self.descend(|state, options| {
            let mut best = f64::NEG_INFINITY;
            let mut ties: Vec<usize> = Vec::new();
            for &c in options {
                let g = state.node_gain(c, theta);
                if g > best {
                    best = g;
                    ties.clear();
                    ties.push(c);
                } else if g == best {
                    ties.push(c);
                }
            }
            if ties.len() == 1 {
                ties[0]
            } else {
                ties[state.rng.random_range(0..ties.len())]
            }
        })
    }

    pub(crate) fn ucb_leaf(&mut self, exploration: f64) -> usize {
        let log_t = (self.t.max(1) as f64).ln();
        self.descend(|state, options| {
            let unvisited: Vec<usize> = options
                .iter()
                .copied()
                .filter(|&c| state.nodes[c].visits == 0)
                .collect();
            let pool = if !unvisited.is_empty() {
                unvisited
            } else {
                let mut best = f64::NEG_INFINITY;
                let mut ties = Vec::new();
                for &c in options {
                    let node = &state.nodes[c];
                    let visits = node.visits as f64;
                    let value = node.reward / visits + exploration * (2.0 * log_t / visits).sqrt();
                    if value > best {
                        best = value;
                        ties.clear();
                        ties.push(c);
                    } else if value == best {
                        ties.push(c);
                    }
                }
                ties
            };
            if pool.len() == 1 {
                pool[0]
            } else {
                pool[state.rng.random_range(0..pool.len())]
            }
        })
    }

    /// Walks from the root (or over the flat arm set) using `choose` at each
    /// layer with more than one live option.
    pub(crate) fn descend(
        &mut self,
        mut choose: impl FnMut(&mut Self, &[usize]) -> usize,
    ) -> usize {
        if self.mode == Mode::Flat {
            let arms = std::mem::take(&mut self.flat);
            let pick = if arms.len() == 1 {
                arms[0]
            } else {
                choose(self, &arms)
            };
            self.flat = arms;
            return pick;
        }
        let mut node = self.root.expect("tree mode has a root");
        while !self.nodes[node].is_leaf {
            let options = std::mem::take(&mut self.nodes[node].children);
            let next = if options.len() == 1 {
                options[0]
            } else {
                choose(self, &options)
            };
            self.nodes[node].children = options;
            node = next;
        }
        node
    }

    /// Scores one batch of at most `batch_size` elements.
    pub fn step_batch<P: ScorerPlugin + ?Sized>(
        &mut self,
        plugin: &mut P,
    ) -> Result<Vec<StepRecord>, QueryError> {
        self.step_limited(plugin, self.params.batch_size)
    }

    pub(crate) fn step_limited<P: ScorerPlugin + ?Sized>(
        &mut self,
        plugin: &mut P,
        limit: usize,
    ) -> Result<Vec<StepRecord>, QueryError> {
        let started = Instant::now();
        if self.is_exhausted() {
            return Err(QueryError::Exhausted);
        }
        let take = limit.max(1);
        let (leaf, ids) = match self.mode {
            Mode::Sample => {
                let keep = self.sequence.len().saturating_sub(take);
                let ids: Vec<ElementId> = self.sequence.drain(keep..).rev().collect();
                (None, ids)
            }
            Mode::Tree | Mode::Flat => {
                let leaf = self.pick_leaf()?;
                let queue = &mut self.nodes[leaf].queue;
                let keep = queue.len().saturating_sub(take);
                let ids: Vec<ElementId> = queue.drain(keep..).rev().collect();
                (Some(leaf), ids)
            }
        };

        let plugin_started = Instant::now();
        let scored = score_ids(plugin, &ids);
        let plugin_time = plugin_started.elapsed();
        self.plugin_time += plugin_time;
        let scores = match scored {
            Ok(scores) => scores,
            Err(err) => {
                // put the batch back untouched
                let target = match leaf {
                    Some(l) => &mut self.nodes[l].queue,
                    None => &mut self.sequence,
                };
                target.extend(ids.into_iter().rev());
                return Err(err.into());
            }
        };

        if let Some(l) = leaf {
            self.fill_path(l);
        }
        let mut records = Vec::with_capacity(ids.len());
        for (id, score) in ids.into_iter().zip(scores) {
            records.push(self.absorb(leaf, id, score)?);
        }
        if let Some(l) = leaf {
            if self.nodes[l].queue.is_empty() {
                self.prune_index(l);
            }
        }
        self.observe_latency(started.elapsed(), plugin_time, records.len());
        Ok(records)
    }

    fn fill_path(&mut self, leaf: usize) {
        self.path.clear();
        if self.mode == Mode::Flat {
            self.path.push(leaf);
            return;
        }
        let mut cur = Some(leaf);
        while let Some(i) = cur {
            self.path.push(i);
            cur = self.nodes[i].parent;
        }
    }

    fn absorb(
        &mut self,
        leaf: Option<usize>,
        id: ElementId,
        score: f64,
    ) -> Result<StepRecord, QueryError> {
        let maintain = leaf.is_some() && self.policy == Policy::EpsilonGreedy;
        if maintain {
            for &i in &self.path {
                let sketch = &mut self.nodes[i].sketch;
                if score > sketch.max_edge() {
                    sketch.extend_range(score, self.params.beta)?;
                }
            }
        }
        let outcome = self
            .solution
            .insert(ScoredElement::new(id.clone(), Score::new(score)?));
        if maintain {
            let kth = self.solution.kth_score();
            for &i in &self.path {
                let node = &mut self.nodes[i];
                if self.params.rebinning && kth > node.sketch.second_bin_upper() {
                    node.sketch.collapse_low(kth);
                }
                node.sketch.record(score)?;
                node.touch();
            }
        }
        if leaf.is_some() && matches!(self.policy, Policy::Ucb { .. }) {
            for &i in &self.path {
                self.nodes[i].visits += 1;
                self.nodes[i].reward += outcome.gain;
            }
        }
        self.t += 1;
        self.remaining -= 1;
        Ok(StepRecord {
            id,
            score,
            gain: outcome.gain,
            accepted: outcome.accepted,
            evicted: outcome.evicted,
        })
    }

    /// Removes an exhausted leaf and any ancestors left without children,
    /// subtracting the leaf's sketch from every ancestor.
    pub fn prune_empty(&mut self, leaf_id: &str) -> Result<(), QueryError> {
        let leaf = self
            .find(leaf_id)
            .filter(|&i| self.nodes[i].is_leaf && self.nodes[i].alive)
            .ok_or_else(|| QueryError::UnknownNode(leaf_id.to_string()))?;
        if !self.nodes[leaf].queue.is_empty() {
            return Err(QueryError::InvalidParams(format!(
                "leaf {leaf_id} still holds unscored elements"
            )));
        }
        self.prune_index(leaf);
        Ok(())
    }

    fn prune_index(&mut self, leaf: usize) {
        self.nodes[leaf].alive = false;
        if self.mode == Mode::Flat {
            self.flat.retain(|&i| i != leaf);
            return;
        }
        let removed = (self.params.subtraction && self.policy == Policy::EpsilonGreedy)
            .then(|| self.nodes[leaf].sketch.clone());
        let mut child = leaf;
        let mut dropping = true;
        let mut cur = self.nodes[leaf].parent;
        while let Some(p) = cur {
            let node = &mut self.nodes[p];
            if dropping {
                node.children.retain(|&c| c != child);
                if node.children.is_empty() {
                    node.alive = false;
                } else {
                    dropping = false;
                }
            }
            if let Some(sketch) = &removed {
                node.sketch.subtract(sketch);
                node.touch();
            }
            child = p;
            cur = node.parent;
        }
        if dropping {
            self.root = None;
        }
    }

    fn observe_latency(&mut self, total: Duration, plugin: Duration, count: usize) {
        if self.params.latency != LatencyModel::Measured || count == 0 {
            return;
        }
        let per = |d: Duration| d.as_secs_f64() / count as f64;
        let scorer = per(plugin);
        let overhead = per(total.saturating_sub(plugin));
        let blend = |old: Option<f64>, x: f64| {
            Some(old.map_or(x, |o| (1.0 - LATENCY_DECAY) * o + LATENCY_DECAY * x))
        };
        self.scorer_latency = blend(self.scorer_latency, scorer);
        self.overhead_latency = blend(self.overhead_latency, overhead);
    }

    /// Runs one scheduled fallback check if one is due. Returns the transition, if any.
    pub(crate) fn maybe_fallback(&mut self) -> Option<ModeTransition> {
        if !self.params.fallback
            || self.policy != Policy::EpsilonGreedy
            || self.mode == Mode::Sample
            || self.is_exhausted()
            || !self.schedule.due(self.t, self.n)
        {
            return None;
        }
        self.schedule.mark(self.t);
        let from = self.mode;
        let reason = if self.mode == Mode::Tree && fallback::tree_fallback_triggered(self) {
            fallback::flatten(self).ok()?;
            TransitionReason::TreeMisranksGreedyArm
        } else if fallback::cluster_fallback_triggered(self) {
            fallback::fallback_to_sample(self).ok()?;
            TransitionReason::SamplingOutpacesBandit
        } else {
            return None;
        };
        let transition = ModeTransition {
            t: self.t,
            from,
            to: self.mode,
            reason,
        };
        self.transitions.push(transition.clone());
        Some(transition)
    }

    /// Drives the query until `stop` fires or the data is exhausted.
    pub fn run<P, O>(
        &mut self,
        plugin: &mut P,
        stop: &StopCondition,
        observer: &mut O,
    ) -> Result<RunSummary, QueryError>
    where
        P: ScorerPlugin + ?Sized,
        O: Observer + ?Sized,
    {
        let mut elapsed = Duration::ZERO;
        let plugin_at_start = self.plugin_time;
        loop {
            if self.is_exhausted() {
                break;
            }
            if let Some(max) = stop.max_iterations {
                if self.t >= max {
                    break;
                }
            }
            if let Some(max) = stop.max_seconds {
                if elapsed.as_secs_f64() >= max {
                    break;
                }
            }
            let started = Instant::now();
            let transition = self.maybe_fallback();
            let limit = match stop.max_iterations {
                Some(max) => self.params.batch_size.min(max - self.t),
                None => self.params.batch_size,
            };
            let records = self.step_limited(plugin, limit)?;
            elapsed += started.elapsed();
            let scorer_time = self.plugin_time.saturating_sub(plugin_at_start);
            if let Some(tr) = &transition {
                observer.on_transition(tr);
            }
            observer.on_batch(&BatchReport {
                t: self.t,
                elapsed_seconds: elapsed.as_secs_f64(),
                overhead_seconds: elapsed.saturating_sub(scorer_time).as_secs_f64(),
                stk: self.solution.stk(),
                mode: self.mode,
                records: &records,
                solution: &self.solution,
            });
        }
        Ok(RunSummary {
            t: self.t,
            elapsed_seconds: elapsed.as_secs_f64(),
            overhead_seconds: elapsed
                .saturating_sub(self.plugin_time.saturating_sub(plugin_at_start))
                .as_secs_f64(),
            exploration_rounds: self.exploration_rounds,
            transitions: self.transitions.clone(),
            solution: self.solution.clone(),
        })
    }
}

/// When to stop a query. Exhaustion always stops it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StopCondition {
    pub max_iterations: Option<usize>,
    pub max_seconds: Option<f64>,
}

impl StopCondition {
    pub fn exhaustion() -> Self {
        StopCondition::default()
    }

    pub fn iterations(max: usize) -> Self {
        StopCondition {
            max_iterations: Some(max),
            max_seconds: None,
        }
    }

    pub fn seconds(max: f64) -> Self {
        StopCondition {
            max_iterations: None,
            max_seconds: Some(max),
        }
    }
}

/// Progress snapshot handed to the observer after every batch.
///
/// `elapsed_seconds` counts executor time only; observer callbacks are not
/// included. `overhead_seconds` is the part of it spent outside the plugin.
#[derive(Debug)]
pub struct BatchReport<'a> {
    pub t: usize,
    pub elapsed_seconds: f64,
    pub overhead_seconds: f64,
    pub stk: f64,
    pub mode: Mode,
    pub records: &'a [StepRecord],
    pub solution: &'a TopKSolution,
}

pub trait Observer {
    fn on_batch(&mut self, report: &BatchReport<'_>);

    fn on_transition(&mut self, _transition: &ModeTransition) {}
}

impl<F: FnMut(&BatchReport<'_>)> Observer for F {
    fn on_batch(&mut self, report: &BatchReport<'_>) {
        self(report)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoopObserver;

impl Observer for NoopObserver {
    fn on_batch(&mut self, _report: &BatchReport<'_>) {}
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub t: usize,
    pub elapsed_seconds: f64,
    pub overhead_seconds: f64,
    pub exploration_rounds: usize,
    pub transitions: Vec<ModeTransition>,
    pub solution: TopKSolution,
}

/// Runs the epsilon-greedy bandit over `index` until `stop` fires.
pub fn run<P, O>(
    index: &Index,
    params: QueryParams,
    plugin: &mut P,
    stop: &StopCondition,
    observer: &mut O,
) -> Result<RunSummary, QueryError>
where
    P: ScorerPlugin + ?Sized,
    O: Observer + ?Sized,
{
    QueryState::new(index, params)?.run(plugin, stop, observer)
}
