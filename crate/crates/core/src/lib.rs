//! Anytime approximate top-k over opaque scoring functions.
//!
//! The scoring function is a black box: expensive to call and with no known
//! structure. Instead of scoring every element, a query walks a hierarchical
//! cluster index and lets an epsilon-greedy bandit decide which cluster to
//! sample next. Each cluster's score distribution is modeled by a small
//! equal-width histogram, and the bandit targets clusters whose tails are
//! most likely to improve the sum of the current top-k scores.
//!
//! The main pieces:
//!
//! - [`topk`]: scores, ids and the bounded running solution.
//! - [`histogram`]: the per-cluster histogram sketch.
//! - [`index`]: k-means plus average-linkage tree, stored as JSON.
//! - [`bandit`]: the query executor ([`bandit::run`]).
//! - [`fallback`]: switches to a flat partition or to plain shuffled
//!   sampling when the index stops paying for itself.
//! - [`baselines`]: UCB, exploration-only, uniform sampling and scan orders.
//! - [`oracle`]: brute-force and Monte Carlo reference checks.
//! - [`harness`]: synthetic data, scorers, metrics and experiment output.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod bandit;
pub mod baselines;
pub mod fallback;
pub mod harness;
pub mod histogram;
pub mod index;
pub mod oracle;
pub mod plugin;
pub mod topk;

pub use bandit::{run, Mode, QueryParams, QueryState, StopCondition};
pub use histogram::HistogramSketch;
pub use index::{build_index, Index, IndexNode};
pub use plugin::{ScorerPlugin, TableScorer};
pub use topk::{stk, ElementId, Score, ScoredElement, TopKSolution};
