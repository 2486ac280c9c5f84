//! Hierarchical cluster index.
//!
//! Construction runs in three phases: the caller vectorizes elements, k-means
//! groups the vectors into `L` leaf clusters, and average-linkage
//! agglomerative clustering over the leaf centroids builds the tree. The index
//! itself carries no score statistics; every query attaches its own sketches.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topk::ElementId;

pub type Vector = Vec<f64>;

pub const INDEX_VERSION: u32 = 1;
const MAX_LLOYD_ITERATIONS: usize = 100;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cluster count must be at least 1")]
    ZeroClusters,
    #[error("cannot form {clusters} clusters from {points} points")]
    TooManyClusters { clusters: usize, points: usize },
    #[error("vector for {id} has dimension {got}, expected {expected}")]
    Dimension {
        id: String,
        got: usize,
        expected: usize,
    },
    #[error("vector for {0} has a non-finite component")]
    NonFinite(String),
    #[error("duplicate element id {0}")]
    DuplicateInput(String),
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("malformed index json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("index io: {0}")]
    Io(#[from] std::io::Error),
}

fn schema(path: &str, message: impl Into<String>) -> IndexError {
    IndexError::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IndexNode {
    Internal {
        node_id: String,
        children: Vec<IndexNode>,
    },
    Leaf {
        node_id: String,
        elements: Vec<ElementId>,
        centroid: Vector,
    },
}

impl IndexNode {
    pub fn node_id(&self) -> &str {
        match self {
            IndexNode::Internal { node_id, .. } | IndexNode::Leaf { node_id, .. } => node_id,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, IndexNode::Leaf { .. })
    }

    pub fn children(&self) -> &[IndexNode] {
        match self {
            IndexNode::Internal { children, .. } => children,
            IndexNode::Leaf { .. } => &[],
        }
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&IndexNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                IndexNode::Leaf { .. } => out.push(node),
                IndexNode::Internal { children, .. } => stack.extend(children.iter().rev()),
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        1 + self
            .children()
            .iter()
            .map(IndexNode::depth)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    pub version: u32,
    pub dataset_size: usize,
    pub leaf_count: usize,
    pub root: IndexNode,
}

impl Index {
    /// Builds a tree over pre-formed clusters (centroid, members).
    pub fn from_clusters(clusters: Vec<(Vector, Vec<ElementId>)>) -> Result<Self, IndexError> {
        if clusters.is_empty() {
            return Err(IndexError::ZeroClusters);
        }
        let centroids: Vec<Vector> = clusters.iter().map(|(c, _)| c.clone()).collect();
        let dendrogram = hac_average_linkage(&centroids);
        let dataset_size = clusters.iter().map(|(_, m)| m.len()).sum();
        let leaf_count = clusters.len();
        let mut slots: Vec<Option<IndexNode>> = clusters
            .into_iter()
            .enumerate()
            .map(|(i, (centroid, elements))| {
                Some(IndexNode::Leaf {
                    node_id: format!("L{i}"),
                    elements,
                    centroid,
                })
            })
            .collect();
        for (j, merge) in dendrogram.merges.iter().enumerate() {
            let left = slots[merge.left].take().expect("each node merges once");
            let right = slots[merge.right].take().expect("each node merges once");
            slots.push(Some(IndexNode::Internal {
                node_id: format!("N{j}"),
                children: vec![left, right],
            }));
        }
        let root = slots.pop().flatten().expect("dendrogram has a root");
        let index = Index {
            version: INDEX_VERSION,
            dataset_size,
            leaf_count,
            root,
        };
        index.validate()?;
        Ok(index)
    }

    pub fn leaves(&self) -> Vec<&IndexNode> {
        self.root.leaves()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn to_json(&self) -> Result<String, IndexError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, IndexError> {
        let index: Index = serde_json::from_str(text)?;
        index.validate()?;
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        Index::from_json(&fs::read_to_string(path)?)
    }

    /// Checks version, counts, non-empty nodes, unique ids and centroid dimensions.
    pub fn validate(&self) -> Result<(), IndexError> {
        if self.version != INDEX_VERSION {
            return Err(schema("$", format!("unsupported version {}", self.version)));
        }
        let mut seen_ids = HashSet::new();
        let mut seen_nodes = HashSet::new();
        let mut leaves = 0;
        let mut elements = 0;
        let mut dim = None;
        let mut stack = vec![(&self.root, format!("root({})", self.root.node_id()))];
        while let Some((node, path)) = stack.pop() {
            if !seen_nodes.insert(node.node_id()) {
                return Err(schema(
                    &path,
                    format!("duplicate node_id {}", node.node_id()),
                ));
            }
            match node {
                IndexNode::Internal { children, .. } => {
                    if children.is_empty() {
                        return Err(schema(&path, "node has neither children nor elements"));
                    }
                    for (i, child) in children.iter().enumerate() {
                        stack.push((child, format!("{path}/{i}({})", child.node_id())));
                    }
                }
                IndexNode::Leaf {
                    elements: members,
                    centroid,
                    ..
                } => {
                    if members.is_empty() {
                        return Err(schema(&path, "node has neither children nor elements"));
                    }
                    if centroid.iter().any(|c| !c.is_finite()) {
                        return Err(schema(&path, "centroid has a non-finite component"));
                    }
                    match dim {
                        None => dim = Some(centroid.len()),
                        Some(d) if d != centroid.len() => {
                            return Err(schema(
                                &path,
                                format!("centroid dimension {} != {d}", centroid.len()),
                            ))
                        }
                        _ => {}
                    }
                    for id in members {
                        if !seen_ids.insert(id.as_str()) {
                            return Err(schema(&path, format!("duplicate element id {id}")));
                        }
                    }
                    leaves += 1;
                    elements += members.len();
                }
            }
        }
        if leaves != self.leaf_count {
            return Err(schema(
                "$.leaf_count",
                format!("declared {} but tree has {leaves}", self.leaf_count),
            ));
        }
        if elements != self.dataset_size {
            return Err(schema(
                "$.dataset_size",
                format!("declared {} but leaves hold {elements}", self.dataset_size),
            ));
        }
        Ok(())
    }
}

/// One k-means cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub centroid: Vector,
    pub members: Vec<ElementId>,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vector]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn check_vectors(points: &[(ElementId, Vector)]) -> Result<(), IndexError> {
    let dim = points.first().map_or(0, |(_, v)| v.len());
    let mut ids = HashSet::with_capacity(points.len());
    for (id, v) in points {
        if v.len() != dim {
            return Err(IndexError::Dimension {
                id: id.to_string(),
                got: v.len(),
                expected: dim,
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(IndexError::NonFinite(id.to_string()));
        }
        if !ids.insert(id) {
            return Err(IndexError::DuplicateInput(id.to_string()));
        }
    }
    Ok(())
}

/// k-means with distance-weighted seeding and Lloyd refinement.
///
/// Always returns exactly `clusters` non-empty clusters. Members keep input
/// order. Deterministic for a fixed seed.
pub fn kmeans(
    points: &[(ElementId, Vector)],
    clusters: usize,
    seed: u64,
) -> Result<Vec<Cluster>, IndexError> {
    if clusters == 0 {
        return Err(IndexError::ZeroClusters);
    }
    if clusters > points.len() {
        return Err(IndexError::TooManyClusters {
            clusters,
            points: points.len(),
        });
    }
    check_vectors(points)?;
    let vectors: Vec<&[f64]> = points.iter().map(|(_, v)| v.as_slice()).collect();
    let (centroids, assignment) = lloyd(&vectors, clusters, seed);
    let mut members: Vec<Vec<ElementId>> = vec![Vec::new(); clusters];
    for (i, c) in assignment.iter().enumerate() {
        members[*c].push(points[i].0.clone());
    }
    Ok(centroids
        .into_iter()
        .zip(members)
        .map(|(centroid, members)| Cluster { centroid, members })
        .collect())
}

fn lloyd(vectors: &[&[f64]], clusters: usize, seed: u64) -> (Vec<Vector>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(vectors, clusters, &mut rng);
    let mut assignment = vec![usize::MAX; vectors.len()];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, v) in vectors.iter().enumerate() {
            let (c, _) = nearest(v, &centroids);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        changed |= repair_empty(vectors, &centroids, &mut assignment, clusters);
        centroids = recompute_centroids(vectors, &assignment, clusters);
        if !changed {
            break;
        }
    }
    (centroids, assignment)
}

fn seed_centroids(vectors: &[&[f64]], clusters: usize, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    let n = vectors.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![vectors[first].to_vec()];
    let mut weight: Vec<f64> = vectors.iter().map(|v| sq_dist(v, vectors[first])).collect();
    while centroids.len() < clusters {
        let total: f64 = weight.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, w) in weight.iter().enumerate() {
                if *w > 0.0 {
                    pick = Some(i);
                    if target < *w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point coincides with a centroid
            let free: Vec<usize> = (0..n).filter(|i| !chosen[*i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let c = vectors[pick].to_vec();
        for (w, v) in weight.iter_mut().zip(vectors) {
            *w = w.min(sq_dist(v, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Moves the point farthest from its centroid (among clusters with more than
/// one member) into each empty cluster.
fn repair_empty(
    vectors: &[&[f64]],
    centroids: &[Vector],
    assignment: &mut [usize],
    clusters: usize,
) -> bool {
    let mut sizes = vec![0usize; clusters];
    for &c in assignment.iter() {
        sizes[c] += 1;
    }
    let mut changed = false;
    for empty in 0..clusters {
        if sizes[empty] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in vectors.iter().enumerate() {
            let c = assignment[i];
            if sizes[c] < 2 {
                continue;
            }
            let d = sq_dist(v, &centroids[c]);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("clusters <= points leaves a donor");
        sizes[assignment[i]] -= 1;
        assignment[i] = empty;
        sizes[empty] = 1;
        changed = true;
    }
    changed
}

fn recompute_centroids(vectors: &[&[f64]], assignment: &[usize], clusters: usize) -> Vec<Vector> {
    let dim = vectors.first().map_or(0, |v| v.len());
    let mut sums = vec![vec![0.0; dim]; clusters];
    let mut counts = vec![0usize; clusters];
    for (v, &c) in vectors.iter().zip(assignment) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(v.iter()) {
            *s += x;
        }
    }
    for (s, n) in sums.iter_mut().zip(counts) {
        for x in s.iter_mut() {
            *x /= n.max(1) as f64;
        }
    }
    sums
}

/// One agglomeration step. Node ids `0..L` are the leaves; the `j`-th merge
/// creates node `L + j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

/// Average-linkage agglomerative clustering with Euclidean distance.
///
/// Group distance is the mean pairwise distance between members. Ties are
/// broken toward the lexicographically smallest `(left, right)` node pair.
pub fn hac_average_linkage(centroids: &[Vector]) -> Dendrogram {
    let n = centroids.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sq_dist(&centroids[i], &centroids[j]).sqrt();
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    // active slot -> (node id, size); slots are reused for merged groups
    let mut active: Vec<Option<(usize, usize)>> = (0..n).map(|i| Some((i, 1))).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for a in 0..n {
            let Some((ida, _)) = active[a] else { continue };
            for b in (a + 1)..n {
                let Some((idb, _)) = active[b] else { continue };
                let pair = (ida.min(idb), ida.max(idb));
                let d = dist[a][b];
                let better = match best {
                    None => true,
                    Some((bd, bp, _, _)) => d < bd || (d == bd && pair < bp),
                };
                if better {
                    best = Some((d, pair, a, b));
                }
            }
        }
        let (d, pair, a, b) = best.expect("at least two active groups");
        let (sa, sb) = (active[a].unwrap().1, active[b].unwrap().1);
        for c in 0..n {
            if c == a || c == b || active[c].is_none() {
                continue;
            }
            let merged = (sa as f64 * dist[a][c] + sb as f64 * dist[b][c]) / (sa + sb) as f64;
            dist[a][c] = merged;
            dist[c][a] = merged;
        }
        active[a] = Some((n + step, sa + sb));
        active[b] = None;
        merges.push(Merge {
            left: pair.0,
            right: pair.1,
            distance: d,
            size: sa + sb,
        });
    }
    Dendrogram { leaves: n, merges }
}

/// k-means (optionally on a seeded subsample), nearest-centroid assignment of
/// every element, then a dendrogram over the centroids.
pub fn build_index(
    dataset: &[(ElementId, Vector)],
    leaf_count: usize,
    clustering_subsample: Option<usize>,
    seed: u64,
) -> Result<Index, IndexError> {
    check_vectors(dataset)?;
    let subsample = clustering_subsample.filter(|&m| m < dataset.len());
    let clusters = match subsample {
        None => kmeans(dataset, leaf_count, seed)?,
        Some(m) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5a3b_1e00_0000);
            let mut picked = sample_indices(&mut rng, dataset.len(), m).into_vec();
            picked.sort_unstable();
            if leaf_count == 0 {
                return Err(IndexError::ZeroClusters);
            }
            if leaf_count > m {
                return Err(IndexError::TooManyClusters {
                    clusters: leaf_count,
                    points: m,
                });
            }
            let vectors: Vec<&[f64]> = picked.iter().map(|&i| dataset[i].1.as_slice()).collect();
            let (centroids, fitted) = lloyd(&vectors, leaf_count, seed);
            // Sampled points keep their fitted cluster so no cluster can empty out.
            let mut fitted_of = vec![usize::MAX; dataset.len()];
            for (s, &i) in picked.iter().enumerate() {
                fitted_of[i] = fitted[s];
            }
            let mut members: Vec<Vec<ElementId>> = vec![Vec::new(); leaf_count];
            for (i, (id, v)) in dataset.iter().enumerate() {
                let c = if fitted_of[i] != usize::MAX {
                    fitted_of[i]
                } else {
                    nearest(v, &centroids).0
                };
                members[c].push(id.clone());
            }
            centroids
                .into_iter()
                .zip(members)
                .map(|(centroid, members)| Cluster { centroid, members })
                .collect()
        }
    };
    Index::from_clusters(
        clusters
            .into_iter()
            .map(|c| (c.centroid, c.members))
            .collect(),
    )
}
