//! Synthetic clustered datasets and the JSONL dataset format.
//!
//! Each line of a dataset file is one record:
//! `{"id": "e17", "vector": [3.2], "value": 3.2, "label": 4}`.
//! `value` and `label` are optional; the ReLU scorer needs `value`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::index::{Index, Vector};
use crate::topk::ElementId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: ElementId,
    pub vector: Vector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(id, vector)` pairs for index construction.
    pub fn points(&self) -> Vec<(ElementId, Vector)> {
        self.records
            .iter()
            .map(|r| (r.id.clone(), r.vector.clone()))
            .collect()
    }

    pub fn to_jsonl(&self) -> Result<String, HarnessError> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let mut w = BufWriter::new(File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let reader = BufReader::new(File::open(path)?);
        let mut records = Vec::new();
        for (no, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line)
                .map_err(|e| HarnessError::Dataset(format!("line {}: {e}", no + 1)))?;
            records.push(record);
        }
        Ok(Dataset { records })
    }

    /// Tree over the ground-truth labels: one leaf per label, centroid =
    /// mean vector of its members.
    pub fn label_index(&self) -> Result<Index, HarnessError> {
        let mut groups: BTreeMap<usize, (Vector, Vec<ElementId>)> = BTreeMap::new();
        for r in &self.records {
            let label = r
                .label
                .ok_or_else(|| HarnessError::Dataset(format!("record {} has no label", r.id)))?;
            let entry = groups
                .entry(label)
                .or_insert_with(|| (vec![0.0; r.vector.len()], Vec::new()));
            for (c, v) in entry.0.iter_mut().zip(&r.vector) {
                *c += v;
            }
            entry.1.push(r.id.clone());
        }
        let clusters = groups
            .into_values()
            .map(|(mut sum, ids)| {
                let n = ids.len() as f64;
                sum.iter_mut().for_each(|c| *c /= n);
                (sum, ids)
            })
            .collect();
        Ok(Index::from_clusters(clusters)?)
    }
}

/// Per-cluster normal distributions, values clipped at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub cluster_count: usize,
    pub samples_per_cluster: usize,
    pub mu_range: (f64, f64),
    /// Exclusive lower bound, inclusive upper bound.
    pub sigma_range: (f64, f64),
    /// Every cluster draws from this `(mu, sigma)` instead of its own.
    pub shared: Option<(f64, f64)>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(cluster_count: usize, samples_per_cluster: usize, seed: u64) -> Self {
        SyntheticSpec {
            cluster_count,
            samples_per_cluster,
            mu_range: (0.0, 20.0),
            sigma_range: (0.0, 5.0),
            shared: None,
            seed,
        }
    }

    /// All clusters i.i.d. from one normal distribution.
    pub fn no_signal(
        cluster_count: usize,
        samples_per_cluster: usize,
        mu: f64,
        sigma: f64,
        seed: u64,
    ) -> Self {
        SyntheticSpec {
            shared: Some((mu, sigma)),
            ..SyntheticSpec::new(cluster_count, samples_per_cluster, seed)
        }
    }
}

/// Draws the dataset. Ids are `e0, e1, ...` in generation order; the vector
/// and the hidden value are both the clipped draw.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset, HarnessError> {
    let (mu_lo, mu_hi) = spec.mu_range;
    let (s_lo, s_hi) = spec.sigma_range;
    if !(mu_lo <= mu_hi && 0.0 <= s_lo && s_lo < s_hi) {
        return Err(HarnessError::Config(format!(
            "bad synthetic ranges mu {:?} sigma {:?}",
            spec.mu_range, spec.sigma_range
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.cluster_count * spec.samples_per_cluster);
    for label in 0..spec.cluster_count {
        let (mu, sigma) = match spec.shared {
            Some(p) => p,
            None => {
                let mu = rng.random_range(mu_lo..=mu_hi);
                // (lo, hi]: flip a [0, 1) draw
                let sigma = s_hi - rng.random::<f64>() * (s_hi - s_lo);
                (mu, sigma)
            }
        };
        let normal = Normal::new(mu, sigma)
            .map_err(|e| HarnessError::Config(format!("normal({mu}, {sigma}): {e}")))?;
        for _ in 0..spec.samples_per_cluster {
            let value = normal.sample(&mut rng).max(0.0);
            let id = ElementId::new(format!("e{}", records.len()))?;
            records.push(Record {
                id,
                vector: vec![value],
                value: Some(value),
                label: Some(label),
            });
        }
    }
    Ok(Dataset { records })
}
