//! The black-box scoring contract.
//!
//! A plugin resolves element ids to elements ("fetch") and maps elements to
//! non-negative scores ("score"). Both calls take whole batches. The executor
//! validates every response, so implementations only need to be honest about
//! failures.

use std::collections::HashMap;

use thiserror::Error;

use crate::topk::ElementId;

#[derive(Debug, Error)]
pub enum PluginError {
    #[error("scorer failed: {0}")]
    Failed(String),
    #[error("scorer returned {got} results for a batch of {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("scorer returned invalid score {value} at batch position {position}")]
    InvalidScore { position: usize, value: f64 },
    #[error("unknown element id {0}")]
    UnknownId(String),
    #[error("scorer protocol error: {0}")]
    Protocol(String),
    #[error("scorer io: {0}")]
    Io(#[from] std::io::Error),
}

pub trait ScorerPlugin {
    type Element;

    fn fetch_batch(&mut self, ids: &[ElementId]) -> Result<Vec<Self::Element>, PluginError>;

    fn score_batch(&mut self, elements: &[Self::Element]) -> Result<Vec<f64>, PluginError>;
}

/// Fetches, scores and validates one batch.
pub fn score_ids<P: ScorerPlugin + ?Sized>(
    plugin: &mut P,
    ids: &[ElementId],
) -> Result<Vec<f64>, PluginError> {
    let elements = plugin.fetch_batch(ids)?;
    if elements.len() != ids.len() {
        return Err(PluginError::LengthMismatch {
            expected: ids.len(),
            got: elements.len(),
        });
    }
    let scores = plugin.score_batch(&elements)?;
    if scores.len() != ids.len() {
        return Err(PluginError::LengthMismatch {
            expected: ids.len(),
            got: scores.len(),
        });
    }
    if let Some((position, &value)) = scores
        .iter()
        .enumerate()
        .find(|(_, s)| !(s.is_finite() && **s >= 0.0))
    {
        return Err(PluginError::InvalidScore { position, value });
    }
    Ok(scores)
}

/// In-memory plugin: elements are looked up in a table and scored by a closure.
pub struct TableScorer<T, F> {
    table: HashMap<ElementId, T>,
    score: F,
}

impl<T: Clone, F: FnMut(&T) -> f64> TableScorer<T, F> {
    pub fn new(table: HashMap<ElementId, T>, score: F) -> Self {
        TableScorer { table, score }
    }
}

impl<T: Clone, F: FnMut(&T) -> f64> ScorerPlugin for TableScorer<T, F> {
    type Element = T;

    fn fetch_batch(&mut self, ids: &[ElementId]) -> Result<Vec<T>, PluginError> {
        ids.iter()
            .map(|id| {
                self.table
                    .get(id)
                    .cloned()
                    .ok_or_else(|| PluginError::UnknownId(id.to_string()))
            })
            .collect()
    }

    fn score_batch(&mut self, elements: &[T]) -> Result<Vec<f64>, PluginError> {
        Ok(elements.iter().map(|e| (self.score)(e)).collect())
    }
}

/// Scores every element with the same constant and fetches nothing.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl ScorerPlugin for ConstantScorer {
    type Element = ();

    fn fetch_batch(&mut self, ids: &[ElementId]) -> Result<Vec<()>, PluginError> {
        Ok(vec![(); ids.len()])
    }

    fn score_batch(&mut self, elements: &[()]) -> Result<Vec<f64>, PluginError> {
        Ok(vec![self.0; elements.len()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Broken;

    impl ScorerPlugin for Broken {
        type Element = ();
        fn fetch_batch(&mut self, ids: &[ElementId]) -> Result<Vec<()>, PluginError> {
            Ok(vec![(); ids.len()])
        }
        fn score_batch(&mut self, elements: &[()]) -> Result<Vec<f64>, PluginError> {
            Ok(vec![-1.0; elements.len() + 1])
        }
    }

    #[test]
    fn validation_catches_bad_scorers() {
        let ids = vec![ElementId::new("a").unwrap()];
        assert!(matches!(
            score_ids(&mut Broken, &ids),
            Err(PluginError::LengthMismatch {
                expected: 1,
                got: 2
            })
        ));
        let mut table = TableScorer::new(HashMap::from([(ids[0].clone(), -3.0)]), |v: &f64| *v);
        assert!(matches!(
            score_ids(&mut table, &ids),
            Err(PluginError::InvalidScore { position: 0, .. })
        ));
        let missing = vec![ElementId::new("zz").unwrap()];
        assert!(matches!(
            score_ids(&mut table, &missing),
            Err(PluginError::UnknownId(_))
        ));
    }
}
