//! Plugging in your own scoring function. Elements here are short strings
//! and the "model" counts vowels, standing in for an expensive UDF.

use opaque_topk::bandit::{NoopObserver, StopCondition};
use opaque_topk::index::Index;
use opaque_topk::plugin::{PluginError, ScorerPlugin};
use opaque_topk::{ElementId, QueryParams, QueryState};

struct VowelModel {
    words: Vec<String>,
    calls: usize,
}

impl ScorerPlugin for VowelModel {
    type Element = String;

    fn fetch_batch(&mut self, ids: &[ElementId]) -> Result<Vec<String>, PluginError> {
        ids.iter()
            .map(|id| {
                let i: usize = id.as_str()[1..]
                    .parse()
                    .map_err(|_| PluginError::UnknownId(id.to_string()))?;
                self.words
                    .get(i)
                    .cloned()
                    .ok_or_else(|| PluginError::UnknownId(id.to_string()))
            })
            .collect()
    }

    fn score_batch(&mut self, words: &[String]) -> Result<Vec<f64>, PluginError> {
        self.calls += 1;
        Ok(words
            .iter()
            .map(|w| w.chars().filter(|c| "aeiou".contains(*c)).count() as f64)
            .collect())
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let syllables = ["ka", "to", "mi", "ru", "sen", "pa", "lo", "ei"];
    let words: Vec<String> = (0..4000)
        .map(|i: usize| {
            let len = 1 + (i * 7919) % 6;
            (0..len)
                .map(|j| syllables[(i / 3 + j * 5) % syllables.len()])
                .collect()
        })
        .collect();

    // Cluster by word length: a cheap feature that correlates with the score.
    let mut groups: Vec<Vec<ElementId>> = vec![Vec::new(); 13];
    for (i, w) in words.iter().enumerate() {
        groups[w.len().min(12)].push(ElementId::new(format!("w{i}"))?);
    }
    let clusters = groups
        .into_iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(len, g)| (vec![len as f64], g))
        .collect();
    let index = Index::from_clusters(clusters)?;

    let mut model = VowelModel { words, calls: 0 };
    let params = QueryParams {
        k: 10,
        batch_size: 16,
        seed: 1,
        ..QueryParams::default()
    };
    let mut state = QueryState::new(&index, params)?;
    let summary = state.run(
        &mut model,
        &StopCondition::iterations(800),
        &mut NoopObserver,
    )?;

    println!(
        "{} batches, {} words scored, stk {}",
        model.calls,
        summary.t,
        summary.solution.stk()
    );
    for e in summary.solution.sorted_desc() {
        println!(
            "  {:>6}  {}  {}",
            e.id,
            e.score.value(),
            model.words[e.id.as_str()[1..].parse::<usize>()?]
        );
    }
    Ok(())
}
