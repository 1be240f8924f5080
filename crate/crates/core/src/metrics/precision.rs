use std::collections::{BTreeMap, HashMap};

use super::mean_and_se;
use crate::error::{Error, Result};
use crate::model::{Judgment, Run};

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionReport {
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    pub std_error: f64,
}

/// Precision@k as trec_eval computes it: relevant passages among the top
/// `k`, divided by `k`. A passage is relevant when its judgment is at least
/// `level_for_rel`; unjudged passages are not relevant. Only queries present
/// in both the run and the qrels are scored.
pub fn precision_at_k(run: &Run, qrels: &[Judgment], k: usize, level_for_rel: u32) -> Result<PrecisionReport> {
    if k == 0 {
        return Err(Error::Validation("k must be >= 1".into()));
    }
    let mut judged: HashMap<&str, HashMap<&str, u32>> = HashMap::new();
    for j in qrels {
        judged
            .entry(j.query_id.as_str())
            .or_default()
            .insert(j.passage_id.as_str(), j.relevance());
    }
    let mut per_query = BTreeMap::new();
    for query_id in run.query_ids() {
        let Some(labels) = judged.get(query_id) else { continue };
        let hits = run
            .top(query_id, k)
            .filter(|p| labels.get(p).is_some_and(|&g| g >= level_for_rel))
            .count();
        per_query.insert(query_id.to_string(), hits as f64 / k as f64);
    }
    let scores: Vec<f64> = per_query.values().copied().collect();
    let (mean, std_error) = mean_and_se(&scores);
    Ok(PrecisionReport {
        per_query,
        mean,
        std_error,
    })
}
