//! Ranking metrics and re-ranking evaluation.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bm25::CandidateList;
use crate::corpus::{Corpus, ScenarioConfig, Split};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{Encoder, Model, ProjectedSide};
use crate::store::EmbeddingStore;

/// Cutoffs reported for every metric.
pub const CUTOFFS: [usize; 3] = [1, 3, 5];

/// Binary-relevance NDCG@k. Ideal DCG comes from sorting the same flags; a
/// list without relevant entries scores 0.
pub fn ndcg_at_k(relevant: &[bool], k: usize) -> f64 {
    let dcg: f64 = relevant
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let n_rel = relevant.iter().filter(|&&r| r).count();
    let idcg: f64 = (0..n_rel.min(k)).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// 1 if any of the first `k` entries is relevant.
pub fn hit_at_k(relevant: &[bool], k: usize) -> f64 {
    if relevant.iter().take(k).any(|&r| r) {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    #[serde(rename = "ndcg@1")]
    pub ndcg1: f64,
    #[serde(rename = "ndcg@3")]
    pub ndcg3: f64,
    #[serde(rename = "ndcg@5")]
    pub ndcg5: f64,
    #[serde(rename = "hit@1")]
    pub hit1: f64,
    #[serde(rename = "hit@3")]
    pub hit3: f64,
    #[serde(rename = "hit@5")]
    pub hit5: f64,
}

impl MetricValues {
    pub fn of(relevant: &[bool]) -> Self {
        MetricValues {
            ndcg1: ndcg_at_k(relevant, 1),
            ndcg3: ndcg_at_k(relevant, 3),
            ndcg5: ndcg_at_k(relevant, 5),
            hit1: hit_at_k(relevant, 1),
            hit3: hit_at_k(relevant, 3),
            hit5: hit_at_k(relevant, 5),
        }
    }

    fn as_array(&self) -> [f64; 6] {
        [self.ndcg1, self.ndcg3, self.ndcg5, self.hit1, self.hit3, self.hit5]
    }

    fn from_array(a: [f64; 6]) -> Self {
        MetricValues {
            ndcg1: a[0],
            ndcg3: a[1],
            ndcg5: a[2],
            hit1: a[3],
            hit3: a[4],
            hit5: a[5],
        }
    }

    /// Early-stopping scalar: mean of HIT@3 and NDCG@3.
    pub fn selection_score(&self) -> f64 {
        (self.hit3 + self.ndcg3) / 2.0
    }
}

/// A re-ranked candidate list with relevance flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub doc_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub relevant: Vec<bool>,
}

impl RankedList {
    /// Sorts `(doc_id, score)` by descending score, ties by ascending doc id.
    pub fn from_scores(corpus: &Corpus, query_id: &str, mut scored: Vec<(String, f64)>) -> Self {
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let relevant = scored
            .iter()
            .map(|(d, _)| corpus.is_relevant(query_id, d))
            .collect();
        let (doc_ids, scores) = scored.into_iter().unzip();
        RankedList {
            query_id: query_id.to_string(),
            doc_ids,
            scores,
            relevant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    #[serde(flatten)]
    pub values: MetricValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    pub query_count: usize,
    /// Queries in scope that could not be evaluated (no candidates).
    pub excluded: Vec<String>,
    pub mean: MetricValues,
    pub per_query: Vec<QueryMetrics>,
}

impl MetricReport {
    /// Macro-averages over the given rankings; per-query rows sorted by id.
    pub fn from_rankings(label: &str, rankings: &[RankedList], excluded: Vec<String>) -> Self {
        let mut per_query: Vec<QueryMetrics> = rankings
            .iter()
            .map(|r| QueryMetrics {
                query_id: r.query_id.clone(),
                values: MetricValues::of(&r.relevant),
            })
            .collect();
        per_query.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        let mut sums = [0.0f64; 6];
        for q in &per_query {
            for (s, v) in sums.iter_mut().zip(q.values.as_array()) {
                *s += v;
            }
        }
        let n = per_query.len();
        let mean = if n == 0 {
            MetricValues::default()
        } else {
            MetricValues::from_array(sums.map(|s| s / n as f64))
        };
        MetricReport {
            label: label.to_string(),
            query_count: n,
            excluded,
            mean,
            per_query,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Scores every `(query, doc)` pair of the given lists and re-ranks them.
///
/// Each distinct document is encoded and projected once. Lists are returned
/// in input order.
pub fn rerank(
    model: &Model,
    corpus: &Corpus,
    store: &EmbeddingStore,
    scenario: ScenarioConfig,
    lists: &[(String, Vec<String>)],
    exec: Exec,
) -> Result<Vec<RankedList>> {
    model.check_store_dims(store.dims())?;
    let encoder = Encoder::new(store, scenario);
    let doc_ids: Vec<&str> = lists
        .iter()
        .flat_map(|(_, docs)| docs.iter().map(String::as_str))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let projected = exec.map(&doc_ids, |id| -> Result<ProjectedSide> {
        let doc = corpus.doc(id)?;
        Ok(model.project_side(&encoder.doc(doc)?))
    });
    let mut docs: HashMap<&str, ProjectedSide> = HashMap::with_capacity(doc_ids.len());
    for (id, p) in doc_ids.iter().zip(projected) {
        docs.insert(id, p?);
    }
    let ranked = exec.map(lists, |(qid, cands)| -> Result<RankedList> {
        let q = model.project_side(&encoder.query(corpus.query(qid)?)?);
        let scored = cands
            .iter()
            .map(|d| Ok((d.clone(), model.score_projected(&q, &docs[d.as_str()])?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(RankedList::from_scores(corpus, qid, scored))
    });
    ranked.into_iter().collect()
}

/// Re-ranks the candidates of every query in `split` and reports metrics.
/// Split queries lacking a candidate list are excluded and listed.
pub fn rerank_and_report(
    model: &Model,
    corpus: &Corpus,
    store: &EmbeddingStore,
    candidates: &[CandidateList],
    split: Split,
    scenario: ScenarioConfig,
    exec: Exec,
) -> Result<MetricReport> {
    let queries: Vec<String> = corpus
        .split_queries(split)
        .into_iter()
        .map(str::to_string)
        .collect();
    let label = format!("{} {} {}", model.variant, scenario.scenario, split);
    report_for_queries(&label, model, corpus, store, candidates, &queries, scenario, exec)
}

#[allow(clippy::too_many_arguments)]
pub fn report_for_queries(
    label: &str,
    model: &Model,
    corpus: &Corpus,
    store: &EmbeddingStore,
    candidates: &[CandidateList],
    queries: &[String],
    scenario: ScenarioConfig,
    exec: Exec,
) -> Result<MetricReport> {
    let by_query: HashMap<&str, &CandidateList> = candidates
        .iter()
        .map(|c| (c.query_id.as_str(), c))
        .collect();
    let mut lists = Vec::new();
    let mut excluded = Vec::new();
    for q in queries {
        match by_query.get(q.as_str()) {
            Some(c) if !c.ranked.is_empty() => {
                lists.push((q.clone(), c.doc_ids().map(str::to_string).collect()))
            }
            _ => excluded.push(q.clone()),
        }
    }
    let rankings = rerank(model, corpus, store, scenario, &lists, exec)?;
    Ok(MetricReport::from_rankings(label, &rankings, excluded))
}

/// Candidate pool for a leftover query: its relevant documents plus up to
/// `pool_size - x` non-relevant documents drawn uniformly from the collection.
pub fn leftover_pool(corpus: &Corpus, query_id: &str, pool_size: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut pool: Vec<String> = corpus.relevant_docs(query_id).map(str::to_string).collect();
    let mut negatives: Vec<&str> = corpus
        .docs()
        .iter()
        .map(|d| d.id.as_str())
        .filter(|d| !corpus.is_relevant(query_id, d))
        .collect();
    negatives.sort_unstable();
    let want = pool_size.saturating_sub(pool.len());
    if negatives.len() < want {
        log::warn!(
            "query {query_id}: only {} non-relevant documents available, wanted {want}",
            negatives.len()
        );
    }
    let take = want.min(negatives.len());
    pool.extend(
        sample(rng, negatives.len(), take)
            .into_iter()
            .map(|i| negatives[i].to_string()),
    );
    pool
}

/// Ranks each leftover query's relevant articles against randomly sampled
/// non-relevant ones (50-document pools) and reports metrics.
pub fn leftover_experiment(
    model: &Model,
    corpus: &Corpus,
    store: &EmbeddingStore,
    leftover: &[String],
    scenario: ScenarioConfig,
    seed: u64,
    exec: Exec,
) -> Result<MetricReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = leftover.to_vec();
    ids.sort();
    let lists: Vec<(String, Vec<String>)> = ids
        .iter()
        .map(|q| (q.clone(), leftover_pool(corpus, q, 50, &mut rng)))
        .collect();
    let rankings = rerank(model, corpus, store, scenario, &lists, exec)?;
    let label = format!("{} {} leftover", model.variant, scenario.scenario);
    Ok(MetricReport::from_rankings(&label, &rankings, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[true], 1), 1.0);
        let v = ndcg_at_k(&[false, true, false], 3);
        assert!((v - 0.630_929_753_571_457_4).abs() < 1e-12);
        assert_eq!(ndcg_at_k(&[false, false], 3), 0.0);
        assert_eq!(ndcg_at_k(&[], 3), 0.0);
    }

    #[test]
    fn hit_examples() {
        let flags = [false, false, true, false];
        assert_eq!(hit_at_k(&flags, 3), 1.0);
        assert_eq!(hit_at_k(&flags, 2), 0.0);
        assert_eq!(hit_at_k(&[false, false, false, true], 3), 0.0);
    }

    #[test]
    fn single_query_report_mean_is_its_metrics() {
        let r = RankedList {
            query_id: "q".into(),
            doc_ids: vec!["a".into(), "b".into()],
            scores: vec![1.0, 0.0],
            relevant: vec![false, true],
        };
        let report = MetricReport::from_rankings("x", &[r], vec![]);
        assert_eq!(report.query_count, 1);
        assert_eq!(report.mean, report.per_query[0].values);
        assert_eq!(report.mean.hit1, 0.0);
        assert_eq!(report.mean.hit3, 1.0);
    }

    #[test]
    fn report_json_has_stable_field_order() {
        let report = MetricReport::from_rankings("x", &[], vec!["q9".into()]);
        let json = report.to_json().unwrap();
        let label = json.find("\"label\"").unwrap();
        let count = json.find("\"query_count\"").unwrap();
        let mean = json.find("\"mean\"").unwrap();
        assert!(label < count && count < mean);
        assert!(json.contains("\"ndcg@1\""));
    }

    proptest! {
        #[test]
        fn metrics_monotone_in_k(flags in prop::collection::vec(any::<bool>(), 1..50)) {
            let mut prev_h = 0.0;
            for k in 1..=flags.len() {
                let h = hit_at_k(&flags, k);
                prop_assert!(h >= prev_h);
                prev_h = h;
            }
            // NDCG@k is monotone in k when at most one document is relevant.
            let mut single = vec![false; flags.len()];
            if let Some(p) = flags.iter().position(|&x| x) {
                single[p] = true;
            }
            let mut prev_n = 0.0;
            for k in 1..=single.len() {
                let n = ndcg_at_k(&single, k);
                prop_assert!(n + 1e-15 >= prev_n);
                prop_assert!((0.0..=1.0).contains(&n));
                prev_n = n;
            }
        }

        #[test]
        fn hit1_equals_ndcg1_with_one_relevant(len in 1usize..50, pos in 0usize..50) {
            let mut flags = vec![false; len];
            flags[pos % len] = true;
            prop_assert_eq!(hit_at_k(&flags, 1), ndcg_at_k(&flags, 1));
        }
    }
}
