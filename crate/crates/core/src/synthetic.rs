//! Deterministic synthetic data: random network inputs, a planted re-ranking
//! corpus and a query-expansion corpus for stage one.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bm25::{bm25_score, Bm25Params, Candidate, CandidateList, InvertedIndex, QueryMode};
use crate::corpus::{Corpus, DocumentRecord, Qrel, QueryRecord};
use crate::model::SideInput;
use crate::store::StoreDims;

/// Random side with `len` tokens and `images` images; rows uniform in
/// `[-1, 1)`.
pub fn random_side(
    rng: &mut impl Rng,
    id: &str,
    len: usize,
    images: usize,
    dims: StoreDims,
) -> SideInput {
    let mut uniform = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    SideInput {
        id: id.to_string(),
        tokens: (0..len).map(|i| format!("{id}_t{i}")).collect(),
        static_rows: uniform(len * dims.static_dim),
        ctx_rows: uniform(len * dims.contextual_dim),
        image_ids: (0..images).map(|i| format!("{id}_img{i}")).collect(),
        image_rows: uniform(images * dims.visual_dim),
    }
}

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh",
];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];

/// `count` distinct pronounceable pseudo-words, deterministic in `seed`.
pub fn pseudo_words(seed: u64, count: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let syllables = rng.random_range(2..=3);
        let w: String = (0..syllables)
            .map(|_| {
                format!(
                    "{}{}",
                    ONSETS.choose(&mut rng).unwrap(),
                    VOWELS.choose(&mut rng).unwrap()
                )
            })
            .collect();
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantedSignal {
    /// Relevant documents share topic words and an image with their query.
    TextAndVisual,
    /// Relevant documents share only an image; their text looks like any
    /// other document's.
    VisualOnly,
}

#[derive(Debug, Clone, Copy)]
pub struct PlantedSpec {
    pub seed: u64,
    pub queries: usize,
    pub candidates: usize,
    pub distractors: usize,
    /// Distractors per query that copy the relevant document's text but
    /// carry their own image. Always placed in the query's candidates.
    pub twins: usize,
    pub signal: PlantedSignal,
}

impl PlantedSpec {
    /// The bundled corpus: 20 queries, 50 candidates each, 180 distractors
    /// of which three per query are text twins of its relevant document.
    pub fn bundled(signal: PlantedSignal) -> Self {
        PlantedSpec {
            seed: 20,
            queries: 20,
            candidates: 50,
            distractors: 180,
            twins: 3,
            signal,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    /// Per query: the relevant doc plus `candidates - 1` others, ordered by
    /// BM25 (query + OCR text).
    pub candidates: Vec<CandidateList>,
}

/// Builds a corpus with one relevant document per query.
///
/// Every query has eight topic words and one or two images. Each relevant
/// document has `twins` text duplicates with a different image, so text alone
/// cannot single it out. The remaining distractors mix filler words with a
/// few topic words of random queries and carry zero to two images of their
/// own.
pub fn planted_corpus(spec: &PlantedSpec) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let topic_size = 8;
    let words = pseudo_words(spec.seed ^ 0x5eed, spec.queries * topic_size + 150);
    let (topic_words, filler) = words.split_at(spec.queries * topic_size);
    let topics: Vec<&[String]> = topic_words.chunks(topic_size).collect();

    let n_docs = spec.queries + spec.distractors;
    let mut doc_numbers: Vec<usize> = (0..n_docs).collect();
    doc_numbers.shuffle(&mut rng);
    let doc_id = |k: usize| format!("fc{:04}", doc_numbers[k]);

    let pick = |rng: &mut ChaCha8Rng, pool: &[String], n: usize| -> Vec<String> {
        (0..n).map(|_| pool.choose(rng).unwrap().clone()).collect()
    };

    let mut queries = Vec::new();
    let mut docs = Vec::new();
    let mut qrels = Vec::new();
    for (i, topic) in topics.iter().enumerate() {
        let qid = format!("tw{i:03}");
        let mut tweet = pick(&mut rng, topic, 5);
        tweet.extend(pick(&mut rng, filler, 5));
        tweet.shuffle(&mut rng);
        let mut ocr = pick(&mut rng, topic, 3);
        ocr.extend(pick(&mut rng, filler, 2));
        ocr.shuffle(&mut rng);
        let n_images = rng.random_range(1..=2);
        let image_ids: Vec<String> = (0..n_images).map(|j| format!("{qid}_img{j}")).collect();

        let mut text = pick(&mut rng, filler, 24);
        match spec.signal {
            PlantedSignal::TextAndVisual => text.extend(pick(&mut rng, topic, 6)),
            PlantedSignal::VisualOnly => {
                let other = topics[rng.random_range(0..topics.len())];
                text.extend(pick(&mut rng, other, 3));
                text.extend(pick(&mut rng, filler, 3));
            }
        }
        text.shuffle(&mut rng);
        let did = doc_id(i);
        docs.push(DocumentRecord {
            id: did.clone(),
            doc_tokens: text,
            image_ids: vec![image_ids[0].clone(), format!("{did}_img0")],
        });
        qrels.push(Qrel {
            query_id: qid.clone(),
            doc_id: did,
            split: None,
        });
        queries.push(QueryRecord {
            id: qid,
            tweet_tokens: tweet,
            ocr_tokens: ocr,
            image_ids,
        });
    }
    assert!(spec.queries * spec.twins <= spec.distractors);
    assert!(spec.twins < spec.candidates);
    let twin_of = |k: usize| (k - spec.queries) / spec.twins.max(1);
    let is_twin = |k: usize| k >= spec.queries && k - spec.queries < spec.queries * spec.twins;
    for k in spec.queries..spec.queries + spec.queries * spec.twins {
        let did = doc_id(k);
        docs.push(DocumentRecord {
            doc_tokens: docs[twin_of(k)].doc_tokens.clone(),
            image_ids: vec![format!("{did}_img0")],
            id: did,
        });
    }
    for k in spec.queries + spec.queries * spec.twins..n_docs {
        let did = doc_id(k);
        let other = topics[rng.random_range(0..topics.len())];
        let mut text = pick(&mut rng, filler, 27);
        text.extend(pick(&mut rng, other, 3));
        text.shuffle(&mut rng);
        let n_images = rng.random_range(0..=2);
        docs.push(DocumentRecord {
            image_ids: (0..n_images).map(|j| format!("{did}_img{j}")).collect(),
            id: did,
            doc_tokens: text,
        });
    }

    let corpus = Corpus::new(queries, docs, qrels).expect("generated ids are consistent");
    let index = InvertedIndex::build(&corpus).expect("non-empty");
    let params = Bm25Params::default();
    let mut candidates = Vec::new();
    for (i, q) in corpus.queries().iter().enumerate() {
        let own = |k: usize| k == i || (is_twin(k) && twin_of(k) == i);
        let mut others: Vec<String> = (0..n_docs).filter(|&k| !own(k)).map(|k| doc_id(k)).collect();
        others.sort();
        others.shuffle(&mut rng);
        others.truncate(spec.candidates.saturating_sub(1 + spec.twins));
        others.extend((0..n_docs).filter(|&k| own(k)).map(|k| doc_id(k)));
        let tokens = QueryMode::TI.query_tokens(q);
        let mut ranked: Vec<Candidate> = others
            .into_iter()
            .map(|d| Candidate {
                score: bm25_score(&index, &tokens, &d, &params).expect("indexed"),
                doc_id: d,
            })
            .collect();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.doc_id.cmp(&b.doc_id)));
        candidates.push(CandidateList {
            query_id: q.id.clone(),
            ranked,
        });
    }
    PlantedCorpus { corpus, candidates }
}

/// Stage-one corpus in which a fraction of queries mention their target's
/// key words only in OCR text.
///
/// `docs` documents, the first `queries` of which are targets with five key
/// words each. Queries of the OCR-only group tweet words drawn from a chatter
/// vocabulary that only non-target documents use.
pub fn expansion_corpus(seed: u64, docs: usize, queries: usize, ocr_only_fraction: f64) -> Corpus {
    assert!(queries <= docs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = pseudo_words(seed ^ 0xe4a, queries * 5 + 60 + 30);
    let (keys, rest) = words.split_at(queries * 5);
    let (filler, chatter) = rest.split_at(60);
    let key_sets: Vec<&[String]> = keys.chunks(5).collect();
    let pick = |rng: &mut ChaCha8Rng, pool: &[String], n: usize| -> Vec<String> {
        (0..n).map(|_| pool.choose(rng).unwrap().clone()).collect()
    };

    let mut records = Vec::with_capacity(docs);
    for k in 0..docs {
        let mut text = pick(&mut rng, filler, 15);
        if k < queries {
            text.extend(key_sets[k].iter().cloned());
        } else {
            text.extend(pick(&mut rng, chatter, 8));
        }
        text.shuffle(&mut rng);
        records.push(DocumentRecord {
            id: format!("doc{k:04}"),
            doc_tokens: text,
            image_ids: vec![],
        });
    }

    let n_ocr_only = (queries as f64 * ocr_only_fraction).round() as usize;
    let mut qs = Vec::with_capacity(queries);
    let mut qrels = Vec::with_capacity(queries);
    for i in 0..queries {
        let (tweet, ocr) = if i < n_ocr_only {
            (
                pick(&mut rng, chatter, 6),
                key_sets[i].choose_multiple(&mut rng, 3).cloned().collect(),
            )
        } else {
            let mut t: Vec<String> = key_sets[i].choose_multiple(&mut rng, 3).cloned().collect();
            t.extend(pick(&mut rng, filler, 3));
            (t, pick(&mut rng, filler, 2))
        };
        let id = format!("q{i:04}");
        qrels.push(Qrel {
            query_id: id.clone(),
            doc_id: format!("doc{i:04}"),
            split: None,
        });
        qs.push(QueryRecord {
            id,
            tweet_tokens: tweet,
            ocr_tokens: ocr,
            image_ids: vec![],
        });
    }
    Corpus::new(qs, records, qrels).expect("generated ids are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_words_are_distinct_and_seeded() {
        let a = pseudo_words(1, 300);
        assert_eq!(a.len(), 300);
        assert_eq!(a.iter().collect::<BTreeSet<_>>().len(), 300);
        assert_eq!(a, pseudo_words(1, 300));
    }

    #[test]
    fn planted_corpus_shape() {
        let p = planted_corpus(&PlantedSpec::bundled(PlantedSignal::TextAndVisual));
        assert_eq!(p.corpus.counts().queries, 20);
        assert_eq!(p.corpus.counts().docs, 200);
        assert_eq!(p.candidates.len(), 20);
        for list in &p.candidates {
            assert_eq!(list.ranked.len(), 50);
            let rel = list
                .doc_ids()
                .filter(|d| p.corpus.is_relevant(&list.query_id, d))
                .count();
            assert_eq!(rel, 1);
            let q = p.corpus.query(&list.query_id).unwrap();
            let pos = p.corpus.relevant_docs(&q.id).next().unwrap();
            let pos = p.corpus.doc(pos).unwrap();
            assert!(pos.image_ids.contains(&q.image_ids[0]));
            let twins: Vec<&str> = list
                .doc_ids()
                .filter(|d| *d != pos.id && p.corpus.doc(d).unwrap().doc_tokens == pos.doc_tokens)
                .collect();
            assert_eq!(twins.len(), 3);
            for t in twins {
                assert!(!p.corpus.doc(t).unwrap().image_ids.contains(&q.image_ids[0]));
            }
        }
        let again = planted_corpus(&PlantedSpec::bundled(PlantedSignal::TextAndVisual));
        assert_eq!(again.candidates, p.candidates);
    }

    #[test]
    fn expansion_corpus_shape() {
        let c = expansion_corpus(3, 200, 100, 0.4);
        assert_eq!(c.counts().docs, 200);
        assert_eq!(c.counts().queries, 100);
        let q0 = c.query("q0000").unwrap();
        let target = c.doc("doc0000").unwrap();
        assert!(q0.tweet_tokens.iter().all(|t| !target.doc_tokens.contains(t)));
        assert!(q0.ocr_tokens.iter().all(|t| target.doc_tokens.contains(t)));
    }
}
