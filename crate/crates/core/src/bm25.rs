//! Stage-one candidate generation: an inverted index scored with BM25.
//!
//! Term weight: `idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg_len))`
//! with `idf(t) = ln(1 + (n_docs - df + 0.5) / (df + 0.5))`. Every occurrence
//! of a term in the query contributes once.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, QueryRecord};
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub top_k: usize,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: 1.2,
            b: 0.75,
            top_k: 50,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0) || !(0.0..=1.0).contains(&self.b) || self.top_k == 0 {
            return Err(Error::Invalid(format!(
                "bm25 params out of range: k1={} b={} top_k={}",
                self.k1, self.b, self.top_k
            )));
        }
        Ok(())
    }
}

/// Which query text stage one searches with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryMode {
    /// Tweet text.
    T,
    /// Text recognised in the tweet's images.
    I,
    /// Tweet text followed by image text.
    TI,
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryMode::T => "T",
            QueryMode::I => "I",
            QueryMode::TI => "TI",
        })
    }
}

impl FromStr for QueryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T" => Ok(QueryMode::T),
            "I" => Ok(QueryMode::I),
            "TI" => Ok(QueryMode::TI),
            other => Err(Error::Invalid(format!("unknown query mode {other:?}"))),
        }
    }
}

impl QueryMode {
    pub fn query_tokens(self, q: &QueryRecord) -> Vec<&str> {
        match self {
            QueryMode::T => q.tweet_tokens.iter().map(String::as_str).collect(),
            QueryMode::I => q.ocr_tokens.iter().map(String::as_str).collect(),
            QueryMode::TI => q.expanded_tokens().collect(),
        }
    }
}

/// Posting: `(doc index, term frequency)`. Doc indices follow ascending doc id.
pub type Posting = (u32, u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_len: f64,
    postings: BTreeMap<String, Vec<Posting>>,
    #[serde(skip)]
    doc_lookup: HashMap<String, u32>,
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus) -> Result<Self> {
        if corpus.docs().is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut docs: Vec<_> = corpus.docs().iter().collect();
        docs.sort_by(|a, b| a.id.cmp(&b.id));
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in &d.doc_tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t.to_string()).or_default().push((i as u32, n));
            }
            doc_lengths.push(d.doc_tokens.len() as u32);
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_len = total as f64 / doc_lengths.len() as f64;
        let mut index = InvertedIndex {
            doc_ids: docs.into_iter().map(|d| d.id.clone()).collect(),
            doc_lengths,
            avg_doc_len,
            postings,
            doc_lookup: HashMap::new(),
        };
        index.rebuild_lookup();
        Ok(index)
    }

    fn rebuild_lookup(&mut self) {
        self.doc_lookup = self
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), i as u32))
            .collect();
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_id(&self, idx: u32) -> &str {
        &self.doc_ids[idx as usize]
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<u32> {
        self.doc_lookup
            .get(doc_id)
            .map(|&i| self.doc_lengths[i as usize])
    }

    pub fn postings(&self, token: &str) -> &[Posting] {
        self.postings.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn idf(&self, token: &str) -> f64 {
        idf(self.doc_count(), self.postings(token).len())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut index: InvertedIndex = serde_json::from_str(s)?;
        index.rebuild_lookup();
        Ok(index)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

pub fn idf(n_docs: usize, df: usize) -> f64 {
    let n = n_docs as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// BM25 contribution of one query-term occurrence.
pub fn term_weight(idf: f64, tf: u32, doc_len: u32, avg_doc_len: f64, params: &Bm25Params) -> f64 {
    let tf = tf as f64;
    let norm = 1.0 - params.b + params.b * doc_len as f64 / avg_doc_len;
    idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
}

pub fn bm25_score(
    index: &InvertedIndex,
    query_tokens: &[&str],
    doc_id: &str,
    params: &Bm25Params,
) -> Result<f64> {
    let &doc = index
        .doc_lookup
        .get(doc_id)
        .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))?;
    let len = index.doc_lengths[doc as usize];
    let mut score = 0.0;
    for t in query_tokens {
        let postings = index.postings(t);
        if let Ok(p) = postings.binary_search_by_key(&doc, |&(d, _)| d) {
            let w = idf(index.doc_count(), postings.len());
            score += term_weight(w, postings[p].1, len, index.avg_doc_len, params);
        }
    }
    Ok(score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub doc_id: String,
    pub score: f64,
}

/// Top-k documents for one query, by descending score then ascending doc id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub query_id: String,
    pub ranked: Vec<Candidate>,
}

impl CandidateList {
    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.ranked.iter().map(|c| c.doc_id.as_str())
    }
}

/// Ranks every indexed document against `tokens`, including documents that
/// share no term with the query (score 0). An empty query yields an empty list.
pub fn retrieve_tokens(
    index: &InvertedIndex,
    query_id: &str,
    tokens: &[&str],
    params: &Bm25Params,
) -> CandidateList {
    if tokens.is_empty() {
        return CandidateList {
            query_id: query_id.to_string(),
            ranked: Vec::new(),
        };
    }
    let n = index.doc_count();
    let mut scores = vec![0.0f64; n];
    for t in tokens {
        let postings = index.postings(t);
        if postings.is_empty() {
            continue;
        }
        let w = idf(n, postings.len());
        for &(d, tf) in postings {
            scores[d as usize] += term_weight(
                w,
                tf,
                index.doc_lengths[d as usize],
                index.avg_doc_len,
                params,
            );
        }
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    let cmp = |a: &u32, b: &u32| {
        scores[*b as usize]
            .total_cmp(&scores[*a as usize])
            .then(a.cmp(b))
    };
    let k = params.top_k.min(n);
    if k < n {
        order.select_nth_unstable_by(k, cmp);
        order.truncate(k);
    }
    order.sort_unstable_by(cmp);
    CandidateList {
        query_id: query_id.to_string(),
        ranked: order
            .into_iter()
            .map(|d| Candidate {
                doc_id: index.doc_id(d).to_string(),
                score: scores[d as usize],
            })
            .collect(),
    }
}

pub fn retrieve(
    index: &InvertedIndex,
    query: &QueryRecord,
    mode: QueryMode,
    params: &Bm25Params,
) -> CandidateList {
    retrieve_tokens(index, &query.id, &mode.query_tokens(query), params)
}

/// Retrieves candidates for every query of the corpus, in corpus order.
pub fn retrieve_all(
    index: &InvertedIndex,
    corpus: &Corpus,
    mode: QueryMode,
    params: &Bm25Params,
    exec: Exec,
) -> Vec<CandidateList> {
    exec.map(corpus.queries(), |q| retrieve(index, q, mode, params))
}

/// Fraction of judged queries with at least one relevant doc in the top `k`.
pub fn hit_rate(corpus: &Corpus, lists: &[CandidateList], k: usize) -> f64 {
    let judged: Vec<&CandidateList> = lists
        .iter()
        .filter(|l| corpus.relevant_docs(&l.query_id).next().is_some())
        .collect();
    if judged.is_empty() {
        return 0.0;
    }
    let hits = judged
        .iter()
        .filter(|l| {
            l.ranked
                .iter()
                .take(k)
                .any(|c| corpus.is_relevant(&l.query_id, &c.doc_id))
        })
        .count();
    hits as f64 / judged.len() as f64
}

/// Judged queries split by whether their candidate list holds a relevant doc:
/// `(eligible, leftover)`, each in ascending id order.
pub fn partition_by_candidates(corpus: &Corpus, lists: &[CandidateList]) -> (Vec<String>, Vec<String>) {
    let by_query: HashMap<&str, &CandidateList> =
        lists.iter().map(|l| (l.query_id.as_str(), l)).collect();
    let mut eligible = Vec::new();
    let mut leftover = Vec::new();
    for q in corpus.queries() {
        if corpus.relevant_docs(&q.id).next().is_none() {
            continue;
        }
        let found = by_query
            .get(q.id.as_str())
            .is_some_and(|l| l.doc_ids().any(|d| corpus.is_relevant(&q.id, d)));
        if found {
            eligible.push(q.id.clone());
        } else {
            leftover.push(q.id.clone());
        }
    }
    eligible.sort();
    leftover.sort();
    (eligible, leftover)
}

/// Writes `query_id<TAB>rank<TAB>doc_id<TAB>score` lines, ranks from 1.
pub fn write_candidates(path: &Path, lists: &[CandidateList]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for list in lists {
        for (rank, c) in list.ranked.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}\t{}", list.query_id, rank + 1, c.doc_id, c.score)
                .map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_candidates(path: &Path) -> Result<Vec<CandidateList>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lists: Vec<CandidateList> = Vec::new();
    let bad = |line: usize, msg: &str| Error::Parse {
        file: path.display().to_string(),
        line,
        msg: msg.to_string(),
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad(i + 1, "expected 4 tab-separated columns"));
        }
        let rank: usize = cols[1].parse().map_err(|_| bad(i + 1, "bad rank"))?;
        let score: f64 = cols[3].parse().map_err(|_| bad(i + 1, "bad score"))?;
        let candidate = Candidate {
            doc_id: cols[2].to_string(),
            score,
        };
        match lists.last_mut() {
            Some(l) if l.query_id == cols[0] => {
                if rank != l.ranked.len() + 1 {
                    return Err(bad(i + 1, "ranks must be consecutive"));
                }
                l.ranked.push(candidate);
            }
            _ => {
                if rank != 1 {
                    return Err(bad(i + 1, "a query block must start at rank 1"));
                }
                lists.push(CandidateList {
                    query_id: cols[0].to_string(),
                    ranked: vec![candidate],
                });
            }
        }
    }
    Ok(lists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentRecord;
    use proptest::prelude::*;

    fn doc(id: &str, text: &str) -> DocumentRecord {
        DocumentRecord {
            id: id.into(),
            doc_tokens: text.split_whitespace().map(str::to_string).collect(),
            image_ids: vec![],
        }
    }

    fn corpus(docs: Vec<DocumentRecord>) -> Corpus {
        Corpus::new(vec![], docs, vec![]).unwrap()
    }

    /// Direct evaluation of the formula from raw document tokens.
    fn oracle_score(docs: &[DocumentRecord], query: &[&str], target: usize, p: &Bm25Params) -> f64 {
        let n = docs.len() as f64;
        let avg = docs.iter().map(|d| d.doc_tokens.len()).sum::<usize>() as f64 / n;
        let d = &docs[target];
        let len = d.doc_tokens.len() as f64;
        let mut s = 0.0;
        for t in query {
            let tf = d.doc_tokens.iter().filter(|x| x == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = docs.iter().filter(|x| x.doc_tokens.iter().any(|y| y == t)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            s += idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * len / avg));
        }
        s
    }

    #[test]
    fn two_doc_index() {
        let idx = InvertedIndex::build(&corpus(vec![doc("d1", "a b"), doc("d2", "b c")])).unwrap();
        assert_eq!(idx.postings("a"), &[(0, 1)]);
        assert_eq!(idx.postings("b"), &[(0, 1), (1, 1)]);
        assert_eq!(idx.postings("c"), &[(1, 1)]);
        assert_eq!(idx.avg_doc_len(), 2.0);
        assert_eq!(idx.doc_count(), 2);
        assert_eq!(idx.vocabulary_size(), 3);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(
            InvertedIndex::build(&corpus(vec![])),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn rebuild_and_json_are_identical() {
        let c = corpus(vec![doc("d2", "x y y"), doc("d1", "y z")]);
        let a = InvertedIndex::build(&c).unwrap();
        let b = InvertedIndex::build(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let back = InvertedIndex::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.doc_len("d2"), Some(3));
    }

    #[test]
    fn score_matches_hand_formula() {
        let docs = vec![
            doc("d1", "fake news obama leave"),
            doc("d2", "obama obama costume party"),
            doc("d3", "vaccine claim false"),
        ];
        let idx = InvertedIndex::build(&corpus(docs.clone())).unwrap();
        let p = Bm25Params::default();
        let q = ["obama", "leave", "obama", "nothing"];
        for (i, d) in docs.iter().enumerate() {
            let got = bm25_score(&idx, &q, &d.id, &p).unwrap();
            assert!((got - oracle_score(&docs, &q, i, &p)).abs() < 1e-9);
        }
        // d2 by hand: N=3, avg=11/3, len=4; "obama" df=2, tf=2; "leave" absent.
        let idf_obama = (1.0f64 + (3.0 - 2.0 + 0.5) / (2.0 + 0.5)).ln();
        let tf_part = 2.0 * 2.2 / (2.0 + 1.2 * (0.25 + 0.75 * 4.0 / (11.0 / 3.0)));
        let expected = 2.0 * idf_obama * tf_part;
        assert!((bm25_score(&idx, &q, "d2", &p).unwrap() - expected).abs() < 1e-9);
        assert_eq!(bm25_score(&idx, &["vaccine"], "d1", &p).unwrap(), 0.0);
        assert!(matches!(
            bm25_score(&idx, &q, "d9", &p),
            Err(Error::UnknownDoc(_))
        ));
    }

    #[test]
    fn duplicate_query_term_counts_per_occurrence() {
        let idx = InvertedIndex::build(&corpus(vec![doc("d1", "a b"), doc("d2", "c")])).unwrap();
        let p = Bm25Params::default();
        let once = bm25_score(&idx, &["a"], "d1", &p).unwrap();
        let twice = bm25_score(&idx, &["a", "a"], "d1", &p).unwrap();
        assert!(once > 0.0);
        assert_eq!(twice, once + once);
    }

    #[test]
    fn ties_break_by_doc_id_and_full_ranking() {
        let idx = InvertedIndex::build(&corpus(vec![
            doc("d3", "same words"),
            doc("d1", "same words"),
            doc("d2", "other"),
        ]))
        .unwrap();
        let p = Bm25Params {
            top_k: 3,
            ..Default::default()
        };
        let list = retrieve_tokens(&idx, "q", &["same"], &p);
        let ids: Vec<_> = list.doc_ids().collect();
        assert_eq!(ids, vec!["d1", "d3", "d2"]);
        assert_eq!(list.ranked[0].score, list.ranked[1].score);
        assert_eq!(list.ranked[2].score, 0.0);
    }

    #[test]
    fn image_mode_with_no_ocr_is_empty() {
        let idx = InvertedIndex::build(&corpus(vec![doc("d1", "a")])).unwrap();
        let q = QueryRecord {
            id: "q".into(),
            tweet_tokens: vec!["a".into()],
            ocr_tokens: vec![],
            image_ids: vec![],
        };
        assert!(retrieve(&idx, &q, QueryMode::I, &Bm25Params::default()).ranked.is_empty());
        assert_eq!(retrieve(&idx, &q, QueryMode::T, &Bm25Params::default()).ranked.len(), 1);
    }

    #[test]
    fn ocr_only_terms_need_expansion() {
        let idx = InvertedIndex::build(&corpus(vec![
            doc("d1", "costume party photo obama"),
            doc("d2", "weather report today"),
            doc("d3", "weather photo sunny"),
        ]))
        .unwrap();
        let q = QueryRecord {
            id: "q".into(),
            tweet_tokens: vec!["weather".into()],
            ocr_tokens: vec!["costume".into(), "party".into()],
            image_ids: vec![],
        };
        let p = Bm25Params {
            top_k: 1,
            ..Default::default()
        };
        assert_eq!(retrieve(&idx, &q, QueryMode::T, &p).ranked[0].doc_id, "d2");
        assert_eq!(retrieve(&idx, &q, QueryMode::TI, &p).ranked[0].doc_id, "d1");
    }

    #[test]
    fn candidate_file_round_trip() {
        let idx = InvertedIndex::build(&corpus(vec![doc("d1", "a b"), doc("d2", "b c")])).unwrap();
        let p = Bm25Params::default();
        let lists = vec![
            retrieve_tokens(&idx, "q1", &["a", "b"], &p),
            retrieve_tokens(&idx, "q2", &["c"], &p),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cand.tsv");
        write_candidates(&path, &lists).unwrap();
        assert_eq!(read_candidates(&path).unwrap(), lists);
        std::fs::write(&path, "q1\t2\td1\t0.5\n").unwrap();
        assert!(read_candidates(&path).is_err());
    }

    fn arb_docs() -> impl Strategy<Value = Vec<Vec<u8>>> {
        prop::collection::vec(prop::collection::vec(0u8..12, 1..8), 1..30)
    }

    proptest! {
        #[test]
        fn adding_a_matching_term_never_decreases(docs in arb_docs(), q in prop::collection::vec(0u8..12, 0..5), extra in 0u8..12) {
            let docs: Vec<_> = docs.iter().enumerate().map(|(i, t)| {
                doc(&format!("d{i:03}"), &t.iter().map(|x| format!("w{x}")).collect::<Vec<_>>().join(" "))
            }).collect();
            let idx = InvertedIndex::build(&corpus(docs.clone())).unwrap();
            let p = Bm25Params::default();
            let q: Vec<String> = q.iter().map(|x| format!("w{x}")).collect();
            let mut q2 = q.clone();
            q2.push(format!("w{extra}"));
            let q: Vec<&str> = q.iter().map(String::as_str).collect();
            let q2: Vec<&str> = q2.iter().map(String::as_str).collect();
            for d in &docs {
                let a = bm25_score(&idx, &q, &d.id, &p).unwrap();
                let b = bm25_score(&idx, &q2, &d.id, &p).unwrap();
                prop_assert!(b >= a);
            }
        }
    }
}
