//! Queries (posts), documents (fact-checking articles), relevance judgments
//! and train/valid/test splits.

mod io;
mod split;
mod tokenize;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{ingest_corpus, read_qrels, write_corpus, write_qrels, IngestOptions};
pub use split::{split_queries, SplitAssignment};
pub use tokenize::tokenize;

pub const MAX_QUERY_IMAGES: usize = 4;
pub const MAX_DOC_IMAGES: usize = 17;
pub const DEFAULT_MAX_DOC_LEN: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub id: String,
    pub tweet_tokens: Vec<String>,
    pub ocr_tokens: Vec<String>,
    pub image_ids: Vec<String>,
}

impl QueryRecord {
    /// Tweet tokens followed by OCR tokens, untruncated. Contextual vectors for
    /// queries are keyed by positions in this sequence.
    pub fn expanded_tokens(&self) -> impl Iterator<Item = &str> {
        self.tweet_tokens
            .iter()
            .chain(&self.ocr_tokens)
            .map(String::as_str)
    }

    pub fn expanded_len(&self) -> usize {
        self.tweet_tokens.len() + self.ocr_tokens.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentRecord {
    pub id: String,
    pub doc_tokens: Vec<String>,
    pub image_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" | "dev" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// A judged-relevant (query, document) pair. `split` is `None` until the
/// splitter has assigned the query.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Qrel {
    pub query_id: String,
    pub doc_id: String,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Model input is the tweet text only.
    #[serde(rename = "SC1")]
    Sc1,
    /// Model input is the tweet text followed by the OCR text of its images.
    #[serde(rename = "SC2")]
    Sc2,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Sc1 => "SC1",
            Scenario::Sc2 => "SC2",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SC1" => Ok(Scenario::Sc1),
            "SC2" => Ok(Scenario::Sc2),
            other => Err(Error::Invalid(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub max_query_len: usize,
    pub max_doc_len: usize,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        let max_query_len = match scenario {
            Scenario::Sc1 => 50,
            Scenario::Sc2 => 100,
        };
        ScenarioConfig {
            scenario,
            max_query_len,
            max_doc_len: DEFAULT_MAX_DOC_LEN,
        }
    }

    pub fn sc1() -> Self {
        Self::new(Scenario::Sc1)
    }

    pub fn sc2() -> Self {
        Self::new(Scenario::Sc2)
    }
}

/// Model-input text of a query for the given scenario: the prefix of the tweet
/// tokens (SC1) or of tweet ++ OCR tokens (SC2), at most `max_query_len` long.
pub fn build_query_text<'a>(q: &'a QueryRecord, cfg: &ScenarioConfig) -> Vec<&'a str> {
    match cfg.scenario {
        Scenario::Sc1 => q
            .tweet_tokens
            .iter()
            .take(cfg.max_query_len)
            .map(String::as_str)
            .collect(),
        Scenario::Sc2 => q.expanded_tokens().take(cfg.max_query_len).collect(),
    }
}

/// Immutable, cross-referenced collection of queries, documents and qrels.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    queries: Vec<QueryRecord>,
    docs: Vec<DocumentRecord>,
    qrels: Vec<Qrel>,
    query_index: HashMap<String, usize>,
    doc_index: HashMap<String, usize>,
    relevant: HashMap<String, BTreeSet<String>>,
    warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorpusCounts {
    pub queries: usize,
    pub docs: usize,
    pub positive_pairs: usize,
}

impl Corpus {
    /// Builds a corpus, validating id uniqueness and qrel references.
    pub fn new(
        queries: Vec<QueryRecord>,
        docs: Vec<DocumentRecord>,
        qrels: Vec<Qrel>,
    ) -> Result<Self> {
        let mut query_index = HashMap::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            if query_index.insert(q.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(q.id.clone()));
            }
        }
        let mut doc_index = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if doc_index.insert(d.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        let mut seen: HashMap<(String, String), Option<Split>> = HashMap::new();
        let mut kept = Vec::with_capacity(qrels.len());
        let mut relevant: HashMap<String, BTreeSet<String>> = HashMap::new();
        for qrel in qrels {
            if !query_index.contains_key(&qrel.query_id) {
                return Err(Error::UnknownQuery(qrel.query_id));
            }
            if !doc_index.contains_key(&qrel.doc_id) {
                return Err(Error::UnknownDoc(qrel.doc_id));
            }
            let key = (qrel.query_id.clone(), qrel.doc_id.clone());
            match seen.get(&key) {
                Some(prev) if *prev == qrel.split => continue,
                Some(_) => {
                    return Err(Error::ConflictingSplit {
                        query: key.0,
                        doc: key.1,
                    })
                }
                None => {}
            }
            seen.insert(key, qrel.split);
            relevant
                .entry(qrel.query_id.clone())
                .or_default()
                .insert(qrel.doc_id.clone());
            kept.push(qrel);
        }
        Ok(Corpus {
            queries,
            docs,
            qrels: kept,
            query_index,
            doc_index,
            relevant,
            warnings: Vec::new(),
        })
    }

    pub(crate) fn with_warnings(mut self, warnings: Vec<String>) -> Self {
        self.warnings = warnings;
        self
    }

    pub fn queries(&self) -> &[QueryRecord] {
        &self.queries
    }

    pub fn docs(&self) -> &[DocumentRecord] {
        &self.docs
    }

    pub fn qrels(&self) -> &[Qrel] {
        &self.qrels
    }

    /// Records rejected or altered during ingestion.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn query(&self, id: &str) -> Result<&QueryRecord> {
        self.query_index
            .get(id)
            .map(|&i| &self.queries[i])
            .ok_or_else(|| Error::UnknownQuery(id.to_string()))
    }

    pub fn doc(&self, id: &str) -> Result<&DocumentRecord> {
        self.doc_index
            .get(id)
            .map(|&i| &self.docs[i])
            .ok_or_else(|| Error::UnknownDoc(id.to_string()))
    }

    pub fn is_relevant(&self, query_id: &str, doc_id: &str) -> bool {
        self.relevant
            .get(query_id)
            .is_some_and(|set| set.contains(doc_id))
    }

    /// Relevant doc ids for a query, in ascending id order.
    pub fn relevant_docs(&self, query_id: &str) -> impl Iterator<Item = &str> {
        self.relevant
            .get(query_id)
            .into_iter()
            .flat_map(|set| set.iter().map(String::as_str))
    }

    pub fn counts(&self) -> CorpusCounts {
        CorpusCounts {
            queries: self.queries.len(),
            docs: self.docs.len(),
            positive_pairs: self.qrels.len(),
        }
    }

    /// Query ids assigned to `split`, ascending.
    pub fn split_queries(&self, split: Split) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .qrels
            .iter()
            .filter(|q| q.split == Some(split))
            .map(|q| q.query_id.as_str())
            .collect();
        set.into_iter().collect()
    }

    /// Returns a copy with every qrel's split replaced according to `assign`.
    /// Qrels of unassigned queries keep `None`.
    pub fn with_splits(&self, assign: &SplitAssignment) -> Corpus {
        let lookup = assign.lookup();
        let mut out = self.clone();
        for qrel in &mut out.qrels {
            qrel.split = lookup.get(qrel.query_id.as_str()).copied();
        }
        out
    }
}
