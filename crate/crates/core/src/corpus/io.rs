//! Line-delimited record files.
//!
//! Queries: one JSON object per line with `id`, `text`, `ocr_text` and
//! `image_ids` (comma-separated string). Documents: same without `ocr_text`.
//! Qrels: `query_id<TAB>doc_id<TAB>split`, the split column being optional.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    tokenize, Corpus, DocumentRecord, Qrel, QueryRecord, Split, DEFAULT_MAX_DOC_LEN,
    MAX_DOC_IMAGES, MAX_QUERY_IMAGES,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub max_doc_len: usize,
    pub max_query_images: usize,
    pub max_doc_images: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            max_doc_len: DEFAULT_MAX_DOC_LEN,
            max_query_images: MAX_QUERY_IMAGES,
            max_doc_images: MAX_DOC_IMAGES,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct QueryLine {
    id: String,
    text: String,
    #[serde(default)]
    ocr_text: String,
    #[serde(default)]
    image_ids: String,
}

#[derive(Serialize, Deserialize)]
struct DocLine {
    id: String,
    text: String,
    #[serde(default)]
    image_ids: String,
}

fn split_ids(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(str::to_string)
        .collect()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Yields `(line_number, line)` for every non-blank line.
fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_err(path: &Path, line: usize, msg: impl ToString) -> Error {
    Error::Parse {
        file: path.display().to_string(),
        line,
        msg: msg.to_string(),
    }
}

fn cap_images(
    mut ids: Vec<String>,
    limit: usize,
    id: &str,
    warnings: &mut Vec<String>,
) -> Vec<String> {
    if ids.len() > limit {
        warnings.push(format!(
            "{id}: {} images, keeping the first {limit}",
            ids.len()
        ));
        ids.truncate(limit);
    }
    ids
}

pub fn read_qrels(path: &Path) -> Result<Vec<Qrel>> {
    let mut out = Vec::new();
    for (n, line) in lines(path)? {
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        let split = match cols.len() {
            2 => None,
            3 if cols[2].is_empty() => None,
            3 => Some(cols[2].parse::<Split>().map_err(|e| parse_err(path, n, e))?),
            k => return Err(parse_err(path, n, format!("expected 2 or 3 columns, found {k}"))),
        };
        if cols[0].is_empty() || cols[1].is_empty() {
            return Err(parse_err(path, n, "empty id"));
        }
        out.push(Qrel {
            query_id: cols[0].to_string(),
            doc_id: cols[1].to_string(),
            split,
        });
    }
    Ok(out)
}

/// Reads the three record files and returns a validated corpus.
///
/// Records whose text tokenizes to nothing are rejected and listed in
/// [`Corpus::warnings`]; qrels pointing at rejected records are dropped with a
/// warning. Qrels pointing at ids that never appeared are an error.
pub fn ingest_corpus(
    query_file: &Path,
    doc_file: &Path,
    qrel_file: &Path,
    opts: &IngestOptions,
) -> Result<Corpus> {
    let mut warnings = Vec::new();
    let mut rejected = HashSet::new();

    let mut queries = Vec::new();
    for (n, line) in lines(query_file)? {
        let rec: QueryLine =
            serde_json::from_str(&line).map_err(|e| parse_err(query_file, n, e))?;
        let tweet_tokens = tokenize(&rec.text);
        if tweet_tokens.is_empty() {
            warnings.push(format!("query {}: no tokens after cleaning, rejected", rec.id));
            rejected.insert(rec.id);
            continue;
        }
        let image_ids = cap_images(
            split_ids(&rec.image_ids),
            opts.max_query_images,
            &rec.id,
            &mut warnings,
        );
        queries.push(QueryRecord {
            tweet_tokens,
            ocr_tokens: tokenize(&rec.ocr_text),
            image_ids,
            id: rec.id,
        });
    }

    let mut docs = Vec::new();
    for (n, line) in lines(doc_file)? {
        let rec: DocLine = serde_json::from_str(&line).map_err(|e| parse_err(doc_file, n, e))?;
        let mut doc_tokens = tokenize(&rec.text);
        if doc_tokens.is_empty() {
            warnings.push(format!("doc {}: no tokens after cleaning, rejected", rec.id));
            rejected.insert(rec.id);
            continue;
        }
        doc_tokens.truncate(opts.max_doc_len);
        let image_ids = cap_images(
            split_ids(&rec.image_ids),
            opts.max_doc_images,
            &rec.id,
            &mut warnings,
        );
        docs.push(DocumentRecord {
            doc_tokens,
            image_ids,
            id: rec.id,
        });
    }

    let qrels = read_qrels(qrel_file)?
        .into_iter()
        .filter(|q| {
            let drop = rejected.contains(&q.query_id) || rejected.contains(&q.doc_id);
            if drop {
                warnings.push(format!(
                    "qrel ({}, {}) refers to a rejected record, dropped",
                    q.query_id, q.doc_id
                ));
            }
            !drop
        })
        .collect();

    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Corpus::new(queries, docs, qrels)?.with_warnings(warnings))
}

pub fn write_qrels(path: &Path, qrels: &[Qrel]) -> Result<()> {
    let mut w = create(path)?;
    for q in qrels {
        let res = match q.split {
            Some(s) => writeln!(w, "{}\t{}\t{}", q.query_id, q.doc_id, s),
            None => writeln!(w, "{}\t{}", q.query_id, q.doc_id),
        };
        res.map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the corpus back in the ingest format. Text fields hold the
/// space-joined tokens, so re-ingesting reproduces identical records.
pub fn write_corpus(
    corpus: &Corpus,
    query_file: &Path,
    doc_file: &Path,
    qrel_file: &Path,
) -> Result<()> {
    let mut w = create(query_file)?;
    for q in corpus.queries() {
        let line = serde_json::to_string(&QueryLine {
            id: q.id.clone(),
            text: q.tweet_tokens.join(" "),
            ocr_text: q.ocr_tokens.join(" "),
            image_ids: q.image_ids.join(","),
        })?;
        writeln!(w, "{line}").map_err(|e| Error::io(query_file, e))?;
    }
    w.flush().map_err(|e| Error::io(query_file, e))?;

    let mut w = create(doc_file)?;
    for d in corpus.docs() {
        let line = serde_json::to_string(&DocLine {
            id: d.id.clone(),
            text: d.doc_tokens.join(" "),
            image_ids: d.image_ids.join(","),
        })?;
        writeln!(w, "{line}").map_err(|e| Error::io(doc_file, e))?;
    }
    w.flush().map_err(|e| Error::io(doc_file, e))?;

    write_qrels(qrel_file, corpus.qrels())
}
