//! File-level pipeline steps: each reads its inputs from disk, runs one stage
//! and writes its artifacts. The command-line driver is a thin layer on top.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bm25::{
    hit_rate, partition_by_candidates, read_candidates, retrieve_all, write_candidates, Bm25Params,
    CandidateList, InvertedIndex, QueryMode,
};
use crate::corpus::{
    ingest_corpus, split_queries, write_corpus, write_qrels, Corpus, IngestOptions, ScenarioConfig,
    Split,
};
use crate::error::{Error, Result};
use crate::eval::{leftover_experiment, rerank_and_report, MetricReport};
use crate::exec::Exec;
use crate::model::{dump_matrices, read_checkpoint, write_checkpoint, Encoder, Hyperparams, Model, Variant};
use crate::store::{generate_synthetic, EmbeddingStore, SyntheticStoreSpec};
use crate::synthetic::{planted_corpus, PlantedSpec};
use crate::train::{train, Fitted, Regime, TrainConfig};

/// The three record files of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFiles {
    pub queries: PathBuf,
    pub docs: PathBuf,
    pub qrels: PathBuf,
}

impl CorpusFiles {
    /// `queries.jsonl`, `docs.jsonl` and `qrels.tsv` inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        CorpusFiles {
            queries: dir.join("queries.jsonl"),
            docs: dir.join("docs.jsonl"),
            qrels: dir.join("qrels.tsv"),
        }
    }

    pub fn with_qrels(&self, qrels: &Path) -> Self {
        CorpusFiles {
            qrels: qrels.to_path_buf(),
            ..self.clone()
        }
    }

    pub fn load(&self, opts: &IngestOptions) -> Result<Corpus> {
        let corpus = ingest_corpus(&self.queries, &self.docs, &self.qrels, opts)?;
        for w in corpus.warnings() {
            log::warn!("{w}");
        }
        Ok(corpus)
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the planted synthetic corpus.
pub fn synth_corpus(spec: &PlantedSpec, out: &CorpusFiles) -> Result<Corpus> {
    let planted = planted_corpus(spec);
    for p in [&out.queries, &out.docs, &out.qrels] {
        ensure_parent(p)?;
    }
    write_corpus(&planted.corpus, &out.queries, &out.docs, &out.qrels)?;
    Ok(planted.corpus)
}

/// Generates a synthetic store covering the corpus and writes it.
pub fn synth_store(corpus: &Corpus, spec: &SyntheticStoreSpec, out: &Path) -> Result<EmbeddingStore> {
    let store = generate_synthetic(spec, corpus);
    ensure_parent(out)?;
    store.write(out)?;
    log::info!(
        "wrote store {} ({} words, {} contextual rows, {} images)",
        out.display(),
        store.static_words.len(),
        store.contextual.entry_count(),
        store.visual.len()
    );
    Ok(store)
}

pub fn build_index(corpus: &Corpus, out: &Path) -> Result<InvertedIndex> {
    let index = InvertedIndex::build(corpus)?;
    ensure_parent(out)?;
    index.write(out)?;
    log::info!(
        "indexed {} documents, {} terms",
        index.doc_count(),
        index.vocabulary_size()
    );
    Ok(index)
}

/// Stage-one retrieval for every query; writes the candidate file.
pub fn retrieve(
    corpus: &Corpus,
    index: &InvertedIndex,
    mode: QueryMode,
    params: &Bm25Params,
    exec: Exec,
    out: &Path,
) -> Result<Vec<CandidateList>> {
    params.validate()?;
    let lists = retrieve_all(index, corpus, mode, params, exec);
    ensure_parent(out)?;
    write_candidates(out, &lists)?;
    log::info!(
        "BM25-{mode} HIT@{}: {:.4}",
        params.top_k,
        hit_rate(corpus, &lists, params.top_k)
    );
    Ok(lists)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub leftover: usize,
}

/// Splits queries whose candidates contain a relevant document 80/10/10 and
/// writes the split-annotated qrels plus the leftover query ids.
pub fn split(
    corpus: &Corpus,
    candidates: &[CandidateList],
    seed: u64,
    qrels_out: &Path,
    leftover_out: &Path,
) -> Result<SplitSummary> {
    let (eligible, leftover) = partition_by_candidates(corpus, candidates);
    let assignment = split_queries(&eligible, seed);
    let with = corpus.with_splits(&assignment);
    ensure_parent(qrels_out)?;
    write_qrels(qrels_out, with.qrels())?;
    write_id_list(leftover_out, &leftover)?;
    Ok(SplitSummary {
        train: assignment.train.len(),
        valid: assignment.valid.len(),
        test: assignment.test.len(),
        leftover: leftover.len(),
    })
}

pub fn write_id_list(path: &Path, ids: &[String]) -> Result<()> {
    let mut text = String::new();
    for id in ids {
        text.push_str(id);
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Output locations of a training run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    /// One JSON object per epoch.
    pub log: PathBuf,
    /// Best-epoch metadata.
    pub meta: PathBuf,
}

impl TrainArtifacts {
    /// `model.ckpt`, `train_log.jsonl` and `train_meta.json` inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        TrainArtifacts {
            checkpoint: dir.join("model.ckpt"),
            log: dir.join("train_log.jsonl"),
            meta: dir.join("train_meta.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub variant: Variant,
    pub regime: Regime,
    pub best_epoch: usize,
    pub best_valid_score: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub hyperparams: Hyperparams,
    pub config: TrainConfig,
}

#[allow(clippy::too_many_arguments)]
pub fn train_model(
    corpus: &Corpus,
    candidates: &[CandidateList],
    store: &EmbeddingStore,
    hyper: Hyperparams,
    config: &TrainConfig,
    variant: Variant,
    regime: Regime,
    exec: Exec,
    out: &TrainArtifacts,
) -> Result<Fitted<Model>> {
    store.check_dims(hyper.dims)?;
    store.check_coverage(corpus)?;
    let fitted = train(corpus, candidates, store, hyper, config, variant, regime, exec)?;
    ensure_parent(&out.checkpoint)?;
    write_checkpoint(&out.checkpoint, &fitted.best)?;
    let mut log = Vec::new();
    for entry in &fitted.log {
        writeln!(log, "{}", entry.to_json_line()?).expect("writing to memory");
    }
    write_text(&out.log, std::str::from_utf8(&log).expect("json is utf-8"))?;
    let meta = TrainMeta {
        variant,
        regime,
        best_epoch: fitted.best_epoch,
        best_valid_score: fitted.best_score,
        epochs_run: fitted.epochs_run,
        stopped_early: fitted.stopped_early,
        hyperparams: hyper,
        config: config.clone(),
    };
    write_text(&out.meta, &(serde_json::to_string_pretty(&meta)? + "\n"))?;
    Ok(fitted)
}

/// Re-ranks a split's candidates with a saved checkpoint and writes the report.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    checkpoint: &Path,
    corpus: &Corpus,
    store: &EmbeddingStore,
    candidates_file: &Path,
    split: Split,
    scenario: ScenarioConfig,
    exec: Exec,
    out: &Path,
) -> Result<MetricReport> {
    let model = read_checkpoint(checkpoint)?;
    model.check_store_dims(store.dims())?;
    store.check_coverage(corpus)?;
    let candidates = read_candidates(candidates_file)?;
    let report = rerank_and_report(&model, corpus, store, &candidates, split, scenario, exec)?;
    ensure_parent(out)?;
    report.write(out)?;
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
pub fn leftover(
    checkpoint: &Path,
    corpus: &Corpus,
    store: &EmbeddingStore,
    leftover_file: &Path,
    scenario: ScenarioConfig,
    seed: u64,
    exec: Exec,
    out: &Path,
) -> Result<MetricReport> {
    let model = read_checkpoint(checkpoint)?;
    model.check_store_dims(store.dims())?;
    store.check_coverage(corpus)?;
    let ids = read_id_list(leftover_file)?;
    if ids.is_empty() {
        log::warn!("leftover list {} is empty", leftover_file.display());
    }
    let report = leftover_experiment(&model, corpus, store, &ids, scenario, seed, exec)?;
    ensure_parent(out)?;
    report.write(out)?;
    Ok(report)
}

/// Writes the S, G, A and C matrices of one pair as CSV files into `dir`.
pub fn dump(
    checkpoint: &Path,
    corpus: &Corpus,
    store: &EmbeddingStore,
    query_id: &str,
    doc_id: &str,
    scenario: ScenarioConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let model = read_checkpoint(checkpoint)?;
    model.check_store_dims(store.dims())?;
    let enc = Encoder::new(store, scenario);
    let q = enc.query(corpus.query(query_id)?)?;
    let d = enc.doc(corpus.doc(doc_id)?)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dump_matrices(&model, &q, &d, dir)?.1)
}
