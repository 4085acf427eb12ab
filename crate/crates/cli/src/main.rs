//! `fcsearch`: command-line driver for the two-stage fact-checking retrieval
//! pipeline.

mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fcsearch::bm25::{read_candidates, InvertedIndex, QueryMode};
use fcsearch::corpus::{IngestOptions, Scenario, ScenarioConfig, Split};
use fcsearch::model::Variant;
use fcsearch::pipeline::{self, CorpusFiles, TrainArtifacts};
use fcsearch::store::{EmbeddingStore, SyntheticStoreSpec};
use fcsearch::synthetic::{PlantedSignal, PlantedSpec};
use fcsearch::train::Regime;
use fcsearch::Exec;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "fcsearch", version, about = "Retrieve and re-rank fact-checking articles for multimodal posts")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, short, global = true, env = "FCSEARCH_CONFIG")]
    config: Option<PathBuf>,

    /// Seed for sampling, initialization and synthetic data
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run batch loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(flatten)]
    paths: PathFlags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct PathFlags {
    /// Corpus directory with queries.jsonl, docs.jsonl and qrels.tsv.
    #[arg(long, global = true, env = "FCSEARCH_CORPUS")]
    corpus: Option<PathBuf>,
    #[arg(long, global = true, env = "FCSEARCH_STORE")]
    store: Option<PathBuf>,
    #[arg(long, global = true, env = "FCSEARCH_INDEX")]
    index: Option<PathBuf>,
    #[arg(long, global = true, env = "FCSEARCH_CANDIDATES")]
    candidates: Option<PathBuf>,
    #[arg(long, global = true, env = "FCSEARCH_SPLIT_QRELS")]
    split_qrels: Option<PathBuf>,
    #[arg(long, global = true, env = "FCSEARCH_LEFTOVER")]
    leftover: Option<PathBuf>,
    #[arg(long, global = true, env = "FCSEARCH_RUN_DIR")]
    run_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "FCSEARCH_REPORTS")]
    reports: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the planted synthetic corpus.
    SynthCorpus {
        #[arg(long, value_enum, default_value_t = SignalArg::TextAndVisual)]
        signal: SignalArg,
        #[arg(long, default_value_t = 20)]
        queries: usize,
        #[arg(long, default_value_t = 180)]
        distractors: usize,
        #[arg(long, default_value_t = 3)]
        twins: usize,
    },
    /// Validate the corpus files and print record counts.
    Ingest,
    /// Generate a synthetic embedding store covering the corpus.
    SynthStore,
    /// Print the dimensions and sizes of an embedding store.
    InspectStore,
    /// Build the BM25 inverted index.
    Index,
    /// Retrieve BM25 candidates for every query.
    Retrieve {
        #[arg(long)]
        mode: Option<QueryMode>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Split queries with a relevant candidate 80/10/10; list the leftovers.
    Split,
    /// Train a re-ranker and save the best-validation checkpoint.
    Train {
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        regime: Option<Regime>,
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Re-rank a split's candidates and write a metric report.
    Evaluate {
        #[arg(long, default_value_t = Split::Test)]
        split: Split,
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank leftover queries' relevant articles against sampled negatives.
    Leftover {
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the S, G, A and C matrices of one pair as CSV files.
    DumpMatrices {
        #[arg(long)]
        query: String,
        #[arg(long)]
        doc: String,
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    PrintConfig,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SignalArg {
    TextAndVisual,
    VisualOnly,
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    let p = &cli.paths;
    let slots = [
        (&p.corpus, &mut cfg.paths.corpus),
        (&p.store, &mut cfg.paths.store),
        (&p.index, &mut cfg.paths.index),
        (&p.candidates, &mut cfg.paths.candidates),
        (&p.split_qrels, &mut cfg.paths.split_qrels),
        (&p.leftover, &mut cfg.paths.leftover),
        (&p.run_dir, &mut cfg.paths.run_dir),
        (&p.reports, &mut cfg.paths.reports),
    ];
    for (flag, slot) in slots {
        if let Some(v) = flag {
            *slot = v.clone();
        }
    }
    match &cli.command {
        Command::Retrieve { mode, top_k } => {
            if let Some(m) = mode {
                cfg.bm25.mode = *m;
            }
            if let Some(k) = top_k {
                cfg.bm25.top_k = *k;
            }
        }
        Command::Train {
            variant,
            regime,
            max_epochs,
        } => {
            if let Some(v) = variant {
                cfg.variant = *v;
            }
            if let Some(r) = regime {
                cfg.regime = *r;
                cfg.scenario = r.eval_scenario();
            }
            if let Some(n) = max_epochs {
                cfg.train.max_epochs = *n;
            }
        }
        Command::Evaluate { scenario: Some(s), .. }
        | Command::Leftover { scenario: Some(s), .. }
        | Command::DumpMatrices { scenario: Some(s), .. } => cfg.scenario = *s,
        _ => {}
    }
    Ok(cfg)
}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        bail!("{what} {} does not exist", path.display());
    }
    Ok(())
}

fn corpus_files(cfg: &RunConfig) -> CorpusFiles {
    CorpusFiles::in_dir(&cfg.paths.corpus)
}

fn load_corpus(cfg: &RunConfig, split_qrels: bool) -> Result<fcsearch::corpus::Corpus> {
    let mut files = corpus_files(cfg);
    if split_qrels {
        require(&cfg.paths.split_qrels, "split qrels file (run `split` first)")?;
        files = files.with_qrels(&cfg.paths.split_qrels);
    }
    for p in [&files.queries, &files.docs, &files.qrels] {
        require(p, "corpus file")?;
    }
    Ok(files.load(&IngestOptions::default())?)
}

fn load_store(cfg: &RunConfig) -> Result<EmbeddingStore> {
    require(&cfg.paths.store, "embedding store")?;
    EmbeddingStore::load(&cfg.paths.store)
        .with_context(|| format!("loading store {}", cfg.paths.store.display()))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli)?;
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let scenario = ScenarioConfig::new(cfg.scenario);
    match &cli.command {
        Command::SynthCorpus {
            signal,
            queries,
            distractors,
            twins,
        } => {
            let spec = PlantedSpec {
                seed: cfg.seed,
                queries: *queries,
                distractors: *distractors,
                twins: *twins,
                signal: match signal {
                    SignalArg::TextAndVisual => PlantedSignal::TextAndVisual,
                    SignalArg::VisualOnly => PlantedSignal::VisualOnly,
                },
                ..PlantedSpec::bundled(PlantedSignal::TextAndVisual)
            };
            if spec.queries * spec.twins > spec.distractors {
                bail!("need at least queries x twins distractors");
            }
            let corpus = pipeline::synth_corpus(&spec, &corpus_files(&cfg))?;
            println!("wrote {} under {}", counts(&corpus), cfg.paths.corpus.display());
        }
        Command::Ingest => {
            let corpus = load_corpus(&cfg, false)?;
            println!("{}", counts(&corpus));
            println!("{} warnings", corpus.warnings().len());
        }
        Command::SynthStore => {
            let corpus = load_corpus(&cfg, false)?;
            let spec = SyntheticStoreSpec {
                seed: cfg.seed,
                dims: cfg.hyper.dims,
                context_anchor: cfg.store.context_anchor,
            };
            pipeline::synth_store(&corpus, &spec, &cfg.paths.store)?;
            println!("wrote {}", cfg.paths.store.display());
        }
        Command::InspectStore => {
            let store = load_store(&cfg)?;
            let d = store.dims();
            println!("comment: {}", store.comment);
            println!(
                "static: {} x {}\ncontextual: {} records, {} rows x {}\nvisual: {} x {}",
                store.static_words.len(),
                d.static_dim,
                store.contextual.records().count(),
                store.contextual.entry_count(),
                d.contextual_dim,
                store.visual.len(),
                d.visual_dim
            );
        }
        Command::Index => {
            let corpus = load_corpus(&cfg, false)?;
            let index = pipeline::build_index(&corpus, &cfg.paths.index)?;
            println!(
                "indexed {} documents ({} terms) into {}",
                index.doc_count(),
                index.vocabulary_size(),
                cfg.paths.index.display()
            );
        }
        Command::Retrieve { .. } => {
            let corpus = load_corpus(&cfg, false)?;
            require(&cfg.paths.index, "index")?;
            let index = InvertedIndex::load(&cfg.paths.index)?;
            let params = cfg.bm25.params();
            let lists = pipeline::retrieve(&corpus, &index, cfg.bm25.mode, &params, exec, &cfg.paths.candidates)?;
            println!(
                "BM25-{} HIT@{}: {:.4} ({} lists) -> {}",
                cfg.bm25.mode,
                params.top_k,
                fcsearch::bm25::hit_rate(&corpus, &lists, params.top_k),
                lists.len(),
                cfg.paths.candidates.display()
            );
        }
        Command::Split => {
            let corpus = load_corpus(&cfg, false)?;
            require(&cfg.paths.candidates, "candidate file")?;
            let candidates = read_candidates(&cfg.paths.candidates)?;
            let s = pipeline::split(&corpus, &candidates, cfg.seed, &cfg.paths.split_qrels, &cfg.paths.leftover)?;
            println!(
                "train {} / valid {} / test {}; leftover {}",
                s.train, s.valid, s.test, s.leftover
            );
        }
        Command::Train { .. } => {
            let corpus = load_corpus(&cfg, true)?;
            let store = load_store(&cfg)?;
            require(&cfg.paths.candidates, "candidate file")?;
            let candidates = read_candidates(&cfg.paths.candidates)?;
            let out = TrainArtifacts::in_dir(&cfg.paths.run_dir);
            let fitted = pipeline::train_model(
                &corpus,
                &candidates,
                &store,
                cfg.hyper,
                &cfg.train,
                cfg.variant,
                cfg.regime,
                exec,
                &out,
            )?;
            println!(
                "{} {}: best epoch {} of {} (valid score {:.4}) -> {}",
                cfg.variant,
                cfg.regime,
                fitted.best_epoch,
                fitted.epochs_run,
                fitted.best_score,
                out.checkpoint.display()
            );
        }
        Command::Evaluate {
            split,
            checkpoint,
            out,
            ..
        } => {
            let corpus = load_corpus(&cfg, true)?;
            let store = load_store(&cfg)?;
            let ckpt = checkpoint.clone().unwrap_or_else(|| cfg.checkpoint());
            require(&ckpt, "checkpoint")?;
            require(&cfg.paths.candidates, "candidate file")?;
            let out = out.clone().unwrap_or_else(|| {
                cfg.paths
                    .reports
                    .join(format!("{}_{}.json", cfg.scenario, split))
            });
            let r = pipeline::evaluate(&ckpt, &corpus, &store, &cfg.paths.candidates, *split, scenario, exec, &out)?;
            print_report(&r, &out);
        }
        Command::Leftover {
            checkpoint, out, ..
        } => {
            let corpus = load_corpus(&cfg, true)?;
            let store = load_store(&cfg)?;
            let ckpt = checkpoint.clone().unwrap_or_else(|| cfg.checkpoint());
            require(&ckpt, "checkpoint")?;
            require(&cfg.paths.leftover, "leftover list")?;
            let out = out
                .clone()
                .unwrap_or_else(|| cfg.paths.reports.join(format!("{}_leftover.json", cfg.scenario)));
            let r = pipeline::leftover(&ckpt, &corpus, &store, &cfg.paths.leftover, scenario, cfg.seed, exec, &out)?;
            print_report(&r, &out);
        }
        Command::DumpMatrices {
            query,
            doc,
            checkpoint,
            out,
            ..
        } => {
            let corpus = load_corpus(&cfg, false)?;
            let store = load_store(&cfg)?;
            let ckpt = checkpoint.clone().unwrap_or_else(|| cfg.checkpoint());
            require(&ckpt, "checkpoint")?;
            let dir = out.clone().unwrap_or_else(|| cfg.paths.reports.join("matrices"));
            for p in pipeline::dump(&ckpt, &corpus, &store, query, doc, scenario, &dir)? {
                println!("{}", p.display());
            }
        }
        Command::PrintConfig => print!("{}", cfg.to_toml()?),
    }
    Ok(())
}

fn counts(corpus: &fcsearch::corpus::Corpus) -> String {
    let c = corpus.counts();
    format!("{} queries, {} documents, {} relevant pairs", c.queries, c.docs, c.positive_pairs)
}

fn print_report(r: &fcsearch::eval::MetricReport, out: &Path) {
    let m = &r.mean;
    println!(
        "{}: {} queries ({} excluded)\n  NDCG@1 {:.4}  NDCG@3 {:.4}  NDCG@5 {:.4}\n  HIT@1  {:.4}  HIT@3  {:.4}  HIT@5  {:.4}\n-> {}",
        r.label,
        r.query_count,
        r.excluded.len(),
        m.ndcg1,
        m.ndcg3,
        m.ndcg5,
        m.hit1,
        m.hit3,
        m.hit5,
        out.display()
    );
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(Cli::parse())
}
