use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fcsearch::bm25::{Bm25Params, QueryMode};
use fcsearch::corpus::Scenario;
use fcsearch::model::{Hyperparams, Variant};
use fcsearch::train::{Regime, TrainConfig};
use serde::{Deserialize, Serialize};

/// Everything a pipeline run needs, loaded from a TOML file and overridden by
/// command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub scenario: Scenario,
    pub variant: Variant,
    pub regime: Regime,
    pub paths: Paths,
    pub bm25: Bm25Section,
    pub hyper: Hyperparams,
    pub train: TrainConfig,
    pub store: StoreSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            scenario: Scenario::Sc2,
            variant: Variant::Man,
            regime: Regime::Sc2,
            paths: Paths::default(),
            bm25: Bm25Section::default(),
            hyper: Hyperparams::snopes(),
            train: TrainConfig::default(),
            store: StoreSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding `queries.jsonl`, `docs.jsonl` and `qrels.tsv`.
    pub corpus: PathBuf,
    pub store: PathBuf,
    pub index: PathBuf,
    pub candidates: PathBuf,
    /// Qrels annotated with train/valid/test, written by `split`.
    pub split_qrels: PathBuf,
    pub leftover: PathBuf,
    /// Checkpoint, training log and metadata.
    pub run_dir: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        let work = Path::new("work");
        Paths {
            corpus: PathBuf::from("data/synthetic"),
            store: work.join("store.bin"),
            index: work.join("index.json"),
            candidates: work.join("candidates.tsv"),
            split_qrels: work.join("qrels.split.tsv"),
            leftover: work.join("leftover.txt"),
            run_dir: work.join("run"),
            reports: work.join("reports"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Section {
    pub k1: f64,
    pub b: f64,
    pub top_k: usize,
    pub mode: QueryMode,
}

impl Default for Bm25Section {
    fn default() -> Self {
        let p = Bm25Params::default();
        Bm25Section {
            k1: p.k1,
            b: p.b,
            top_k: p.top_k,
            mode: QueryMode::TI,
        }
    }
}

impl Bm25Section {
    pub fn params(&self) -> Bm25Params {
        Bm25Params {
            k1: self.k1,
            b: self.b,
            top_k: self.top_k,
        }
    }
}

/// Settings of the synthetic store generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSection {
    pub context_anchor: f64,
}

impl Default for StoreSection {
    fn default() -> Self {
        StoreSection {
            context_anchor: 0.8,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.paths.run_dir.join("model.ckpt")
    }
}
