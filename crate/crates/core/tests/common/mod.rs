//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use fcsearch::model::{Hyperparams, Model, SideInput, Variant};
use fcsearch::store::StoreDims;
use fcsearch::synthetic::random_side;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The configuration the gradient suite runs on: P=8, F=2, k=2, n=2.
pub fn grad_hyper(dims: StoreDims, visual_proj_dim: usize) -> Hyperparams {
    Hyperparams {
        projection_dim: 8,
        filters: 2,
        kmax: 2,
        num_cnns: 2,
        visual_proj_dim,
        hidden1: 128,
        hidden2: 64,
        dims,
    }
}

/// A model with small random biases (so bias gradients are exercised away
/// from zero) and a query/document pair with N=6, M=10, X=2, Y=2.
pub fn grad_case(hp: Hyperparams, variant: Variant, seed: u64) -> (Model, SideInput, SideInput) {
    let mut model = Model::new(hp, variant, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for t in [
        &mut model.params.b1,
        &mut model.params.b2,
        &mut model.params.b3,
    ] {
        t.data.iter_mut().for_each(|x| *x = rng.random_range(-0.1..0.1));
    }
    let q = random_side(&mut rng, "q", 6, 2, hp.dims);
    let d = random_side(&mut rng, "d", 10, 2, hp.dims);
    (model, q, d)
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub tensor: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_entry: usize,
}

/// Relative error with a floor on the denominator so entries whose true
/// gradient is zero are judged on absolute error.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central finite differences of `score` against the analytic gradient.
/// `entries(tensor_len)` picks which entries of each tensor to probe.
pub fn check_gradients(
    model: &Model,
    q: &SideInput,
    d: &SideInput,
    step: f64,
    entries: impl Fn(&str, usize) -> Vec<usize>,
) -> Vec<GradReport> {
    let (_, grads) = model.score_and_grad(q, d).unwrap();
    let names = model.params.names();
    let mut reports = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let len = model.params.tensors()[ti].len();
        let probe = entries(name, len);
        let mut worst = (0.0f64, 0usize);
        let mut work = model.clone();
        for &e in &probe {
            let orig = work.params.tensors()[ti].data[e];
            work.params.tensors_mut()[ti].data[e] = orig + step;
            let up = work.score(q, d).unwrap();
            work.params.tensors_mut()[ti].data[e] = orig - step;
            let down = work.score(q, d).unwrap();
            work.params.tensors_mut()[ti].data[e] = orig;
            let numeric = (up - down) / (2.0 * step);
            let analytic = grads.tensors()[ti].data[e];
            let err = rel_err(analytic, numeric);
            if err > worst.0 {
                worst = (err, e);
            }
        }
        reports.push(GradReport {
            tensor: name.clone(),
            checked: probe.len(),
            max_rel_err: worst.0,
            worst_entry: worst.1,
        });
    }
    reports
}

pub fn all_entries(_: &str, len: usize) -> Vec<usize> {
    (0..len).collect()
}

/// Artifacts of one end-to-end run, in the order they were produced.
pub struct PipelineRun {
    pub summary: fcsearch::pipeline::SplitSummary,
    pub valid_report: fcsearch::eval::MetricReport,
    pub test_report: fcsearch::eval::MetricReport,
    pub artifacts: Vec<std::path::PathBuf>,
}

/// synth-corpus, synth-store, index, retrieve, split, train, evaluate,
/// leftover and dump-matrices, all under `dir`.
pub fn run_pipeline(dir: &std::path::Path, seed: u64) -> PipelineRun {
    use fcsearch::bm25::{Bm25Params, InvertedIndex, QueryMode};
    use fcsearch::corpus::{IngestOptions, Scenario, ScenarioConfig, Split};
    use fcsearch::pipeline::{self, CorpusFiles, TrainArtifacts};
    use fcsearch::store::{EmbeddingStore, SyntheticStoreSpec};
    use fcsearch::synthetic::{PlantedSignal, PlantedSpec};
    use fcsearch::train::{Regime, TrainConfig};
    use fcsearch::Exec;

    let files = CorpusFiles::in_dir(&dir.join("corpus"));
    let spec = PlantedSpec {
        seed,
        queries: 40,
        distractors: 200,
        ..PlantedSpec::bundled(PlantedSignal::TextAndVisual)
    };
    pipeline::synth_corpus(&spec, &files).unwrap();
    let opts = IngestOptions::default();
    let corpus = files.load(&opts).unwrap();

    let hyper = Hyperparams::tiny();
    let store_path = dir.join("store.bin");
    pipeline::synth_store(
        &corpus,
        &SyntheticStoreSpec {
            dims: hyper.dims,
            ..SyntheticStoreSpec::new(seed)
        },
        &store_path,
    )
    .unwrap();
    let store = EmbeddingStore::load(&store_path).unwrap();

    let index_path = dir.join("index.json");
    pipeline::build_index(&corpus, &index_path).unwrap();
    let index = InvertedIndex::load(&index_path).unwrap();
    let cand_path = dir.join("candidates.tsv");
    let params = Bm25Params {
        top_k: 3,
        ..Bm25Params::default()
    };
    pipeline::retrieve(&corpus, &index, QueryMode::TI, &params, Exec::Parallel, &cand_path).unwrap();
    let candidates = fcsearch::bm25::read_candidates(&cand_path).unwrap();

    let split_qrels = dir.join("qrels.split.tsv");
    let leftover = dir.join("leftover.txt");
    let summary = pipeline::split(&corpus, &candidates, seed, &split_qrels, &leftover).unwrap();
    let corpus = files.with_qrels(&split_qrels).load(&opts).unwrap();

    let out = TrainArtifacts::in_dir(&dir.join("run"));
    let cfg = TrainConfig {
        max_epochs: 4,
        seed,
        ..TrainConfig::default()
    };
    pipeline::train_model(
        &corpus,
        &candidates,
        &store,
        hyper,
        &cfg,
        Variant::Man,
        Regime::ManA,
        Exec::Parallel,
        &out,
    )
    .unwrap();

    let sc2 = ScenarioConfig::new(Scenario::Sc2);
    let valid_path = dir.join("reports/valid.json");
    let test_path = dir.join("reports/test.json");
    let left_path = dir.join("reports/leftover.json");
    let valid_report = pipeline::evaluate(
        &out.checkpoint, &corpus, &store, &cand_path, Split::Valid, sc2, Exec::Parallel, &valid_path,
    )
    .unwrap();
    let test_report = pipeline::evaluate(
        &out.checkpoint, &corpus, &store, &cand_path, Split::Test, sc2, Exec::Parallel, &test_path,
    )
    .unwrap();
    pipeline::leftover(&out.checkpoint, &corpus, &store, &leftover, sc2, seed, Exec::Parallel, &left_path)
        .unwrap();
    let q = &corpus.queries()[0];
    let d = corpus.relevant_docs(&q.id).next().unwrap().to_string();
    let dumps = pipeline::dump(&out.checkpoint, &corpus, &store, &q.id, &d, sc2, &dir.join("matrices")).unwrap();

    let mut artifacts = vec![
        files.queries.clone(),
        files.docs.clone(),
        files.qrels.clone(),
        store_path,
        index_path,
        cand_path,
        split_qrels,
        leftover,
        out.checkpoint,
        out.log,
        out.meta,
        valid_path,
        test_path,
        left_path,
    ];
    artifacts.extend(dumps);
    PipelineRun {
        summary,
        valid_report,
        test_report,
        artifacts,
    }
}
