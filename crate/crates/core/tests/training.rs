mod common;

use fcsearch::bm25::{Candidate, CandidateList};
use fcsearch::corpus::{split_queries, Corpus, DocumentRecord, QueryRecord, Qrel, Scenario};
use fcsearch::model::{checkpoint_bytes, Hyperparams, Model, Variant};
use fcsearch::store::{generate_synthetic, EmbeddingStore, SyntheticStoreSpec};
use fcsearch::synthetic::{planted_corpus, PlantedSignal, PlantedSpec};
use fcsearch::train::{
    regime_triples, sample_triples, train, Regime, TrainConfig, Trainer, Triple,
};
use fcsearch::{Error, Exec};

struct Fixture {
    corpus: Corpus,
    candidates: Vec<CandidateList>,
    store: EmbeddingStore,
}

fn fixture() -> Fixture {
    let planted = planted_corpus(&PlantedSpec::bundled(PlantedSignal::TextAndVisual));
    let ids: Vec<String> = planted.corpus.queries().iter().map(|q| q.id.clone()).collect();
    let corpus = planted.corpus.with_splits(&split_queries(&ids, 3));
    let store = generate_synthetic(
        &SyntheticStoreSpec {
            dims: Hyperparams::tiny().dims,
            ..SyntheticStoreSpec::new(5)
        },
        &corpus,
    );
    Fixture {
        corpus,
        candidates: planted.candidates,
        store,
    }
}

fn all_query_ids(corpus: &Corpus) -> Vec<&str> {
    corpus.queries().iter().map(|q| q.id.as_str()).collect()
}

#[test]
fn adam_steps_match_reference_update() {
    let fx = fixture();
    let queries = all_query_ids(&fx.corpus);
    let triples = sample_triples(&fx.corpus, &fx.candidates, &queries, 3, 9, Scenario::Sc2);
    let batch: Vec<Triple> = triples[..1].to_vec();
    let cfg = TrainConfig::default();
    let model = Model::new(Hyperparams::tiny(), Variant::Man, 4);
    let mut trainer = Trainer::new(model, cfg.clone(), &fx.corpus, &fx.store, Exec::Sequential).unwrap();

    let theta0: Vec<f64> = flat(&trainer.model);
    let (_, g1) = trainer.batch_gradient(&batch).unwrap();
    let g1 = flat_params(&g1);
    trainer.step(&batch).unwrap();
    let theta1 = flat(&trainer.model);
    let (_, g2) = trainer.batch_gradient(&batch).unwrap();
    let g2 = flat_params(&g2);
    trainer.step(&batch).unwrap();
    let theta2 = flat(&trainer.model);

    let (b1, b2, lr, eps) = (cfg.adam_beta1, cfg.adam_beta2, cfg.learning_rate, cfg.adam_eps);
    let mut worst = 0.0f64;
    for i in 0..theta0.len() {
        // Step 1: bias-corrected moments reduce to g and g^2.
        let ref1 = theta0[i] - lr * g1[i] / (g1[i].abs() + eps);
        let m = b1 * (1.0 - b1) * g1[i] + (1.0 - b1) * g2[i];
        let v = b2 * (1.0 - b2) * g1[i] * g1[i] + (1.0 - b2) * g2[i] * g2[i];
        let m_hat = m / (1.0 - b1 * b1);
        let v_hat = v / (1.0 - b2 * b2);
        let ref2 = theta1[i] - lr * m_hat / (v_hat.sqrt() + eps);
        worst = worst.max((theta1[i] - ref1).abs()).max((theta2[i] - ref2).abs());
    }
    assert!(worst <= 1e-10, "max deviation {worst:e}");
    assert!(g1.iter().any(|&x| x != 0.0));
}

fn flat(model: &Model) -> Vec<f64> {
    flat_params(&model.params)
}

fn flat_params(p: &fcsearch::model::ModelParams) -> Vec<f64> {
    p.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
}

#[test]
fn small_gradient_step_does_not_increase_batch_loss() {
    let fx = fixture();
    let queries = all_query_ids(&fx.corpus);
    let triples = sample_triples(&fx.corpus, &fx.candidates, &queries, 3, 2, Scenario::Sc2);
    for (seed, variant) in [(1, Variant::Man), (2, Variant::Ctm), (3, Variant::Vmn), (4, Variant::Man)] {
        let start = (seed as usize - 1) * 12;
        let batch = &triples[start..start + 16];
        let model = Model::new(Hyperparams::tiny(), variant, seed);
        let mut trainer =
            Trainer::new(model, TrainConfig::default(), &fx.corpus, &fx.store, Exec::Parallel).unwrap();
        let (before, grad) = trainer.batch_gradient(batch).unwrap();
        trainer.model.params.add_scaled(&grad, -1e-6);
        let after = trainer.batch_loss(batch).unwrap();
        assert!(after <= before, "{variant}: {before} -> {after}");
    }
}

fn tiny_corpus(non_relevant: usize) -> (Corpus, Vec<CandidateList>) {
    let doc = |id: String| DocumentRecord {
        id,
        doc_tokens: vec!["w".into()],
        image_ids: vec![],
    };
    let mut docs = vec![doc("pos".into())];
    let mut ranked = vec![Candidate {
        doc_id: "pos".into(),
        score: 9.0,
    }];
    for i in 0..non_relevant {
        docs.push(doc(format!("n{i:02}")));
        ranked.push(Candidate {
            doc_id: format!("n{i:02}"),
            score: 1.0,
        });
    }
    let corpus = Corpus::new(
        vec![QueryRecord {
            id: "q".into(),
            tweet_tokens: vec!["w".into()],
            ocr_tokens: vec![],
            image_ids: vec!["i".into()],
        }],
        docs,
        vec![Qrel {
            query_id: "q".into(),
            doc_id: "pos".into(),
            split: None,
        }],
    )
    .unwrap();
    let lists = vec![CandidateList {
        query_id: "q".into(),
        ranked,
    }];
    (corpus, lists)
}

#[test]
fn negatives_are_distinct_non_relevant_candidates() {
    let (corpus, lists) = tiny_corpus(49);
    let t = sample_triples(&corpus, &lists, &["q"], 3, 7, Scenario::Sc2);
    assert_eq!(t.len(), 3);
    let mut negs: Vec<&str> = t.iter().map(|t| t.negative.as_str()).collect();
    negs.sort();
    negs.dedup();
    assert_eq!(negs.len(), 3);
    assert!(t.iter().all(|t| t.positive == "pos" && t.negative != "pos"));
    assert_eq!(t, sample_triples(&corpus, &lists, &["q"], 3, 7, Scenario::Sc2));
}

#[test]
fn exhausted_candidates_give_all_negatives() {
    let (corpus, lists) = tiny_corpus(2);
    assert_eq!(sample_triples(&corpus, &lists, &["q"], 3, 7, Scenario::Sc2).len(), 2);
    let (corpus, lists) = tiny_corpus(0);
    assert!(sample_triples(&corpus, &lists, &["q"], 3, 7, Scenario::Sc2).is_empty());
}

#[test]
fn augmented_regime_is_union_of_scenarios() {
    let fx = fixture();
    let q = all_query_ids(&fx.corpus);
    let count = |r| regime_triples(&fx.corpus, &fx.candidates, &q, 3, 11, r).len();
    let (sc1, sc2, man_a) = (count(Regime::Sc1), count(Regime::Sc2), count(Regime::ManA));
    assert!(sc1 > 0);
    assert_eq!(man_a, sc1 + sc2);
    let aug = regime_triples(&fx.corpus, &fx.candidates, &q, 3, 11, Regime::ManA);
    assert!(aug.iter().any(|t| t.scenario == Scenario::Sc1));
    assert!(aug.iter().any(|t| t.scenario == Scenario::Sc2));
}

#[test]
fn zero_training_triples_is_an_error() {
    let fx = fixture();
    let cfg = TrainConfig {
        max_epochs: 1,
        ..TrainConfig::default()
    };
    let err = train(
        &fx.corpus,
        &[],
        &fx.store,
        Hyperparams::tiny(),
        &cfg,
        Variant::Man,
        Regime::Sc2,
        Exec::Parallel,
    )
    .unwrap_err();
    assert!(matches!(err, Error::NoTriples), "{err}");
}

#[test]
fn training_is_bit_reproducible_across_runs_and_strategies() {
    let fx = fixture();
    let cfg = TrainConfig {
        max_epochs: 3,
        seed: 17,
        ..TrainConfig::default()
    };
    let run = |exec| {
        train(
            &fx.corpus,
            &fx.candidates,
            &fx.store,
            Hyperparams::tiny(),
            &cfg,
            Variant::Man,
            Regime::ManA,
            exec,
        )
        .unwrap()
    };
    let a = run(Exec::Parallel);
    let b = run(Exec::Parallel);
    let c = run(Exec::Sequential);
    assert_eq!(a.log.len(), 3);
    assert_eq!(checkpoint_bytes(&a.best), checkpoint_bytes(&b.best));
    assert_eq!(checkpoint_bytes(&a.best), checkpoint_bytes(&c.best));
    assert_eq!(a.log, c.log);
    assert!(a.log.iter().all(|l| l.train_loss.is_finite()));
}
