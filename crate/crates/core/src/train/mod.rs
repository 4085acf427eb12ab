//! Triplet hinge-loss training.
//!
//! Each epoch draws fresh `(query, positive, negative)` triples from the
//! queries' stage-one candidates, shuffles them into batches and takes one
//! Adam step per batch on the mean hinge loss plus an L2 penalty. Validation
//! after every epoch drives patience-based early stopping; the parameters of
//! the best epoch are returned.

mod adam;
mod stopping;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bm25::CandidateList;
use crate::corpus::{Corpus, Scenario, ScenarioConfig, Split};
use crate::error::{Error, Result};
use crate::eval::{report_for_queries, MetricValues};
use crate::exec::Exec;
use crate::model::{Encoder, Hyperparams, Model, ModelParams, SideGrad, Variant};
use crate::store::EmbeddingStore;

pub use adam::AdamState;
pub use stopping::{EarlyStopping, StopDecision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub weight_decay: f64,
    pub patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 16,
            negatives_per_positive: 3,
            weight_decay: 0.001,
            patience: 10,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_epochs: 100,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Invalid(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Invalid(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        for (name, n) in [
            ("batch_size", self.batch_size),
            ("negatives_per_positive", self.negatives_per_positive),
            ("patience", self.patience),
            ("max_epochs", self.max_epochs),
        ] {
            if n == 0 {
                return Err(Error::Invalid(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Which query construction(s) feed training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "SC1")]
    Sc1,
    #[serde(rename = "SC2")]
    Sc2,
    /// SC2 triples augmented with SC1 triples of the same queries; validated
    /// under SC2.
    #[serde(rename = "MAN-A")]
    ManA,
}

impl Regime {
    pub fn train_scenarios(self) -> &'static [Scenario] {
        match self {
            Regime::Sc1 => &[Scenario::Sc1],
            Regime::Sc2 => &[Scenario::Sc2],
            Regime::ManA => &[Scenario::Sc2, Scenario::Sc1],
        }
    }

    pub fn eval_scenario(self) -> Scenario {
        match self {
            Regime::Sc1 => Scenario::Sc1,
            Regime::Sc2 | Regime::ManA => Scenario::Sc2,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Sc1 => "SC1",
            Regime::Sc2 => "SC2",
            Regime::ManA => "MAN-A",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SC1" => Ok(Regime::Sc1),
            "SC2" => Ok(Regime::Sc2),
            "MAN-A" | "MANA" | "AUGMENTED" => Ok(Regime::ManA),
            other => Err(Error::Invalid(format!("unknown training regime {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub query_id: String,
    pub positive: String,
    pub negative: String,
    /// Query-text construction used when encoding this triple.
    pub scenario: Scenario,
}

pub fn hinge_loss(f_pos: f64, f_neg: f64) -> f64 {
    (1.0 - f_pos + f_neg).max(0.0)
}

/// Draws `k_neg` negatives per relevant pair without replacement from the
/// query's non-relevant candidates, taking all of them when fewer exist.
/// Queries are visited in sorted order; a query without candidates or without
/// non-relevant candidates is skipped with a warning.
pub fn sample_triples_with(
    rng: &mut ChaCha8Rng,
    corpus: &Corpus,
    candidates: &HashMap<&str, &CandidateList>,
    queries: &[&str],
    k_neg: usize,
    scenario: Scenario,
) -> Vec<Triple> {
    let mut queries = queries.to_vec();
    queries.sort_unstable();
    queries.dedup();
    let mut out = Vec::new();
    for qid in queries {
        let Some(list) = candidates.get(qid) else {
            log::warn!("training query {qid} has no candidate list; skipped");
            continue;
        };
        let negatives: Vec<&str> = list.doc_ids().filter(|d| !corpus.is_relevant(qid, d)).collect();
        if negatives.is_empty() {
            log::warn!("training query {qid} has no non-relevant candidates; skipped");
            continue;
        }
        let mut positives: Vec<&str> = corpus.relevant_docs(qid).collect();
        positives.sort_unstable();
        for pos in positives {
            let take = k_neg.min(negatives.len());
            for i in sample(rng, negatives.len(), take) {
                out.push(Triple {
                    query_id: qid.to_string(),
                    positive: pos.to_string(),
                    negative: negatives[i].to_string(),
                    scenario,
                });
            }
        }
    }
    out
}

pub fn candidate_map(candidates: &[CandidateList]) -> HashMap<&str, &CandidateList> {
    candidates.iter().map(|c| (c.query_id.as_str(), c)).collect()
}

pub fn sample_triples(
    corpus: &Corpus,
    candidates: &[CandidateList],
    queries: &[&str],
    k_neg: usize,
    seed: u64,
    scenario: Scenario,
) -> Vec<Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_triples_with(&mut rng, corpus, &candidate_map(candidates), queries, k_neg, scenario)
}

/// Triples for a regime; every scenario is sampled from the same seed.
pub fn regime_triples(
    corpus: &Corpus,
    candidates: &[CandidateList],
    queries: &[&str],
    k_neg: usize,
    seed: u64,
    regime: Regime,
) -> Vec<Triple> {
    let map = candidate_map(candidates);
    regime
        .train_scenarios()
        .iter()
        .flat_map(|&sc| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_triples_with(&mut rng, corpus, &map, queries, k_neg, sc)
        })
        .collect()
}

/// Seed for the per-epoch triple draw and shuffle.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Loss and gradient of one triple. `grad` is `None` when the margin holds.
#[derive(Debug, Clone)]
pub struct TripleGrad {
    pub loss: f64,
    pub grad: Option<ModelParams>,
}

/// Model plus optimizer state, bound to the data it trains on.
pub struct Trainer<'a> {
    pub model: Model,
    pub adam: AdamState,
    pub config: TrainConfig,
    pub corpus: &'a Corpus,
    pub store: &'a EmbeddingStore,
    pub exec: Exec,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: Model,
        config: TrainConfig,
        corpus: &'a Corpus,
        store: &'a EmbeddingStore,
        exec: Exec,
    ) -> Result<Self> {
        config.validate()?;
        model.check_store_dims(store.dims())?;
        Ok(Trainer {
            adam: AdamState::new(&model.params),
            model,
            config,
            corpus,
            store,
            exec,
        })
    }

    fn encoder(&self, scenario: Scenario) -> Encoder<'a> {
        Encoder::new(self.store, ScenarioConfig::new(scenario))
    }

    pub fn triple_grad(&self, t: &Triple) -> Result<TripleGrad> {
        let enc = self.encoder(t.scenario);
        let model = &self.model;
        let q = enc.query(self.corpus.query(&t.query_id)?)?;
        let dp = enc.doc(self.corpus.doc(&t.positive)?)?;
        let dn = enc.doc(self.corpus.doc(&t.negative)?)?;
        let (qp, pp, np) = (model.project_side(&q), model.project_side(&dp), model.project_side(&dn));
        let fwd_p = model.forward(&qp, &pp)?;
        let fwd_n = model.forward(&qp, &np)?;
        let loss = hinge_loss(fwd_p.score, fwd_n.score);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                query: t.query_id.clone(),
                positive: t.positive.clone(),
                negative: t.negative.clone(),
            });
        }
        if loss == 0.0 {
            return Ok(TripleGrad { loss, grad: None });
        }
        let mut grads = ModelParams::zeros(&model.hyper, model.variant);
        let mut dq = SideGrad::zeros_like(&qp);
        let mut dpos = SideGrad::zeros_like(&pp);
        let mut dneg = SideGrad::zeros_like(&np);
        model.backward(&qp, &pp, &fwd_p, -1.0, &mut grads, &mut dq, &mut dpos);
        model.backward(&qp, &np, &fwd_n, 1.0, &mut grads, &mut dq, &mut dneg);
        model.backward_side(&q, &qp, &dq, &mut grads);
        model.backward_side(&dp, &pp, &dpos, &mut grads);
        model.backward_side(&dn, &np, &dneg, &mut grads);
        Ok(TripleGrad {
            loss,
            grad: Some(grads),
        })
    }

    /// Objective of a batch: mean hinge loss plus `weight_decay * ||params||^2`.
    pub fn batch_loss(&self, batch: &[Triple]) -> Result<f64> {
        Ok(self.batch_gradient(batch)?.0)
    }

    /// Batch objective and its gradient. Per-triple gradients may be computed
    /// in parallel; they are summed in batch order.
    pub fn batch_gradient(&self, batch: &[Triple]) -> Result<(f64, ModelParams)> {
        if batch.is_empty() {
            return Err(Error::NoTriples);
        }
        let parts = self.exec.map(batch, |t| self.triple_grad(t));
        let inv = 1.0 / batch.len() as f64;
        let mut grad = ModelParams::zeros(&self.model.hyper, self.model.variant);
        let mut hinge = 0.0;
        for part in parts {
            let part = part?;
            hinge += part.loss;
            if let Some(g) = part.grad {
                grad.add_scaled(&g, inv);
            }
        }
        let wd = self.config.weight_decay;
        grad.add_scaled(&self.model.params, 2.0 * wd);
        Ok((hinge * inv + wd * self.model.params.sum_sq(), grad))
    }

    /// One Adam step on `batch`; returns the pre-step objective.
    pub fn step(&mut self, batch: &[Triple]) -> Result<f64> {
        let (loss, grad) = self.batch_gradient(batch)?;
        self.adam.update(&mut self.model.params, &grad, &self.config);
        Ok(loss)
    }

    /// Shuffles `triples` and steps through them in batches; returns the mean
    /// batch objective.
    pub fn run_epoch(&mut self, triples: &mut [Triple], rng: &mut ChaCha8Rng) -> Result<f64> {
        if triples.is_empty() {
            return Err(Error::NoTriples);
        }
        triples.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in triples.chunks(self.config.batch_size) {
            total += self.step(batch)?;
            batches += 1;
        }
        Ok(total / batches as f64)
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_hit3: f64,
    pub valid_ndcg3: f64,
    pub stop_counter: usize,
}

impl EpochLog {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Result of an early-stopped training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted<P> {
    pub best: P,
    pub best_epoch: usize,
    pub best_score: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub log: Vec<EpochLog>,
}

/// Runs epochs `1..=max_epochs`, snapshotting on every strict improvement of
/// the validation selection score and stopping after `patience` epochs
/// without one.
pub fn fit_with_early_stopping<P>(
    max_epochs: usize,
    patience: usize,
    mut epoch: impl FnMut(usize) -> Result<(f64, MetricValues)>,
    mut snapshot: impl FnMut() -> P,
) -> Result<Fitted<P>> {
    let mut stopper = EarlyStopping::new(patience);
    let mut best = None;
    let mut log = Vec::new();
    let mut stopped_early = false;
    for e in 1..=max_epochs {
        let (loss, valid) = epoch(e)?;
        let decision = stopper.observe(e, valid.selection_score());
        if decision == StopDecision::Improved {
            best = Some(snapshot());
        }
        let entry = EpochLog {
            epoch: e,
            train_loss: loss,
            valid_hit3: valid.hit3,
            valid_ndcg3: valid.ndcg3,
            stop_counter: stopper.since_best,
        };
        log::info!("{}", entry.to_json_line()?);
        log.push(entry);
        if decision == StopDecision::Stop {
            stopped_early = true;
            break;
        }
    }
    Ok(Fitted {
        best: best.ok_or_else(|| Error::Invalid("no epoch was run".into()))?,
        best_epoch: stopper.best_epoch,
        best_score: stopper.best_score.unwrap_or(f64::NAN),
        epochs_run: log.len(),
        stopped_early,
        log,
    })
}

/// Trains a fresh model on the corpus' training split, validating on its
/// validation split after each epoch. Returns the best-validation model.
#[allow(clippy::too_many_arguments)]
pub fn train(
    corpus: &Corpus,
    candidates: &[CandidateList],
    store: &EmbeddingStore,
    hyper: Hyperparams,
    config: &TrainConfig,
    variant: Variant,
    regime: Regime,
    exec: Exec,
) -> Result<Fitted<Model>> {
    hyper.validate()?;
    let train_queries = corpus.split_queries(Split::Train);
    let valid_queries: Vec<String> = corpus
        .split_queries(Split::Valid)
        .into_iter()
        .map(str::to_string)
        .collect();
    if valid_queries.is_empty() {
        return Err(Error::Invalid("the validation split has no queries".into()));
    }
    let k_neg = config.negatives_per_positive;
    if regime_triples(corpus, candidates, &train_queries, k_neg, config.seed, regime).is_empty() {
        return Err(Error::NoTriples);
    }
    let model = Model::new(hyper, variant, config.seed);
    let mut trainer = Trainer::new(model, config.clone(), corpus, store, exec)?;
    let eval_cfg = ScenarioConfig::new(regime.eval_scenario());
    let label = format!("{variant} {regime} valid");

    let trainer_cell = std::cell::RefCell::new(&mut trainer);
    fit_with_early_stopping(
        config.max_epochs,
        config.patience,
        |e| {
            let mut t = trainer_cell.borrow_mut();
            let seed = epoch_seed(config.seed, e);
            let mut triples = regime_triples(corpus, candidates, &train_queries, k_neg, seed, regime);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let loss = t.run_epoch(&mut triples, &mut rng)?;
            let report = report_for_queries(
                &label, &t.model, corpus, store, candidates, &valid_queries, eval_cfg, exec,
            )?;
            Ok((loss, report.mean))
        },
        || trainer_cell.borrow().model.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge_loss(2.0, 0.5), 0.0);
        assert_eq!(hinge_loss(0.7, 0.7), 1.0);
        assert_eq!(hinge_loss(0.0, 0.5), 1.5);
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate, 0.001);
        assert_eq!(c.batch_size, 16);
        assert_eq!(c.negatives_per_positive, 3);
        assert_eq!(c.weight_decay, 0.001);
        assert_eq!(c.patience, 10);
        c.validate().unwrap();
        let bad = TrainConfig {
            patience: 0,
            ..c.clone()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: -1.0,
            ..c
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn regime_round_trips_through_strings() {
        for r in [Regime::Sc1, Regime::Sc2, Regime::ManA] {
            assert_eq!(r.to_string().parse::<Regime>().unwrap(), r);
        }
    }

    #[test]
    fn scripted_early_stopping() {
        // Strictly improving for 30 epochs, then flat.
        let fitted = fit_with_early_stopping(
            100,
            10,
            |e| {
                let v = e.min(30) as f64 / 100.0;
                let m = MetricValues {
                    hit3: v,
                    ndcg3: v,
                    ..MetricValues::default()
                };
                Ok((0.0, m))
            },
            {
                let mut n = 0;
                move || {
                    n += 1;
                    n
                }
            },
        )
        .unwrap();
        assert_eq!(fitted.epochs_run, 40);
        assert!(fitted.stopped_early);
        assert_eq!(fitted.best_epoch, 30);
        // The 30th snapshot is the one taken after epoch 30.
        assert_eq!(fitted.best, 30);
        assert_eq!(fitted.log.last().unwrap().stop_counter, 10);
    }
}
