//! Training, threshold tuning and prediction over fragment pairs.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FragmentPair, FragmentStore};
use crate::error::{Error, Result};
use crate::metrics::{best_threshold, EvalReport, Prf};
use crate::model::{ggnn, Model, ModelConfig, ModelKind, PreparedGraph};
use crate::nn::loss::squared_error;
use crate::nn::ops::{cosine, cosine_with_grad};
use crate::nn::params::{adam_step, AdamConfig, Gradients, NamedTensor, ParamStore};
use crate::util::{read_text, write_atomic};
use crate::vocab::Vocabulary;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Non-clone pairs kept per clone pair in each epoch; `None` keeps all.
    pub balance: Option<f64>,
    /// Labels seen fewer times in the training fragments map to `<unk>`.
    pub min_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::new(ModelKind::Gmn, 100, 4),
            lr: 1e-3,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            balance: Some(1.0),
            min_count: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = match self.model.validate() {
            Err(Error::Config(p)) => p,
            _ => Vec::new(),
        };
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            problems.push(format!("lr must be a non-negative number, got {}", self.lr));
        }
        if self.batch_size == 0 {
            problems.push("batch size must be at least 1".into());
        }
        if self.epochs == 0 {
            problems.push("epochs must be at least 1".into());
        }
        if let Some(r) = self.balance {
            if !(r.is_finite() && r > 0.0) {
                problems.push(format!("balance ratio must be positive, got {r}"));
            }
        }
        if self.min_count == 0 {
            problems.push("min_count must be at least 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// Cosine similarity of two graph vectors.
pub fn similarity(v1: &Array1<f64>, v2: &Array1<f64>) -> Result<f64> {
    cosine(v1, v2)
}

/// Everything needed to rebuild a trained scorer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub train: TrainConfig,
    /// Epoch (1-based) the parameters were taken from.
    pub epoch: usize,
    pub vocab: Vec<String>,
    pub params: Vec<NamedTensor>,
    pub threshold: Option<f64>,
}

impl Checkpoint {
    pub fn kind(&self) -> ModelKind {
        self.train.model.kind
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let ckpt: Checkpoint = serde_json::from_str(&read_text(path)?)
            .map_err(|e| Error::format(path.display(), e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::format(
                path.display(),
                format!("unsupported checkpoint version {}", ckpt.version),
            ));
        }
        Ok(ckpt)
    }

    /// Fails with `ModelKindMismatch` unless the checkpoint holds `kind`.
    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind() != kind {
            return Err(Error::ModelKindMismatch {
                requested: kind.to_string(),
                found: self.kind().to_string(),
            });
        }
        Ok(())
    }

    pub fn scorer(&self) -> Result<Scorer> {
        let vocab = Vocabulary::from_label_list(self.vocab.clone())?;
        let mut store = ParamStore::new();
        let model = Model::register(&mut store, self.train.model.clone(), vocab.len(), self.train.seed)?;
        store
            .restore(&self.params)
            .map_err(|e| Error::format("checkpoint", e))?;
        Ok(Scorer { model, store, vocab })
    }
}

/// A model with fixed parameters and its vocabulary.
#[derive(Clone, Debug)]
pub struct Scorer {
    pub model: Model,
    pub store: ParamStore,
    pub vocab: Vocabulary,
}

impl Scorer {
    pub fn prepare(&self, fragments: &FragmentStore, id: &str) -> Result<PreparedGraph> {
        Ok(PreparedGraph::new(fragments.graph(id)?, &self.vocab))
    }

    fn prepare_all<'a>(
        &self,
        fragments: &FragmentStore,
        ids: impl IntoIterator<Item = &'a str>,
    ) -> Result<HashMap<String, PreparedGraph>> {
        ids.into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|id| Ok((id.to_string(), self.prepare(fragments, id)?)))
            .collect()
    }

    pub fn score(&self, g1: &PreparedGraph, g2: &PreparedGraph) -> Result<f64> {
        let (v1, v2) = self.model.embed_both(&self.store, g1, g2)?;
        similarity(&v1, &v2)
    }

    /// Scores every pair, in input order. Graph vectors of the GGNN do not
    /// depend on the partner graph and are computed once per fragment.
    pub fn score_pairs(&self, fragments: &FragmentStore, pairs: &[FragmentPair]) -> Result<Vec<f64>> {
        let graphs = self.prepare_all(fragments, pairs.iter().flat_map(|p| [p.id1.as_str(), p.id2.as_str()]))?;
        match self.model.config.kind {
            ModelKind::Ggnn => {
                let ids: Vec<&String> = graphs.keys().collect();
                let vectors: HashMap<&str, Array1<f64>> = ids
                    .par_iter()
                    .map(|id| Ok((id.as_str(), ggnn::embed_graph(&self.model, &self.store, &graphs[*id])?)))
                    .collect::<Result<_>>()?;
                pairs
                    .iter()
                    .map(|p| similarity(&vectors[p.id1.as_str()], &vectors[p.id2.as_str()]))
                    .collect()
            }
            ModelKind::Gmn => pairs
                .par_iter()
                .map(|p| self.score(&graphs[&p.id1], &graphs[&p.id2]))
                .collect(),
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_pairs: usize,
    #[serde(rename = "valid_P")]
    pub valid_p: Option<f64>,
    #[serde(rename = "valid_R")]
    pub valid_r: Option<f64>,
    #[serde(rename = "valid_F1")]
    pub valid_f1: Option<f64>,
    pub sigma: Option<f64>,
}

impl EpochLog {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log serializes") + "\n"
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation F1 (the last epoch
    /// when there is no validation set).
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// The training view of one epoch: all clone pairs plus a fresh sample of
/// non-clone pairs, shuffled.
fn epoch_view<'a>(
    pairs: &'a [FragmentPair],
    balance: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Vec<&'a FragmentPair> {
    let (pos, mut neg): (Vec<&FragmentPair>, Vec<&FragmentPair>) = pairs.iter().partition(|p| p.is_clone());
    if let Some(r) = balance {
        let keep = ((pos.len() as f64) * r).round() as usize;
        if keep < neg.len() {
            neg.shuffle(rng);
            neg.truncate(keep);
        }
    }
    let mut view: Vec<&FragmentPair> = pos.into_iter().chain(neg).collect();
    view.shuffle(rng);
    view
}

/// Loss and gradients of one pair.
fn pair_gradients(
    model: &Model,
    store: &ParamStore,
    g1: &PreparedGraph,
    g2: &PreparedGraph,
    target: f64,
) -> Result<(f64, Gradients)> {
    let tape = model.forward_pair(store, g1, g2)?;
    let (v1, v2) = tape.vectors();
    let (s, ds_dv1, ds_dv2) = cosine_with_grad(v1, v2)?;
    let (loss, dl_ds) = squared_error(s, target);
    let mut grads = Gradients::for_store(store);
    model.backward_pair(store, &tape, &(ds_dv1 * dl_ds), &(ds_dv2 * dl_ds), &mut grads);
    Ok((loss, grads))
}

fn check_both_classes(pairs: &[FragmentPair], what: &str) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset(format!("no {what} pairs")));
    }
    if !pairs.iter().any(|p| p.is_clone()) || pairs.iter().all(|p| p.is_clone()) {
        return Err(Error::EmptyDataset(format!("{what} pairs need both clone and non-clone examples")));
    }
    Ok(())
}

/// Trains a model with per-pair forward/backward in parallel and the
/// gradient reduction done in pair order, so results do not depend on the
/// number of worker threads. `on_epoch` sees every log line as it is made.
pub fn train(
    cfg: &TrainConfig,
    train_pairs: &[FragmentPair],
    valid_pairs: &[FragmentPair],
    fragments: &FragmentStore,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_both_classes(train_pairs, "training")?;
    fragments.check_pairs(train_pairs)?;
    fragments.check_pairs(valid_pairs)?;
    if !valid_pairs.is_empty() {
        let pos = valid_pairs.iter().filter(|p| p.is_clone()).count();
        if pos == 0 || pos == valid_pairs.len() {
            return Err(Error::DegenerateValidation {
                positives: pos,
                negatives: valid_pairs.len() - pos,
            });
        }
    }

    let train_ids: BTreeSet<&str> = train_pairs
        .iter()
        .flat_map(|p| [p.id1.as_str(), p.id2.as_str()])
        .collect();
    let vocab = Vocabulary::build(
        train_ids.iter().map(|id| fragments.graph(id).expect("checked")),
        cfg.min_count,
    )?;
    let mut store = ParamStore::new();
    let model = Model::register(&mut store, cfg.model.clone(), vocab.len(), cfg.seed)?;
    let mut scorer = Scorer { model, store, vocab };
    let graphs = scorer.prepare_all(fragments, train_ids.iter().copied())?;

    let adam = cfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<NamedTensor>, f64)> = None;
    for epoch in 1..=cfg.epochs {
        let view = epoch_view(train_pairs, cfg.balance, &mut rng);
        let mut loss_sum = 0.0;
        for (batch_no, batch) in view.chunks(cfg.batch_size).enumerate() {
            let results: Vec<Result<(f64, Gradients)>> = batch
                .par_iter()
                .map(|p| pair_gradients(&scorer.model, &scorer.store, &graphs[&p.id1], &graphs[&p.id2], p.target()))
                .collect();
            let scale = 1.0 / batch.len() as f64;
            for (p, r) in batch.iter().zip(results) {
                let (loss, grads) = r?;
                if !loss.is_finite() || !grads.all_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: batch_no + 1,
                        detail: format!("pair ({}, {}) gave loss {loss}", p.id1, p.id2),
                    });
                }
                loss_sum += loss;
                scorer.store.accumulate(&grads, scale);
            }
            adam_step(&mut scorer.store, &adam);
            if !scorer.store.all_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no + 1,
                    detail: "parameters became non-finite after the update".into(),
                });
            }
        }
        let mut entry = EpochLog {
            epoch,
            train_loss: loss_sum / view.len() as f64,
            train_pairs: view.len(),
            valid_p: None,
            valid_r: None,
            valid_f1: None,
            sigma: None,
        };
        let mut f1 = f64::NEG_INFINITY;
        let mut sigma = 0.0;
        if !valid_pairs.is_empty() {
            let (s, m) = tune_threshold(&scorer, fragments, valid_pairs)?;
            entry.valid_p = Some(m.precision);
            entry.valid_r = Some(m.recall);
            entry.valid_f1 = Some(m.f1);
            entry.sigma = Some(s);
            f1 = m.f1;
            sigma = s;
        }
        if best.as_ref().is_none_or(|b| f1 > b.0 || valid_pairs.is_empty()) {
            best = Some((f1, epoch, scorer.store.snapshot(), sigma));
        }
        on_epoch(&entry);
        log.push(entry);
    }

    let (_, epoch, params, sigma) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            version: CHECKPOINT_VERSION,
            train: cfg.clone(),
            epoch,
            vocab: scorer.vocab.labels().to_vec(),
            params,
            threshold: (!valid_pairs.is_empty()).then_some(sigma),
        },
        log,
    })
}

/// The F1-maximizing threshold on a validation set.
pub fn tune_threshold(scorer: &Scorer, fragments: &FragmentStore, valid_pairs: &[FragmentPair]) -> Result<(f64, Prf)> {
    let scores = scorer.score_pairs(fragments, valid_pairs)?;
    let labels: Vec<f64> = valid_pairs.iter().map(FragmentPair::target).collect();
    best_threshold(&scores, &labels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id1: String,
    pub id2: String,
    pub score: f64,
    pub verdict: bool,
}

/// A pair is a clone when its score is at least `sigma`.
pub fn predict(scorer: &Scorer, fragments: &FragmentStore, sigma: f64, pairs: &[FragmentPair]) -> Result<Vec<Prediction>> {
    let scores = scorer.score_pairs(fragments, pairs)?;
    Ok(pairs
        .iter()
        .zip(scores)
        .map(|(p, score)| Prediction {
            id1: p.id1.clone(),
            id2: p.id2.clone(),
            score,
            verdict: score >= sigma,
        })
        .collect())
}

pub fn predictions_text(predictions: &[Prediction]) -> String {
    let mut out = String::from("#version 1\n#id1\tid2\tscore\tverdict\n");
    for p in predictions {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", p.id1, p.id2, p.score, p.verdict));
    }
    out
}

/// Scores the pairs and builds the full report at `sigma`.
pub fn evaluate(
    scorer: &Scorer,
    fragments: &FragmentStore,
    pairs: &[FragmentPair],
    sigma: f64,
    grid: &[f64],
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no evaluation pairs".into()));
    }
    let scores = scorer.score_pairs(fragments, pairs)?;
    let labels: Vec<f64> = pairs.iter().map(FragmentPair::target).collect();
    let types: Vec<_> = pairs.iter().map(|p| p.clone_type).collect();
    EvalReport::build(&scores, &labels, &types, sigma, grid)
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool
/// when `workers` is `None`.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidArgument("workers must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}
