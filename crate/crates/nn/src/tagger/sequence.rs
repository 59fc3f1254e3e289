use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use euslm_core::evalkit::{conll_prf, word_accuracy, TaggedSentence};
use euslm_core::{rng, Error, Result};

use super::{embed_all, Embedder};
use crate::crf::CrfScores;
use crate::graph::{Graph, NodeId};
use crate::io::{fill_store, load_tensors, save_tensors, store_tensors};
use crate::lstm::Lstm;
use crate::optim::sgd_update;
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DevMetric {
    /// Token accuracy.
    Accuracy,
    /// Exact-match entity F1 over BIO tags.
    SpanF1,
}

impl DevMetric {
    /// Span F1 when every tag is `O` or BIO-prefixed, accuracy otherwise.
    pub fn for_tags<'a>(tags: impl IntoIterator<Item = &'a str>) -> Self {
        let mut any_entity = false;
        for t in tags {
            if t.starts_with("B-") || t.starts_with("I-") {
                any_entity = true;
            } else if t != "O" {
                return DevMetric::Accuracy;
            }
        }
        if any_entity {
            DevMetric::SpanF1
        } else {
            DevMetric::Accuracy
        }
    }

    pub fn score(self, gold: &[Vec<String>], predicted: &[Vec<String>]) -> Result<f64> {
        match self {
            DevMetric::Accuracy => word_accuracy(gold, predicted),
            DevMetric::SpanF1 => Ok(conll_prf(gold, predicted)?.f1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub hidden: usize,
    /// Learned linear map applied to the input embeddings.
    pub reproject: bool,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without dev improvement; 0 disables.
    pub patience: usize,
    pub max_grad_norm: f64,
    pub metric: DevMetric,
    pub seed: u64,
}

impl Default for TaggerConfig {
    /// max-epoch 50, learning rate 0.1, minibatch 64.
    fn default() -> Self {
        TaggerConfig {
            hidden: 256,
            reproject: true,
            dropout: 0.5,
            learning_rate: 0.1,
            batch_size: 64,
            max_epochs: 50,
            patience: 0,
            max_grad_norm: 5.0,
            metric: DevMetric::Accuracy,
            seed: 0,
        }
    }
}

impl TaggerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("hidden size, batch size and epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return Err(Error::Config("learning rate and gradient clip must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct TaggerParams {
    reproject: Option<(ParamId, ParamId)>,
    fwd: Lstm,
    bwd: Lstm,
    emission: (ParamId, ParamId),
    transitions: ParamId,
    start: ParamId,
    stop: ParamId,
}

impl TaggerParams {
    fn init(store: &mut ParamStore, c: &TaggerConfig, input_dim: usize, tags: usize) -> Self {
        let mut r = rng::seeded(c.seed);
        let reproject = c.reproject.then(|| {
            let b = 1.0 / (input_dim as f64).sqrt();
            (store.add_uniform("reproject.weight", input_dim, input_dim, b, &mut r), store.add_zeros("reproject.bias", 1, input_dim))
        });
        let fwd = Lstm::init(store, "lstm.fwd", input_dim, c.hidden, &mut r);
        let bwd = Lstm::init(store, "lstm.bwd", input_dim, c.hidden, &mut r);
        let b = 1.0 / (2.0 * c.hidden as f64).sqrt();
        let emission = (store.add_uniform("emission.weight", 2 * c.hidden, tags, b, &mut r), store.add_zeros("emission.bias", 1, tags));
        TaggerParams {
            reproject,
            fwd,
            bwd,
            emission,
            transitions: store.add_zeros("crf.transitions", tags, tags),
            start: store.add_zeros("crf.start", 1, tags),
            stop: store.add_zeros("crf.stop", 1, tags),
        }
    }
}

/// BiLSTM over fixed word embeddings, a linear emission layer and a linear-chain CRF.
#[derive(Debug, Clone)]
pub struct SequenceTagger {
    pub config: TaggerConfig,
    pub tags: Vec<String>,
    pub input_dim: usize,
    pub store: ParamStore,
    params: TaggerParams,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sentence negative log-likelihood.
    pub train_loss: f64,
    pub dev_score: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Runs a forward and a backward LSTM over `x` (one row per token) and concatenates them.
pub(crate) fn bilstm(g: &mut Graph<'_>, fwd: &Lstm, bwd: &Lstm, x: NodeId) -> NodeId {
    let n = g.shape(x).0;
    let (f, _) = fwd.run(g, x, 1, None);
    let rx = g.select_rows(x, (0..n).rev().collect());
    let (mut b, _) = bwd.run(g, rx, 1, None);
    b.reverse();
    let f = g.concat_rows(&f);
    let b = g.concat_rows(&b);
    g.concat_cols(&[f, b])
}

impl SequenceTagger {
    pub fn new(config: TaggerConfig, tags: Vec<String>, input_dim: usize) -> Result<Self> {
        config.validate()?;
        if tags.is_empty() || input_dim == 0 {
            return Err(Error::Config("tagger needs at least one tag and a positive input dimension".into()));
        }
        let mut store = ParamStore::new();
        let params = TaggerParams::init(&mut store, &config, input_dim, tags.len());
        Ok(SequenceTagger { config, tags, input_dim, store, params })
    }

    fn emissions<'p>(&'p self, g: &mut Graph<'p>, embeddings: &Matrix, rng: Option<&mut rng::Rng>) -> NodeId {
        let p = &self.params;
        let mut x = g.input(embeddings.clone());
        if let Some((w, b)) = p.reproject {
            x = g.linear(x, w, b);
        }
        let mut rng = rng;
        if let Some(r) = rng.as_deref_mut() {
            x = g.dropout(x, self.config.dropout, r);
        }
        let mut h = bilstm(g, &p.fwd, &p.bwd, x);
        if let Some(r) = rng {
            h = g.dropout(h, self.config.dropout, r);
        }
        g.linear(h, p.emission.0, p.emission.1)
    }

    fn crf(&self) -> CrfScores<'_> {
        let p = &self.params;
        CrfScores { transitions: self.store.get(p.transitions), start: self.store.get(p.start).data(), stop: self.store.get(p.stop).data() }
    }

    fn tag_ids(&self, tags: &[String]) -> Result<Vec<usize>> {
        tags.iter().map(|t| self.tags.iter().position(|x| x == t).ok_or_else(|| Error::Input(format!("tag {t:?} outside the tagset")))).collect()
    }

    /// Negative log-likelihood of the gold tags.
    pub fn nll(&self, embeddings: &Matrix, tags: &[String]) -> Result<f64> {
        let ids = self.tag_ids(tags)?;
        let mut g = Graph::new(&self.store);
        let e = self.emissions(&mut g, embeddings, None);
        let p = &self.params;
        let l = g.crf_nll(e, p.transitions, p.start, p.stop, &ids);
        Ok(g.value(l).to_scalar())
    }

    pub fn decode(&self, embeddings: &Matrix) -> Vec<String> {
        if embeddings.rows() == 0 {
            return Vec::new();
        }
        let mut g = Graph::new(&self.store);
        let e = self.emissions(&mut g, embeddings, None);
        let (path, _) = self.crf().viterbi(g.value(e));
        path.into_iter().map(|i| self.tags[i].clone()).collect()
    }

    pub fn predict(&self, embedder: &mut dyn Embedder, sentences: &[Vec<String>]) -> Result<Vec<Vec<String>>> {
        self.check_embedder(embedder)?;
        let embedded = embed_all(embedder, sentences.iter().map(Vec::as_slice))?;
        Ok(embedded.iter().map(|e| self.decode(e)).collect())
    }

    fn check_embedder(&self, embedder: &dyn Embedder) -> Result<()> {
        if embedder.dim() != self.input_dim {
            return Err(Error::Config(format!("embedder dimension {} differs from the tagger's {}", embedder.dim(), self.input_dim)));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = json!({ "kind": "euslm-tagger", "config": self.config, "tags": self.tags, "input_dim": self.input_dim });
        save_tensors(path, &meta, store_tensors(&self.store))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = load_tensors(path)?;
        if file.metadata["kind"] != "euslm-tagger" {
            return Err(Error::Input(format!("{} is not a sequence tagger", path.display())));
        }
        let config: TaggerConfig = serde_json::from_value(file.metadata["config"].clone())?;
        let tags: Vec<String> = serde_json::from_value(file.metadata["tags"].clone())?;
        let input_dim: usize = serde_json::from_value(file.metadata["input_dim"].clone())?;
        let mut t = SequenceTagger::new(config, tags, input_dim)?;
        fill_store(&mut t.store, &file, "")?;
        Ok(t)
    }
}

/// Trains on `train` with SGD on the summed sentence NLL of each minibatch and
/// returns the parameters of the epoch scoring best on `dev` (the last epoch
/// when `dev` is empty). `dev` is never trained on.
pub fn train_tagger(
    train: &[TaggedSentence],
    dev: &[TaggedSentence],
    embedder: &mut dyn Embedder,
    config: &TaggerConfig,
) -> Result<(SequenceTagger, TrainingHistory)> {
    if train.iter().all(TaggedSentence::is_empty) {
        return Err(Error::Input("empty training set".into()));
    }
    let mut tags: Vec<String> = train.iter().chain(dev).flat_map(|s| s.tags.iter().cloned()).collect();
    tags.sort();
    tags.dedup();
    let mut model = SequenceTagger::new(*config, tags, embedder.dim())?;

    let train: Vec<&TaggedSentence> = train.iter().filter(|s| !s.is_empty()).collect();
    let train_x = embed_all(embedder, train.iter().map(|s| s.tokens.as_slice()))?;
    let train_y: Vec<Vec<usize>> = train.iter().map(|s| model.tag_ids(&s.tags)).collect::<Result<_>>()?;
    let dev_x = embed_all(embedder, dev.iter().map(|s| s.tokens.as_slice()))?;
    let dev_gold: Vec<Vec<String>> = dev.iter().map(|s| s.tags.clone()).collect();

    let mut history = TrainingHistory { epochs: Vec::new(), best_epoch: 0 };
    let mut best: Option<(f64, ParamStore)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0u64;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng::derived(config.seed, epoch as u64));
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            step += 1;
            let mut drop_rng = rng::derived(config.seed, 1 << 40 | step);
            let mut grads = Gradients::new(model.store.len());
            for &i in batch {
                let mut g = Graph::new(&model.store);
                let rng = (config.dropout > 0.0).then_some(&mut drop_rng);
                let e = model.emissions(&mut g, &train_x[i], rng);
                let p = &model.params;
                let l = g.crf_nll(e, p.transitions, p.start, p.stop, &train_y[i]);
                let v = g.value(l).to_scalar();
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}, batch {b}, sentence {i}")));
                }
                loss_sum += v;
                grads.merge(g.backward(l));
            }
            grads.clip_global_norm(config.max_grad_norm);
            sgd_update(&mut model.store, &grads, config.learning_rate);
        }
        let dev_score = if dev_x.is_empty() {
            None
        } else {
            let pred: Vec<Vec<String>> = dev_x.iter().map(|e| model.decode(e)).collect();
            Some(config.metric.score(&dev_gold, &pred)?)
        };
        history.epochs.push(EpochRecord { epoch, train_loss: loss_sum / train.len() as f64, dev_score });
        let score = dev_score.unwrap_or(f64::NEG_INFINITY);
        if dev_score.is_none() || best.as_ref().map_or(true, |(s, _)| score > *s) {
            best = Some((score, model.store.clone()));
            history.best_epoch = epoch;
        } else if config.patience > 0 && epoch - history.best_epoch >= config.patience {
            break;
        }
    }
    if let Some((_, store)) = best {
        model.store = store;
    }
    Ok((model, history))
}
