use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use euslm_core::{rng, Error, Result};

use super::sequence::{EpochRecord, TrainingHistory};
use super::{embed_all, Embedder};
use crate::encoder::argmax;
use crate::graph::{Graph, NodeId};
use crate::io::{fill_store, load_tensors, save_tensors, store_tensors};
use crate::lstm::Lstm;
use crate::optim::sgd_update;
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledText {
    pub label: String,
    pub tokens: Vec<String>,
}

impl LabeledText {
    pub fn new(label: impl Into<String>, text: &str) -> Self {
        LabeledText { label: label.into(), tokens: text.split_whitespace().map(String::from).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub reproject: bool,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping; 0 disables.
    pub patience: usize,
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: 128,
            reproject: true,
            dropout: 0.3068,
            learning_rate: 0.1,
            batch_size: 32,
            max_epochs: 50,
            patience: 3,
            max_grad_norm: 5.0,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
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

/// Word embeddings, an optional reprojection, one LSTM whose final state is
/// the document embedding, and a linear layer over the classes.
#[derive(Debug, Clone)]
pub struct DocumentClassifier {
    pub config: ClassifierConfig,
    pub labels: Vec<String>,
    pub input_dim: usize,
    pub store: ParamStore,
    reproject: Option<(ParamId, ParamId)>,
    rnn: Lstm,
    out: (ParamId, ParamId),
}

impl DocumentClassifier {
    pub fn new(config: ClassifierConfig, labels: Vec<String>, input_dim: usize) -> Result<Self> {
        config.validate()?;
        if labels.len() < 2 {
            return Err(Error::Input(format!("a classifier needs at least 2 classes, got {}", labels.len())));
        }
        let mut r = rng::seeded(config.seed);
        let mut store = ParamStore::new();
        let reproject = config.reproject.then(|| {
            let b = 1.0 / (input_dim as f64).sqrt();
            (store.add_uniform("reproject.weight", input_dim, input_dim, b, &mut r), store.add_zeros("reproject.bias", 1, input_dim))
        });
        let rnn = Lstm::init(&mut store, "rnn", input_dim, config.hidden, &mut r);
        let b = 1.0 / (config.hidden as f64).sqrt();
        let out = (store.add_uniform("out.weight", config.hidden, labels.len(), b, &mut r), store.add_zeros("out.bias", 1, labels.len()));
        Ok(DocumentClassifier { config, labels, input_dim, store, reproject, rnn, out })
    }

    fn logits<'p>(&'p self, g: &mut Graph<'p>, embeddings: &Matrix, mut rng: Option<&mut rng::Rng>) -> NodeId {
        let mut x = g.input(embeddings.clone());
        if let Some((w, b)) = self.reproject {
            x = g.linear(x, w, b);
        }
        if let Some(r) = rng.as_deref_mut() {
            x = g.dropout(x, self.config.dropout, r);
        }
        let (_, (mut h, _)) = self.rnn.run(g, x, 1, None);
        if let Some(r) = rng {
            h = g.dropout(h, self.config.dropout, r);
        }
        g.linear(h, self.out.0, self.out.1)
    }

    pub fn classify(&self, embeddings: &Matrix) -> String {
        let mut g = Graph::new(&self.store);
        let l = self.logits(&mut g, embeddings, None);
        self.labels[argmax(g.value(l).data())].clone()
    }

    pub fn predict(&self, embedder: &mut dyn Embedder, docs: &[Vec<String>]) -> Result<Vec<String>> {
        if embedder.dim() != self.input_dim {
            return Err(Error::Config(format!("embedder dimension {} differs from the classifier's {}", embedder.dim(), self.input_dim)));
        }
        let xs = embed_all(embedder, docs.iter().map(Vec::as_slice))?;
        Ok(xs.iter().map(|x| self.classify(x)).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = json!({ "kind": "euslm-classifier", "config": self.config, "labels": self.labels, "input_dim": self.input_dim });
        save_tensors(path, &meta, store_tensors(&self.store))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = load_tensors(path)?;
        if file.metadata["kind"] != "euslm-classifier" {
            return Err(Error::Input(format!("{} is not a document classifier", path.display())));
        }
        let config: ClassifierConfig = serde_json::from_value(file.metadata["config"].clone())?;
        let labels: Vec<String> = serde_json::from_value(file.metadata["labels"].clone())?;
        let input_dim: usize = serde_json::from_value(file.metadata["input_dim"].clone())?;
        let mut c = DocumentClassifier::new(config, labels, input_dim)?;
        fill_store(&mut c.store, &file, "")?;
        Ok(c)
    }
}

fn accuracy(gold: &[&str], pred: &[String]) -> f64 {
    let correct = gold.iter().zip(pred).filter(|(g, p)| **g == p.as_str()).count();
    100.0 * correct as f64 / gold.len().max(1) as f64
}

/// SGD on the mean cross-entropy of each minibatch. Early stopping watches
/// dev accuracy, or the training loss when `dev` is empty; the best epoch's
/// parameters are returned.
pub fn train_classifier(
    train: &[LabeledText],
    dev: &[LabeledText],
    embedder: &mut dyn Embedder,
    config: &ClassifierConfig,
) -> Result<(DocumentClassifier, TrainingHistory)> {
    if train.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    if let Some(d) = train.iter().chain(dev).find(|d| d.tokens.is_empty()) {
        return Err(Error::Input(format!("document labelled {:?} has no tokens", d.label)));
    }
    let mut labels: Vec<String> = train.iter().map(|d| d.label.clone()).collect();
    labels.sort();
    labels.dedup();
    if labels.len() < 2 {
        return Err(Error::Input(format!("training set has a single class {:?}", labels[0])));
    }
    if let Some(d) = dev.iter().find(|d| !labels.contains(&d.label)) {
        return Err(Error::Input(format!("dev label {:?} does not occur in training", d.label)));
    }
    let mut model = DocumentClassifier::new(*config, labels, embedder.dim())?;
    let train_x = embed_all(embedder, train.iter().map(|d| d.tokens.as_slice()))?;
    let train_y: Vec<usize> = train.iter().map(|d| model.labels.iter().position(|l| *l == d.label).unwrap()).collect();
    let dev_x = embed_all(embedder, dev.iter().map(|d| d.tokens.as_slice()))?;
    let dev_gold: Vec<&str> = dev.iter().map(|d| d.label.as_str()).collect();

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
                let logits = model.logits(&mut g, &train_x[i], rng);
                let l = g.cross_entropy(logits, &[train_y[i]]);
                let v = g.value(l).to_scalar();
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}, batch {b}, document {i}")));
                }
                loss_sum += v;
                let l = g.scale(l, 1.0 / batch.len() as f64);
                grads.merge(g.backward(l));
            }
            grads.clip_global_norm(config.max_grad_norm);
            sgd_update(&mut model.store, &grads, config.learning_rate);
        }
        let train_loss = loss_sum / train.len() as f64;
        let dev_score = (!dev_x.is_empty()).then(|| {
            let pred: Vec<String> = dev_x.iter().map(|x| model.classify(x)).collect();
            accuracy(&dev_gold, &pred)
        });
        history.epochs.push(EpochRecord { epoch, train_loss, dev_score });
        let score = dev_score.unwrap_or(-train_loss);
        if best.as_ref().map_or(true, |(s, _)| score > *s) {
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
