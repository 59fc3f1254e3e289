use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use euslm_core::evalkit::TaggedSentence;
use euslm_core::subword::{SubwordVocab, CLS_ID, SEP_ID};
use euslm_core::{rng, Error, Result};

use super::LabeledText;
use crate::encoder::{argmax, Encoder, EncoderConfig, EncoderInput};
use crate::graph::{Graph, NodeId};
use crate::io::{fill_store, load_tensors, save_tensors, store_tensors};
use crate::optim::AdamW;
use crate::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// One label per text, predicted from the pooled `[CLS]` state.
    Sequence,
    /// One label per word, predicted from the word's first piece.
    Token,
}

#[derive(Debug, Clone)]
pub enum TaskData {
    Sequence(Vec<LabeledText>),
    Token(Vec<TaggedSentence>),
}

impl TaskData {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskData::Sequence(_) => TaskKind::Sequence,
            TaskData::Token(_) => TaskKind::Token,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TaskData::Sequence(d) => d.len(),
            TaskData::Token(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> BTreeSet<String> {
        match self {
            TaskData::Sequence(d) => d.iter().map(|x| x.label.clone()).collect(),
            TaskData::Token(d) => d.iter().flat_map(|s| s.tags.iter().cloned()).collect(),
        }
    }

    fn words(&self, i: usize) -> &[String] {
        match self {
            TaskData::Sequence(d) => &d[i].tokens,
            TaskData::Token(d) => &d[i].tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Share of the updates spent warming up; the rest decays linearly.
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    /// 3 epochs, learning rate 2e-5, batch size 16.
    fn default() -> Self {
        FinetuneConfig { epochs: 3, learning_rate: 2e-5, batch_size: 16, warmup_fraction: 0.1, weight_decay: 0.01, max_grad_norm: 1.0, seed: 0 }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.warmup_fraction) || self.weight_decay < 0.0 || !(self.max_grad_norm > 0.0) {
            return Err(Error::Config("invalid fine-tuning hyperparameters".into()));
        }
        Ok(())
    }

    /// Learning rate of the `k`-th update (0-based) out of `total`.
    fn lr(&self, k: usize, total: usize) -> f64 {
        let warmup = (self.warmup_fraction * total as f64).round() as usize;
        if k < warmup {
            self.learning_rate * (k + 1) as f64 / warmup as f64
        } else {
            self.learning_rate * (total - k) as f64 / (total - warmup) as f64
        }
    }
}

/// Positions of each word's first piece in `[CLS] pieces… [SEP]`, for words
/// with the given piece counts.
pub fn first_piece_targets(piece_counts: &[usize]) -> Vec<usize> {
    let mut pos = 1;
    piece_counts
        .iter()
        .map(|&n| {
            let p = pos;
            pos += n;
            p
        })
        .collect()
}

/// `[CLS] pieces [SEP]` truncated to `max_len`, and the first-piece position
/// of every word that survived truncation.
fn encode_words(vocab: &SubwordVocab, words: &[String], max_len: usize) -> Result<(Vec<u32>, Vec<usize>)> {
    let budget = max_len.saturating_sub(2);
    let mut pieces = Vec::new();
    let mut counts = Vec::new();
    for w in words {
        let p = vocab.viterbi_tokenize(w)?;
        if pieces.len() + p.len() > budget {
            break;
        }
        counts.push(p.len());
        pieces.extend(p);
    }
    let mut ids = Vec::with_capacity(pieces.len() + 2);
    ids.push(CLS_ID);
    ids.extend(pieces);
    ids.push(SEP_ID);
    Ok((ids, first_piece_targets(&counts)))
}

#[derive(Debug, Clone, Serialize)]
pub struct FinetuneEpoch {
    pub epoch: usize,
    pub loss: f64,
    /// Percent of training texts (sequence task) or words (token task) labelled correctly.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FinetuneReport {
    pub epochs: Vec<FinetuneEpoch>,
}

#[derive(Debug, Clone)]
pub struct FinetunedModel {
    pub task: TaskKind,
    pub labels: Vec<String>,
    pub encoder: Encoder,
    head: (ParamId, ParamId),
    /// Label for words cut off by the position limit.
    fallback: usize,
}

struct Encoded {
    ids: Vec<Vec<u32>>,
    positions: Vec<Vec<usize>>,
}

impl FinetunedModel {
    fn encode(&self, vocab: &SubwordVocab, docs: &[&[String]]) -> Result<Encoded> {
        let mut out = Encoded { ids: Vec::with_capacity(docs.len()), positions: Vec::with_capacity(docs.len()) };
        for words in docs {
            let (ids, pos) = encode_words(vocab, words, self.encoder.config.max_positions)?;
            out.ids.push(ids);
            out.positions.push(pos);
        }
        Ok(out)
    }

    /// Output logits for `batch` and the flattened rows they belong to.
    fn logits<'p>(&'p self, g: &mut Graph<'p>, enc: &Encoded, batch: &[usize], rng: Option<&mut rng::Rng>) -> Result<NodeId> {
        let segs: Vec<Vec<u8>> = batch.iter().map(|&i| vec![0; enc.ids[i].len()]).collect();
        let input = EncoderInput::from_sequences(batch.iter().zip(&segs).map(|(&i, s)| (enc.ids[i].as_slice(), s.as_slice())));
        let dropout = self.encoder.config.dropout;
        let mut rng = rng;
        let nodes = self.encoder.forward(g, &input, rng.as_deref_mut())?;
        let mut features = match self.task {
            TaskKind::Sequence => self.encoder.pooled(g, &nodes, &input),
            TaskKind::Token => {
                let rows = batch.iter().enumerate().flat_map(|(b, &i)| enc.positions[i].iter().map(move |&p| (b, p)));
                let rows: Vec<usize> = rows.map(|(b, p)| input.row(b, p)).collect();
                g.select_rows(nodes.hidden, rows)
            }
        };
        if let Some(r) = rng {
            features = g.dropout(features, dropout, r);
        }
        Ok(g.linear(features, self.head.0, self.head.1))
    }

    fn predict_ids(&self, enc: &Encoded) -> Result<Vec<Vec<usize>>> {
        let mut out = Vec::with_capacity(enc.ids.len());
        let all: Vec<usize> = (0..enc.ids.len()).collect();
        for batch in all.chunks(32) {
            let mut g = Graph::new(&self.encoder.store);
            let l = self.logits(&mut g, enc, batch, None)?;
            let v = g.value(l);
            let mut row = 0;
            for &i in batch {
                let n = match self.task {
                    TaskKind::Sequence => 1,
                    TaskKind::Token => enc.positions[i].len(),
                };
                out.push((row..row + n).map(|r| argmax(v.row(r))).collect());
                row += n;
            }
        }
        Ok(out)
    }

    pub fn predict_sequences(&self, vocab: &SubwordVocab, docs: &[Vec<String>]) -> Result<Vec<String>> {
        self.expect(TaskKind::Sequence)?;
        let refs: Vec<&[String]> = docs.iter().map(Vec::as_slice).collect();
        let ids = self.predict_ids(&self.encode(vocab, &refs)?)?;
        Ok(ids.into_iter().map(|p| self.labels[p[0]].clone()).collect())
    }

    /// Labels for every word; words beyond the position limit get the most
    /// frequent training label.
    pub fn predict_tokens(&self, vocab: &SubwordVocab, sentences: &[Vec<String>]) -> Result<Vec<Vec<String>>> {
        self.expect(TaskKind::Token)?;
        let refs: Vec<&[String]> = sentences.iter().map(Vec::as_slice).collect();
        let ids = self.predict_ids(&self.encode(vocab, &refs)?)?;
        Ok(ids
            .into_iter()
            .zip(sentences)
            .map(|(mut p, s)| {
                p.resize(s.len(), self.fallback);
                p.into_iter().map(|i| self.labels[i].clone()).collect()
            })
            .collect())
    }

    fn expect(&self, kind: TaskKind) -> Result<()> {
        if self.task != kind {
            return Err(Error::Input(format!("model was fine-tuned for the {:?} task", self.task)));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = json!({
            "kind": "euslm-finetuned",
            "task": self.task,
            "labels": self.labels,
            "fallback": self.fallback,
            "config": self.encoder.config,
        });
        save_tensors(path, &meta, store_tensors(&self.encoder.store))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = load_tensors(path)?;
        if file.metadata["kind"] != "euslm-finetuned" {
            return Err(Error::Input(format!("{} is not a fine-tuned model", path.display())));
        }
        let config: EncoderConfig = serde_json::from_value(file.metadata["config"].clone())?;
        let task: TaskKind = serde_json::from_value(file.metadata["task"].clone())?;
        let labels: Vec<String> = serde_json::from_value(file.metadata["labels"].clone())?;
        let fallback: usize = serde_json::from_value(file.metadata["fallback"].clone())?;
        let mut encoder = Encoder::init(config, 0)?;
        let head = add_head(&mut encoder.store, config.hidden, labels.len(), 0);
        fill_store(&mut encoder.store, &file, "")?;
        Ok(FinetunedModel { task, labels, encoder, head, fallback })
    }
}

fn add_head(store: &mut ParamStore, hidden: usize, classes: usize, seed: u64) -> (ParamId, ParamId) {
    let mut r = rng::derived(seed, 2);
    (store.add_normal("head.weight", hidden, classes, 0.02, &mut r), store.add_zeros("head.bias", 1, classes))
}

/// Fine-tunes a copy of `encoder` plus a fresh linear head with AdamW. Every
/// label of `eval` must occur in `train`.
pub fn finetune_encoder(
    encoder: &Encoder,
    vocab: &SubwordVocab,
    train: &TaskData,
    eval: Option<&TaskData>,
    config: &FinetuneConfig,
) -> Result<(FinetunedModel, FinetuneReport)> {
    config.validate()?;
    if encoder.config.vocab_size != vocab.len() {
        return Err(Error::Config(format!("checkpoint vocabulary of {} does not match tokenizer vocabulary of {}", encoder.config.vocab_size, vocab.len())));
    }
    if train.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    let train_labels = train.labels();
    if let Some(ev) = eval {
        if ev.kind() != train.kind() {
            return Err(Error::Input("train and eval data are for different tasks".into()));
        }
        let unseen: Vec<_> = ev.labels().difference(&train_labels).cloned().collect();
        if !unseen.is_empty() {
            return Err(Error::Input(format!("label set mismatch: eval labels {unseen:?} absent from training")));
        }
    }
    let labels: Vec<String> = train_labels.into_iter().collect();
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let gold: Vec<Vec<usize>> = match train {
        TaskData::Sequence(d) => d.iter().map(|x| vec![index[x.label.as_str()]]).collect(),
        TaskData::Token(d) => d.iter().map(|s| s.tags.iter().map(|t| index[t.as_str()]).collect()).collect(),
    };
    let mut freq = vec![0usize; labels.len()];
    gold.iter().flatten().for_each(|&y| freq[y] += 1);
    let fallback = argmax(&freq.iter().map(|&c| c as f64).collect::<Vec<_>>());

    let mut enc = encoder.clone();
    let head = add_head(&mut enc.store, enc.config.hidden, labels.len(), config.seed);
    let mut model = FinetunedModel { task: train.kind(), labels, encoder: enc, head, fallback };
    let words: Vec<&[String]> = (0..train.len()).map(|i| train.words(i)).collect();
    let encoded = model.encode(vocab, &words)?;
    let targets: Vec<Vec<usize>> = match model.task {
        TaskKind::Sequence => gold,
        TaskKind::Token => gold.into_iter().zip(&encoded.positions).map(|(g, p)| g[..p.len()].to_vec()).collect(),
    };

    let mut opt = AdamW::new(&model.encoder.store, 0.9, 0.999, 1e-6, config.weight_decay);
    let per_epoch = train.len().div_ceil(config.batch_size);
    let total = per_epoch * config.epochs;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = FinetuneReport { epochs: Vec::new() };
    let mut k = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng::derived(config.seed, epoch as u64));
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let y: Vec<usize> = batch.iter().flat_map(|&i| targets[i].iter().copied()).collect();
            let mut drop_rng = rng::derived(config.seed, 1 << 40 | k as u64);
            let rng = (model.encoder.config.dropout > 0.0).then_some(&mut drop_rng);
            let grads = {
                let mut g = Graph::new(&model.encoder.store);
                let logits = model.logits(&mut g, &encoded, batch, rng)?;
                let l = g.cross_entropy(logits, &y);
                let v = g.value(l).to_scalar();
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}, batch {b}")));
                }
                loss_sum += v;
                g.backward(l)
            };
            let mut grads = grads;
            grads.clip_global_norm(config.max_grad_norm);
            opt.update(&mut model.encoder.store, &grads, config.lr(k, total));
            k += 1;
        }
        let pred = model.predict_ids(&encoded)?;
        let (correct, count) = pred.iter().zip(&targets).fold((0, 0), |(c, n), (p, t)| (c + p.iter().zip(t).filter(|(a, b)| a == b).count(), n + t.len()));
        let train_accuracy = 100.0 * correct as f64 / count.max(1) as f64;
        report.epochs.push(FinetuneEpoch { epoch, loss: loss_sum / per_epoch as f64, train_accuracy });
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_piece_rule() {
        assert_eq!(first_piece_targets(&[1, 3, 2]), vec![1, 2, 5]);
        // a three-piece word yields a single target
        assert_eq!(first_piece_targets(&[3]).len(), 1);
    }

    #[test]
    fn schedule_shape() {
        let c = FinetuneConfig { learning_rate: 1.0, warmup_fraction: 0.2, ..Default::default() };
        let lrs: Vec<f64> = (0..10).map(|k| c.lr(k, 10)).collect();
        assert_eq!(lrs[0], 0.5);
        assert_eq!(lrs[1], 1.0);
        assert_eq!(lrs[2], 1.0);
        assert!((lrs[9] - 0.125).abs() < 1e-12);
        let c = FinetuneConfig { warmup_fraction: 0.0, ..c };
        assert_eq!(c.lr(0, 4), 1.0);
    }
}
