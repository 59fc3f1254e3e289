//! Character language models and contextual string embeddings.
//!
//! A forward model reads text left to right, a backward model reads it
//! reversed. A word's embedding concatenates the forward state after its last
//! character with the backward state after its first character.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use euslm_core::{rng, Corpus, Error, Result};

use crate::graph::{Graph, NodeId};
use crate::io::{fill_store, load_tensors, save_tensors, store_tensors};
use crate::lstm::Lstm;
use crate::optim::AdamW;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Matrix;

/// Stands for every character outside the vocabulary.
pub const UNKNOWN_CHAR: char = '\u{FFFD}';
/// Separates paragraphs in training streams and opens every embedded sentence.
pub const BOUNDARY_CHAR: char = '\n';

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl CharVocab {
    /// Characters seen at least `min_count` times, plus the unknown and boundary symbols.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<char, usize> = BTreeMap::new();
        for t in texts {
            for c in t.chars() {
                *counts.entry(c).or_default() += 1;
            }
        }
        let chars = [UNKNOWN_CHAR, BOUNDARY_CHAR]
            .into_iter()
            .chain(counts.into_iter().filter(|&(c, n)| n >= min_count && c != UNKNOWN_CHAR && c != BOUNDARY_CHAR).map(|(c, _)| c))
            .collect();
        Self::from_chars(chars)
    }

    fn from_chars(chars: Vec<char>) -> Self {
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        CharVocab { chars, index }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn id(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(0)
    }

    pub fn encode(&self, s: &str) -> Vec<usize> {
        s.chars().map(|c| self.id(c)).collect()
    }

    pub fn chars(&self) -> String {
        self.chars.iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            _ => Err(Error::Config(format!("direction must be forward or backward, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharLmConfig {
    pub hidden: usize,
    pub embedding_dim: usize,
    pub seq_len: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub direction: Direction,
    pub seed: u64,
}

impl CharLmConfig {
    pub fn toy(direction: Direction) -> Self {
        CharLmConfig {
            hidden: 64,
            embedding_dim: 32,
            seq_len: 50,
            batch_size: 16,
            epochs: 2,
            learning_rate: 3e-3,
            max_grad_norm: 1.0,
            direction,
            seed: 0,
        }
    }

    /// Reference sizes: hidden 2048, sequences of 250, batches of 100, 5 epochs.
    pub fn full(direction: Direction) -> Self {
        CharLmConfig { hidden: 2048, embedding_dim: 100, seq_len: 250, batch_size: 100, epochs: 5, ..Self::toy(direction) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.embedding_dim == 0 || self.seq_len == 0 || self.batch_size == 0 {
            return Err(Error::Config("hidden, embedding, sequence length and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return Err(Error::Config("learning rate and gradient clip must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CharLm {
    pub config: CharLmConfig,
    pub vocab: CharVocab,
    pub store: ParamStore,
    embedding: ParamId,
    lstm: Lstm,
    out_w: ParamId,
    out_b: ParamId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharLmReport {
    /// Training perplexity of each epoch.
    pub epoch_perplexity: Vec<f64>,
}

fn oriented(text: &str, direction: Direction) -> String {
    match direction {
        Direction::Forward => text.to_string(),
        Direction::Backward => text.chars().rev().collect(),
    }
}

impl CharLm {
    pub fn new(config: CharLmConfig, vocab: CharVocab) -> Result<Self> {
        config.validate()?;
        let mut r = rng::seeded(config.seed);
        let mut store = ParamStore::new();
        let embedding = store.add_uniform("embedding", vocab.len(), config.embedding_dim, 0.1, &mut r);
        let lstm = Lstm::init(&mut store, "lstm", config.embedding_dim, config.hidden, &mut r);
        let bound = 1.0 / (config.hidden as f64).sqrt();
        let out_w = store.add_uniform("decoder.weight", config.hidden, vocab.len(), bound, &mut r);
        let out_b = store.add_zeros("decoder.bias", 1, vocab.len());
        Ok(CharLm { config, vocab, store, embedding, lstm, out_w, out_b })
    }

    pub fn hidden_size(&self) -> usize {
        self.config.hidden
    }

    pub fn direction(&self) -> Direction {
        self.config.direction
    }

    /// Hidden states after each of `ids`, continuing from `state`.
    fn run<'p>(&'p self, g: &mut Graph<'p>, ids: &[usize], batch: usize, state: Option<(NodeId, NodeId)>) -> (Vec<NodeId>, (NodeId, NodeId)) {
        let table = g.param(self.embedding);
        let x = g.gather(table, ids.to_vec());
        self.lstm.run(g, x, batch, state)
    }

    fn logits<'p>(&'p self, g: &mut Graph<'p>, hs: &[NodeId]) -> NodeId {
        let h = g.concat_rows(hs);
        g.linear(h, self.out_w, self.out_b)
    }

    /// Mean next-character cross-entropy of `text` read in the model's direction.
    pub fn cross_entropy(&self, text: &str) -> f64 {
        let ids = self.vocab.encode(&oriented(&format!("{BOUNDARY_CHAR}{text}"), self.config.direction));
        if ids.len() < 2 {
            return 0.0;
        }
        let mut g = Graph::new(&self.store);
        let (hs, _) = self.run(&mut g, &ids[..ids.len() - 1], 1, None);
        let logits = self.logits(&mut g, &hs);
        let l = g.cross_entropy(logits, &ids[1..]);
        g.value(l).to_scalar()
    }

    /// Fraction of next characters predicted correctly on `text`.
    pub fn accuracy(&self, text: &str) -> f64 {
        let ids = self.vocab.encode(&oriented(text, self.config.direction));
        if ids.len() < 2 {
            return 0.0;
        }
        let mut g = Graph::new(&self.store);
        let (hs, _) = self.run(&mut g, &ids[..ids.len() - 1], 1, None);
        let logits = self.logits(&mut g, &hs);
        let lv = g.value(logits);
        let correct = (0..lv.rows()).filter(|&r| crate::encoder::argmax(lv.row(r)) == ids[r + 1]).count();
        correct as f64 / lv.rows() as f64
    }

    /// Hidden state after each character of `text`, in reading order of the
    /// model (reversed for a backward model). A boundary symbol is read first.
    pub fn states(&self, text: &str) -> Vec<Vec<f64>> {
        let ids = self.vocab.encode(&format!("{BOUNDARY_CHAR}{}", oriented(text, self.config.direction)));
        let mut g = Graph::new(&self.store);
        let (hs, _) = self.run(&mut g, &ids, 1, None);
        hs[1..].iter().map(|&h| g.value(h).data().to_vec()).collect()
    }

    /// Trains in place and returns per-epoch perplexities. The corpus is one
    /// stream with paragraphs joined by the boundary symbol, cut into
    /// `batch_size` parallel streams and read in `seq_len` chunks with the
    /// recurrent state carried across chunks.
    pub fn train(&mut self, corpus: &Corpus) -> Result<CharLmReport> {
        let text: String = corpus.segments().map(|(_, _, p)| p).collect::<Vec<_>>().join(&BOUNDARY_CHAR.to_string());
        self.train_text(&text)
    }

    pub fn train_text(&mut self, text: &str) -> Result<CharLmReport> {
        let c = self.config;
        let ids = self.vocab.encode(&oriented(text, c.direction));
        let per_stream = ids.len() / c.batch_size;
        if per_stream < 2 {
            return Err(Error::Input(format!("text of {} characters too short for {} streams", ids.len(), c.batch_size)));
        }
        let mut opt = AdamW::new(&self.store, 0.9, 0.999, 1e-8, 0.0);
        let mut report = CharLmReport { epoch_perplexity: Vec::new() };
        for epoch in 0..c.epochs {
            let mut state: Option<(Matrix, Matrix)> = None;
            let (mut loss_sum, mut count) = (0.0, 0usize);
            let mut start = 0;
            while start + 1 < per_stream {
                let len = c.seq_len.min(per_stream - 1 - start);
                // time-major: row t * batch + b reads stream b at start + t
                let mut inputs = Vec::with_capacity(len * c.batch_size);
                let mut targets = Vec::with_capacity(len * c.batch_size);
                for t in 0..len {
                    for b in 0..c.batch_size {
                        let i = b * per_stream + start + t;
                        inputs.push(ids[i]);
                        targets.push(ids[i + 1]);
                    }
                }
                let (loss, grads, next) = {
                    let mut g = Graph::new(&self.store);
                    let init = state.take().map(|(h, cell)| (g.input(h), g.input(cell)));
                    let (hs, (h, cell)) = self.run(&mut g, &inputs, c.batch_size, init);
                    let logits = self.logits(&mut g, &hs);
                    let l = g.cross_entropy(logits, &targets);
                    let loss = g.value(l).to_scalar();
                    if !loss.is_finite() {
                        return Err(Error::Numeric(format!("non-finite loss in epoch {epoch} at offset {start}")));
                    }
                    (loss, g.backward(l), (g.value(h).clone(), g.value(cell).clone()))
                };
                let mut grads = grads;
                grads.clip_global_norm(c.max_grad_norm);
                opt.update(&mut self.store, &grads, c.learning_rate);
                state = Some(next);
                loss_sum += loss * targets.len() as f64;
                count += targets.len();
                start += len;
            }
            report.epoch_perplexity.push((loss_sum / count as f64).exp());
        }
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = json!({ "kind": "euslm-charlm", "config": self.config, "chars": self.vocab.chars() });
        save_tensors(path, &meta, store_tensors(&self.store))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = load_tensors(path)?;
        if file.metadata["kind"] != "euslm-charlm" {
            return Err(Error::Input(format!("{} is not a character LM", path.display())));
        }
        let config: CharLmConfig = serde_json::from_value(file.metadata["config"].clone())?;
        let chars = file.metadata["chars"].as_str().ok_or_else(|| Error::Input("model lacks its character list".into()))?;
        let mut lm = CharLm::new(config, CharVocab::from_chars(chars.chars().collect()))?;
        fill_store(&mut lm.store, &file, "")?;
        Ok(lm)
    }
}

/// Character spans `[start, end)` of `words` joined by single spaces.
fn word_spans(words: &[&str]) -> (String, Vec<(usize, usize)>) {
    let mut text = String::new();
    let mut spans = Vec::with_capacity(words.len());
    let mut pos = 0;
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            text.push(' ');
            pos += 1;
        }
        let n = w.chars().count();
        text.push_str(w);
        spans.push((pos, pos + n));
        pos += n;
    }
    (text, spans)
}

/// Per-word contextual embeddings of dimension `fwd.hidden + bwd.hidden`.
pub fn embed_words(forward: &CharLm, backward: &CharLm, words: &[&str]) -> Result<Vec<Vec<f64>>> {
    if forward.direction() != Direction::Forward || backward.direction() != Direction::Backward {
        return Err(Error::Config("need one forward and one backward model".into()));
    }
    if forward.vocab != backward.vocab {
        return Err(Error::Config("forward and backward models use different character vocabularies".into()));
    }
    if words.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(w) = words.iter().find(|w| w.is_empty() || w.contains(' ')) {
        return Err(Error::Input(format!("invalid word {w:?}")));
    }
    let (text, spans) = word_spans(words);
    let n = text.chars().count();
    let f = forward.states(&text);
    let b = backward.states(&text);
    Ok(spans
        .iter()
        .map(|&(s, e)| {
            let mut v = f[e - 1].clone();
            v.extend_from_slice(&b[n - 1 - s]);
            v
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Min,
    Max,
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "min" => Ok(Pooling::Min),
            "max" => Ok(Pooling::Max),
            _ => Err(Error::Config(format!("pooling must be mean, min or max, got {s:?}"))),
        }
    }
}

/// Every contextual embedding produced so far, keyed by exact surface form.
#[derive(Debug, Clone)]
pub struct EmbeddingMemory {
    pub pooling: Pooling,
    entries: HashMap<String, Vec<Vec<f64>>>,
}

impl EmbeddingMemory {
    pub fn new(pooling: Pooling) -> Self {
        EmbeddingMemory { pooling, entries: HashMap::new() }
    }

    /// Records `local` for `word` and returns `pool(previous ∪ {local}) ++ local`.
    pub fn pooled_embed(&mut self, word: &str, local: &[f64]) -> Vec<f64> {
        let list = self.entries.entry(word.to_string()).or_default();
        list.push(local.to_vec());
        let mut pooled = list[0].clone();
        for v in &list[1..] {
            for (p, x) in pooled.iter_mut().zip(v) {
                *p = match self.pooling {
                    Pooling::Mean => *p + x,
                    Pooling::Min => p.min(*x),
                    Pooling::Max => p.max(*x),
                };
            }
        }
        if self.pooling == Pooling::Mean {
            let n = list.len() as f64;
            pooled.iter_mut().for_each(|p| *p /= n);
        }
        pooled.extend_from_slice(local);
        pooled
    }

    pub fn reset(&mut self) {
        self.entries.clear();
    }

    /// Number of distinct words remembered.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn occurrences(&self, word: &str) -> usize {
        self.entries.get(word).map_or(0, Vec::len)
    }
}
