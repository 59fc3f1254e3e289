//! Post-LN transformer encoder with tied MLM head and NSP head.

mod checkpoint;
mod gradcheck;
mod train;

use serde::{Deserialize, Serialize};

use euslm_core::pretrain_data::PretrainExample;
use euslm_core::rng::Rng;
use euslm_core::subword::PAD_ID;
use euslm_core::{Error, Result};

use crate::graph::{Graph, NodeId, SeqLayout};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Matrix;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use gradcheck::{analytic_gradients, grad_check, GradCheckReport, GroupCheck, FD_EPSILON, NORM_FLOOR};
pub use train::{pretrain, LossCurve, LossRecord, PretrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub intermediate: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
    pub type_vocab_size: usize,
    pub dropout: f64,
    pub init_std: f64,
}

impl EncoderConfig {
    pub fn bert_base(vocab_size: usize) -> Self {
        EncoderConfig {
            layers: 12,
            hidden: 768,
            heads: 12,
            intermediate: 3072,
            max_positions: 512,
            vocab_size,
            type_vocab_size: 2,
            dropout: 0.1,
            init_std: 0.02,
        }
    }

    pub fn toy(vocab_size: usize) -> Self {
        EncoderConfig {
            layers: 2,
            hidden: 64,
            heads: 2,
            intermediate: 256,
            max_positions: 128,
            vocab_size,
            type_vocab_size: 2,
            dropout: 0.1,
            init_std: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.heads == 0 || self.intermediate == 0 {
            return Err(Error::Config("layers, hidden, heads and intermediate must be positive".into()));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::Config(format!("hidden size {} not divisible by {} heads", self.hidden, self.heads)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.vocab_size < 5 || self.max_positions == 0 || self.type_vocab_size == 0 {
            return Err(Error::Config("vocabulary, positions and segment types must be non-empty".into()));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::Config("init std must be positive".into()));
        }
        Ok(())
    }

    /// Number of scalar parameters, including the MLM and NSP heads.
    pub fn parameter_count(&self) -> usize {
        let (h, i, v) = (self.hidden, self.intermediate, self.vocab_size);
        let embeddings = (v + self.max_positions + self.type_vocab_size) * h + 2 * h;
        let layer = 4 * (h * h + h) + 2 * h + (h * i + i) + (i * h + h) + 2 * h;
        let mlm = h * h + h + 2 * h + v;
        let pooler = h * h + h;
        let nsp = 2 * h + 2;
        embeddings + self.layers * layer + mlm + pooler + nsp
    }
}

#[derive(Debug, Clone)]
struct LayerParams {
    q: (ParamId, ParamId),
    k: (ParamId, ParamId),
    v: (ParamId, ParamId),
    out: (ParamId, ParamId),
    attn_ln: (ParamId, ParamId),
    ffn_in: (ParamId, ParamId),
    ffn_out: (ParamId, ParamId),
    ffn_ln: (ParamId, ParamId),
}

#[derive(Debug, Clone)]
struct EncoderParams {
    word: ParamId,
    position: ParamId,
    token_type: ParamId,
    emb_ln: (ParamId, ParamId),
    layers: Vec<LayerParams>,
    mlm_dense: (ParamId, ParamId),
    mlm_ln: (ParamId, ParamId),
    mlm_bias: ParamId,
    pooler: (ParamId, ParamId),
    nsp: (ParamId, ParamId),
}

impl EncoderParams {
    fn init(config: &EncoderConfig, store: &mut ParamStore, rng: &mut Rng) -> Self {
        let (h, i, std) = (config.hidden, config.intermediate, config.init_std);
        let dense = |store: &mut ParamStore, rng: &mut Rng, name: &str, rows: usize, cols: usize| {
            (store.add_normal(format!("{name}.weight"), rows, cols, std, rng), store.add_zeros(format!("{name}.bias"), 1, cols))
        };
        let ln = |store: &mut ParamStore, name: &str| (store.add_ones(format!("{name}.gamma"), 1, h), store.add_zeros(format!("{name}.beta"), 1, h));

        let word = store.add_normal("embeddings.word", config.vocab_size, h, std, rng);
        let position = store.add_normal("embeddings.position", config.max_positions, h, std, rng);
        let token_type = store.add_normal("embeddings.token_type", config.type_vocab_size, h, std, rng);
        let emb_ln = ln(store, "embeddings.ln");
        let layers = (0..config.layers)
            .map(|l| {
                let p = format!("layer.{l}");
                LayerParams {
                    q: dense(store, rng, &format!("{p}.attention.query"), h, h),
                    k: dense(store, rng, &format!("{p}.attention.key"), h, h),
                    v: dense(store, rng, &format!("{p}.attention.value"), h, h),
                    out: dense(store, rng, &format!("{p}.attention.output"), h, h),
                    attn_ln: ln(store, &format!("{p}.attention.ln")),
                    ffn_in: dense(store, rng, &format!("{p}.ffn.in"), h, i),
                    ffn_out: dense(store, rng, &format!("{p}.ffn.out"), i, h),
                    ffn_ln: ln(store, &format!("{p}.ffn.ln")),
                }
            })
            .collect();
        let mlm_dense = dense(store, rng, "mlm.transform", h, h);
        let mlm_ln = ln(store, "mlm.ln");
        let mlm_bias = store.add_zeros("mlm.bias", 1, config.vocab_size);
        let pooler = dense(store, rng, "pooler", h, h);
        let nsp = dense(store, rng, "nsp", h, 2);
        EncoderParams { word, position, token_type, emb_ln, layers, mlm_dense, mlm_ln, mlm_bias, pooler, nsp }
    }

    fn lookup(config: &EncoderConfig, store: &ParamStore) -> Result<Self> {
        let id = |name: &str| store.id(name).ok_or_else(|| Error::Input(format!("checkpoint lacks tensor {name}")));
        let pair = |name: &str| Ok::<_, Error>((id(&format!("{name}.weight"))?, id(&format!("{name}.bias"))?));
        let ln = |name: &str| Ok::<_, Error>((id(&format!("{name}.gamma"))?, id(&format!("{name}.beta"))?));
        let layers = (0..config.layers)
            .map(|l| {
                let p = format!("layer.{l}");
                Ok(LayerParams {
                    q: pair(&format!("{p}.attention.query"))?,
                    k: pair(&format!("{p}.attention.key"))?,
                    v: pair(&format!("{p}.attention.value"))?,
                    out: pair(&format!("{p}.attention.output"))?,
                    attn_ln: ln(&format!("{p}.attention.ln"))?,
                    ffn_in: pair(&format!("{p}.ffn.in"))?,
                    ffn_out: pair(&format!("{p}.ffn.out"))?,
                    ffn_ln: ln(&format!("{p}.ffn.ln"))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(EncoderParams {
            word: id("embeddings.word")?,
            position: id("embeddings.position")?,
            token_type: id("embeddings.token_type")?,
            emb_ln: ln("embeddings.ln")?,
            layers,
            mlm_dense: pair("mlm.transform")?,
            mlm_ln: ln("mlm.ln")?,
            mlm_bias: id("mlm.bias")?,
            pooler: pair("pooler")?,
            nsp: pair("nsp")?,
        })
    }
}

/// Token ids and segment ids of a padded batch, `layout.max_len` rows per sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderInput {
    pub ids: Vec<u32>,
    pub segments: Vec<u8>,
    pub layout: SeqLayout,
}

impl EncoderInput {
    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = (&'a [u32], &'a [u8])>) -> Self {
        let seqs: Vec<_> = seqs.into_iter().collect();
        let max_len = seqs.iter().map(|s| s.0.len()).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(max_len * seqs.len());
        let mut segments = Vec::with_capacity(max_len * seqs.len());
        let mut lengths = Vec::with_capacity(seqs.len());
        for (s_ids, s_seg) in &seqs {
            assert_eq!(s_ids.len(), s_seg.len(), "ids and segments differ in length");
            ids.extend_from_slice(s_ids);
            ids.resize(ids.len() + max_len - s_ids.len(), PAD_ID);
            segments.extend_from_slice(s_seg);
            segments.resize(segments.len() + max_len - s_seg.len(), 0);
            lengths.push(s_ids.len());
        }
        EncoderInput { ids, segments, layout: SeqLayout { max_len, lengths } }
    }

    pub fn batch_size(&self) -> usize {
        self.layout.batch()
    }

    /// Row of position `pos` of sequence `b` in the flattened batch.
    pub fn row(&self, b: usize, pos: usize) -> usize {
        b * self.layout.max_len + pos
    }
}

/// A padded batch of pretraining examples with its MLM and NSP targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainBatch {
    pub input: EncoderInput,
    /// Flattened rows of the masked positions.
    pub masked_rows: Vec<usize>,
    pub mlm_labels: Vec<usize>,
    pub nsp_labels: Vec<usize>,
}

impl PretrainBatch {
    pub fn new(examples: &[&PretrainExample]) -> Self {
        let input = EncoderInput::from_sequences(examples.iter().map(|e| (e.ids.as_slice(), e.segment_ids.as_slice())));
        let mut masked_rows = Vec::new();
        let mut mlm_labels = Vec::new();
        for (b, e) in examples.iter().enumerate() {
            for (&p, &l) in e.masked_positions.iter().zip(&e.masked_labels) {
                masked_rows.push(input.row(b, p as usize));
                mlm_labels.push(l as usize);
            }
        }
        let nsp_labels = examples.iter().map(|e| usize::from(e.is_next)).collect();
        PretrainBatch { input, masked_rows, mlm_labels, nsp_labels }
    }

    pub fn from_examples(examples: &[PretrainExample]) -> Self {
        Self::new(&examples.iter().collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone)]
pub struct EncoderNodes {
    /// Final hidden states, one row per padded position.
    pub hidden: NodeId,
    /// One attention node per layer.
    pub attention: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct PretrainOutputs {
    pub encoder: EncoderNodes,
    /// `#masked × vocab`.
    pub mlm_logits: NodeId,
    /// `batch × 2`; column 1 scores "is next".
    pub nsp_logits: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub total: NodeId,
    pub mlm: NodeId,
    pub nsp: NodeId,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub store: ParamStore,
    params: EncoderParams,
}

impl Encoder {
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = euslm_core::rng::seeded(seed);
        let mut store = ParamStore::new();
        let params = EncoderParams::init(&config, &mut store, &mut rng);
        debug_assert_eq!(store.element_count(), config.parameter_count());
        Ok(Encoder { config, store, params })
    }

    /// Wraps an existing store, which may hold extra (task head) tensors.
    pub fn from_store(config: EncoderConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let params = EncoderParams::lookup(&config, &store)?;
        Ok(Encoder { config, store, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.config.parameter_count()
    }

    pub fn word_embeddings(&self) -> ParamId {
        self.params.word
    }

    /// Transformer stack over `input`. Dropout is active iff `rng` is given.
    pub fn forward<'p>(&'p self, g: &mut Graph<'p>, input: &EncoderInput, mut rng: Option<&mut Rng>) -> Result<EncoderNodes> {
        let c = &self.config;
        let t = input.layout.max_len;
        if t > c.max_positions {
            return Err(Error::Input(format!("sequence length {t} exceeds {} positions", c.max_positions)));
        }
        if let Some(&bad) = input.ids.iter().find(|&&i| i as usize >= c.vocab_size) {
            return Err(Error::Input(format!("token id {bad} outside vocabulary of {}", c.vocab_size)));
        }
        if let Some(&bad) = input.segments.iter().find(|&&s| s as usize >= c.type_vocab_size) {
            return Err(Error::Input(format!("segment id {bad} outside {} types", c.type_vocab_size)));
        }
        let p = &self.params;
        let p_drop = c.dropout;
        let mut drop = |g: &mut Graph<'p>, x: NodeId| match rng.as_deref_mut() {
            Some(r) => g.dropout(x, p_drop, r),
            None => x,
        };

        let word = g.param(p.word);
        let pos = g.param(p.position);
        let typ = g.param(p.token_type);
        let we = g.gather(word, input.ids.iter().map(|&i| i as usize).collect());
        let pe = g.gather(pos, (0..input.ids.len()).map(|r| r % t).collect());
        let te = g.gather(typ, input.segments.iter().map(|&s| s as usize).collect());
        let x = g.add(we, pe);
        let x = g.add(x, te);
        let x = g.layer_norm(x, p.emb_ln.0, p.emb_ln.1);
        let mut x = drop(g, x);

        let mut attention = Vec::with_capacity(p.layers.len());
        for l in &p.layers {
            let q = g.linear(x, l.q.0, l.q.1);
            let k = g.linear(x, l.k.0, l.k.1);
            let v = g.linear(x, l.v.0, l.v.1);
            let a = g.attention(q, k, v, c.heads, input.layout.clone());
            attention.push(a);
            let o = g.linear(a, l.out.0, l.out.1);
            let o = drop(g, o);
            let r = g.add(x, o);
            let h = g.layer_norm(r, l.attn_ln.0, l.attn_ln.1);
            let f = g.linear(h, l.ffn_in.0, l.ffn_in.1);
            let f = g.gelu(f);
            let f = g.linear(f, l.ffn_out.0, l.ffn_out.1);
            let f = drop(g, f);
            let r = g.add(h, f);
            x = g.layer_norm(r, l.ffn_ln.0, l.ffn_ln.1);
        }
        Ok(EncoderNodes { hidden: x, attention })
    }

    /// `tanh(W · h[CLS] + b)` for every sequence of the batch.
    pub fn pooled<'p>(&'p self, g: &mut Graph<'p>, nodes: &EncoderNodes, input: &EncoderInput) -> NodeId {
        let cls = g.select_rows(nodes.hidden, (0..input.batch_size()).map(|b| input.row(b, 0)).collect());
        let pooled = g.linear(cls, self.params.pooler.0, self.params.pooler.1);
        g.tanh(pooled)
    }

    pub fn forward_pretrain<'p>(&'p self, g: &mut Graph<'p>, batch: &PretrainBatch, rng: Option<&mut Rng>) -> Result<PretrainOutputs> {
        let p = &self.params;
        let encoder = self.forward(g, &batch.input, rng)?;

        let masked = g.select_rows(encoder.hidden, batch.masked_rows.clone());
        let t = g.linear(masked, p.mlm_dense.0, p.mlm_dense.1);
        let t = g.gelu(t);
        let t = g.layer_norm(t, p.mlm_ln.0, p.mlm_ln.1);
        let word = g.param(p.word);
        let logits = g.matmul_bt(t, word);
        let bias = g.param(p.mlm_bias);
        let mlm_logits = g.add_row(logits, bias);

        let pooled = self.pooled(g, &encoder, &batch.input);
        let nsp_logits = g.linear(pooled, p.nsp.0, p.nsp.1);
        Ok(PretrainOutputs { encoder, mlm_logits, nsp_logits })
    }

    /// Mean MLM cross-entropy (0 without masked positions) plus mean NSP cross-entropy.
    pub fn loss(g: &mut Graph<'_>, outputs: &PretrainOutputs, batch: &PretrainBatch) -> LossNodes {
        let mlm = g.cross_entropy(outputs.mlm_logits, &batch.mlm_labels);
        let nsp = g.cross_entropy(outputs.nsp_logits, &batch.nsp_labels);
        let total = g.add(mlm, nsp);
        LossNodes { total, mlm, nsp }
    }

    /// Eval-mode metrics over `batch`.
    pub fn evaluate(&self, batch: &PretrainBatch) -> Result<EvalStats> {
        let mut g = Graph::new(&self.store);
        let out = self.forward_pretrain(&mut g, batch, None)?;
        let loss = Self::loss(&mut g, &out, batch);
        let correct = |logits: &Matrix, labels: &[usize]| {
            labels.iter().enumerate().filter(|&(r, &y)| argmax(logits.row(r)) == y).count()
        };
        Ok(EvalStats {
            mlm_loss: g.value(loss.mlm).to_scalar(),
            nsp_loss: g.value(loss.nsp).to_scalar(),
            mlm_correct: correct(g.value(out.mlm_logits), &batch.mlm_labels),
            mlm_total: batch.mlm_labels.len(),
            nsp_correct: correct(g.value(out.nsp_logits), &batch.nsp_labels),
            nsp_total: batch.nsp_labels.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvalStats {
    pub mlm_loss: f64,
    pub nsp_loss: f64,
    pub mlm_correct: usize,
    pub mlm_total: usize,
    pub nsp_correct: usize,
    pub nsp_total: usize,
}

impl EvalStats {
    pub fn mlm_accuracy(&self) -> f64 {
        self.mlm_correct as f64 / self.mlm_total.max(1) as f64
    }

    pub fn nsp_accuracy(&self) -> f64 {
        self.nsp_correct as f64 / self.nsp_total.max(1) as f64
    }

    /// Pools counts; losses are weighted by their counts.
    pub fn merge(&mut self, o: &EvalStats) {
        let w = |a: f64, na: usize, b: f64, nb: usize| if na + nb == 0 { 0.0 } else { (a * na as f64 + b * nb as f64) / (na + nb) as f64 };
        self.mlm_loss = w(self.mlm_loss, self.mlm_total, o.mlm_loss, o.mlm_total);
        self.nsp_loss = w(self.nsp_loss, self.nsp_total, o.nsp_loss, o.nsp_total);
        self.mlm_correct += o.mlm_correct;
        self.mlm_total += o.mlm_total;
        self.nsp_correct += o.nsp_correct;
        self.nsp_total += o.nsp_total;
    }
}

/// Index of the largest value; the first on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
