//! Downstream task heads over word embedders: a BiLSTM-CRF sequence tagger,
//! a recurrent document classifier and encoder fine-tuning.

mod classifier;
mod finetune;
mod sequence;

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use euslm_core::{Error, Result};

use crate::char_lm::{embed_words, CharLm, EmbeddingMemory, Pooling};
use crate::tensor::Matrix;

pub use classifier::{train_classifier, ClassifierConfig, DocumentClassifier, LabeledText};
pub use finetune::{finetune_encoder, first_piece_targets, FinetuneConfig, FinetuneEpoch, FinetuneReport, FinetunedModel, TaskData, TaskKind};
pub use sequence::{train_tagger, DevMetric, EpochRecord, SequenceTagger, TaggerConfig, TrainingHistory};

/// Maps a tokenized sentence to one vector per token.
pub trait Embedder {
    fn dim(&self) -> usize;

    fn embed(&mut self, tokens: &[&str]) -> Result<Vec<Vec<f64>>>;

    /// Clears state carried between sentences, if any.
    fn reset(&mut self) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnknownWord {
    /// Words missing from the table embed as zeros.
    #[default]
    Zero,
    /// Retry the lowercased form before falling back to zeros.
    Lowercase,
}

#[derive(Debug, Clone)]
pub struct StaticEmbeddings {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
    pub unknown: UnknownWord,
}

impl StaticEmbeddings {
    /// Reads the text format: a `count dim` header, then `word v1 … vdim` lines.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l?,
            None => return Err(Error::Parse { line: 1, msg: "missing \"count dim\" header".into() }),
        };
        let nums: Vec<usize> = header.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| Error::Parse {
            line: 1,
            msg: format!("bad header {header:?}"),
        })?;
        let [count, dim] = nums[..] else {
            return Err(Error::Parse { line: 1, msg: format!("header needs count and dim, got {header:?}") });
        };
        if dim == 0 {
            return Err(Error::Parse { line: 1, msg: "dimension must be positive".into() });
        }
        let mut index = HashMap::with_capacity(count);
        let mut vectors = Vec::with_capacity(count * dim);
        for (i, line) in lines {
            let line = line?;
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().unwrap_or_default();
            let values: Vec<f64> = fields
                .map(|f| f.parse::<f64>().map_err(|_| Error::Parse { line: line_no, msg: format!("bad value {f:?}") }))
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::Parse { line: line_no, msg: format!("expected {dim} values for {word:?}, found {}", values.len()) });
            }
            if index.insert(word.to_string(), index.len()).is_some() {
                return Err(Error::Parse { line: line_no, msg: format!("duplicate word {word:?}") });
            }
            vectors.extend(values);
        }
        if index.len() != count {
            return Err(Error::Parse { line: 1, msg: format!("header announces {count} words, file has {}", index.len()) });
        }
        Ok(StaticEmbeddings { dim, index, vectors, unknown: UnknownWord::Zero })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        let i = *self.index.get(word)?;
        Some(&self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn lookup(&self, word: &str) -> Vec<f64> {
        let found = match self.unknown {
            UnknownWord::Zero => self.get(word),
            UnknownWord::Lowercase => self.get(word).or_else(|| self.get(&word.to_lowercase())),
        };
        found.map_or_else(|| vec![0.0; self.dim], <[f64]>::to_vec)
    }
}

impl Embedder for StaticEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&mut self, tokens: &[&str]) -> Result<Vec<Vec<f64>>> {
        Ok(tokens.iter().map(|t| self.lookup(t)).collect())
    }
}

/// Forward and backward character LMs, optionally with a pooling memory.
#[derive(Debug, Clone)]
pub struct ContextualEmbedder {
    pub forward: CharLm,
    pub backward: CharLm,
    pub memory: Option<EmbeddingMemory>,
}

impl ContextualEmbedder {
    pub fn new(forward: CharLm, backward: CharLm, pooling: Option<Pooling>) -> Self {
        ContextualEmbedder { forward, backward, memory: pooling.map(EmbeddingMemory::new) }
    }
}

impl Embedder for ContextualEmbedder {
    fn dim(&self) -> usize {
        let local = self.forward.hidden_size() + self.backward.hidden_size();
        if self.memory.is_some() {
            2 * local
        } else {
            local
        }
    }

    fn embed(&mut self, tokens: &[&str]) -> Result<Vec<Vec<f64>>> {
        let local = embed_words(&self.forward, &self.backward, tokens)?;
        Ok(match &mut self.memory {
            Some(m) => tokens.iter().zip(&local).map(|(w, e)| m.pooled_embed(w, e)).collect(),
            None => local,
        })
    }

    fn reset(&mut self) {
        if let Some(m) = &mut self.memory {
            m.reset();
        }
    }
}

/// Embeds each sentence in order after clearing the embedder's state.
pub(crate) fn embed_all<'a>(embedder: &mut dyn Embedder, sentences: impl IntoIterator<Item = &'a [String]>) -> Result<Vec<Matrix>> {
    embedder.reset();
    let dim = embedder.dim();
    sentences
        .into_iter()
        .map(|tokens| {
            let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
            let rows = embedder.embed(&refs)?;
            if rows.len() != tokens.len() || rows.iter().any(|r| r.len() != dim) {
                return Err(Error::Invariant(format!("embedder returned {} vectors for {} tokens", rows.len(), tokens.len())));
            }
            Ok(Matrix::from_vec(rows.len(), dim, rows.concat()))
        })
        .collect()
}
