//! Text-side building blocks for monolingual encoder pretraining.
//!
//! - [`corpus`]: document/paragraph structured corpora, cleaning, stats and splits.
//! - [`subword`]: unigram-LM subword vocabularies (training and Viterbi tokenization).
//! - [`pretrain_data`]: whole-word-masked MLM + NSP example generation.
//! - [`evalkit`]: classification, tagging and span metrics plus run aggregation.

pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod pretrain_data;
pub mod rng;
pub mod subword;

pub use corpus::{Corpus, CorpusStats, Document, SplitSpec};
pub use error::{Error, Result};
pub use subword::{SubwordVocab, TokenizedSequence};
