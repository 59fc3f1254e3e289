//! Double-precision neural components: a small reverse-mode autograd, a
//! BERT-style encoder, character language models and sequence taggers.

pub mod char_lm;
pub mod crf;
pub mod encoder;
pub mod graph;
pub mod io;
pub mod lstm;
pub mod optim;
pub mod params;
pub mod tagger;
pub mod tensor;

pub use graph::{Graph, NodeId, SeqLayout};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Matrix;
