//! Next-sentence pair sampling.

use rand::Rng as _;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentRef {
    pub doc: usize,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NspPair {
    pub a: SegmentRef,
    pub b: SegmentRef,
    pub is_next: bool,
}

/// Draws `(A, B)` segment pairs. With probability one half B is the
/// paragraph following A in its document; otherwise A is any segment and B
/// is uniform over the segments of the other documents (or, for a
/// single-document corpus, over the same document minus the true next).
#[derive(Debug, Clone)]
pub struct NspSampler {
    /// Flat index of the first segment of each document, plus the total.
    doc_starts: Vec<usize>,
    /// Flat indices of segments that have a successor.
    with_next: Vec<usize>,
}

impl NspSampler {
    pub fn new(corpus: &Corpus) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut doc_starts = vec![0];
        let mut with_next = Vec::new();
        for doc in corpus.documents() {
            let start = *doc_starts.last().unwrap();
            with_next.extend(start..start + doc.paragraphs.len() - 1);
            doc_starts.push(start + doc.paragraphs.len());
        }
        Ok(NspSampler { doc_starts, with_next })
    }

    pub fn single_document(&self) -> bool {
        self.doc_starts.len() == 2
    }

    pub fn segment_count(&self) -> usize {
        *self.doc_starts.last().unwrap()
    }

    pub fn flat_index(&self, s: SegmentRef) -> usize {
        self.doc_starts[s.doc] + s.index
    }

    fn locate(&self, flat: usize) -> SegmentRef {
        let doc = self.doc_starts.partition_point(|&s| s <= flat) - 1;
        SegmentRef { doc, index: flat - self.doc_starts[doc] }
    }

    fn doc_len(&self, doc: usize) -> usize {
        self.doc_starts[doc + 1] - self.doc_starts[doc]
    }

    pub fn sample(&self, rng: &mut Rng) -> NspPair {
        if rng.gen_bool(0.5) && !self.with_next.is_empty() {
            let a = self.locate(self.with_next[rng.gen_range(0..self.with_next.len())]);
            let b = SegmentRef { doc: a.doc, index: a.index + 1 };
            return NspPair { a, b, is_next: true };
        }
        let total = self.segment_count();
        let a = self.locate(rng.gen_range(0..total));
        let len = self.doc_len(a.doc);
        let b = if !self.single_document() {
            let mut r = rng.gen_range(0..total - len);
            if r >= self.doc_starts[a.doc] {
                r += len;
            }
            self.locate(r)
        } else {
            let next = a.index + 1;
            let choices = if next < len { len - 1 } else { len };
            let mut index = rng.gen_range(0..choices);
            if next < len && index >= next {
                index += 1;
            }
            SegmentRef { doc: a.doc, index }
        };
        NspPair { a, b, is_next: false }
    }
}

/// Endless stream of pairs drawn from `rng`.
pub fn make_nsp_pairs<'r>(corpus: &Corpus, rng: &'r mut Rng) -> Result<impl Iterator<Item = NspPair> + 'r> {
    let sampler = NspSampler::new(corpus)?;
    Ok(std::iter::repeat_with(move || sampler.sample(rng)))
}
