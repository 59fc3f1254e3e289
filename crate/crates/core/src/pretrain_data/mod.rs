//! MLM + NSP pretraining examples.
//!
//! Segments are corpus paragraphs. Pairs `(A, B)` are sampled so that B is
//! the true next paragraph half of the time; examples are laid out as
//! `[CLS] A [SEP] B [SEP]` and masked at the word level.

mod format;
mod masking;
mod nsp;

use rayon::prelude::*;

use crate::corpus::{apportion, Corpus};
use crate::error::{Error, Result};
use crate::rng;
use crate::subword::{SubwordVocab, TokenizedSequence, CLS_ID, SEP_ID};

pub use format::{read_binary, read_jsonl, write_binary, write_jsonl, BINARY_MAGIC};
pub use masking::{apply_masking, masking_stats, Masking, MaskingPolicy, MaskingReport, Replacement};
pub use nsp::{make_nsp_pairs, NspPair, NspSampler, SegmentRef};

/// Examples per generation shard. Each shard draws from its own random
/// stream, so output is independent of the worker count.
pub const SHARD_EXAMPLES: usize = 256;

/// Smallest sequence that can hold `[CLS] a [SEP] b [SEP]`.
pub const MIN_SEQ_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretrainExample {
    pub ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    /// Source word of each position; `None` for specials. Words of B are
    /// numbered after those of A.
    pub word_ids: Vec<Option<u32>>,
    pub masked_positions: Vec<u32>,
    pub masked_labels: Vec<u32>,
    pub replacements: Vec<Replacement>,
    pub is_next: bool,
}

impl PretrainExample {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Input ids with the masked positions restored to their labels.
    pub fn original_ids(&self) -> Vec<u32> {
        let mut ids = self.ids.clone();
        for (&p, &l) in self.masked_positions.iter().zip(&self.masked_labels) {
            ids[p as usize] = l;
        }
        ids
    }

    /// Checks the structural invariants of an example.
    pub fn validate(&self) -> Result<()> {
        let n = self.ids.len();
        if self.segment_ids.len() != n || self.word_ids.len() != n {
            return Err(Error::Invariant("per-position fields differ in length".into()));
        }
        if self.masked_positions.len() != self.masked_labels.len()
            || self.masked_positions.len() != self.replacements.len()
        {
            return Err(Error::Invariant("masked positions, labels and replacements differ in length".into()));
        }
        if !self.masked_positions.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Invariant("masked positions not strictly increasing".into()));
        }
        if self.ids.first() != Some(&CLS_ID) || self.ids.iter().filter(|&&i| i == SEP_ID).count() != 2 {
            return Err(Error::Invariant("expected [CLS] A [SEP] B [SEP] layout".into()));
        }
        let original = self.original_ids();
        for &p in &self.masked_positions {
            let p = p as usize;
            if p >= n || SubwordVocab::is_special(original[p]) {
                return Err(Error::Invariant(format!("masked position {p} points at a special token")));
            }
        }
        Ok(())
    }
}

/// Sequence-length phases of pretraining as `(max_len, fraction of steps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingSchedule {
    pub phases: Vec<(usize, f64)>,
}

impl Default for PackingSchedule {
    fn default() -> Self {
        PackingSchedule { phases: vec![(128, 0.9), (512, 0.1)] }
    }
}

impl PackingSchedule {
    pub fn new(phases: Vec<(usize, f64)>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::Config("packing schedule has no phases".into()));
        }
        for &(len, frac) in &phases {
            if len < MIN_SEQ_LEN {
                return Err(Error::Config(format!("sequence length {len} below minimum {MIN_SEQ_LEN}")));
            }
            if !(frac > 0.0 && frac <= 1.0) {
                return Err(Error::Config(format!("phase fraction {frac} outside (0, 1]")));
            }
        }
        let sum: f64 = phases.iter().map(|p| p.1).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("phase fractions sum to {sum}")));
        }
        Ok(PackingSchedule { phases })
    }

    /// Parses `"128:0.9,512:0.1"`; a bare `"128"` is a single phase.
    pub fn parse(s: &str) -> Result<Self> {
        let mut phases = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            let (len, frac) = match part.split_once(':') {
                Some((l, f)) => (l, f.parse::<f64>().map_err(|_| Error::Config(format!("bad phase fraction {f:?}")))?),
                None => (part, 1.0),
            };
            let len = len.parse::<usize>().map_err(|_| Error::Config(format!("bad sequence length {len:?}")))?;
            phases.push((len, frac));
        }
        Self::new(phases)
    }

    /// Integer split of `total` steps or examples across phases.
    pub fn counts(&self, total: usize) -> Vec<usize> {
        let fractions: Vec<f64> = self.phases.iter().map(|p| p.1).collect();
        apportion(&fractions, total)
    }

    pub fn render(&self) -> String {
        self.phases.iter().map(|(l, f)| format!("{l}:{f}")).collect::<Vec<_>>().join(",")
    }
}

/// Truncates the longer of the two segments (A on ties) from the end until
/// both fit in `budget`. `false` when even one token each does not fit.
pub fn truncate_pair(a: &mut TokenizedSequence, b: &mut TokenizedSequence, budget: usize) -> bool {
    while a.len() + b.len() > budget {
        let longer = if a.len() >= b.len() { &mut *a } else { &mut *b };
        if longer.len() <= 1 {
            return false;
        }
        longer.ids.pop();
        longer.word_ids.pop();
    }
    !a.is_empty() && !b.is_empty()
}

/// Lays out and masks one pair; `None` when it cannot fit `max_len`.
pub fn build_example(
    a: &TokenizedSequence,
    b: &TokenizedSequence,
    is_next: bool,
    max_len: usize,
    vocab_size: usize,
    policy: &MaskingPolicy,
    rng: &mut rng::Rng,
) -> Option<PretrainExample> {
    let mut a = a.clone();
    let mut b = b.clone();
    if max_len < MIN_SEQ_LEN || !truncate_pair(&mut a, &mut b, max_len - 3) {
        return None;
    }
    let b_offset = a.word_ids.iter().flatten().max().map_or(0, |w| w + 1);

    let n = a.len() + b.len() + 3;
    let mut ids = Vec::with_capacity(n);
    let mut segment_ids = Vec::with_capacity(n);
    let mut word_ids = Vec::with_capacity(n);
    let mut push = |id: u32, seg: u8, word: Option<u32>| {
        ids.push(id);
        segment_ids.push(seg);
        word_ids.push(word);
    };
    push(CLS_ID, 0, None);
    for (&id, &w) in a.ids.iter().zip(&a.word_ids) {
        push(id, 0, w);
    }
    push(SEP_ID, 0, None);
    for (&id, &w) in b.ids.iter().zip(&b.word_ids) {
        push(id, 1, w.map(|w| w + b_offset));
    }
    push(SEP_ID, 1, None);

    let m = apply_masking(&ids, &word_ids, vocab_size, policy, rng);
    Some(PretrainExample {
        ids: m.ids,
        segment_ids,
        word_ids,
        masked_positions: m.positions,
        masked_labels: m.labels,
        replacements: m.replacements,
        is_next,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseExamples {
    pub max_len: usize,
    pub examples: Vec<PretrainExample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackedData {
    pub phases: Vec<PhaseExamples>,
    /// Pairs dropped because they could not fit their phase length.
    pub skipped: usize,
    /// The corpus had a single document, so negatives came from it too.
    pub single_document: bool,
}

impl PackedData {
    pub fn examples(&self) -> impl Iterator<Item = &PretrainExample> {
        self.phases.iter().flat_map(|p| p.examples.iter())
    }
}

/// Generates `total` examples split across the schedule phases. Examples are
/// produced in shards of [`SHARD_EXAMPLES`], shard `k` of phase `p` drawing
/// from the random stream `(seed, p << 32 | k)`.
pub fn pack(
    corpus: &Corpus,
    vocab: &SubwordVocab,
    schedule: &PackingSchedule,
    policy: &MaskingPolicy,
    total: usize,
) -> Result<PackedData> {
    policy.validate()?;
    let sampler = NspSampler::new(corpus)?;
    let segments: Vec<TokenizedSequence> = corpus.segments().map(|(_, _, text)| vocab.encode(text)).collect();
    if segments.iter().any(TokenizedSequence::is_empty) {
        return Err(Error::Invariant("segment tokenized to nothing".into()));
    }

    let mut phases = Vec::new();
    let mut skipped = 0;
    for (phase_idx, (&(max_len, _), count)) in schedule.phases.iter().zip(schedule.counts(total)).enumerate() {
        let shards = count.div_ceil(SHARD_EXAMPLES);
        let results: Vec<(Vec<PretrainExample>, usize)> = (0..shards)
            .into_par_iter()
            .map(|k| {
                let want = SHARD_EXAMPLES.min(count - k * SHARD_EXAMPLES);
                let mut rng = rng::derived(policy.seed, ((phase_idx as u64) << 32) | k as u64);
                let mut out = Vec::with_capacity(want);
                let mut dropped = 0;
                while out.len() < want {
                    let pair = sampler.sample(&mut rng);
                    let a = &segments[sampler.flat_index(pair.a)];
                    let b = &segments[sampler.flat_index(pair.b)];
                    match build_example(a, b, pair.is_next, max_len, vocab.len(), policy, &mut rng) {
                        Some(ex) => out.push(ex),
                        None => {
                            dropped += 1;
                            if dropped > 1000 * want {
                                break;
                            }
                        }
                    }
                }
                (out, dropped)
            })
            .collect();
        let mut examples = Vec::with_capacity(count);
        for (ex, dropped) in results {
            examples.extend(ex);
            skipped += dropped;
        }
        phases.push(PhaseExamples { max_len, examples });
    }
    Ok(PackedData { phases, skipped, single_document: sampler.single_document() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::subword::{Piece, VocabMeta};

    fn letters_vocab() -> SubwordVocab {
        let mut v = Vec::new();
        for c in 'a'..='z' {
            v.push((Piece::initial(c.to_string()), -3.0));
            v.push((Piece::continuation(c.to_string()), -3.0));
        }
        SubwordVocab::new(v, VocabMeta::default()).unwrap()
    }

    fn seq(n: usize) -> TokenizedSequence {
        TokenizedSequence { ids: vec![10; n], word_ids: (0..n as u32).map(Some).collect(), text: String::new() }
    }

    #[test]
    fn truncation_arithmetic() {
        let (mut a, mut b) = (seq(130), seq(10));
        assert!(truncate_pair(&mut a, &mut b, 128 - 3));
        assert_eq!((a.len(), b.len()), (115, 10));

        let (mut a, mut b) = (seq(3), seq(3));
        assert!(!truncate_pair(&mut a, &mut b, 1));
    }

    #[test]
    fn schedule_parsing_and_split() {
        let s = PackingSchedule::parse("128:0.9,512:0.1").unwrap();
        assert_eq!(s, PackingSchedule::default());
        assert_eq!(s.counts(1000), vec![900, 100]);
        assert_eq!(PackingSchedule::parse("64").unwrap().phases, vec![(64, 1.0)]);
        assert!(PackingSchedule::parse("128:0.5").is_err());
        assert!(PackingSchedule::parse("4").is_err());
    }

    fn corpus() -> Corpus {
        let docs = (0..6)
            .map(|d| Document {
                id: format!("d{d}"),
                source: "s".into(),
                paragraphs: (0..4).map(|p| format!("doc {d} para {p} with some extra words here")).collect(),
            })
            .collect();
        Corpus::from_documents(docs).unwrap()
    }

    #[test]
    fn packed_examples_fit_and_are_well_formed() {
        let vocab = letters_vocab();
        let schedule = PackingSchedule::parse("16:0.75,48:0.25").unwrap();
        let policy = MaskingPolicy { seed: 5, ..Default::default() };
        let data = pack(&corpus(), &vocab, &schedule, &policy, 600).unwrap();
        assert_eq!(data.phases[0].examples.len(), 450);
        assert_eq!(data.phases[1].examples.len(), 150);
        assert_eq!(data.skipped, 0);
        for phase in &data.phases {
            for ex in &phase.examples {
                assert!(ex.len() <= phase.max_len);
                ex.validate().unwrap();
            }
        }
        let again = pack(&corpus(), &vocab, &schedule, &policy, 600).unwrap();
        assert_eq!(data, again);
        assert_eq!(masking_stats(data.examples()).wwm_violations, 0);
    }

    #[test]
    fn pack_is_thread_count_independent() {
        let vocab = letters_vocab();
        let schedule = PackingSchedule::parse("32").unwrap();
        let policy = MaskingPolicy { seed: 9, ..Default::default() };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| pack(&corpus(), &vocab, &schedule, &policy, 700).unwrap());
        let b = four.install(|| pack(&corpus(), &vocab, &schedule, &policy, 700).unwrap());
        assert_eq!(a, b);
    }
}
