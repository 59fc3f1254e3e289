//! Whole-word masking.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::PretrainExample;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::subword::{SubwordVocab, MASK_ID, NUM_SPECIALS};

#[derive(Debug, Clone, PartialEq)]
pub struct MaskingPolicy {
    /// Fraction of maskable tokens selected as prediction targets.
    pub candidate_fraction: f64,
    pub mask_fraction: f64,
    pub random_fraction: f64,
    pub keep_fraction: f64,
    pub whole_word: bool,
    pub seed: u64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        MaskingPolicy {
            candidate_fraction: 0.15,
            mask_fraction: 0.8,
            random_fraction: 0.1,
            keep_fraction: 0.1,
            whole_word: true,
            seed: 0,
        }
    }
}

impl MaskingPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.candidate_fraction) {
            return Err(Error::Config(format!("mask probability {} outside [0, 1)", self.candidate_fraction)));
        }
        let parts = [self.mask_fraction, self.random_fraction, self.keep_fraction];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("replacement split {parts:?} must be fractions summing to 1")));
        }
        Ok(())
    }

    /// Number of tokens to select among `maskable`.
    pub fn target(&self, maskable: usize) -> usize {
        // the epsilon keeps 0.15 * 20 from rounding up to 4
        (self.candidate_fraction * maskable as f64 - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Replacement {
    #[serde(rename = "M")]
    Mask,
    #[serde(rename = "R")]
    Random,
    #[serde(rename = "K")]
    Keep,
}

impl Replacement {
    pub fn code(self) -> u8 {
        match self {
            Replacement::Mask => b'M',
            Replacement::Random => b'R',
            Replacement::Keep => b'K',
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            b'M' => Some(Replacement::Mask),
            b'R' => Some(Replacement::Random),
            b'K' => Some(Replacement::Keep),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Masking {
    /// Input ids after replacement.
    pub ids: Vec<u32>,
    pub positions: Vec<u32>,
    pub labels: Vec<u32>,
    pub replacements: Vec<Replacement>,
}

/// Selects whole words (by `word_ids`) until `ceil(p * N)` of the `N`
/// maskable tokens are covered, then replaces each selected token with
/// `[MASK]`, a random non-special piece, or itself.
///
/// Words that would overshoot the target are deferred; if the target is
/// still not met, the shortest deferred word is added, so the count never
/// exceeds the target by more than one word.
pub fn apply_masking(
    ids: &[u32],
    word_ids: &[Option<u32>],
    vocab_size: usize,
    policy: &MaskingPolicy,
    rng: &mut Rng,
) -> Masking {
    // groups of positions that are masked together
    let mut groups: Vec<Vec<u32>> = Vec::new();
    let mut last_word: Option<u32> = None;
    for (pos, (&id, &word)) in ids.iter().zip(word_ids).enumerate() {
        let Some(w) = word else {
            last_word = None;
            continue;
        };
        if SubwordVocab::is_special(id) {
            continue;
        }
        if policy.whole_word && last_word == Some(w) {
            groups.last_mut().expect("open group").push(pos as u32);
        } else {
            groups.push(vec![pos as u32]);
        }
        last_word = Some(w);
    }
    let maskable: usize = groups.iter().map(Vec::len).sum();
    let target = policy.target(maskable);

    groups.shuffle(rng);
    let mut positions: Vec<u32> = Vec::with_capacity(target + 4);
    let mut deferred: Option<&Vec<u32>> = None;
    for g in &groups {
        if positions.len() >= target {
            break;
        }
        if positions.len() + g.len() <= target {
            positions.extend(g);
        } else if deferred.is_none_or(|d| g.len() < d.len()) {
            deferred = Some(g);
        }
    }
    if positions.len() < target {
        if let Some(g) = deferred {
            positions.extend(g);
        }
    }
    positions.sort_unstable();

    let mut out = ids.to_vec();
    let mut labels = Vec::with_capacity(positions.len());
    let mut replacements = Vec::with_capacity(positions.len());
    for &p in &positions {
        let p = p as usize;
        labels.push(ids[p]);
        let u: f64 = rng.gen();
        let r = if u < policy.mask_fraction {
            out[p] = MASK_ID;
            Replacement::Mask
        } else if u < policy.mask_fraction + policy.random_fraction && vocab_size > NUM_SPECIALS as usize {
            out[p] = rng.gen_range(NUM_SPECIALS..vocab_size as u32);
            Replacement::Random
        } else {
            Replacement::Keep
        };
        replacements.push(r);
    }
    Masking { ids: out, positions, labels, replacements }
}

/// Observed masking behaviour over a set of examples.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MaskingReport {
    pub examples: usize,
    pub maskable_tokens: usize,
    pub masked_tokens: usize,
    pub candidate_fraction: f64,
    pub mask_fraction: f64,
    pub random_fraction: f64,
    pub keep_fraction: f64,
    /// Unmasked positions that share a word with a masked position.
    pub wwm_violations: usize,
}

pub fn masking_stats<'a>(examples: impl IntoIterator<Item = &'a PretrainExample>) -> MaskingReport {
    let mut r = MaskingReport::default();
    let (mut mask, mut random, mut keep) = (0usize, 0usize, 0usize);
    for ex in examples {
        r.examples += 1;
        let original = ex.original_ids();
        r.maskable_tokens += original
            .iter()
            .zip(&ex.word_ids)
            .filter(|(&id, w)| w.is_some() && !SubwordVocab::is_special(id))
            .count();
        r.masked_tokens += ex.masked_positions.len();
        for rep in &ex.replacements {
            match rep {
                Replacement::Mask => mask += 1,
                Replacement::Random => random += 1,
                Replacement::Keep => keep += 1,
            }
        }
        let mut masked = vec![false; ex.ids.len()];
        for &p in &ex.masked_positions {
            masked[p as usize] = true;
        }
        for &p in &ex.masked_positions {
            let Some(w) = ex.word_ids[p as usize] else { continue };
            r.wwm_violations += ex
                .word_ids
                .iter()
                .enumerate()
                .filter(|&(q, &wq)| wq == Some(w) && !masked[q])
                .count();
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    r.candidate_fraction = ratio(r.masked_tokens, r.maskable_tokens);
    r.mask_fraction = ratio(mask, r.masked_tokens);
    r.random_fraction = ratio(random, r.masked_tokens);
    r.keep_fraction = ratio(keep, r.masked_tokens);
    r
}
