//! Unigram vocabulary training: character coverage, frequency-ranked seed
//! pieces, then alternating EM rounds and utility pruning.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use super::{Piece, SubwordVocab, VocabMeta, NUM_SPECIALS};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const DEFAULT_COVERAGE: f64 = 0.9995;

/// Units per E-step shard. Fixed so that merged counts do not depend on the
/// number of worker threads.
const SHARD_UNITS: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct UnigramTrainerConfig {
    /// Total vocabulary size, specials included.
    pub target_size: usize,
    /// Seed candidate count; `None` means ten times `target_size`.
    pub seed_size: Option<usize>,
    pub max_piece_len: usize,
    pub shrink_factor: f64,
    pub em_iterations: usize,
    pub coverage: f64,
}

impl Default for UnigramTrainerConfig {
    fn default() -> Self {
        UnigramTrainerConfig {
            target_size: 50_000,
            seed_size: None,
            max_piece_len: 16,
            shrink_factor: 0.75,
            em_iterations: 2,
            coverage: DEFAULT_COVERAGE,
        }
    }
}

impl UnigramTrainerConfig {
    pub fn seed_size(&self) -> usize {
        self.seed_size.unwrap_or(self.target_size * 10)
    }

    fn validate(&self) -> Result<()> {
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::Config(format!("coverage {} outside (0, 1]", self.coverage)));
        }
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0) {
            return Err(Error::Config(format!("shrink factor {} outside (0, 1)", self.shrink_factor)));
        }
        if self.max_piece_len == 0 || self.em_iterations == 0 {
            return Err(Error::Config("max piece length and EM iterations must be positive".into()));
        }
        Ok(())
    }
}

/// A maximal run of alphabet characters inside a word, with its corpus
/// frequency. `starts_word` marks runs that begin at the word start.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TrainingUnit {
    pub text: String,
    pub starts_word: bool,
    pub count: u64,
}

/// Smallest set of characters, taken by descending frequency, covering at
/// least `coverage` of all non-whitespace character occurrences.
pub fn char_coverage(corpus: &Corpus, coverage: f64) -> BTreeSet<char> {
    let mut freq: HashMap<char, u64> = HashMap::new();
    for word in corpus.words() {
        for c in word.chars() {
            *freq.entry(c).or_default() += 1;
        }
    }
    let total: u64 = freq.values().sum();
    let mut ranked: Vec<(char, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let needed = coverage * total as f64;
    let mut covered = 0u64;
    let mut alphabet = BTreeSet::new();
    for (c, n) in ranked {
        if covered as f64 >= needed - 1e-9 {
            break;
        }
        alphabet.insert(c);
        covered += n;
    }
    alphabet
}

/// Word-type frequencies split into alphabet-only runs.
pub fn word_units(corpus: &Corpus, alphabet: &BTreeSet<char>) -> Vec<TrainingUnit> {
    let mut words: HashMap<&str, u64> = HashMap::new();
    for w in corpus.words() {
        *words.entry(w).or_default() += 1;
    }
    let mut runs: HashMap<(String, bool), u64> = HashMap::new();
    for (word, count) in words {
        let mut start: Option<usize> = None;
        for (i, c) in word.char_indices().chain(std::iter::once((word.len(), ' '))) {
            let known = i < word.len() && alphabet.contains(&c);
            match (known, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    *runs.entry((word[s..i].to_string(), s == 0)).or_default() += count;
                    start = None;
                }
                _ => {}
            }
        }
    }
    let mut units: Vec<TrainingUnit> = runs
        .into_iter()
        .map(|((text, starts_word), count)| TrainingUnit { text, starts_word, count })
        .collect();
    units.sort();
    units
}

/// Candidate piece with its initial log-probability.
pub type SeedPiece = (Piece, f64);

fn required_singles(alphabet: &BTreeSet<char>) -> Vec<Piece> {
    alphabet
        .iter()
        .flat_map(|c| [Piece::initial(c.to_string()), Piece::continuation(c.to_string())])
        .collect()
}

/// Every alphabet character (in both initial and continuation form) plus the
/// highest `frequency * length` substrings of length `2..=max_len`, up to
/// `seed_size` pieces in total. Initial probabilities are proportional to
/// the same score.
pub fn seed_vocab(
    units: &[TrainingUnit],
    alphabet: &BTreeSet<char>,
    seed_size: usize,
    max_len: usize,
) -> Result<Vec<SeedPiece>> {
    let singles = required_singles(alphabet);
    if seed_size < singles.len() {
        return Err(Error::Config(format!(
            "seed size {seed_size} is smaller than the {} single-character pieces",
            singles.len()
        )));
    }
    let mut freq: HashMap<Piece, u64> = HashMap::new();
    for unit in units {
        let offsets: Vec<usize> =
            unit.text.char_indices().map(|(i, _)| i).chain(std::iter::once(unit.text.len())).collect();
        let n = offsets.len() - 1;
        for start in 0..n {
            for end in start + 1..=n.min(start + max_len) {
                let piece = Piece {
                    text: unit.text[offsets[start]..offsets[end]].to_string(),
                    continuation: !(unit.starts_word && start == 0),
                };
                *freq.entry(piece).or_default() += unit.count;
            }
        }
    }

    let score = |p: &Piece| freq.get(p).copied().unwrap_or(0) * p.char_len() as u64;
    let mut multi: Vec<(Piece, u64)> =
        freq.keys().filter(|p| p.char_len() > 1).map(|p| (p.clone(), score(p))).collect();
    multi.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.display().cmp(&b.0.display())));
    multi.truncate(seed_size - singles.len());

    let mut scored: Vec<(Piece, f64)> =
        singles.into_iter().map(|p| { let s = score(&p).max(1) as f64; (p, s) }).collect();
    scored.extend(multi.into_iter().map(|(p, s)| (p, s as f64)));
    let total: f64 = scored.iter().map(|(_, s)| s).sum();
    Ok(scored.into_iter().map(|(p, s)| (p, (s / total).ln())).collect())
}

/// Result of one E-step.
#[derive(Debug, Clone)]
pub struct EStep {
    /// Expected occurrence count of every piece, frequency weighted.
    pub counts: Vec<f64>,
    /// Corpus log-likelihood under the current piece probabilities.
    pub log_likelihood: f64,
}

struct Lattices {
    /// Per unit: `(start, end, piece index)` edges over char positions.
    edges: Vec<Vec<(u16, u16, u32)>>,
    lengths: Vec<u16>,
    weights: Vec<f64>,
}

impl Lattices {
    fn build(pieces: &[Piece], units: &[TrainingUnit]) -> Self {
        let mut index: HashMap<(bool, &str), u32> = HashMap::new();
        let mut max_len = 1;
        for (i, p) in pieces.iter().enumerate() {
            index.insert((p.continuation, p.text.as_str()), i as u32);
            max_len = max_len.max(p.char_len());
        }
        let mut edges = Vec::with_capacity(units.len());
        let mut lengths = Vec::with_capacity(units.len());
        for unit in units {
            let offsets: Vec<usize> =
                unit.text.char_indices().map(|(i, _)| i).chain(std::iter::once(unit.text.len())).collect();
            let n = offsets.len() - 1;
            let mut e = Vec::new();
            for start in 0..n {
                for end in start + 1..=n.min(start + max_len) {
                    let key = (!(unit.starts_word && start == 0), &unit.text[offsets[start]..offsets[end]]);
                    if let Some(&id) = index.get(&key) {
                        e.push((start as u16, end as u16, id));
                    }
                }
            }
            edges.push(e);
            lengths.push(n as u16);
        }
        Lattices { edges, lengths, weights: units.iter().map(|u| u.count as f64).collect() }
    }

    fn e_step(&self, log_probs: &[f64]) -> Result<EStep> {
        let n_pieces = log_probs.len();
        let shards: Vec<Result<(Vec<f64>, f64)>> = (0..self.edges.len())
            .collect::<Vec<_>>()
            .par_chunks(SHARD_UNITS)
            .map(|chunk| {
                let mut counts = vec![0.0; n_pieces];
                let mut ll = 0.0;
                for &u in chunk {
                    ll += self.weights[u] * forward_backward(&self.edges[u], self.lengths[u] as usize, log_probs, self.weights[u], &mut counts)?;
                }
                Ok((counts, ll))
            })
            .collect();
        let mut counts = vec![0.0; n_pieces];
        let mut log_likelihood = 0.0;
        for shard in shards {
            let (c, ll) = shard?;
            for (a, b) in counts.iter_mut().zip(c) {
                *a += b;
            }
            log_likelihood += ll;
        }
        Ok(EStep { counts, log_likelihood })
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Adds `weight * posterior` of every edge to `counts`; returns log Z.
fn forward_backward(edges: &[(u16, u16, u32)], n: usize, log_probs: &[f64], weight: f64, counts: &mut [f64]) -> Result<f64> {
    let mut alpha = vec![f64::NEG_INFINITY; n + 1];
    alpha[0] = 0.0;
    // edges are sorted by start, which is what the forward pass needs when
    // processed by end position; sort a view by end for alpha.
    let mut by_end: Vec<&(u16, u16, u32)> = edges.iter().collect();
    by_end.sort_by_key(|e| e.1);
    for &&(s, e, id) in &by_end {
        let lp = log_probs[id as usize];
        if lp > f64::NEG_INFINITY {
            alpha[e as usize] = log_add(alpha[e as usize], alpha[s as usize] + lp);
        }
    }
    let log_z = alpha[n];
    if log_z == f64::NEG_INFINITY {
        return Err(Error::Invariant("training unit has no segmentation".into()));
    }
    let mut beta = vec![f64::NEG_INFINITY; n + 1];
    beta[n] = 0.0;
    for &(s, e, id) in edges.iter().rev() {
        let lp = log_probs[id as usize];
        if lp > f64::NEG_INFINITY {
            beta[s as usize] = log_add(beta[s as usize], lp + beta[e as usize]);
        }
    }
    for &(s, e, id) in edges {
        let lp = log_probs[id as usize];
        if lp > f64::NEG_INFINITY {
            counts[id as usize] += weight * (alpha[s as usize] + lp + beta[e as usize] - log_z).exp();
        }
    }
    Ok(log_z)
}

/// Expected piece counts and corpus log-likelihood over the segmentation
/// lattices of `units`.
pub fn e_step(pieces: &[Piece], log_probs: &[f64], units: &[TrainingUnit]) -> Result<EStep> {
    Lattices::build(pieces, units).e_step(log_probs)
}

fn m_step(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| if *c > 0.0 { (c / total).ln() } else { f64::NEG_INFINITY }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub pieces: usize,
    /// Log-likelihood before each M-step of the round.
    pub log_likelihoods: Vec<f64>,
    pub pruned_to: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub alphabet_size: usize,
    pub seed_pieces: usize,
    pub rounds: Vec<RoundReport>,
}

/// Gives zero-probability single characters a small floor and renormalizes.
fn floor_singles(pieces: &[Piece], log_probs: &mut [f64]) {
    let min_positive = log_probs.iter().copied().filter(|lp| lp.is_finite()).fold(f64::INFINITY, f64::min);
    let floor = min_positive + 1e-3f64.ln();
    for (p, lp) in pieces.iter().zip(log_probs.iter_mut()) {
        if p.char_len() == 1 && !lp.is_finite() {
            *lp = floor;
        }
    }
    let total = log_probs.iter().filter(|lp| lp.is_finite()).map(|lp| lp.exp()).sum::<f64>().ln();
    for lp in log_probs.iter_mut() {
        *lp -= total;
    }
}

/// Trains a unigram vocabulary of at most `config.target_size` entries
/// (specials included).
pub fn train_unigram(corpus: &Corpus, config: &UnigramTrainerConfig) -> Result<(SubwordVocab, TrainReport)> {
    config.validate()?;
    let alphabet = char_coverage(corpus, config.coverage);
    let required = 2 * alphabet.len() + NUM_SPECIALS as usize;
    if config.target_size < required {
        return Err(Error::Config(format!(
            "target size {} cannot hold {} specials and {} single-character pieces",
            config.target_size,
            NUM_SPECIALS,
            2 * alphabet.len()
        )));
    }
    let target_pieces = config.target_size - NUM_SPECIALS as usize;
    let units = word_units(corpus, &alphabet);
    let seed = seed_vocab(&units, &alphabet, config.seed_size().max(2 * alphabet.len()), config.max_piece_len)?;

    let mut report = TrainReport { alphabet_size: alphabet.len(), seed_pieces: seed.len(), rounds: Vec::new() };
    let (mut pieces, mut log_probs): (Vec<Piece>, Vec<f64>) = seed.into_iter().unzip();

    loop {
        let lattices = Lattices::build(&pieces, &units);
        let mut round = RoundReport { pieces: pieces.len(), log_likelihoods: Vec::new(), pruned_to: None };
        let mut counts = Vec::new();
        for _ in 0..config.em_iterations {
            let step = lattices.e_step(&log_probs)?;
            round.log_likelihoods.push(step.log_likelihood);
            log_probs = m_step(&step.counts);
            counts = step.counts;
        }
        if pieces.len() <= target_pieces {
            report.rounds.push(round);
            break;
        }

        let keep = ((pieces.len() as f64 * config.shrink_factor).ceil() as usize)
            .min(pieces.len() - 1)
            .max(target_pieces);
        let mut removable: Vec<(usize, f64)> = (0..pieces.len())
            .filter(|&i| pieces[i].char_len() > 1)
            .map(|i| {
                let utility = if counts[i] > 0.0 { -counts[i] * log_probs[i] } else { 0.0 };
                (i, utility)
            })
            .collect();
        removable.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| pieces[b.0].display().cmp(&pieces[a.0].display()))
        });
        let drop_n = (pieces.len() - keep).min(removable.len());
        let mut dropped = vec![false; pieces.len()];
        for &(i, _) in &removable[..drop_n] {
            dropped[i] = true;
        }
        let (p, lp): (Vec<Piece>, Vec<f64>) = pieces
            .into_iter()
            .zip(log_probs)
            .zip(dropped)
            .filter(|(_, d)| !d)
            .map(|(x, _)| x)
            .unzip();
        pieces = p;
        log_probs = lp;
        floor_singles(&pieces, &mut log_probs);
        round.pruned_to = Some(pieces.len());
        report.rounds.push(round);
    }

    let mut scored: Vec<(Piece, f64)> =
        pieces.into_iter().zip(log_probs).filter(|(p, lp)| lp.is_finite() || p.char_len() == 1).collect();
    let (p, mut lp): (Vec<Piece>, Vec<f64>) = scored.drain(..).unzip();
    floor_singles(&p, &mut lp);
    let vocab = SubwordVocab::new(
        p.into_iter().zip(lp).collect(),
        VocabMeta { target_size: config.target_size, coverage: config.coverage },
    )?;
    Ok((vocab, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use proptest::prelude::*;

    fn corpus(paragraphs: &[&str]) -> Corpus {
        Corpus::from_documents(vec![Document {
            id: "d".into(),
            source: "s".into(),
            paragraphs: paragraphs.iter().map(|s| s.to_string()).collect(),
        }])
        .unwrap()
    }

    #[test]
    fn coverage_examples() {
        let c = corpus(&["aaab"]);
        assert_eq!(char_coverage(&c, 0.75), BTreeSet::from(['a']));
        assert_eq!(char_coverage(&c, 1.0), BTreeSet::from(['a', 'b']));

        let text = format!("{} {} c", "a".repeat(1000), "b".repeat(10));
        let c = corpus(&[&text]);
        let alphabet = char_coverage(&c, 0.999);
        assert_eq!(alphabet, BTreeSet::from(['a', 'b']));
    }

    #[test]
    fn units_split_on_unknown_chars() {
        let c = corpus(&["abXab ab"]);
        let units = word_units(&c, &BTreeSet::from(['a', 'b']));
        assert_eq!(
            units,
            vec![
                TrainingUnit { text: "ab".into(), starts_word: false, count: 1 },
                TrainingUnit { text: "ab".into(), starts_word: true, count: 2 },
            ]
        );
    }

    #[test]
    fn seed_ranks_by_frequency_times_length() {
        let text = vec!["abab"; 100].join(" ");
        let c = corpus(&[&text]);
        let alphabet = char_coverage(&c, 1.0);
        let units = word_units(&c, &alphabet);
        let seed = seed_vocab(&units, &alphabet, 8, 4).unwrap();
        let names: Vec<String> = seed.iter().map(|(p, _)| p.display()).collect();
        // 4 singles + top 4 of: abab 400, aba 300, #bab 300, ab 200, #ab 200, #ba 200
        assert_eq!(&names[4..], ["abab", "#bab", "aba", "#ab"]);
        let seed = seed_vocab(&units, &alphabet, 20, 4).unwrap();
        let names: Vec<String> = seed.iter().map(|(p, _)| p.display()).collect();
        for want in ["ab", "abab", "#ba"] {
            assert!(names.contains(&want.to_string()), "{want}");
        }
        let mass: f64 = seed.iter().map(|(_, lp)| lp.exp()).sum();
        assert!((mass - 1.0).abs() < 1e-12);

        let exact = seed_vocab(&units, &alphabet, 4, 4).unwrap();
        assert!(exact.iter().all(|(p, _)| p.char_len() == 1));
        assert!(seed_vocab(&units, &alphabet, 3, 4).is_err());
    }

    #[test]
    fn two_piece_em_prefers_the_long_piece() {
        let text = vec!["aa"; 100].join(" ");
        let c = corpus(&[&text]);
        let config = UnigramTrainerConfig {
            target_size: 5 + 3,
            seed_size: Some(3),
            max_piece_len: 2,
            em_iterations: 10,
            ..Default::default()
        };
        let (vocab, _) = train_unigram(&c, &config).unwrap();
        let aa = vocab.id_of("aa").unwrap();
        assert_eq!(vocab.viterbi_tokenize("aa").unwrap(), vec![aa]);
        let p_aa = vocab.log_prob(aa).unwrap().exp();
        let p_a = vocab.log_prob(vocab.id_of("a").unwrap()).unwrap().exp();
        assert!(p_aa > 0.5 && p_aa > 10.0 * p_a, "p(aa) = {p_aa}, p(a) = {p_a}");
    }

    #[test]
    fn target_size_must_hold_alphabet() {
        let c = corpus(&["abc"]);
        let config = UnigramTrainerConfig { target_size: 10, ..Default::default() };
        assert!(matches!(train_unigram(&c, &config), Err(Error::Config(_))));
    }

    #[test]
    fn trained_vocab_invariants() {
        let words = ["etxera", "etxean", "etxetik", "medikua", "medikuarenera", "mendira", "mendian", "kalera", "kalean"];
        let text: Vec<String> = (0..60).map(|i| words[(i * 7 + i / 3) % words.len()].to_string()).collect();
        let c = corpus(&[&text.join(" ")]);
        let config = UnigramTrainerConfig { target_size: 60, seed_size: Some(300), ..Default::default() };
        let (vocab, report) = train_unigram(&c, &config).unwrap();
        assert!(vocab.len() <= 60);
        assert!((vocab.probability_mass() - 1.0).abs() < 1e-6);
        for &ch in vocab.alphabet() {
            assert!(vocab.id_of(&ch.to_string()).is_some());
            assert!(vocab.id_of(&format!("#{ch}")).is_some());
        }
        for round in &report.rounds {
            for w in round.log_likelihoods.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{:?}", round.log_likelihoods);
            }
        }
        for w in words {
            assert!(!vocab.viterbi_tokenize(w).unwrap().contains(&super::super::UNK_ID));
        }
        assert!(report.rounds.len() > 1);
    }

    /// Brute-force oracle: enumerate every segmentation of `word`.
    fn enumerate(word: &[char], start: usize, starts_word: bool, pieces: &[Piece]) -> Vec<Vec<usize>> {
        if start == word.len() {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for end in start + 1..=word.len() {
            let text: String = word[start..end].iter().collect();
            let cont = !(starts_word && start == 0);
            if let Some(i) = pieces.iter().position(|p| p.text == text && p.continuation == cont) {
                for mut rest in enumerate(word, end, starts_word, pieces) {
                    rest.insert(0, i);
                    out.push(rest);
                }
            }
        }
        out
    }

    fn oracle_counts(pieces: &[Piece], log_probs: &[f64], units: &[TrainingUnit]) -> (Vec<f64>, f64) {
        let mut counts = vec![0.0; pieces.len()];
        let mut ll = 0.0;
        for u in units {
            let chars: Vec<char> = u.text.chars().collect();
            let segs = enumerate(&chars, 0, u.starts_word, pieces);
            let probs: Vec<f64> = segs.iter().map(|s| s.iter().map(|&i| log_probs[i]).sum::<f64>().exp()).collect();
            let z: f64 = probs.iter().sum();
            ll += u.count as f64 * z.ln();
            for (s, p) in segs.iter().zip(&probs) {
                for &i in s {
                    counts[i] += u.count as f64 * p / z;
                }
            }
        }
        (counts, ll)
    }

    fn all_ab_pieces() -> Vec<Piece> {
        let mut strings = Vec::new();
        for len in 1..=4 {
            for bits in 0..(1u32 << len) {
                strings.push((0..len).map(|k| if bits >> k & 1 == 1 { 'b' } else { 'a' }).collect::<String>());
            }
        }
        strings.iter().flat_map(|s| [Piece::initial(s.clone()), Piece::continuation(s.clone())]).collect()
    }

    proptest! {
        #[test]
        fn e_step_matches_enumeration(
            units in prop::collection::vec(("[ab]{1,4}", any::<bool>(), 1u64..5), 1..6),
            weights in prop::collection::vec(0.05f64..1.0, 60),
            keep in prop::collection::vec(any::<bool>(), 60),
        ) {
            let all = all_ab_pieces();
            let mut pieces = Vec::new();
            let mut raw = Vec::new();
            for (i, p) in all.iter().enumerate() {
                if p.char_len() == 1 || keep[i] {
                    pieces.push(p.clone());
                    raw.push(weights[i]);
                }
            }
            let total: f64 = raw.iter().sum();
            let log_probs: Vec<f64> = raw.iter().map(|w| (w / total).ln()).collect();
            let units: Vec<TrainingUnit> = units.into_iter().map(|(text, starts_word, count)| TrainingUnit { text, starts_word, count }).collect();

            let step = e_step(&pieces, &log_probs, &units).unwrap();
            let (counts, ll) = oracle_counts(&pieces, &log_probs, &units);
            prop_assert!((step.log_likelihood - ll).abs() < 1e-9);
            for (a, b) in step.counts.iter().zip(&counts) {
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }
    }
}
