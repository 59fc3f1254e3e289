//! Unigram-LM subword vocabularies.
//!
//! A piece is either word-initial or a continuation. Continuations display
//! with a leading `#` (`Mediku #aren #era`). Ids are dense: the five special
//! tokens first, then pieces by descending probability (ties broken on the
//! display string).

mod trainer;

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::corpus::{clean_paragraph, Corpus};
use crate::error::{Error, Result};

pub use trainer::{
    char_coverage, e_step, seed_vocab, train_unigram, word_units, EStep, RoundReport, SeedPiece, TrainReport,
    TrainingUnit, UnigramTrainerConfig, DEFAULT_COVERAGE,
};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;
pub const NUM_SPECIALS: u32 = SPECIALS.len() as u32;

pub const CONTINUATION_MARKER: char = '#';
const ESCAPE: char = '\\';

const FILE_MAGIC: &str = "#unigram-vocab";
const FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Piece {
    pub text: String,
    pub continuation: bool,
}

impl Piece {
    pub fn initial(text: impl Into<String>) -> Self {
        Piece { text: text.into(), continuation: false }
    }

    pub fn continuation(text: impl Into<String>) -> Self {
        Piece { text: text.into(), continuation: true }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// `#` prefix for continuations; word-initial pieces that would be
    /// ambiguous are escaped with a backslash.
    pub fn display(&self) -> String {
        if self.continuation {
            format!("{CONTINUATION_MARKER}{}", self.text)
        } else if self.text.starts_with(CONTINUATION_MARKER) || self.text.starts_with(ESCAPE) {
            format!("{ESCAPE}{}", self.text)
        } else {
            self.text.clone()
        }
    }

    pub fn from_display(s: &str) -> Self {
        if let Some(rest) = s.strip_prefix(ESCAPE) {
            Piece::initial(rest)
        } else if let Some(rest) = s.strip_prefix(CONTINUATION_MARKER).filter(|r| !r.is_empty()) {
            Piece::continuation(rest)
        } else {
            Piece::initial(s)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VocabMeta {
    pub target_size: usize,
    pub coverage: f64,
}

impl Default for VocabMeta {
    fn default() -> Self {
        VocabMeta { target_size: 0, coverage: 1.0 }
    }
}

/// Piece inventory with log-probabilities, specials and alphabet.
#[derive(Debug, Clone)]
pub struct SubwordVocab {
    pieces: Vec<Piece>,
    log_probs: Vec<f64>,
    initial: HashMap<String, u32>,
    continuation: HashMap<String, u32>,
    alphabet: BTreeSet<char>,
    max_piece_chars: usize,
    meta: VocabMeta,
}

impl PartialEq for SubwordVocab {
    fn eq(&self, other: &Self) -> bool {
        self.pieces == other.pieces
            && self.log_probs.iter().map(|x| x.to_bits()).eq(other.log_probs.iter().map(|x| x.to_bits()))
            && self.meta == other.meta
    }
}

impl SubwordVocab {
    /// Builds a vocabulary from scored pieces, assigning ids by descending
    /// score. Scores are used as given (hand-built fixtures need not be
    /// normalized; trained vocabularies are).
    pub fn new(mut scored: Vec<(Piece, f64)>, meta: VocabMeta) -> Result<Self> {
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.display().cmp(&b.0.display()))
        });
        Self::from_ordered(scored, meta)
    }

    fn from_ordered(scored: Vec<(Piece, f64)>, meta: VocabMeta) -> Result<Self> {
        let mut initial = HashMap::new();
        let mut continuation = HashMap::new();
        let mut alphabet = BTreeSet::new();
        let mut max_piece_chars = 0;
        for (i, (piece, lp)) in scored.iter().enumerate() {
            if piece.text.is_empty() || piece.text.chars().any(char::is_whitespace) {
                return Err(Error::Input(format!("invalid piece {:?}", piece.text)));
            }
            if !lp.is_finite() {
                return Err(Error::Input(format!("piece {:?} has non-finite score {lp}", piece.display())));
            }
            let id = NUM_SPECIALS + i as u32;
            let map = if piece.continuation { &mut continuation } else { &mut initial };
            if map.insert(piece.text.clone(), id).is_some() {
                return Err(Error::Input(format!("duplicate piece {:?}", piece.display())));
            }
            let n = piece.char_len();
            if n == 1 {
                alphabet.extend(piece.text.chars());
            }
            max_piece_chars = max_piece_chars.max(n);
        }
        let (pieces, log_probs) = scored.into_iter().unzip();
        Ok(SubwordVocab { pieces, log_probs, initial, continuation, alphabet, max_piece_chars, meta })
    }

    /// Vocabulary size including specials.
    pub fn len(&self) -> usize {
        self.pieces.len() + SPECIALS.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    pub fn meta(&self) -> VocabMeta {
        self.meta
    }

    pub fn alphabet(&self) -> &BTreeSet<char> {
        &self.alphabet
    }

    pub fn is_special(id: u32) -> bool {
        id < NUM_SPECIALS
    }

    /// Ids of ordinary (non-special) pieces.
    pub fn piece_ids(&self) -> std::ops::Range<u32> {
        NUM_SPECIALS..self.len() as u32
    }

    pub fn piece(&self, id: u32) -> Option<&Piece> {
        id.checked_sub(NUM_SPECIALS).and_then(|i| self.pieces.get(i as usize))
    }

    pub fn log_prob(&self, id: u32) -> Option<f64> {
        id.checked_sub(NUM_SPECIALS).and_then(|i| self.log_probs.get(i as usize)).copied()
    }

    pub fn display(&self, id: u32) -> String {
        match self.piece(id) {
            Some(p) => p.display(),
            None => SPECIALS.get(id as usize).copied().unwrap_or(UNK).to_string(),
        }
    }

    pub fn id_of(&self, display: &str) -> Option<u32> {
        if let Some(i) = SPECIALS.iter().position(|s| *s == display) {
            return Some(i as u32);
        }
        let p = Piece::from_display(display);
        self.lookup(&p.text, p.continuation)
    }

    fn lookup(&self, text: &str, continuation: bool) -> Option<u32> {
        if continuation { self.continuation.get(text) } else { self.initial.get(text) }.copied()
    }

    /// Sum of piece probabilities; 1 for trained vocabularies.
    pub fn probability_mass(&self) -> f64 {
        self.log_probs.iter().map(|lp| lp.exp()).sum()
    }

    /// Maximum-likelihood segmentation of one whitespace token. Runs of
    /// characters outside the alphabet become a single `[UNK]`.
    pub fn viterbi_tokenize(&self, word: &str) -> Result<Vec<u32>> {
        if word.is_empty() {
            return Err(Error::Input("cannot tokenize an empty word".into()));
        }
        if word.chars().any(char::is_whitespace) {
            return Err(Error::Input(format!("{word:?} is not a single word")));
        }
        let mut out = Vec::new();
        let mut run_start = 0;
        let mut in_alphabet: Option<bool> = None;
        let flush = |start: usize, end: usize, known: bool, out: &mut Vec<u32>| {
            if known {
                match self.viterbi_run(&word[start..end], start == 0) {
                    Some(ids) => out.extend(ids),
                    None => out.push(UNK_ID),
                }
            } else {
                out.push(UNK_ID);
            }
        };
        for (pos, c) in word.char_indices() {
            let known = self.alphabet.contains(&c);
            match in_alphabet {
                Some(k) if k != known => {
                    flush(run_start, pos, k, &mut out);
                    run_start = pos;
                }
                _ => {}
            }
            in_alphabet = Some(known);
        }
        flush(run_start, word.len(), in_alphabet.unwrap_or(false), &mut out);
        Ok(out)
    }

    /// Viterbi over the segmentation lattice of `run`; `None` when no
    /// segmentation exists. Ties: fewer pieces, then lexicographically
    /// smaller piece sequence.
    fn viterbi_run(&self, run: &str, starts_word: bool) -> Option<Vec<u32>> {
        let offsets: Vec<usize> = run.char_indices().map(|(i, _)| i).chain(std::iter::once(run.len())).collect();
        let n = offsets.len() - 1;

        #[derive(Clone, Copy)]
        struct Cell {
            score: f64,
            pieces: usize,
            prev: usize,
            id: u32,
        }
        let mut best: Vec<Option<Cell>> = vec![None; n + 1];
        best[0] = Some(Cell { score: 0.0, pieces: 0, prev: 0, id: 0 });

        let path = |best: &[Option<Cell>], mut end: usize| -> Vec<u32> {
            let mut ids = Vec::new();
            while end > 0 {
                let c = best[end].expect("reachable");
                ids.push(c.id);
                end = c.prev;
            }
            ids.reverse();
            ids
        };

        for end in 1..=n {
            for start in end.saturating_sub(self.max_piece_chars)..end {
                let Some(from) = best[start] else { continue };
                let text = &run[offsets[start]..offsets[end]];
                let Some(id) = self.lookup(text, !(starts_word && start == 0)) else { continue };
                let cand = Cell {
                    score: from.score + self.log_probs[(id - NUM_SPECIALS) as usize],
                    pieces: from.pieces + 1,
                    prev: start,
                    id,
                };
                let better = match best[end] {
                    None => true,
                    Some(cur) if cand.score != cur.score => cand.score > cur.score,
                    Some(cur) if cand.pieces != cur.pieces => cand.pieces < cur.pieces,
                    Some(cur) => {
                        let mut a = path(&best, start);
                        a.push(id);
                        let mut b = path(&best, cur.prev);
                        b.push(cur.id);
                        self.texts(&a) < self.texts(&b)
                    }
                };
                if better {
                    best[end] = Some(cand);
                }
            }
        }
        best[n].map(|_| path(&best, n))
    }

    fn texts<'a>(&'a self, ids: &[u32]) -> Vec<&'a str> {
        ids.iter().map(|&id| self.piece(id).map_or(UNK, |p| p.text.as_str())).collect()
    }

    /// Cleans `text`, splits on whitespace and tokenizes each word. No
    /// specials are added.
    pub fn encode(&self, text: &str) -> TokenizedSequence {
        let text = clean_paragraph(text);
        let mut ids = Vec::new();
        let mut word_ids = Vec::new();
        for (w, word) in text.split_whitespace().enumerate() {
            let pieces = self.viterbi_tokenize(word).expect("non-empty word without whitespace");
            word_ids.extend(std::iter::repeat(Some(w as u32)).take(pieces.len()));
            ids.extend(pieces);
        }
        TokenizedSequence { ids, word_ids, text }
    }

    /// Display forms of the pieces of `text`, space separated.
    pub fn tokenize_display(&self, text: &str) -> String {
        let seq = self.encode(text);
        seq.ids.iter().map(|&id| self.display(id)).collect::<Vec<_>>().join(" ")
    }

    /// Mean number of pieces per whitespace word.
    pub fn fertility(&self, corpus: &Corpus) -> f64 {
        let mut words = 0usize;
        let mut pieces = 0usize;
        for word in corpus.words() {
            words += 1;
            pieces += self.viterbi_tokenize(word).map_or(1, |p| p.len());
        }
        if words == 0 {
            0.0
        } else {
            pieces as f64 / words as f64
        }
    }

    /// Plain-text vocabulary file: a header line, the specials, then one
    /// `piece<TAB>log-prob` line per piece in id order.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{FILE_MAGIC}\tversion={FILE_VERSION}\ttarget_size={}\tcoverage={}",
            self.meta.target_size, self.meta.coverage
        );
        for s in SPECIALS {
            let _ = writeln!(out, "{s}\t0");
        }
        for (p, lp) in self.pieces.iter().zip(&self.log_probs) {
            let _ = writeln!(out, "{}\t{}", p.display(), lp);
        }
        out
    }

    pub fn from_file_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty vocabulary file"))?;
        let mut fields = header.split('\t');
        if fields.next() != Some(FILE_MAGIC) {
            return Err(Error::parse(1, "missing vocabulary header"));
        }
        let mut meta = VocabMeta::default();
        for field in fields {
            let (k, v) = field.split_once('=').ok_or_else(|| Error::parse(1, format!("bad header field {field:?}")))?;
            let bad = |_| Error::parse(1, format!("bad value for {k}: {v:?}"));
            match k {
                "version" => {
                    let version: u32 = v.parse().map_err(bad)?;
                    if version != FILE_VERSION {
                        return Err(Error::parse(1, format!("unsupported vocabulary version {version}")));
                    }
                }
                "target_size" => meta.target_size = v.parse().map_err(bad)?,
                "coverage" => meta.coverage = v.parse().map_err(|_| Error::parse(1, format!("bad coverage {v:?}")))?,
                _ => return Err(Error::parse(1, format!("unknown header field {k:?}"))),
            }
        }
        for expected in SPECIALS {
            let (n, line) = lines.next().ok_or_else(|| Error::parse(1, "truncated specials"))?;
            if line.split('\t').next() != Some(expected) {
                return Err(Error::parse(n, format!("expected special {expected}")));
            }
        }
        let mut scored = Vec::new();
        for (n, line) in lines {
            let (piece, lp) = line.rsplit_once('\t').ok_or_else(|| Error::parse(n, "expected piece<TAB>log-prob"))?;
            let lp: f64 = lp.parse().map_err(|_| Error::parse(n, format!("bad log-prob {lp:?}")))?;
            scored.push((Piece::from_display(piece), lp));
        }
        Self::from_ordered(scored, meta)
    }
}

/// Pieces of a text with their source-word alignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSequence {
    pub ids: Vec<u32>,
    /// Index of the whitespace word each piece came from.
    pub word_ids: Vec<Option<u32>>,
    /// The cleaned text that was tokenized.
    pub text: String,
}

impl TokenizedSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.word_ids.iter().flatten().max().map_or(0, |&w| w as usize + 1)
    }

    /// Rebuilds the text from piece strings, using word alignment for spaces.
    pub fn decode(&self, vocab: &SubwordVocab) -> String {
        let mut out = String::new();
        let mut last: Option<u32> = None;
        for (&id, &w) in self.ids.iter().zip(&self.word_ids) {
            if w != last && !out.is_empty() {
                out.push(' ');
            }
            last = w;
            match vocab.piece(id) {
                Some(p) => out.push_str(&p.text),
                None => out.push_str(&vocab.display(id)),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use proptest::prelude::*;

    fn singles(chars: &str, lp: f64) -> Vec<(Piece, f64)> {
        let mut v = Vec::new();
        let uniq: BTreeSet<char> = chars.chars().collect();
        for c in uniq {
            v.push((Piece::initial(c.to_string()), lp));
            v.push((Piece::continuation(c.to_string()), lp));
        }
        v
    }

    fn vocab(extra: &[(&str, f64)], alphabet: &str) -> SubwordVocab {
        let mut v = singles(alphabet, -10.0);
        v.retain(|(p, _)| !extra.iter().any(|(d, _)| Piece::from_display(d) == *p));
        v.extend(extra.iter().map(|(d, lp)| (Piece::from_display(d), *lp)));
        SubwordVocab::new(v, VocabMeta::default()).unwrap()
    }

    fn displays(v: &SubwordVocab, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| v.display(i)).collect()
    }

    #[test]
    fn medikuarenera() {
        let v = vocab(&[("Mediku", -2.0), ("#aren", -3.0), ("#era", -3.0)], "Medikuarenera");
        let ids = v.viterbi_tokenize("Medikuarenera").unwrap();
        assert_eq!(displays(&v, &ids), ["Mediku", "#aren", "#era"]);
    }

    #[test]
    fn etxerantz_two_vs_four_pieces() {
        let ours = vocab(&[("Etxera", -2.0), ("#ntz", -2.0)], "Etxerantz");
        let ids = ours.viterbi_tokenize("Etxerantz").unwrap();
        assert_eq!(displays(&ours, &ids), ["Etxera", "#ntz"]);

        let chars = vocab(&[("Et", -2.0), ("#xer", -2.0), ("#ant", -2.0), ("#z", -2.0)], "Etxerantz");
        let ids = chars.viterbi_tokenize("Etxerantz").unwrap();
        assert_eq!(displays(&chars, &ids), ["Et", "#xer", "#ant", "#z"]);

        let corpus = Corpus::from_documents(vec![Document {
            id: "d".into(),
            source: "s".into(),
            paragraphs: vec!["Etxerantz".into()],
        }])
        .unwrap();
        assert_eq!(ours.fertility(&corpus), 2.0);
        assert_eq!(chars.fertility(&corpus), 4.0);
    }

    #[test]
    fn whole_word_piece_wins() {
        let v = vocab(&[("etxe", -1.0), ("et", -1.0), ("#xe", -1.0)], "etx");
        assert_eq!(displays(&v, &v.viterbi_tokenize("et").unwrap()), ["et"]);
        assert_eq!(displays(&v, &v.viterbi_tokenize("etxe").unwrap()), ["etxe"]);
    }

    #[test]
    fn ties_prefer_fewer_then_lexicographic() {
        // ab|c and a|bc score the same with the same piece count
        let v = vocab(&[("ab", -1.0), ("#c", -1.0), ("a", -1.0), ("#bc", -1.0)], "abc");
        assert_eq!(displays(&v, &v.viterbi_tokenize("abc").unwrap()), ["a", "#bc"]);
        // abc (-2) equals ab|c (-1 -1) but has fewer pieces
        let v = vocab(&[("ab", -1.0), ("#c", -1.0), ("abc", -2.0)], "abc");
        assert_eq!(displays(&v, &v.viterbi_tokenize("abc").unwrap()), ["abc"]);
    }

    #[test]
    fn unknown_characters() {
        let v = vocab(&[], "ab");
        let ids = v.viterbi_tokenize("aXYb").unwrap();
        assert_eq!(displays(&v, &ids), ["a", "[UNK]", "#b"]);
        assert_eq!(displays(&v, &v.viterbi_tokenize("Zab").unwrap()), ["[UNK]", "#a", "#b"]);
        assert!(v.viterbi_tokenize("").is_err());
    }

    #[test]
    fn encode_alignment() {
        let v = vocab(&[("#bc", -1.0)], "abc");
        let seq = v.encode("a b");
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.word_ids, [Some(0), Some(1)]);

        let v = vocab(&[], "abc");
        let seq = v.encode("c  abc");
        assert_eq!(seq.word_ids, [Some(0), Some(1), Some(1), Some(1)]);
        assert_eq!(seq.decode(&v), "c abc");
    }

    #[test]
    fn single_char_vocab_fertility_is_mean_word_length() {
        let v = vocab(&[], "abcd");
        let corpus = Corpus::from_documents(vec![Document {
            id: "d".into(),
            source: "s".into(),
            paragraphs: vec!["ab abcd a".into()],
        }])
        .unwrap();
        assert!((v.fertility(&corpus) - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn display_escaping() {
        for p in [Piece::initial("#x"), Piece::initial("\\y"), Piece::continuation("#"), Piece::initial("a")] {
            assert_eq!(Piece::from_display(&p.display()), p);
        }
        assert_eq!(Piece::from_display("#"), Piece::initial("#"));
    }

    #[test]
    fn file_roundtrip() {
        let v = vocab(&[("Mediku", -2.123456789012345), ("#aren", -3.0e-7), ("#x#", -0.1)], "Mk#\\");
        let v = SubwordVocab::new(
            v.pieces.iter().cloned().zip(v.log_probs.iter().copied()).collect(),
            VocabMeta { target_size: 50_000, coverage: 0.9995 },
        )
        .unwrap();
        let text = v.to_file_string();
        assert!(text.starts_with("#unigram-vocab\tversion=1\ttarget_size=50000\tcoverage=0.9995\n[PAD]\t0\n"));
        let back = SubwordVocab::from_file_str(&text).unwrap();
        assert_eq!(back, v);
        for id in 0..v.len() as u32 {
            assert_eq!(back.display(id), v.display(id));
        }
    }

    #[test]
    fn bad_files() {
        assert!(SubwordVocab::from_file_str("").is_err());
        assert!(SubwordVocab::from_file_str("#unigram-vocab\tversion=2\n").is_err());
        let err = SubwordVocab::from_file_str("#unigram-vocab\tversion=1\n[PAD]\t0\n[UNK]\t0\n[CLS]\t0\n[SEP]\t0\n[MASK]\t0\na\tx\n")
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 7, .. }), "{err}");
    }

    /// Every segmentation of `word` into vocabulary pieces, with its score.
    fn all_segmentations(v: &SubwordVocab, word: &[char], start: usize) -> Vec<(f64, Vec<u32>)> {
        if start == word.len() {
            return vec![(0.0, vec![])];
        }
        let mut out = Vec::new();
        for end in start + 1..=word.len() {
            let text: String = word[start..end].iter().collect();
            if let Some(id) = v.lookup(&text, start != 0) {
                for (s, mut rest) in all_segmentations(v, word, end) {
                    rest.insert(0, id);
                    out.push((v.log_prob(id).unwrap() + s, rest));
                }
            }
        }
        out
    }

    fn brute_force_best(v: &SubwordVocab, word: &str) -> Vec<u32> {
        let chars: Vec<char> = word.chars().collect();
        let mut segs = all_segmentations(v, &chars, 0);
        segs.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.len().cmp(&b.1.len()))
                .then_with(|| v.texts(&a.1).cmp(&v.texts(&b.1)))
        });
        segs.swap_remove(0).1
    }

    proptest! {
        #[test]
        fn viterbi_matches_enumeration(word in "[ab]{1,8}", scores in prop::collection::vec(-8i32..-1, 14)) {
            let extra = ["ab", "ba", "aab", "#a", "#b", "#ab", "#ba", "#bb", "#aa", "bb", "aa", "#aab", "abab", "#bab"];
            let list: Vec<(&str, f64)> = extra.iter().zip(&scores).map(|(d, s)| (*d, *s as f64 / 2.0)).collect();
            let mut v = singles("ab", -4.0);
            v.retain(|(p, _)| !list.iter().any(|(d, _)| Piece::from_display(d) == *p));
            v.extend(list.iter().map(|(d, lp)| (Piece::from_display(d), *lp)));
            let v = SubwordVocab::new(v, VocabMeta::default()).unwrap();
            prop_assert_eq!(v.viterbi_tokenize(&word).unwrap(), brute_force_best(&v, &word));
        }

        #[test]
        fn decode_encode_roundtrip(text in "[abc]{1,5}( {1,3}[abc]{1,5}){0,4}") {
            let v = vocab(&[("ab", -1.0), ("#bc", -1.5), ("#ca", -2.0)], "abc");
            let seq = v.encode(&text);
            prop_assert_eq!(seq.decode(&v), clean_paragraph(&text));
            prop_assert!(seq.word_ids.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
