use euslm_core::corpus::ingest;
use euslm_core::pretrain_data::{masking_stats, pack, read_binary, read_jsonl, write_binary, write_jsonl, MaskingPolicy, PackingSchedule};
use euslm_core::subword::{train_unigram, UnigramTrainerConfig};
use euslm_core::{SplitSpec, SubwordVocab};
use proptest::prelude::*;

const TEXT: &str = "#source:news
Etxe berria erosi dute herrian.
Gaur goizean euria egin du.

Mendiko bidea luzea da.
Etxe zaharra saldu dute.
Mendiko bidea luzea da.

Itsasoa lasai dago gaur.
Portuan txalupak daude.

Herriko jaiak hasi dira.
Kalean jende asko dago.
";

fn vocab() -> (euslm_core::Corpus, SubwordVocab) {
    let corpus = ingest(TEXT.as_bytes(), "news").unwrap();
    let config = UnigramTrainerConfig { target_size: 60, ..Default::default() };
    let (vocab, _) = train_unigram(&corpus, &config).unwrap();
    (corpus, vocab)
}

#[test]
fn ingest_drops_duplicate_paragraphs_and_keeps_order() {
    let corpus = ingest(TEXT.as_bytes(), "news").unwrap();
    assert_eq!(corpus.len(), 4);
    assert_eq!(corpus.paragraph_count(), 8);
    assert_eq!(corpus.documents()[1].paragraphs, ["Mendiko bidea luzea da.", "Etxe zaharra saldu dute."]);
    assert_eq!(corpus.stats().total_tokens, 33);
    let again = ingest(corpus.to_text().as_bytes(), "news").unwrap();
    assert_eq!(again.documents(), corpus.documents());
}

#[test]
fn split_covers_every_document_once() {
    let corpus = ingest(TEXT.as_bytes(), "news").unwrap();
    let parts = corpus.split(&SplitSpec::new(vec![0.5, 0.25, 0.25], 3).unwrap()).unwrap();
    let mut ids: Vec<&str> = parts.iter().flat_map(|p| p.documents().iter().map(|d| d.id.as_str())).collect();
    ids.sort();
    let mut all: Vec<&str> = corpus.documents().iter().map(|d| d.id.as_str()).collect();
    all.sort();
    assert_eq!(ids, all);
    assert_eq!(parts.iter().map(|p| p.len()).collect::<Vec<_>>(), [2, 1, 1]);
}

#[test]
fn vocabulary_file_round_trips() {
    let (corpus, vocab) = vocab();
    let back = SubwordVocab::from_file_str(&vocab.to_file_string()).unwrap();
    assert_eq!(back.to_file_string(), vocab.to_file_string());
    for w in corpus.words() {
        assert_eq!(back.viterbi_tokenize(w).unwrap(), vocab.viterbi_tokenize(w).unwrap());
    }
}

#[test]
fn packed_examples_survive_both_formats() {
    let (corpus, vocab) = vocab();
    let data = pack(&corpus, &vocab, &PackingSchedule::parse("32").unwrap(), &MaskingPolicy { seed: 4, ..Default::default() }, 50).unwrap();
    let examples: Vec<_> = data.examples().cloned().collect();
    assert_eq!(examples.len(), 50);
    for ex in &examples {
        ex.validate().unwrap();
        assert!(ex.len() <= 32);
    }
    assert_eq!(masking_stats(&examples).wwm_violations, 0);

    let mut jsonl = Vec::new();
    write_jsonl(&mut jsonl, &examples).unwrap();
    assert_eq!(read_jsonl(&jsonl[..]).unwrap(), examples);
    let mut bin = Vec::new();
    write_binary(&mut bin, 32, &examples).unwrap();
    let (size, back) = read_binary(&bin[..]).unwrap();
    assert_eq!((size, back), (32, examples));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoding_decodes_to_the_cleaned_text(words in prop::collection::vec("[a-z]{1,9}", 1..8)) {
        let (_, vocab) = vocab();
        let text = words.join(" ");
        let seq = vocab.encode(&text);
        prop_assert_eq!(seq.word_count(), words.len());
        if words.iter().flat_map(|w| w.chars()).all(|c| vocab.alphabet().contains(&c)) {
            prop_assert_eq!(seq.decode(&vocab), text);
        }
    }

    #[test]
    fn packing_is_deterministic_in_the_seed(seed in 0u64..1000) {
        let (corpus, vocab) = vocab();
        let schedule = PackingSchedule::parse("24:0.5,48:0.5").unwrap();
        let policy = MaskingPolicy { seed, ..Default::default() };
        let a = pack(&corpus, &vocab, &schedule, &policy, 20).unwrap();
        let b = pack(&corpus, &vocab, &schedule, &policy, 20).unwrap();
        prop_assert!(a.examples().eq(b.examples()));
    }
}
