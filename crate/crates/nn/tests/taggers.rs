use rand::seq::SliceRandom;
use rand::Rng;

use euslm_core::corpus::{Corpus, Document};
use euslm_core::evalkit::TaggedSentence;
use euslm_core::rng;
use euslm_core::subword::{train_unigram, UnigramTrainerConfig};
use euslm_core::Error;
use euslm_nn::char_lm::{CharLm, CharLmConfig, CharVocab, Direction, Pooling};
use euslm_nn::encoder::{Encoder, EncoderConfig};
use euslm_nn::tagger::{
    finetune_encoder, train_classifier, train_tagger, ClassifierConfig, ContextualEmbedder, DevMetric, DocumentClassifier, Embedder, FinetuneConfig,
    LabeledText, SequenceTagger, StaticEmbeddings, TaggerConfig, TaskData,
};

const NOUNS: [&str; 5] = ["etxe", "mendi", "ibai", "katu", "liburu"];
const ADJS: [&str; 4] = ["handi", "txiki", "berri", "zahar"];
const VERBS: [&str; 3] = ["dago", "da", "zen"];

fn vectors(words: &[&str], dim: usize, seed: u64) -> StaticEmbeddings {
    let mut r = rng::seeded(seed);
    let mut text = format!("{} {dim}\n", words.len());
    for w in words {
        let v: Vec<String> = (0..dim).map(|_| format!("{:.4}", r.gen_range(-1.0..1.0))).collect();
        text.push_str(&format!("{w} {}\n", v.join(" ")));
    }
    StaticEmbeddings::read(text.as_bytes()).unwrap()
}

/// "argi" is a noun sentence-initially and an adjective after a noun.
fn pos_sentences(n: usize, seed: u64) -> Vec<TaggedSentence> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|i| {
            let mut pairs: Vec<(&str, &str)> = Vec::new();
            if i % 3 == 0 {
                pairs.push(("argi", "NOUN"));
            } else {
                pairs.push((NOUNS.choose(&mut r).unwrap(), "NOUN"));
            }
            pairs.push((if i % 2 == 0 { "argi" } else { ADJS.choose(&mut r).unwrap() }, "ADJ"));
            pairs.push(("bat", "DET"));
            pairs.push((VERBS.choose(&mut r).unwrap(), "VERB"));
            TaggedSentence { tokens: pairs.iter().map(|p| p.0.to_string()).collect(), tags: pairs.iter().map(|p| p.1.to_string()).collect() }
        })
        .collect()
}

fn all_words() -> Vec<&'static str> {
    NOUNS.iter().chain(&ADJS).chain(&VERBS).copied().chain(["argi", "bat"]).collect()
}

#[test]
fn tagger_fits_toy_pos_set() {
    let train = pos_sentences(20, 1);
    let mut emb = vectors(&all_words(), 8, 2);
    let config = TaggerConfig { hidden: 16, dropout: 0.0, seed: 5, ..TaggerConfig::default() };
    assert_eq!((config.learning_rate, config.batch_size, config.max_epochs), (0.1, 64, 50));
    let (model, history) = train_tagger(&train, &[], &mut emb, &config).unwrap();
    let sentences: Vec<Vec<String>> = train.iter().map(|s| s.tokens.clone()).collect();
    let pred = model.predict(&mut emb, &sentences).unwrap();
    let gold: Vec<Vec<String>> = train.iter().map(|s| s.tags.clone()).collect();
    assert_eq!(pred, gold, "history {:?}", history.epochs.last());
    assert!(history.epochs.len() <= 50);

    let x = emb.embed(&["argi", "handi", "bat", "da"]).unwrap();
    let x = euslm_nn::Matrix::from_rows(&x);
    for s in &train {
        let e = euslm_nn::Matrix::from_rows(&emb.embed(&s.tokens.iter().map(String::as_str).collect::<Vec<_>>()).unwrap());
        assert!(model.nll(&e, &s.tags).unwrap() >= 0.0);
    }
    assert!(model.nll(&x, &["NOUN".into(), "ADJ".into(), "DET".into(), "VERB".into()]).unwrap() >= 0.0);
}

#[test]
fn tagger_keeps_best_dev_epoch_and_roundtrips() {
    let train = pos_sentences(12, 3);
    let dev = pos_sentences(6, 4);
    let mut emb = vectors(&all_words(), 6, 2);
    let config = TaggerConfig { hidden: 8, dropout: 0.2, max_epochs: 6, batch_size: 4, patience: 2, seed: 1, ..TaggerConfig::default() };
    let (model, history) = train_tagger(&train, &dev, &mut emb, &config).unwrap();
    let best = history.epochs.iter().filter_map(|e| e.dev_score).fold(f64::MIN, f64::max);
    assert_eq!(history.epochs[history.best_epoch - 1].dev_score, Some(best));

    let sentences: Vec<Vec<String>> = dev.iter().map(|s| s.tokens.clone()).collect();
    let pred = model.predict(&mut emb, &sentences).unwrap();
    let gold: Vec<Vec<String>> = dev.iter().map(|s| s.tags.clone()).collect();
    assert_eq!(DevMetric::Accuracy.score(&gold, &pred).unwrap(), best);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tagger.bin");
    model.save(&path).unwrap();
    let loaded = SequenceTagger::load(&path).unwrap();
    assert_eq!(loaded.predict(&mut emb, &sentences).unwrap(), pred);
    assert_eq!(loaded.tags, model.tags);
}

#[test]
fn dev_metric_follows_tag_scheme() {
    assert_eq!(DevMetric::for_tags(["O", "B-LOC", "I-LOC"]), DevMetric::SpanF1);
    assert_eq!(DevMetric::for_tags(["NOUN", "VERB"]), DevMetric::Accuracy);
    assert_eq!(DevMetric::for_tags(["O"]), DevMetric::Accuracy);
}

fn topic_docs(n: usize, seed: u64) -> Vec<LabeledText> {
    let sport = ["futbol", "partida", "gola", "taldea", "jokalari"];
    let politics = ["hauteskunde", "alderdi", "gobernu", "legea", "botoa"];
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|i| {
            let (label, words) = if i % 2 == 0 { ("kirola", &sport) } else { ("politika", &politics) };
            let len = r.gen_range(3..7);
            let text: Vec<&str> = (0..len).map(|_| *words.choose(&mut r).unwrap()).collect();
            LabeledText::new(label, &text.join(" "))
        })
        .collect()
}

fn topic_words() -> Vec<&'static str> {
    vec!["futbol", "partida", "gola", "taldea", "jokalari", "hauteskunde", "alderdi", "gobernu", "legea", "botoa"]
}

#[test]
fn classifier_separates_topics() {
    let train = topic_docs(24, 1);
    let mut emb = vectors(&topic_words(), 8, 3);
    let defaults = ClassifierConfig::default();
    assert_eq!((defaults.hidden, defaults.dropout, defaults.patience), (128, 0.3068, 3));
    let config = ClassifierConfig { hidden: 16, batch_size: 4, max_epochs: 50, patience: 0, seed: 2, ..defaults };
    let (model, _) = train_classifier(&train, &[], &mut emb, &config).unwrap();
    let docs: Vec<Vec<String>> = train.iter().map(|d| d.tokens.clone()).collect();
    let pred = model.predict(&mut emb, &docs).unwrap();
    let gold: Vec<String> = train.iter().map(|d| d.label.clone()).collect();
    assert_eq!(pred, gold);
    assert_eq!(model.predict(&mut emb, &docs).unwrap(), pred);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clf.bin");
    model.save(&path).unwrap();
    assert_eq!(DocumentClassifier::load(&path).unwrap().predict(&mut emb, &docs).unwrap(), pred);
}

#[test]
fn classifier_needs_two_classes() {
    let train = vec![LabeledText::new("a", "x y"), LabeledText::new("a", "y z")];
    let mut emb = vectors(&["x", "y", "z"], 4, 1);
    let err = train_classifier(&train, &[], &mut emb, &ClassifierConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Input(_)), "{err}");
}

#[test]
fn contextual_embedder_feeds_tagger() {
    let train = pos_sentences(8, 6);
    let text: String = train.iter().map(|s| s.tokens.join(" ")).collect::<Vec<_>>().join("\n");
    let vocab = CharVocab::build([text.as_str()], 1);
    let lm = |d| CharLm::new(CharLmConfig { hidden: 8, embedding_dim: 8, ..CharLmConfig::toy(d) }, vocab.clone()).unwrap();
    let mut emb = ContextualEmbedder::new(lm(Direction::Forward), lm(Direction::Backward), Some(Pooling::Mean));
    assert_eq!(emb.dim(), 32);
    let config = TaggerConfig { hidden: 8, dropout: 0.0, max_epochs: 2, batch_size: 4, ..TaggerConfig::default() };
    let (model, _) = train_tagger(&train, &[], &mut emb, &config).unwrap();
    let pred = model.predict(&mut emb, &[train[0].tokens.clone()]).unwrap();
    assert_eq!(pred[0].len(), train[0].len());
    assert_eq!(emb.memory.as_ref().unwrap().occurrences("bat"), 1);
}

fn tiny_encoder_and_vocab() -> (Encoder, euslm_core::SubwordVocab) {
    let words = topic_words().join(" ");
    let docs = vec![Document { id: "a".into(), source: "t".into(), paragraphs: vec![words.clone(), format!("{words} etxe")] }];
    let corpus = Corpus::from_documents(docs).unwrap();
    let (vocab, _) = train_unigram(&corpus, &UnigramTrainerConfig { target_size: 80, ..Default::default() }).unwrap();
    let config = EncoderConfig { layers: 1, hidden: 16, heads: 2, intermediate: 32, max_positions: 32, ..EncoderConfig::toy(vocab.len()) };
    (Encoder::init(config, 1).unwrap(), vocab)
}

#[test]
fn finetune_sequence_and_token_tasks() {
    let (enc, vocab) = tiny_encoder_and_vocab();
    let defaults = FinetuneConfig::default();
    assert_eq!((defaults.epochs, defaults.learning_rate, defaults.batch_size), (3, 2e-5, 16));
    let config = FinetuneConfig { epochs: 15, learning_rate: 3e-3, batch_size: 4, seed: 4, ..defaults };

    let train = TaskData::Sequence(topic_docs(16, 2));
    let (model, report) = finetune_encoder(&enc, &vocab, &train, None, &config).unwrap();
    assert_eq!(report.epochs.len(), 15);
    assert_eq!(report.epochs.last().unwrap().train_accuracy, 100.0);
    let docs: Vec<Vec<String>> = topic_docs(16, 2).into_iter().map(|d| d.tokens).collect();
    let pred = model.predict_sequences(&vocab, &docs).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ft.bin");
    model.save(&path).unwrap();
    let loaded = euslm_nn::tagger::FinetunedModel::load(&path).unwrap();
    assert_eq!(loaded.predict_sequences(&vocab, &docs).unwrap(), pred);

    let sents = vec![
        TaggedSentence { tokens: vec!["futbol".into(), "taldea".into()], tags: vec!["B-ORG".into(), "O".into()] },
        TaggedSentence { tokens: vec!["gobernu".into(), "legea".into(), "botoa".into()], tags: vec!["B-ORG".into(), "I-ORG".into(), "O".into()] },
    ];
    let (tok_model, _) = finetune_encoder(&enc, &vocab, &TaskData::Token(sents.clone()), None, &FinetuneConfig { epochs: 1, ..config }).unwrap();
    let words: Vec<Vec<String>> = sents.iter().map(|s| s.tokens.clone()).collect();
    let tags = tok_model.predict_tokens(&vocab, &words).unwrap();
    assert_eq!(tags.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 3]);
    assert!(tok_model.predict_sequences(&vocab, &words).is_err());
}

#[test]
fn finetune_rejects_label_mismatch() {
    let (enc, vocab) = tiny_encoder_and_vocab();
    let train = TaskData::Sequence(topic_docs(4, 1));
    let eval = TaskData::Sequence(vec![LabeledText::new("zientzia", "legea")]);
    let err = finetune_encoder(&enc, &vocab, &train, Some(&eval), &FinetuneConfig::default()).unwrap_err();
    assert!(err.to_string().contains("zientzia"), "{err}");
    let bad_vocab_enc = Encoder::init(EncoderConfig { vocab_size: vocab.len() + 1, ..enc.config }, 1).unwrap();
    assert!(finetune_encoder(&bad_vocab_enc, &vocab, &train, None, &FinetuneConfig::default()).is_err());
}
