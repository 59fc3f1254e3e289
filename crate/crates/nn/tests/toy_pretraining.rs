use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use euslm_core::corpus::{Corpus, Document};
use euslm_core::pretrain_data::{pack, MaskingPolicy, PackingSchedule};
use euslm_core::rng;
use euslm_core::subword::{train_unigram, UnigramTrainerConfig};
use euslm_nn::encoder::{pretrain, Encoder, EncoderConfig, EvalStats, PretrainBatch, PretrainConfig};
use euslm_nn::optim::OptimizerConfig;

const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "tz", "be", "ru", "na", "go", "si", "ek", "ur", "do"];

fn word(rng: &mut impl Rng) -> String {
    (0..3).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

/// Ten documents, each drawing its sentences from a private word list.
fn topical_corpus(sentences_per_doc: usize, lexicon_seed: u64, text_seed: u64) -> Corpus {
    let mut lex = rng::seeded(lexicon_seed);
    let topics: Vec<Vec<String>> = (0..10).map(|_| (0..10).map(|_| word(&mut lex)).collect()).collect();
    let mut r = rng::seeded(text_seed);
    let docs = topics
        .iter()
        .enumerate()
        .map(|(t, words)| {
            let paragraphs = (0..sentences_per_doc)
                .map(|_| {
                    let mut pick = || words.choose(&mut r).unwrap().clone();
                    format!("{} {} eta {} {} da", pick(), pick(), pick(), pick())
                })
                .collect();
            Document { id: format!("topic-{t}"), source: "synthetic".into(), paragraphs }
        })
        .collect();
    Corpus::from_documents(docs).unwrap()
}

#[test]
fn toy_pretraining_learns() {
    let train = topical_corpus(20, 1, 2);
    let held = topical_corpus(20, 1, 3);
    let (vocab, _) = train_unigram(&train, &UnigramTrainerConfig { target_size: 400, ..Default::default() }).unwrap();
    let schedule = PackingSchedule::parse("64").unwrap();
    let data = pack(&train, &vocab, &schedule, &MaskingPolicy { seed: 11, ..Default::default() }, 4000).unwrap();
    let eval = pack(&held, &vocab, &schedule, &MaskingPolicy { seed: 12, ..Default::default() }, 512).unwrap();

    let config = EncoderConfig { max_positions: 64, ..EncoderConfig::toy(vocab.len()) };
    let mut enc = Encoder::init(config, 7).unwrap();
    let pc = PretrainConfig {
        optimizer: OptimizerConfig { learning_rate: 1e-3, warmup_steps: 200, total_steps: 2000, batch_size: 16, ..Default::default() },
        seed: 7,
        checkpoint_every: 0,
    };
    let t0 = Instant::now();
    let phases: Vec<_> = data.phases.iter().map(|p| p.examples.clone()).collect();
    let curve = pretrain(&mut enc, &phases, &pc, |_, _, _| Ok(())).unwrap();
    let elapsed = t0.elapsed();

    let mut stats = EvalStats::default();
    for chunk in eval.phases[0].examples.chunks(64) {
        stats.merge(&enc.evaluate(&PretrainBatch::from_examples(chunk)).unwrap());
    }
    let chance = 1.0 / vocab.len() as f64;
    eprintln!(
        "vocab {} time {:?} mlm acc {:.3} (chance {:.4}) nsp acc {:.3} smoothed@100 {:.3} smoothed@2000 {:.3}",
        vocab.len(),
        elapsed,
        stats.mlm_accuracy(),
        chance,
        stats.nsp_accuracy(),
        curve.smoothed(100, 50).unwrap(),
        curve.smoothed(2000, 50).unwrap()
    );
    assert!(stats.mlm_accuracy() > 5.0 * chance);
    assert!(stats.nsp_accuracy() > 0.9);
    assert!(curve.smoothed(2000, 50).unwrap() < curve.smoothed(100, 50).unwrap());
}
