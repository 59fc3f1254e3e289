use serde_json::json;

use euslm_core::subword::{train_unigram, UnigramTrainerConfig};

use super::{load_corpus, load_vocab, read_string, Ctx};
use crate::args::{FertilityArgs, TokenizeArgs, VocabTrainArgs};
use crate::CliError;

pub fn vocab_train(ctx: &Ctx, args: &VocabTrainArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus)?;
    let config = UnigramTrainerConfig {
        target_size: args.target_size,
        seed_size: args.seed_size,
        max_piece_len: args.max_piece_len,
        shrink_factor: args.shrink_factor,
        em_iterations: args.em_iterations,
        coverage: args.coverage,
    };
    let (vocab, report) = train_unigram(&corpus, &config)?;
    ctx.write("vocab.txt", vocab.to_file_string())?;
    let rounds: Vec<_> = report
        .rounds
        .iter()
        .map(|r| json!({ "pieces": r.pieces, "log_likelihoods": r.log_likelihoods, "pruned_to": r.pruned_to }))
        .collect();
    ctx.write_json(
        "report.json",
        &json!({
            "vocab_size": vocab.len(),
            "alphabet_size": report.alphabet_size,
            "seed_pieces": report.seed_pieces,
            "rounds": rounds,
        }),
    )?;
    println!("{} entries ({} alphabet characters, {} rounds)", vocab.len(), report.alphabet_size, report.rounds.len());
    Ok(())
}

pub fn tokenize(ctx: &Ctx, args: &TokenizeArgs) -> Result<(), CliError> {
    let vocab = load_vocab(&args.vocab)?;
    let mut out = String::new();
    for line in read_string(&args.input)?.lines() {
        out.push_str(&vocab.tokenize_display(line));
        out.push('\n');
    }
    ctx.write("tokens.txt", out)
}

pub fn fertility(ctx: &Ctx, args: &FertilityArgs) -> Result<(), CliError> {
    let vocab = load_vocab(&args.vocab)?;
    let corpus = load_corpus(&args.corpus)?;
    let f = vocab.fertility(&corpus);
    println!("fertility {f:.4}");
    ctx.write_json("fertility.json", &json!({ "vocab_size": vocab.len(), "words": corpus.words().count(), "fertility": f }))
}
