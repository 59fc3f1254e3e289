use std::fmt::Write as _;

use euslm_nn::char_lm::{CharLm, CharLmConfig, CharVocab, Direction, Pooling};
use euslm_nn::tagger::{ContextualEmbedder, Embedder};

use super::{load_corpus, read_string, Ctx};
use crate::args::{CharlmTrainArgs, DirectionArg, EmbedArgs, PoolingArg, Preset};
use crate::CliError;

pub fn pooling(p: PoolingArg) -> Pooling {
    match p {
        PoolingArg::Mean => Pooling::Mean,
        PoolingArg::Min => Pooling::Min,
        PoolingArg::Max => Pooling::Max,
    }
}

pub fn charlm_train(ctx: &Ctx, args: &CharlmTrainArgs) -> Result<(), CliError> {
    let direction = match args.direction {
        DirectionArg::Forward => Direction::Forward,
        DirectionArg::Backward => Direction::Backward,
    };
    let base = match args.preset {
        Preset::Toy => CharLmConfig::toy(direction),
        Preset::Full => CharLmConfig::full(direction),
    };
    let config = CharLmConfig {
        hidden: args.hidden.unwrap_or(base.hidden),
        embedding_dim: args.embedding_dim.unwrap_or(base.embedding_dim),
        seq_len: args.seq_len.unwrap_or(base.seq_len),
        batch_size: args.batch_size.unwrap_or(base.batch_size),
        epochs: args.epochs.unwrap_or(base.epochs),
        learning_rate: args.learning_rate.unwrap_or(base.learning_rate),
        seed: ctx.seed,
        ..base
    };
    let corpus = load_corpus(&args.corpus)?;
    let vocab = CharVocab::build(corpus.segments().map(|(_, _, p)| p), args.min_char_count);
    let mut lm = CharLm::new(config, vocab)?;
    let report = lm.train(&corpus)?;
    lm.save(&ctx.path(&format!("charlm-{direction}.bin")))?;
    let mut csv = String::from("epoch,perplexity\n");
    for (i, p) in report.epoch_perplexity.iter().enumerate() {
        writeln!(csv, "{},{p}", i + 1).unwrap();
        println!("epoch {}: perplexity {p:.3}", i + 1);
    }
    ctx.write("perplexity.csv", csv)
}

pub fn embed(ctx: &Ctx, args: &EmbedArgs) -> Result<(), CliError> {
    let mut embedder = ContextualEmbedder::new(CharLm::load(&args.forward)?, CharLm::load(&args.backward)?, args.pooled.map(pooling));
    embedder.reset();
    let mut out = String::new();
    for line in read_string(&args.input)?.lines() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        for (tok, v) in tokens.iter().zip(embedder.embed(&tokens)?) {
            out.push_str(tok);
            for x in v {
                write!(out, " {x}").unwrap();
            }
            out.push('\n');
        }
        out.push('\n');
    }
    ctx.write("embeddings.txt", out)
}
