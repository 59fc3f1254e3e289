use std::fs::File;
use std::io::BufWriter;

use rand::Rng;
use serde::{Deserialize, Serialize};

use euslm_core::pretrain_data::{
    masking_stats, pack, read_binary, read_jsonl, write_binary, write_jsonl, MaskingPolicy, PackingSchedule, PretrainExample,
    Replacement,
};
use euslm_core::subword::{CLS_ID, MASK_ID, NUM_SPECIALS, SEP_ID};
use euslm_core::rng;
use euslm_nn::encoder::{self, save_checkpoint, Encoder, EncoderConfig, PretrainBatch, PretrainConfig};
use euslm_nn::optim::OptimizerConfig;

use super::{load_corpus, load_vocab, open, read_string, Ctx};
use crate::args::{ExampleFormat, GradCheckArgs, Preset, PretrainArgs, PretrainDataArgs};
use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
struct PhaseFile {
    max_len: usize,
    file: String,
    examples: usize,
}

/// Index of a `pretrain-data` directory.
#[derive(Debug, Serialize, Deserialize)]
struct PhaseIndex {
    format: String,
    vocab_size: usize,
    phases: Vec<PhaseFile>,
    skipped: usize,
    single_document: bool,
}

pub fn pretrain_data(ctx: &Ctx, args: &PretrainDataArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus)?;
    let vocab = load_vocab(&args.vocab)?;
    let schedule = PackingSchedule::parse(&args.seq_len)?;
    let policy = MaskingPolicy { candidate_fraction: args.mask_prob, whole_word: args.wwm, seed: ctx.seed, ..MaskingPolicy::default() };
    let packed = pack(&corpus, &vocab, &schedule, &policy, args.examples)?;

    let (format, ext) = match args.format {
        ExampleFormat::Jsonl => ("jsonl", "jsonl"),
        ExampleFormat::Binary => ("binary", "bin"),
    };
    let mut phases = Vec::new();
    for phase in &packed.phases {
        let file = format!("phase-{}.{ext}", phase.max_len);
        let path = ctx.path(&file);
        let mut w = BufWriter::new(File::create(&path).map_err(|source| CliError::File { path: path.clone(), source })?);
        match args.format {
            ExampleFormat::Jsonl => write_jsonl(&mut w, &phase.examples)?,
            ExampleFormat::Binary => write_binary(&mut w, phase.max_len, &phase.examples)?,
        }
        w.into_inner().map_err(|e| CliError::File { path, source: e.into_error() })?;
        println!("{file}: {} examples", phase.examples.len());
        phases.push(PhaseFile { max_len: phase.max_len, file, examples: phase.examples.len() });
    }
    let index = PhaseIndex { format: format.into(), vocab_size: vocab.len(), phases, skipped: packed.skipped, single_document: packed.single_document };
    ctx.write_json("phases.json", &index)?;
    ctx.write_json("masking.json", &masking_stats(packed.examples()))?;
    if packed.single_document {
        eprintln!("warning: single-document corpus, next-sentence negatives come from the same document");
    }
    Ok(())
}

fn encoder_config(args: &PretrainArgs, vocab_size: usize) -> EncoderConfig {
    let base = match args.preset {
        Preset::Toy => EncoderConfig::toy(vocab_size),
        Preset::Full => EncoderConfig::bert_base(vocab_size),
    };
    EncoderConfig {
        layers: args.layers.unwrap_or(base.layers),
        hidden: args.hidden.unwrap_or(base.hidden),
        heads: args.heads.unwrap_or(base.heads),
        intermediate: args.intermediate.unwrap_or(base.intermediate),
        max_positions: args.max_positions.unwrap_or(base.max_positions),
        dropout: args.dropout.unwrap_or(base.dropout),
        ..base
    }
}

fn optimizer_config(args: &PretrainArgs) -> OptimizerConfig {
    let base = match args.preset {
        Preset::Toy => OptimizerConfig { learning_rate: 1e-3, warmup_steps: 200, total_steps: 2000, batch_size: 16, ..OptimizerConfig::default() },
        Preset::Full => OptimizerConfig::default(),
    };
    OptimizerConfig {
        learning_rate: args.learning_rate.unwrap_or(base.learning_rate),
        warmup_steps: args.warmup_steps.unwrap_or(base.warmup_steps),
        total_steps: args.total_steps.unwrap_or(base.total_steps),
        batch_size: args.batch_size.unwrap_or(base.batch_size),
        weight_decay: args.weight_decay.unwrap_or(base.weight_decay),
        ..base
    }
}

pub fn pretrain(ctx: &Ctx, args: &PretrainArgs) -> Result<(), CliError> {
    let vocab = load_vocab(&args.vocab)?;
    let index: PhaseIndex = serde_json::from_str(&read_string(&args.data.join("phases.json"))?).map_err(euslm_core::Error::from)?;
    if index.vocab_size != vocab.len() {
        return Err(euslm_core::Error::Config(format!("examples were built with {} vocabulary entries, vocabulary has {}", index.vocab_size, vocab.len())).into());
    }
    let mut phases = Vec::new();
    for p in &index.phases {
        let reader = open(&args.data.join(&p.file))?;
        let examples = match index.format.as_str() {
            "jsonl" => read_jsonl(reader)?,
            "binary" => read_binary(reader)?.1,
            other => return Err(euslm_core::Error::Input(format!("unknown example format {other:?}")).into()),
        };
        phases.push(examples);
    }
    let config = encoder_config(args, vocab.len());
    let longest = index.phases.iter().map(|p| p.max_len).max().unwrap_or(0);
    if longest > config.max_positions {
        return Err(euslm_core::Error::Config(format!("examples of length {longest} exceed {} positions", config.max_positions)).into());
    }
    let optimizer = optimizer_config(args);
    let total = optimizer.total_steps;
    let train = PretrainConfig { optimizer, seed: ctx.seed, checkpoint_every: args.checkpoint_every };
    let mut enc = Encoder::init(config, ctx.seed)?;
    println!("{} parameters", enc.parameter_count());
    let curve = encoder::pretrain(&mut enc, &phases, &train, |e, opt, step| {
        let name = if step == total { "final.ckpt".to_string() } else { format!("checkpoint-{step}.ckpt") };
        save_checkpoint(&ctx.path(&name), e, Some(opt), step, ctx.seed)
    })?;
    ctx.write("loss.csv", curve.to_csv())?;
    if let Some(last) = curve.records.last() {
        println!("step {}: mlm {:.4}, nsp {:.4}", last.step, last.mlm_loss, last.nsp_loss);
    }
    Ok(())
}

/// `[CLS] a… [SEP] b… [SEP]` over random non-special ids with one or two
/// masked positions.
fn random_example(r: &mut rng::Rng, vocab_size: usize, len: usize) -> PretrainExample {
    let split = 1 + (len - 3) / 2;
    let mut ids: Vec<u32> = (0..len).map(|_| r.gen_range(NUM_SPECIALS..vocab_size as u32)).collect();
    ids[0] = CLS_ID;
    ids[split] = SEP_ID;
    ids[len - 1] = SEP_ID;
    let body: Vec<u32> = (1..len - 1).filter(|&i| i != split).map(|i| i as u32).collect();
    let mut positions: Vec<u32> = body.iter().copied().filter(|_| r.gen_bool(0.25)).collect();
    if positions.is_empty() {
        positions.push(body[r.gen_range(0..body.len())]);
    }
    let labels: Vec<u32> = positions.iter().map(|&p| ids[p as usize]).collect();
    for &p in &positions {
        ids[p as usize] = MASK_ID;
    }
    PretrainExample {
        segment_ids: (0..len).map(|i| u8::from(i > split)).collect(),
        word_ids: vec![None; len],
        replacements: vec![Replacement::Mask; positions.len()],
        masked_positions: positions,
        masked_labels: labels,
        is_next: r.gen_bool(0.5),
        ids,
    }
}

pub fn grad_check(ctx: &Ctx, args: &GradCheckArgs) -> Result<(), CliError> {
    if args.seq_len < 5 || args.batch == 0 {
        return Err(CliError::Usage("grad-check needs --seq-len of at least 5 and a non-empty batch".into()));
    }
    if args.vocab_size <= NUM_SPECIALS as usize {
        return Err(CliError::Usage(format!("--vocab-size must exceed the {NUM_SPECIALS} special tokens")));
    }
    let config = EncoderConfig {
        layers: args.layers,
        hidden: args.hidden,
        heads: args.heads,
        intermediate: args.intermediate,
        max_positions: args.seq_len,
        vocab_size: args.vocab_size,
        type_vocab_size: 2,
        dropout: 0.0,
        init_std: args.init_std,
    };
    let mut r = rng::derived(ctx.seed, 1);
    let examples: Vec<PretrainExample> = (0..args.batch).map(|_| random_example(&mut r, args.vocab_size, args.seq_len)).collect();
    let report = encoder::grad_check(&config, ctx.seed, &PretrainBatch::from_examples(&examples), args.tolerance)?;
    let text = report.render();
    print!("{text}");
    ctx.write("report.txt", &text)?;
    ctx.write_json("report.json", &report)?;
    if !report.passed() {
        let names: Vec<&str> = report.failing().map(|g| g.name.as_str()).collect();
        return Err(CliError::Check(format!("gradient check failed for {}", names.join(", "))));
    }
    Ok(())
}
