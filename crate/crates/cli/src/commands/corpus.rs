use std::path::Path;

use euslm_core::corpus::CorpusBuilder;
use euslm_core::SplitSpec;

use super::{load_corpus, read_string, stem, Ctx};
use crate::args::{IngestArgs, SplitArgs, StatsArgs};
use crate::CliError;

pub fn ingest_files(ctx: &Ctx, args: &IngestArgs) -> Result<(), CliError> {
    let mut builder = CorpusBuilder::new();
    for input in &args.input {
        let (source, path) = match input.split_once('=') {
            Some((s, p)) if !s.is_empty() => (s.to_string(), Path::new(p)),
            _ => (stem(Path::new(input)), Path::new(input.as_str())),
        };
        builder.ingest_bytes(read_string(path)?.as_bytes(), &source)?;
    }
    let corpus = builder.finish()?;
    ctx.write("corpus.txt", corpus.to_text())?;
    let stats = corpus.stats();
    println!("{} documents, {} paragraphs, {} tokens", stats.documents, stats.paragraphs, stats.total_tokens);
    Ok(())
}

pub fn stats(ctx: &Ctx, args: &StatsArgs) -> Result<(), CliError> {
    let stats = load_corpus(&args.corpus)?.stats();
    let table = stats.render_table();
    print!("{table}");
    ctx.write("stats.txt", table)?;
    ctx.write("stats.jsonl", stats.to_jsonl())
}

pub fn split(ctx: &Ctx, args: &SplitArgs) -> Result<(), CliError> {
    let names: Vec<String> = match (args.names.is_empty(), args.ratios.len()) {
        (false, n) if args.names.len() != n => {
            return Err(CliError::Usage(format!("{} names given for {n} ratios", args.names.len())));
        }
        (false, _) => args.names.clone(),
        (true, 3) => vec!["train".into(), "dev".into(), "test".into()],
        (true, n) => (0..n).map(|i| format!("part{i}")).collect(),
    };
    let spec = SplitSpec::new(args.ratios.clone(), ctx.seed)?;
    let parts = load_corpus(&args.corpus)?.split(&spec)?;
    for (name, part) in names.iter().zip(&parts) {
        ctx.write(&format!("{name}.txt"), part.to_text())?;
        println!("{name}: {} documents", part.len());
    }
    Ok(())
}
