use std::fmt::Write as _;
use std::path::Path;

use euslm_core::evalkit::{read_classification_data, read_tagged_sentences, MetricReport, ModelFamily, TaggedSentence};
use euslm_nn::char_lm::CharLm;
use euslm_nn::encoder::load_checkpoint;
use euslm_nn::tagger::{
    finetune_encoder, train_classifier, train_tagger, ClassifierConfig, ContextualEmbedder, DevMetric, Embedder, FinetuneConfig,
    FinetunedModel, LabeledText, StaticEmbeddings, TaggerConfig, TaskData,
};

use super::eval::{accuracy_report, classification_report, span_report};
use super::flair::pooling;
use super::{load_vocab, open, Ctx};
use crate::args::{ClassifyTrainArgs, EmbedderArgs, FinetuneArgs, FinetuneTask, MetricArg, TagTrainArgs};
use crate::CliError;

fn build_embedder(args: &EmbedderArgs) -> Result<(Box<dyn Embedder>, ModelFamily), CliError> {
    let (embedder, default_family): (Box<dyn Embedder>, _) = match (&args.embeddings, &args.forward, &args.backward) {
        (Some(path), _, _) => (Box::new(StaticEmbeddings::load(path)?), ModelFamily::Static),
        (None, Some(f), Some(b)) => {
            (Box::new(ContextualEmbedder::new(CharLm::load(f)?, CharLm::load(b)?, args.pooled.map(pooling))), ModelFamily::Flair)
        }
        _ => return Err(CliError::Usage("give --embeddings, or --forward and --backward".into())),
    };
    let family = match &args.family {
        Some(f) => f.parse()?,
        None => default_family,
    };
    Ok((embedder, family))
}

fn read_tagged(path: Option<&Path>) -> Result<Vec<TaggedSentence>, CliError> {
    match path {
        Some(p) => Ok(read_tagged_sentences(open(p)?)?),
        None => Ok(Vec::new()),
    }
}

fn read_labeled(path: Option<&Path>) -> Result<Vec<LabeledText>, CliError> {
    match path {
        Some(p) => Ok(read_classification_data(open(p)?)?.into_iter().map(|(l, t)| LabeledText::new(l, &t)).collect()),
        None => Ok(Vec::new()),
    }
}

fn conll_lines(sentences: &[TaggedSentence], pred: &[Vec<String>]) -> String {
    let mut out = String::new();
    for (s, p) in sentences.iter().zip(pred) {
        for ((tok, gold), tag) in s.tokens.iter().zip(&s.tags).zip(p) {
            writeln!(out, "{tok}\t{gold}\t{tag}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn tagging_report(base: MetricReport, sentences: &[TaggedSentence], pred: &[Vec<String>]) -> Result<MetricReport, CliError> {
    let gold: Vec<Vec<String>> = sentences.iter().map(|s| s.tags.clone()).collect();
    let spans = DevMetric::for_tags(gold.iter().flatten().map(String::as_str)) == DevMetric::SpanF1;
    if spans {
        span_report(base, &gold, pred)
    } else {
        accuracy_report(base, &gold, pred)
    }
}

fn write_report(ctx: &Ctx, report: &MetricReport) -> Result<(), CliError> {
    for (k, v) in &report.metrics {
        println!("test {k} {v:.2}");
    }
    ctx.write_json("report.json", report)
}

pub fn tag_train(ctx: &Ctx, args: &TagTrainArgs) -> Result<(), CliError> {
    let train = read_tagged(Some(&args.train))?;
    let dev = read_tagged(args.dev.as_deref())?;
    let test = read_tagged(args.test.as_deref())?;
    let (mut embedder, family) = build_embedder(&args.embedder)?;
    let metric = match args.metric {
        MetricArg::Auto => DevMetric::for_tags(train.iter().chain(&dev).flat_map(|s| s.tags.iter().map(String::as_str))),
        MetricArg::Accuracy => DevMetric::Accuracy,
        MetricArg::SpanF1 => DevMetric::SpanF1,
    };
    let config = TaggerConfig {
        hidden: args.hidden,
        reproject: args.reproject,
        dropout: args.dropout,
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        max_epochs: args.max_epochs,
        patience: args.patience,
        metric,
        seed: ctx.seed,
        ..TaggerConfig::default()
    };
    let (tagger, history) = train_tagger(&train, &dev, embedder.as_mut(), &config)?;
    tagger.save(&ctx.path("tagger.bin"))?;
    ctx.write_json("history.json", &history)?;
    println!("best epoch {} of {}", history.best_epoch, history.epochs.len());
    if !test.is_empty() {
        let tokens: Vec<Vec<String>> = test.iter().map(|s| s.tokens.clone()).collect();
        let pred = tagger.predict(embedder.as_mut(), &tokens)?;
        ctx.write("predictions.txt", conll_lines(&test, &pred))?;
        let report = tagging_report(MetricReport::new(&args.task, &args.embedder.model_name, family, ctx.seed), &test, &pred)?;
        write_report(ctx, &report)?;
    }
    Ok(())
}

fn classification_lines(gold: &[String], pred: &[String]) -> String {
    gold.iter().zip(pred).map(|(g, p)| format!("{g}\t{p}\n")).collect()
}

pub fn classify_train(ctx: &Ctx, args: &ClassifyTrainArgs) -> Result<(), CliError> {
    let train = read_labeled(Some(&args.train))?;
    let dev = read_labeled(args.dev.as_deref())?;
    let test = read_labeled(args.test.as_deref())?;
    let (mut embedder, family) = build_embedder(&args.embedder)?;
    let config = ClassifierConfig {
        hidden: args.hidden,
        reproject: args.reproject,
        dropout: args.dropout,
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        max_epochs: args.max_epochs,
        patience: args.patience,
        seed: ctx.seed,
        ..ClassifierConfig::default()
    };
    let (model, history) = train_classifier(&train, &dev, embedder.as_mut(), &config)?;
    model.save(&ctx.path("classifier.bin"))?;
    ctx.write_json("history.json", &history)?;
    println!("best epoch {} of {}", history.best_epoch, history.epochs.len());
    if !test.is_empty() {
        let docs: Vec<Vec<String>> = test.iter().map(|d| d.tokens.clone()).collect();
        let pred = model.predict(embedder.as_mut(), &docs)?;
        let gold: Vec<String> = test.iter().map(|d| d.label.clone()).collect();
        ctx.write("predictions.txt", classification_lines(&gold, &pred))?;
        let base = MetricReport::new(&args.task, &args.embedder.model_name, family, ctx.seed);
        write_report(ctx, &classification_report(base, &gold, &pred, &model.labels)?)?;
    }
    Ok(())
}

fn task_data(task: FinetuneTask, path: Option<&Path>) -> Result<Option<TaskData>, CliError> {
    let Some(path) = path else {
        return Ok(None);
    };
    Ok(Some(match task {
        FinetuneTask::Sequence => TaskData::Sequence(read_labeled(Some(path))?),
        FinetuneTask::Token => TaskData::Token(read_tagged(Some(path))?),
    }))
}

fn finetune_predictions(model: &FinetunedModel, vocab: &euslm_core::SubwordVocab, test: &TaskData, base: MetricReport) -> Result<(String, MetricReport), CliError> {
    match test {
        TaskData::Sequence(docs) => {
            let words: Vec<Vec<String>> = docs.iter().map(|d| d.tokens.clone()).collect();
            let pred = model.predict_sequences(vocab, &words)?;
            let gold: Vec<String> = docs.iter().map(|d| d.label.clone()).collect();
            Ok((classification_lines(&gold, &pred), classification_report(base, &gold, &pred, &model.labels)?))
        }
        TaskData::Token(sentences) => {
            let words: Vec<Vec<String>> = sentences.iter().map(|s| s.tokens.clone()).collect();
            let pred = model.predict_tokens(vocab, &words)?;
            Ok((conll_lines(sentences, &pred), tagging_report(base, sentences, &pred)?))
        }
    }
}

pub fn finetune(ctx: &Ctx, args: &FinetuneArgs) -> Result<(), CliError> {
    let vocab = load_vocab(&args.vocab)?;
    let encoder = load_checkpoint(&args.checkpoint)?.encoder;
    let train = task_data(args.task, Some(&args.train))?.expect("training path given");
    let dev = task_data(args.task, args.dev.as_deref())?;
    let test = task_data(args.task, args.test.as_deref())?;
    let config = FinetuneConfig {
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        warmup_fraction: args.warmup_fraction,
        weight_decay: args.weight_decay,
        seed: ctx.seed,
        ..FinetuneConfig::default()
    };
    check_labels(&train, &[("dev", dev.as_ref()), ("test", test.as_ref())])?;
    let (model, report) = finetune_encoder(&encoder, &vocab, &train, dev.as_ref(), &config)?;
    model.save(&ctx.path("model.bin"))?;
    ctx.write_json("history.json", &report)?;
    for e in &report.epochs {
        println!("epoch {}: loss {:.4}, train accuracy {:.2}", e.epoch, e.loss, e.train_accuracy);
    }
    if let Some(test) = &test {
        let base = MetricReport::new(&args.task_name, &args.model_name, ModelFamily::Bert, ctx.seed);
        let (lines, metrics) = finetune_predictions(&model, &vocab, test, base)?;
        ctx.write("predictions.txt", lines)?;
        write_report(ctx, &metrics)?;
    }
    Ok(())
}

fn check_labels(train: &TaskData, others: &[(&str, Option<&TaskData>)]) -> Result<(), CliError> {
    let known = train.labels();
    for (name, data) in others.iter().filter_map(|(n, d)| d.map(|d| (n, d))) {
        if let Some(l) = data.labels().difference(&known).next() {
            return Err(euslm_core::Error::Input(format!("{name} label {l:?} does not occur in training")).into());
        }
    }
    Ok(())
}
