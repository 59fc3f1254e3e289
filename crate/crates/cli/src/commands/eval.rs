use std::collections::BTreeSet;

use euslm_core::evalkit::{
    average_runs, conll_prf, micro_macro_f1, read_classification_predictions, read_conll_predictions, render_results_table, round2,
    word_accuracy, MetricReport, ModelFamily, TableEntry,
};

use super::{open, read_string, Ctx};
use crate::args::{CompareArgs, EvalArgs, EvalTask};
use crate::CliError;

pub fn span_report(base: MetricReport, gold: &[Vec<String>], pred: &[Vec<String>]) -> Result<MetricReport, CliError> {
    let s = conll_prf(gold, pred)?;
    Ok(base.with("precision", round2(s.precision)).with("recall", round2(s.recall)).with("f1", round2(s.f1)))
}

pub fn accuracy_report(base: MetricReport, gold: &[Vec<String>], pred: &[Vec<String>]) -> Result<MetricReport, CliError> {
    Ok(base.with("accuracy", round2(word_accuracy(gold, pred)?)))
}

/// Scores over the union of gold and predicted labels plus `extra`.
pub fn classification_report(mut base: MetricReport, gold: &[String], pred: &[String], extra: &[String]) -> Result<MetricReport, CliError> {
    let classes: Vec<&String> = gold.iter().chain(pred).chain(extra).collect::<BTreeSet<_>>().into_iter().collect();
    let s = micro_macro_f1(&gold.iter().collect::<Vec<_>>(), &pred.iter().collect::<Vec<_>>(), &classes)?;
    base.per_class = Some(s.per_class_f1.into_iter().map(|(k, v)| (k, round2(v))).collect());
    Ok(base.with("micro_f1", round2(s.micro_f1)).with("macro_f1", round2(s.macro_f1)))
}

pub fn eval(ctx: &Ctx, args: &EvalArgs) -> Result<(), CliError> {
    let family: ModelFamily = args.family.parse()?;
    let task_name = args.task_name.clone().unwrap_or_else(|| format!("{:?}", args.task).to_lowercase());
    let base = MetricReport::new(task_name, &args.model_name, family, ctx.seed);
    let reader = open(&args.predictions)?;
    let report = match args.task {
        EvalTask::Ner => {
            let (gold, pred) = read_conll_predictions(reader)?;
            span_report(base, &gold, &pred)?
        }
        EvalTask::Pos => {
            let (gold, pred) = read_conll_predictions(reader)?;
            accuracy_report(base, &gold, &pred)?
        }
        EvalTask::Classification => {
            let (gold, pred) = read_classification_predictions(reader)?;
            classification_report(base, &gold, &pred, &[])?
        }
    };
    for (k, v) in &report.metrics {
        println!("{k} {v:.2}");
    }
    ctx.write_json("report.json", &report)
}

const DEFAULT_METRICS: [&str; 3] = ["f1", "accuracy", "micro_f1"];

pub fn compare(ctx: &Ctx, args: &CompareArgs) -> Result<(), CliError> {
    let mut groups: Vec<((String, String), Vec<MetricReport>)> = Vec::new();
    for path in &args.reports {
        let r: MetricReport = serde_json::from_str(&read_string(path)?)
            .map_err(|e| euslm_core::Error::Input(format!("{}: not a metric report: {e}", path.display())))?;
        let key = (r.task.clone(), r.model.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, runs)) => runs.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut jsonl = String::new();
    let mut entries = Vec::new();
    for (_, runs) in &groups {
        let agg = average_runs(runs, args.runs)?;
        let metric = match &args.metric {
            Some(m) => m.clone(),
            None => DEFAULT_METRICS.iter().find(|m| agg.mean.contains_key(**m)).map(|m| m.to_string()).unwrap_or_default(),
        };
        let value = *agg.mean.get(&metric).ok_or_else(|| {
            euslm_core::Error::Input(format!("{}/{} has no metric {metric:?}", agg.task, agg.model))
        })?;
        entries.push(TableEntry { family: agg.family, model: agg.model.clone(), task: agg.task.clone(), value: round2(value) });
        jsonl.push_str(&serde_json::to_string(&agg).map_err(euslm_core::Error::from)?);
        jsonl.push('\n');
    }
    let table = render_results_table(&entries);
    print!("{table}");
    ctx.write("aggregates.jsonl", jsonl)?;
    ctx.write("table.txt", table)
}
