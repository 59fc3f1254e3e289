use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Static,
    Flair,
    Bert,
    Baseline,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [ModelFamily::Static, ModelFamily::Flair, ModelFamily::Bert, ModelFamily::Baseline];

    pub fn heading(self) -> &'static str {
        match self {
            ModelFamily::Static => "Static Embeddings",
            ModelFamily::Flair => "Flair Embeddings",
            ModelFamily::Bert => "BERT Language Models",
            ModelFamily::Baseline => "Baselines",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelFamily::Static => "static",
            ModelFamily::Flair => "flair",
            ModelFamily::Bert => "bert",
            ModelFamily::Baseline => "baseline",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "static" | "static embeddings" => Ok(ModelFamily::Static),
            "flair" | "flair embeddings" => Ok(ModelFamily::Flair),
            "bert" | "bert language models" => Ok(ModelFamily::Bert),
            "baseline" | "baselines" => Ok(ModelFamily::Baseline),
            _ => Err(Error::Input(format!("unknown model family {s:?}"))),
        }
    }
}

/// Scores of a single run, all in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: String,
    pub model: String,
    pub family: ModelFamily,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<BTreeMap<String, f64>>,
}

impl MetricReport {
    pub fn new(task: impl Into<String>, model: impl Into<String>, family: ModelFamily, seed: u64) -> Self {
        MetricReport { task: task.into(), model: model.into(), family, seed, metrics: BTreeMap::new(), per_class: None }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in self.metrics.iter().chain(self.per_class.iter().flatten()) {
            if !(0.0..=100.0).contains(v) {
                return Err(Error::Input(format!("metric {k} = {v} outside [0, 100]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub task: String,
    pub model: String,
    pub family: ModelFamily,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
    /// Set for a single run, where the sample deviation is undefined and reported as 0.
    pub std_undefined: bool,
}

/// Mean and sample standard deviation of `n` runs of one model on one task.
pub fn average_runs(reports: &[MetricReport], n: usize) -> Result<AggregateReport> {
    if n == 0 || reports.len() != n {
        return Err(Error::Input(format!("expected {n} runs, got {}", reports.len())));
    }
    let first = &reports[0];
    for r in reports {
        r.validate()?;
        if r.task != first.task || r.model != first.model {
            return Err(Error::Input(format!(
                "cannot average {}/{} with {}/{}",
                first.task, first.model, r.task, r.model
            )));
        }
        if !r.metrics.keys().eq(first.metrics.keys()) {
            return Err(Error::Input(format!("run with seed {} has a different metric set", r.seed)));
        }
    }
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for name in first.metrics.keys() {
        let xs: Vec<f64> = reports.iter().map(|r| r.metrics[name]).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let s = if n > 1 {
            (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        mean.insert(name.clone(), m);
        std.insert(name.clone(), s);
    }
    Ok(AggregateReport {
        task: first.task.clone(),
        model: first.model.clone(),
        family: first.family,
        runs: n,
        seeds: reports.iter().map(|r| r.seed).collect(),
        mean,
        std,
        std_undefined: n == 1,
    })
}

/// One cell of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub family: ModelFamily,
    pub model: String,
    pub task: String,
    pub value: f64,
}

/// Models grouped by family, one column per task, best value per column starred.
pub fn render_results_table(entries: &[TableEntry]) -> String {
    let mut tasks: Vec<&str> = Vec::new();
    let mut rows: Vec<(ModelFamily, &str)> = Vec::new();
    for e in entries {
        if !tasks.contains(&e.task.as_str()) {
            tasks.push(&e.task);
        }
        if !rows.contains(&(e.family, e.model.as_str())) {
            rows.push((e.family, &e.model));
        }
    }
    let cell = |family: ModelFamily, model: &str, task: &str| {
        entries.iter().find(|e| e.family == family && e.model == model && e.task == task).map(|e| e.value)
    };
    let best: Vec<Option<f64>> = tasks
        .iter()
        .map(|t| entries.iter().filter(|e| e.task == *t).map(|e| e.value).fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v)))))
        .collect();

    let mut table: Vec<Vec<String>> = vec![std::iter::once("Model".to_string()).chain(tasks.iter().map(|t| t.to_string())).collect()];
    let mut headings = Vec::new();
    for family in ModelFamily::ALL {
        let members: Vec<&str> = rows.iter().filter(|r| r.0 == family).map(|r| r.1).collect();
        if members.is_empty() {
            continue;
        }
        headings.push(table.len());
        table.push(vec![family.heading().to_string()]);
        for model in members {
            let mut row = vec![model.to_string()];
            for (t, b) in tasks.iter().zip(&best) {
                row.push(match cell(family, model, t) {
                    Some(v) if Some(v) == *b => format!("{v:.2}*"),
                    Some(v) => format!("{v:.2}"),
                    None => "—".to_string(),
                });
            }
            table.push(row);
        }
    }

    let ncols = tasks.len() + 1;
    let widths: Vec<usize> = (0..ncols)
        .map(|c| {
            table
                .iter()
                .enumerate()
                .filter(|(i, _)| !headings.contains(i))
                .filter_map(|(_, r)| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let total: usize = widths.iter().sum::<usize>() + 2 * (ncols - 1);
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        if headings.contains(&i) {
            out.push_str(&format!("{}\n", "-".repeat(total)));
            out.push_str(&row[0]);
            out.push('\n');
            continue;
        }
        let mut line = String::new();
        for (c, s) in row.iter().enumerate() {
            let pad = widths[c] - s.chars().count();
            if c == 0 {
                line.push_str(s);
                line.push_str(&" ".repeat(pad));
            } else {
                line.push_str("  ");
                line.push_str(&" ".repeat(pad));
                line.push_str(s);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
